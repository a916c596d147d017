"""Command-line surface tying the modules into reproducible experiments.

Every subcommand computes first, then writes its CSVs and a manifest.json
into --out from a single writer. Statistical verdicts are data in the
CSVs, not exit codes; --assert turns failed verdicts into exit code 1.
Config and I/O problems exit 2.

Subcommands:
  tail-sweep       moment curves, tail estimates (both estimators), recursion verdicts
  survival-curves  per-layer log-survival of pre-nonlinearity units on a shared grid
  covariance       sign verdicts for Cov[h_m^s, h_m'^t] over layers x powers
  envelope         linear envelope verdicts for the built-in nonlinearities
  contours         superellipse contour data for L^q balls
  oracle-check     moment estimator against exact Gaussian norms
  rerun            replay a manifest and verify byte-identical outputs
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from .covariance_verifier import sweep
from .errors import ConfigFileError, DegenerateDistributionError, MomentOverflowError
from .manifest import RunManifest, build_manifest, sha256_file
from .network_model import (NetworkConfig, parse_config_file, sample_input,
                            sample_layer_units)
from .nonlinearity import NonlinearitySpec, search_envelope_constants
from .penalty_geometry import contour
from .tail_analysis import (empirical_log_norm, estimate_theta_moments,
                            estimate_theta_survival, gaussian_norm_oracle,
                            moment_curve, recursion_check, survival_curves,
                            synthetic_values)

DEFAULT_FAMILIES = ("relu", "prelu(0.25)", "elu(1.0)", "selu", "tanh", "sigmoid")
DEFAULT_QS = (2.0, 1.0, 2.0 / 3.0, 0.2)

_ESTIMATOR_ERRORS = (DegenerateDistributionError, MomentOverflowError, ValueError)


def _fmt(v) -> str:
    """CSV cell: repr for floats (lossless round trip), empty for None."""
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))  # plain float repr even for numpy scalars
    return str(v)


def _sanitize(msg: str) -> str:
    return str(msg).replace(",", ";").replace("\n", " ")


def _write_rows(path: Path, comments: list[str], header: str, rows) -> None:
    with open(path, "w") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _network_params(config: NetworkConfig) -> dict:
    std = config.weight_std
    return {
        "input_dim": config.input_dim,
        "layer_widths": list(config.layer_widths),
        "nonlinearity": str(config.nonlinearity),
        "weight_std": list(std) if isinstance(std, tuple) else float(std),
        "include_bias": config.include_bias,
        "seed": config.seed,
    }


def _config_from_params(d: dict) -> NetworkConfig:
    std = d["weight_std"]
    return NetworkConfig(input_dim=int(d["input_dim"]),
                         layer_widths=tuple(d["layer_widths"]),
                         nonlinearity=NonlinearitySpec.parse(d["nonlinearity"]),
                         weight_std=tuple(std) if isinstance(std, list) else float(std),
                         include_bias=bool(d["include_bias"]),
                         seed=int(d["seed"]))


def _resolve_layers(requested, config: NetworkConfig) -> list[int]:
    layers = sorted(set(requested)) if requested else list(range(1, config.depth + 1))
    bad = [l for l in layers if not 1 <= l <= config.depth]
    if bad:
        raise ConfigFileError(f"layers {bad} out of range 1..{config.depth}")
    return layers


# ---------------------------------------------------------------------------
# runners: params dict -> (file names written, assert-ok, report lines)


def _run_tail_sweep(params: dict, out_dir: Path):
    config = _config_from_params(params["network"])
    seed = params["seed"]
    x = sample_input(config.input_dim, seed)
    layers = params["layers"]
    sets = sample_layer_units(config, x, layers, params["kind"],
                              params["samples"], seed,
                              workers=params["workers"])
    names, lines = [], []
    summary_rows, recursion_rows = [], []
    ests = {"moment-slope": {}, "survival-slope": {}}
    n_errors = 0
    for l in layers:
        per_layer = {}
        try:
            curve = moment_curve(sets[l], params["k_min"], params["k_max"])
            name = f"moments_layer{l}.csv"
            _write_rows(out_dir / name,
                        [f"{curve.source_id}, n_samples = {curve.n_samples}"],
                        "k,log_norm,se",
                        [(int(k), float(ln), float(se)) for k, ln, se
                         in zip(curve.ks, curve.log_norms, curve.ses)])
            names.append(name)
            per_layer["moment-slope"] = estimate_theta_moments(curve)
        except _ESTIMATOR_ERRORS as exc:
            summary_rows.append((l, params["kind"], "moment-slope", None, None,
                                 _sanitize(exc)))
            n_errors += 1
        try:
            per_layer["survival-slope"] = estimate_theta_survival(
                sets[l], params["tail_fraction"])
        except _ESTIMATOR_ERRORS as exc:
            summary_rows.append((l, params["kind"], "survival-slope", None, None,
                                 _sanitize(exc)))
            n_errors += 1
        parts = []
        for method, est in per_layer.items():
            ests[method][l] = est
            summary_rows.append((l, params["kind"], method,
                                 est.theta_hat, est.se_theta, ""))
            parts.append(f"{method} {est.theta_hat:.4f} +/- {est.se_theta:.4f}")
        lines.append(f"layer {l} ({params['kind']}): "
                     + ("; ".join(parts) if parts else "no estimate"))

    n_failed = 0
    for prev, nxt in zip(layers, layers[1:]):
        if nxt - prev != 1:
            continue
        for method in ("moment-slope", "survival-slope"):
            if prev not in ests[method] or nxt not in ests[method]:
                continue
            v = recursion_check(ests[method][prev], ests[method][nxt])
            recursion_rows.append((prev, nxt, method,
                                   ests[method][prev].theta_hat,
                                   ests[method][nxt].theta_hat,
                                   v.difference, v.tolerance,
                                   "pass" if v.passes else "fail"))
            if not v.passes:
                n_failed += 1
            lines.append(f"recursion {prev} -> {nxt} ({method}): "
                         f"step {v.difference:+.4f} vs 0.5, "
                         f"tolerance {v.tolerance:.4f}, "
                         f"{'PASS' if v.passes else 'FAIL'}")

    _write_rows(out_dir / "theta_summary.csv",
                [f"tail estimates, kind = {params['kind']}, "
                 f"n_samples = {params['samples']}",
                 f"moment-slope over k in [{params['k_min']}, {params['k_max']}]; "
                 f"survival-slope on the top {params['tail_fraction']} fraction"],
                "layer,kind,method,theta_hat,se_theta,error", summary_rows)
    names.append("theta_summary.csv")
    _write_rows(out_dir / "recursion.csv",
                ["theta step between consecutive layers, expected 0.5"],
                "layer_prev,layer_next,method,theta_prev,theta_next,"
                "difference,tolerance,verdict", recursion_rows)
    names.append("recursion.csv")
    return names, n_failed == 0 and n_errors == 0, lines


def _run_survival_curves(params: dict, out_dir: Path):
    config = _config_from_params(params["network"])
    seed = params["seed"]
    x = sample_input(config.input_dim, seed)
    layers = params["layers"]
    sets = sample_layer_units(config, x, layers, "pre", params["samples"],
                              seed, workers=params["workers"])
    sigma1 = None
    if not params["standardize"]:
        q0 = float(np.sum(x * x)) + (1.0 if config.include_bias else 0.0)
        sigma1 = config.weight_std_for(1) * math.sqrt(q0)
    curves = survival_curves(sets, standardize=params["standardize"],
                             gaussian_sigma=sigma1)
    names, lines = [], []
    for l in layers:
        name = f"survival_layer{l}.csv"
        rows = zip(curves.grid_log, curves.log_survival[l], curves.counts[l],
                   curves.se_log_survival[l])
        _write_rows(out_dir / name,
                    [f"layer {l} pre, positive half, n_positive = "
                     f"{curves.n_positive[l]}, log_iqr = {curves.log_iqr[l]!r}, "
                     f"standardized = {str(curves.standardized).lower()}"],
                    "log_x,log_survival,count,se_log_survival",
                    [(float(a), float(b), int(c), float(d)) for a, b, c, d in rows])
        names.append(name)
    if curves.gaussian_log_survival is not None:
        _write_rows(out_dir / "gaussian_reference.csv",
                    ["exact Gaussian log-survival of the positive half on the "
                     "same grid"],
                    "log_x,log_survival",
                    [(float(a), float(b)) for a, b
                     in zip(curves.grid_log, curves.gaussian_log_survival)])
        names.append("gaussian_reference.csv")

    ok = True
    order_rows = []
    for a, b, la, lb, good in curves.ordering():
        order_rows.append((a, b, la, lb, "pass" if good else "fail"))
        ok &= good
        lines.append(f"layers {a} vs {b}: log-survival {la:.3f} vs {lb:.3f} "
                     f"at layer {a}'s p99.9 point, "
                     f"{'deeper is heavier' if good else 'ORDER VIOLATED'}")
    _write_rows(out_dir / "ordering.csv",
                ["consecutive-pair comparison at the shallower layer's "
                 "99.9th percentile grid point; deeper should be heavier"],
                "shallow_layer,deep_layer,log_survival_shallow,"
                "log_survival_deep,verdict", order_rows)
    names.append("ordering.csv")
    if 1 in layers and curves.gaussian_log_survival is not None:
        zmax, good = curves.gaussian_match(1)
        ok &= good
        lines.append(f"layer 1 vs Gaussian reference: max |z| = {zmax:.2f} "
                     f"({'within' if good else 'OUTSIDE'} 3 se)")
    return names, ok, lines


def _run_covariance(params: dict, out_dir: Path):
    config = _config_from_params(params["network"])
    seed = params["seed"]
    x = sample_input(config.input_dim, seed)
    powers = [(s, t) for s in (1, 2, 3) for t in (1, 2, 3)]
    res = sweep(config, x, params["layers"], powers, params["samples"], seed,
                workers=params["workers"])
    rows = [(r.layer, r.pair[0], r.pair[1], r.s, r.t, r.estimate, r.se,
             r.verdict, "") for r in res.reports]
    rows += [(l, None, None, s, t, None, None, "error", _sanitize(msg))
             for l, s, t, msg in res.errors]
    _write_rows(out_dir / "covariance.csv",
                ["Cov[h_m^s, h_m'^t] over weight draws, units (0, 1), "
                 f"n_samples = {params['samples']} per cell",
                 "verdicts at 3 batch-mean standard errors"],
                "layer,unit_a,unit_b,s,t,estimate,se,verdict,message", rows)
    counts = res.summary()
    lines = ["covariance cells: "
             + ", ".join(f"{k} = {v}" for k, v in sorted(counts.items()))]
    for r in res.violations():
        lines.append(f"VIOLATION layer {r.layer} (s, t) = ({r.s}, {r.t}): "
                     f"estimate {r.estimate:.4g}, se {r.se:.4g}")
    ok = not res.violations() and not res.errors
    return ["covariance.csv"], ok, lines


def _run_envelope(params: dict, out_dir: Path):
    rows, lines = [], []
    ok = True
    grid_desc = ""
    for text in params["families"]:
        wit = search_envelope_constants(NonlinearitySpec.parse(text))
        grid_desc = wit.grid
        rows.append((text, wit.verdict, wit.side, wit.c1, wit.d1, wit.c2,
                     wit.d2, wit.failure_point, wit.failure_inequality))
        if wit.verdict == "holds":
            lines.append(f"{text}: holds on the {wit.side} "
                         f"(d1 = {wit.d1:.6g}, d2 = {wit.d2:.6g})")
        else:
            lines.append(f"{text}: {wit.verdict}")
        ok &= wit.verdict != "fails"
    _write_rows(out_dir / "envelope.csv",
                [f"linear envelope verdicts, {grid_desc}"],
                "nonlinearity,verdict,side,c1,d1,c2,d2,"
                "failure_point,failure_inequality", rows)
    return ["envelope.csv"], ok, lines


def _run_contours(params: dict, out_dir: Path):
    names, lines = [], []
    for q in params["qs"]:
        cs = contour(q, params["t"], params["n_points"])
        name = f"contour_q{q:g}.csv"
        cs.to_csv(out_dir / name)
        names.append(name)
        lines.append(f"q = {q:g}: {params['n_points']} points, "
                     f"max relative error {cs.max_relative_error():.2e}")
    return names, True, lines


def _run_oracle_check(params: dict, out_dir: Path):
    vals = synthetic_values("gaussian", params["samples"], params["seed"],
                            sigma=1.0)
    rows = []
    worst = 0.0
    for k in range(1, params["k_max"] + 1):
        ln, se = empirical_log_norm(vals, k)
        exact = math.log(gaussian_norm_oracle(1.0, k))
        rel = abs(math.expm1(ln - exact))
        worst = max(worst, rel)
        rows.append((k, ln, exact, rel, se))
    _write_rows(out_dir / "oracle.csv",
                [f"empirical log-norms of N(0,1), n = {params['samples']}, "
                 "vs the exact Gaussian k-norm"],
                "k,log_norm_hat,log_norm_exact,relative_error,se_log_norm",
                rows)
    lines = [f"max relative norm error over k <= {params['k_max']}: {worst:.4%}"]
    return ["oracle.csv"], worst <= 0.02, lines


_RUNNERS = {
    "tail-sweep": _run_tail_sweep,
    "survival-curves": _run_survival_curves,
    "covariance": _run_covariance,
    "envelope": _run_envelope,
    "contours": _run_contours,
    "oracle-check": _run_oracle_check,
}


# ---------------------------------------------------------------------------
# argument parsing


def _layers_arg(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}")


def _bool_arg(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="base RNG seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--workers", type=int, default=1,
                   help="worker threads (results are worker-count invariant)")
    p.add_argument("--assert", dest="assert_mode", action="store_true",
                   help="exit 1 when any verdict fails or a cell errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layertails",
        description="Tail behaviour of wide networks under Gaussian weight "
                    "priors: simulation, estimation, and geometry.")
    sub = parser.add_subparsers(dest="command", required=True)

    ts = sub.add_parser("tail-sweep",
                        help="moment curves and tail estimates per layer")
    ts.add_argument("--config", required=True, help="network config file")
    ts.add_argument("--layers", type=_layers_arg, default=None,
                    help="comma-separated 1-based layers (default: all)")
    ts.add_argument("--kind", choices=("pre", "post"), default="pre",
                    help="sample units before or after the nonlinearity")
    ts.add_argument("--samples", type=int, default=1_000_000)
    ts.add_argument("--k-min", type=int, default=2)
    ts.add_argument("--k-max", type=int, default=10)
    ts.add_argument("--tail-fraction", type=float, default=0.1)
    _add_common(ts)

    sc = sub.add_parser("survival-curves",
                        help="log-survival of pre-nonlinearity units per layer")
    sc.add_argument("--config", required=True)
    sc.add_argument("--layers", type=_layers_arg, default=None)
    sc.add_argument("--samples", type=int, default=100_000)
    sc.add_argument("--standardize", type=_bool_arg, default=True,
                    metavar="BOOL",
                    help="divide each layer by its interquartile range "
                         "(default true)")
    _add_common(sc)

    cv = sub.add_parser("covariance",
                        help="covariance sign verdicts over layers x powers")
    cv.add_argument("--config", required=True)
    cv.add_argument("--layers", type=_layers_arg, default=None)
    cv.add_argument("--samples", type=int, default=100_000,
                    help="weight draws per (layer, s, t) cell")
    _add_common(cv)

    en = sub.add_parser("envelope", help="linear envelope verdicts")
    en.add_argument("families", nargs="*", default=list(DEFAULT_FAMILIES),
                    help="nonlinearity specs, e.g. relu prelu(0.3) tanh")
    _add_common(en)

    co = sub.add_parser("contours", help="L^q ball contour data")
    co.add_argument("qs", nargs="*", type=float, default=list(DEFAULT_QS),
                    help="contour exponents (default: 2 1 2/3 0.2)")
    _add_common(co)

    oc = sub.add_parser("oracle-check",
                        help="moment estimator vs exact Gaussian norms")
    oc.add_argument("--samples", type=int, default=1_000_000)
    oc.add_argument("--k-max", type=int, default=8)
    _add_common(oc)

    rr = sub.add_parser("rerun",
                        help="replay a manifest, verify byte-identical files")
    rr.add_argument("manifest", help="path to a manifest.json")
    rr.add_argument("--out", default=None,
                    help="directory for the replayed outputs "
                         "(default: <manifest dir>/rerun)")
    rr.add_argument("--workers", type=int, default=None,
                    help="override the recorded worker count")
    return parser


def _params_from_args(args: argparse.Namespace) -> dict:
    cmd = args.command
    params: dict = {"seed": args.seed, "workers": args.workers}
    if cmd in ("tail-sweep", "survival-curves", "covariance"):
        config = parse_config_file(args.config)
        params["network"] = _network_params(config)
        params["layers"] = _resolve_layers(args.layers, config)
        params["samples"] = args.samples
    if cmd == "tail-sweep":
        params.update(kind=args.kind, k_min=args.k_min, k_max=args.k_max,
                      tail_fraction=args.tail_fraction)
    elif cmd == "survival-curves":
        params["standardize"] = args.standardize
    elif cmd == "envelope":
        params["families"] = list(args.families)
    elif cmd == "contours":
        params.update(qs=[float(q) for q in args.qs], t=1.0, n_points=400)
    elif cmd == "oracle-check":
        params.update(samples=args.samples, k_max=args.k_max)
    return params


def _execute(command: str, params: dict, out_dir: Path) -> tuple[RunManifest, bool, list[str]]:
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    names, ok, lines = _RUNNERS[command](params, out_dir)
    duration = time.monotonic() - t0
    man = build_manifest(command, params, params.get("seed", 0),
                         {n: out_dir / n for n in names}, duration)
    man.write(out_dir / "manifest.json")
    return man, ok, lines


def _cmd_rerun(args: argparse.Namespace) -> int:
    src = Path(args.manifest)
    old = RunManifest.load(src)
    if old.command not in _RUNNERS:
        raise ConfigFileError(f"manifest names unknown command {old.command!r}")
    params = dict(old.params)
    if args.workers is not None:
        params["workers"] = args.workers
    out_dir = Path(args.out) if args.out else src.parent / "rerun"
    new, _, _ = _execute(old.command, params, out_dir)
    mismatched = []
    for name in sorted(set(old.files) | set(new.files)):
        want = old.files.get(name)
        have = new.files.get(name)
        if want == have:
            status = "match"
        else:
            status = "MISMATCH" if want and have else "MISSING"
            mismatched.append(name)
        print(f"{name}: {status}")
    if mismatched:
        print(f"rerun of {old.command}: {len(mismatched)} file(s) differ")
        return 1
    print(f"rerun of {old.command}: all {len(old.files)} file(s) byte-identical")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "rerun":
            return _cmd_rerun(args)
        params = _params_from_args(args)
        man, ok, lines = _execute(args.command, params, Path(args.out))
        for line in lines:
            print(line)
        print(f"wrote {len(man.files)} file(s) + manifest.json to {args.out} "
              f"in {man.duration_s:.1f}s")
        if args.assert_mode and not ok:
            print("assert: FAILED", file=sys.stderr)
            return 1
        return 0
    except (ValueError, OSError) as exc:
        # ConfigFileError is a ValueError; bad CLI values land here too.
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
