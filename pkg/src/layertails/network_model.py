"""Feed-forward networks with Gaussian weight priors and their unit samplers.

The model is the usual recursion

    g(l) = W(l) h(l-1),    h(l) = phi(g(l)),    h(0) = x,

with every weight (and bias, when enabled) drawn i.i.d. N(0, sigma_w^2).
The object of study is the prior distribution of a single unit g(l)_m or
h(l)_m for a fixed input x, across independent weight draws.

Two sampling methods are provided.

"direct" materializes a fresh weight set per draw and runs the forward
pass literally. It is exact but costs H_l * H_{l-1} normals per layer
per draw and works in linear arithmetic, so deep configurations can
overflow double precision.

"conditional" (the default) uses the exact distributional identity that,
given h(l-1), the H_l entries of g(l) are i.i.d.
N(0, sigma_w^2 (||h(l-1)||^2 + bias)). Sampling the layer conditionally
costs H_l normals per layer per draw, and the scale is tracked in log
domain, so arbitrarily deep configurations cannot overflow. The joint law
of any set of units produced this way is identical to the direct
construction; the two methods are different pseudorandom mappings from
the seed but the same distribution, and the test suite cross-checks them.

Determinism: samples are generated in fixed-size chunks whose generators
are seeded by SeedSequence(entropy + [chunk_index]). Results are
bit-identical for a given (config, x, seed, chunking policy) no matter
how many workers evaluate the chunks, and unit m's stream is the same
whether it is sampled alone or jointly with other units.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigFileError, LayerOverflowError
from .nonlinearity import NonlinearitySpec, apply, apply_signed_log

# Entropy stream tags; every sampling operation owns a tag so streams
# never collide across operations.
STREAM_UNITS = 1
STREAM_COVARIANCE = 2
STREAM_POOLING = 3
STREAM_INPUT = 5
STREAM_WEIGHTS = 6
STREAM_DIRECT = 7
STREAM_SYNTHETIC = 8

DEFAULT_CHUNK = 4096
# The direct method materializes (chunk, H, H_prev) weight blocks; its
# chunk size is part of the fixed chunking policy, chosen to bound memory.
_DIRECT_CHUNK = 256

_MAX_SEED = 2**64


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture, prior scale, nonlinearity, and base seed."""

    input_dim: int
    layer_widths: tuple[int, ...]
    nonlinearity: NonlinearitySpec
    weight_std: float | tuple[float, ...] = 1.0
    include_bias: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) == 0 or any(w < 1 for w in widths):
            raise ValueError("layer_widths must be non-empty with all widths >= 1")
        std = self.weight_std
        if isinstance(std, (int, float)):
            std = float(std)
            stds = (std,) * len(widths)
        else:
            stds = tuple(float(s) for s in std)
            object.__setattr__(self, "weight_std", stds)
            if len(stds) != len(widths):
                raise ValueError("per-layer weight_std must match layer count")
        if any(not (s > 0 and math.isfinite(s)) for s in stds):
            raise ValueError("weight_std entries must be strictly positive and finite")
        if not (0 <= int(self.seed) < _MAX_SEED):
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def depth(self) -> int:
        return len(self.layer_widths)

    def weight_std_for(self, layer: int) -> float:
        """sigma_w of the given 1-based layer."""
        if isinstance(self.weight_std, tuple):
            return self.weight_std[layer - 1]
        return float(self.weight_std)

    def canonical_string(self) -> str:
        std = self.weight_std
        std_txt = (",".join(repr(s) for s in std)
                   if isinstance(std, tuple) else repr(float(std)))
        return (f"input_dim={self.input_dim};"
                f"layer_widths={','.join(str(w) for w in self.layer_widths)};"
                f"nonlinearity={self.nonlinearity};"
                f"weight_std={std_txt};"
                f"include_bias={self.include_bias};"
                f"seed={self.seed}")

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_string().encode()).hexdigest()[:16]


def write_config_file(path, config: NetworkConfig) -> None:
    parser = configparser.ConfigParser()
    std = config.weight_std
    parser["network"] = {
        "input_dim": str(config.input_dim),
        "layer_widths": ",".join(str(w) for w in config.layer_widths),
        "nonlinearity": str(config.nonlinearity),
        "weight_std": (",".join(repr(s) for s in std)
                       if isinstance(std, tuple) else repr(float(std))),
        "include_bias": str(config.include_bias).lower(),
        "seed": str(config.seed),
    }
    with open(path, "w") as fh:
        parser.write(fh)


def parse_config_file(path) -> NetworkConfig:
    """Read a [network] section config file; see write_config_file for keys."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigFileError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigFileError(f"malformed config file {path}: {exc}") from exc
    if "network" not in parser:
        raise ConfigFileError(f"config file {path} lacks a [network] section")
    sec = parser["network"]
    try:
        widths = tuple(int(w) for w in sec["layer_widths"].split(","))
        std_txt = sec.get("weight_std", "1.0")
        std_parts = [float(s) for s in std_txt.split(",")]
        std = std_parts[0] if len(std_parts) == 1 else tuple(std_parts)
        return NetworkConfig(
            input_dim=int(sec["input_dim"]),
            layer_widths=widths,
            nonlinearity=NonlinearitySpec.parse(sec.get("nonlinearity", "relu")),
            weight_std=std,
            include_bias=sec.getboolean("include_bias", fallback=False),
            seed=int(sec.get("seed", "0")),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigFileError(f"bad config file {path}: {exc}") from exc


def input_hash(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype=float).tobytes()).hexdigest()[:16]


def sample_input(dim: int, seed: int) -> np.ndarray:
    """Standard-normal input vector, drawn once for all weight draws."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([int(seed), STREAM_INPUT])))
    return rng.standard_normal(dim)


@dataclass(frozen=True)
class WeightSet:
    """Per-layer weight matrices, shape H_l x (H_{l-1} + 1 if bias)."""

    matrices: tuple[np.ndarray, ...]
    include_bias: bool = False
    seed: int | None = None

    def n_entries(self) -> int:
        return sum(m.size for m in self.matrices)


def sample_weights(config: NetworkConfig, seed: int) -> WeightSet:
    """Draw one full weight set from the prior; bit-reproducible per seed."""
    mats = []
    prev = config.input_dim
    for layer, width in enumerate(config.layer_widths, start=1):
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([int(seed), STREAM_WEIGHTS, layer])))
        cols = prev + (1 if config.include_bias else 0)
        mats.append(config.weight_std_for(layer) * rng.standard_normal((width, cols)))
        prev = width
    return WeightSet(tuple(mats), config.include_bias, int(seed))


@dataclass
class ForwardResult:
    """Per-layer (g, h) pairs plus any rescaling constants applied to h."""

    pairs: list[tuple[np.ndarray, np.ndarray]]
    rescale_constants: list[float]

    def g(self, layer: int) -> np.ndarray:
        return self.pairs[layer - 1][0]

    def h(self, layer: int) -> np.ndarray:
        return self.pairs[layer - 1][1]


def forward(weights: WeightSet, x: np.ndarray, config: NetworkConfig,
            rescale: bool = False) -> ForwardResult:
    """Propagate one input through one weight set.

    With rescale=True each layer's h is divided by max(1, max|h|) and the
    constant recorded; the tail parameter is invariant to positive scaling
    so every quantity under test is unchanged while arithmetic stays finite.
    Without it, a non-finite intermediate raises LayerOverflowError naming
    the layer.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (config.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({config.input_dim},)")
    if len(weights.matrices) != config.depth:
        raise ValueError("weight set depth does not match config")
    pairs = []
    constants = []
    h = x
    for layer, W in enumerate(weights.matrices, start=1):
        hin = np.concatenate([h, [1.0]]) if config.include_bias else h
        if W.shape[1] != hin.shape[0]:
            raise ValueError(f"layer {layer} weight shape {W.shape} does not match "
                             f"input of length {hin.shape[0]}")
        with np.errstate(over="ignore", invalid="ignore"):
            g = W @ hin
        if not np.all(np.isfinite(g)):
            raise LayerOverflowError(layer)
        h = apply(config.nonlinearity, g)
        c = 1.0
        if rescale:
            peak = float(np.max(np.abs(h))) if h.size else 0.0
            if peak > 1.0:
                c = peak
                h = h / c
        constants.append(c)
        pairs.append((g, h))
    return ForwardResult(pairs, constants)


@dataclass
class UnitSampleSet:
    """Monte-Carlo draws of one unit, stored as (sign, log-magnitude) pairs.

    signs are int8 in {-1, 0, +1}; log_magnitudes are natural logs with
    -inf for exact zeros. decode() reconstructs sign * exp(log_magnitude).
    """

    layer: int
    kind: str
    unit_index: int
    signs: np.ndarray
    log_magnitudes: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("pre", "post", "pooled-max", "pooled-average"):
            raise ValueError(f"bad sample kind {self.kind!r}")
        if self.signs.shape != self.log_magnitudes.shape:
            raise ValueError("signs and log_magnitudes must have equal length")

    @property
    def n_samples(self) -> int:
        return int(self.signs.shape[0])

    @property
    def values(self):
        """The (sign, log_magnitude) pairs as an iterator."""
        return zip(self.signs.tolist(), self.log_magnitudes.tolist())

    def decode(self) -> np.ndarray:
        """sign * exp(log_magnitude); may produce inf if magnitudes exceed
        double-precision range (the estimators avoid this by staying in
        log domain)."""
        with np.errstate(over="ignore"):
            return self.signs * np.exp(self.log_magnitudes)

    def abs_log(self) -> np.ndarray:
        return self.log_magnitudes

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            for key in sorted(self.provenance):
                fh.write(f"# {key}={self.provenance[key]}\n")
            fh.write(f"# layer={self.layer} kind={self.kind} unit={self.unit_index}\n")
            writer = csv.writer(fh)
            writer.writerow(["sign", "log_magnitude"])
            for s, lm in zip(self.signs, self.log_magnitudes):
                writer.writerow([int(s), repr(float(lm))])

    @classmethod
    def from_csv(cls, path) -> "UnitSampleSet":
        meta = {}
        signs = []
        lms = []
        with open(path) as fh:
            header_seen = False
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for part in line[1:].split():
                        if "=" in part:
                            k, v = part.split("=", 1)
                            meta[k] = v
                    continue
                if not header_seen:
                    header_seen = True
                    continue
                s_txt, lm_txt = line.split(",")
                signs.append(int(s_txt))
                lms.append(float(lm_txt))
        return cls(layer=int(meta.get("layer", 0)),
                   kind=meta.get("kind", "pre"),
                   unit_index=int(meta.get("unit", 0)),
                   signs=np.asarray(signs, dtype=np.int8),
                   log_magnitudes=np.asarray(lms, dtype=float),
                   provenance={k: v for k, v in meta.items()
                               if k not in ("layer", "kind", "unit")})


def _chunk_ranges(n_samples: int, chunk_size: int):
    starts = range(0, n_samples, chunk_size)
    return [(i, min(chunk_size, n_samples - s)) for i, s in enumerate(starts)]


def _conditional_chunk(config: NetworkConfig, log_q0: float, rng, b: int,
                       needs: dict[int, int]):
    """One chunk of the conditional sampler; returns pre arrays per layer."""
    top = max(needs)
    out = {}
    log_r = np.full(b, math.log(config.weight_std_for(1)) + 0.5 * log_q0)
    for layer in range(1, top + 1):
        H = config.layer_widths[layer - 1]
        Z = rng.standard_normal((b, H))
        with np.errstate(divide="ignore"):
            logabs_g = log_r[:, None] + np.log(np.abs(Z))
        sign_g = np.sign(Z).astype(np.int8)
        dead = np.isneginf(log_r)
        if np.any(dead):
            sign_g[dead, :] = 0
            logabs_g[dead, :] = -np.inf
        if layer in needs:
            j = needs[layer]
            out[layer] = (sign_g[:, :j].copy(), logabs_g[:, :j].copy())
        if layer == top:
            break
        sign_h, logabs_h = apply_signed_log(config.nonlinearity, sign_g, logabs_g)
        m = np.max(logabs_h, axis=1)
        with np.errstate(invalid="ignore"):
            log_sq = 2.0 * m + np.log(
                np.sum(np.exp(2.0 * (logabs_h - m[:, None])), axis=1))
        log_sq = np.where(np.isneginf(m), -np.inf, log_sq)
        if config.include_bias:
            log_sq = np.logaddexp(log_sq, 0.0)
        log_r = math.log(config.weight_std_for(layer + 1)) + 0.5 * log_sq
    return out


def _direct_chunk(config: NetworkConfig, x: np.ndarray, rng, b: int,
                  needs: dict[int, int]):
    """One chunk of the direct sampler: fresh weights per draw, literal
    forward pass, then encode to sign/log form."""
    top = max(needs)
    out = {}
    h = np.broadcast_to(x, (b, x.shape[0]))
    for layer in range(1, top + 1):
        H = config.layer_widths[layer - 1]
        hin = (np.concatenate([h, np.ones((b, 1))], axis=1)
               if config.include_bias else h)
        W = config.weight_std_for(layer) * rng.standard_normal((b, H, hin.shape[1]))
        g = np.einsum("bij,bj->bi", W, hin)
        if not np.all(np.isfinite(g)):
            raise LayerOverflowError(layer)
        if layer in needs:
            j = needs[layer]
            gj = g[:, :j]
            with np.errstate(divide="ignore"):
                out[layer] = (np.sign(gj).astype(np.int8), np.log(np.abs(gj)))
        if layer == top:
            break
        h = apply(config.nonlinearity, g)
    return out


def run_sampler(config: NetworkConfig, x: np.ndarray, n_samples: int,
                needs: dict[int, int], entropy: tuple[int, ...],
                method: str = "conditional", chunk_size: int = DEFAULT_CHUNK,
                workers: int = 1) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Chunked deterministic sampling engine.

    needs maps 1-based layer index to the number of leading units whose
    pre-nonlinearity draws should be collected. Returns, per requested
    layer, (signs, log_magnitudes) arrays of shape (n_samples, n_units).
    The values collected for a layer do not depend on which other layers
    are requested, and unit j's column is the same in any request that
    includes it.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (config.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({config.input_dim},)")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if method not in ("conditional", "direct"):
        raise ValueError(f"unknown sampling method {method!r}")
    for layer, j in needs.items():
        if not (1 <= layer <= config.depth):
            raise ValueError(f"layer {layer} out of range 1..{config.depth}")
        if not (1 <= j <= config.layer_widths[layer - 1]):
            raise ValueError(f"layer {layer} has width {config.layer_widths[layer - 1]}, "
                             f"cannot collect {j} units")

    if method == "direct":
        chunk_size = _DIRECT_CHUNK
    chunks = _chunk_ranges(n_samples, chunk_size)
    log_q0 = math.log(float(np.dot(x, x)) + (1.0 if config.include_bias else 0.0))

    def one_chunk(task):
        idx, b = task
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(list(entropy) + [idx])))
        if method == "conditional":
            return _conditional_chunk(config, log_q0, rng, b, needs)
        return _direct_chunk(config, x, rng, b, needs)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_chunk, chunks))
    else:
        results = [one_chunk(t) for t in chunks]

    merged = {}
    for layer in needs:
        signs = np.concatenate([r[layer][0] for r in results], axis=0)
        lms = np.concatenate([r[layer][1] for r in results], axis=0)
        merged[layer] = (signs, lms)
    return merged


def _provenance(config: NetworkConfig, x: np.ndarray, seed: int, method: str,
                entropy: tuple[int, ...]) -> dict:
    return {
        "config": config.config_hash(),
        "input": input_hash(x),
        "seed": int(seed),
        "method": method,
        "stream": "/".join(str(e) for e in entropy),
    }


def sample_units(config: NetworkConfig, x: np.ndarray, layer: int,
                 unit_index: int, kind: str, n_samples: int, seed: int,
                 method: str = "conditional", chunk_size: int = DEFAULT_CHUNK,
                 workers: int = 1) -> UnitSampleSet:
    """Draw n_samples of one unit, each draw from an independent prior
    weight set (up to the sampling method's reparametrization).

    unit_index is 0-based. kind "pre" gives g(l)_m, "post" gives
    phi(g(l)_m).
    """
    if kind not in ("pre", "post"):
        raise ValueError(f"kind must be 'pre' or 'post', got {kind!r}")
    if not (1 <= layer <= config.depth):
        raise ValueError(f"layer {layer} out of range 1..{config.depth}")
    if not (0 <= unit_index < config.layer_widths[layer - 1]):
        raise ValueError(f"unit_index {unit_index} out of range for layer {layer}")
    entropy = ((int(seed), STREAM_UNITS) if method == "conditional"
               else (int(seed), STREAM_DIRECT))
    got = run_sampler(config, x, n_samples, {layer: unit_index + 1}, entropy,
                      method=method, chunk_size=chunk_size, workers=workers)
    signs, lms = got[layer]
    signs = signs[:, unit_index]
    lms = lms[:, unit_index]
    if kind == "post":
        signs, lms = apply_signed_log(config.nonlinearity, signs, lms)
    return UnitSampleSet(layer=layer, kind=kind, unit_index=unit_index,
                         signs=signs, log_magnitudes=lms,
                         provenance=_provenance(config, x, seed, method, entropy))


def sample_layer_units(config: NetworkConfig, x: np.ndarray, layers,
                       kind: str, n_samples: int, seed: int,
                       method: str = "conditional",
                       chunk_size: int = DEFAULT_CHUNK,
                       workers: int = 1) -> dict[int, UnitSampleSet]:
    """Unit 0 of several layers from a single propagation pass."""
    if kind not in ("pre", "post"):
        raise ValueError(f"kind must be 'pre' or 'post', got {kind!r}")
    layers = sorted(set(int(l) for l in layers))
    if not layers:
        return {}
    if layers[0] < 1 or layers[-1] > config.depth:
        raise ValueError(f"layers out of range 1..{config.depth}")
    entropy = ((int(seed), STREAM_UNITS) if method == "conditional"
               else (int(seed), STREAM_DIRECT))
    got = run_sampler(config, x, n_samples, {l: 1 for l in layers}, entropy,
                      method=method, chunk_size=chunk_size, workers=workers)
    out = {}
    for layer in layers:
        signs, lms = got[layer]
        signs = signs[:, 0]
        lms = lms[:, 0]
        if kind == "post":
            signs, lms = apply_signed_log(config.nonlinearity, signs, lms)
        out[layer] = UnitSampleSet(layer=layer, kind=kind, unit_index=0,
                                   signs=signs, log_magnitudes=lms,
                                   provenance=_provenance(config, x, seed,
                                                          method, entropy))
    return out


def sample_joint_units(config: NetworkConfig, x: np.ndarray, layer: int,
                       unit_indices, kind: str, n_samples: int,
                       entropy: tuple[int, ...],
                       method: str = "conditional",
                       chunk_size: int = DEFAULT_CHUNK,
                       workers: int = 1):
    """Joint draws of several units of one layer (shared weight draws).

    Returns (signs, log_magnitudes) of shape (n_samples, len(unit_indices)),
    columns in the order given. Callers own the entropy prefix.
    """
    if kind not in ("pre", "post"):
        raise ValueError(f"kind must be 'pre' or 'post', got {kind!r}")
    idx = [int(i) for i in unit_indices]
    if len(set(idx)) != len(idx):
        raise ValueError("unit indices must be distinct")
    if not (1 <= layer <= config.depth):
        raise ValueError(f"layer {layer} out of range 1..{config.depth}")
    width = config.layer_widths[layer - 1]
    if any(not (0 <= i < width) for i in idx):
        raise ValueError(f"unit indices out of range for layer {layer}")
    got = run_sampler(config, x, n_samples, {layer: max(idx) + 1}, entropy,
                      method=method, chunk_size=chunk_size, workers=workers)
    signs, lms = got[layer]
    signs = signs[:, idx]
    lms = lms[:, idx]
    if kind == "post":
        signs, lms = apply_signed_log(config.nonlinearity, signs, lms)
    return signs, lms
