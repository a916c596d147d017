import json
import subprocess
import sys

import numpy as np
import pytest

from layertails.cli import main
from layertails.manifest import RunManifest, sha256_file
from layertails.network_model import NetworkConfig, write_config_file
from layertails.nonlinearity import NonlinearitySpec


@pytest.fixture()
def net_ini(tmp_path):
    cfg = NetworkConfig(input_dim=30, layer_widths=(40, 40),
                        nonlinearity=NonlinearitySpec("relu"), weight_std=1.0)
    path = tmp_path / "net.ini"
    write_config_file(path, cfg)
    return path


def read_rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


class TestEnvelopeCommand:
    def test_default_families_split_into_holds_and_bounded(self, tmp_path):
        out = tmp_path / "env"
        assert main(["envelope", "--out", str(out)]) == 0
        rows = read_rows(out / "envelope.csv")
        verdicts = {r["nonlinearity"]: r["verdict"] for r in rows}
        assert sum(v == "holds" for v in verdicts.values()) == 4
        assert verdicts["tanh"] == verdicts["sigmoid"] == "bounded"

    def test_explicit_family_list(self, tmp_path):
        out = tmp_path / "env"
        assert main(["envelope", "relu", "tanh", "--out", str(out)]) == 0
        rows = read_rows(out / "envelope.csv")
        assert [r["nonlinearity"] for r in rows] == ["relu", "tanh"]

    def test_unknown_family_is_a_usage_error(self, tmp_path):
        assert main(["envelope", "softplus", "--out", str(tmp_path / "e")]) == 2


class TestContoursCommand:
    def test_default_exponents(self, tmp_path):
        out = tmp_path / "con"
        assert main(["contours", "--out", str(out)]) == 0
        names = {p.name for p in out.iterdir()}
        assert names == {"contour_q2.csv", "contour_q1.csv",
                         "contour_q0.666667.csv", "contour_q0.2.csv",
                         "manifest.json"}

    def test_manifest_hashes_every_file(self, tmp_path):
        out = tmp_path / "con"
        main(["contours", "0.5", "--out", str(out)])
        man = RunManifest.load(out / "manifest.json")
        assert man.command == "contours"
        assert set(man.files) == {"contour_q0.5.csv"}
        assert man.files["contour_q0.5.csv"] == sha256_file(
            out / "contour_q0.5.csv")


class TestOracleCommand:
    def test_small_run_passes_assert(self, tmp_path):
        out = tmp_path / "oracle"
        code = main(["oracle-check", "--samples", "100000", "--out", str(out),
                     "--assert"])
        assert code == 0
        rows = read_rows(out / "oracle.csv")
        assert [int(r["k"]) for r in rows] == list(range(1, 9))
        assert all(float(r["relative_error"]) < 0.02 for r in rows)


class TestTailSweepCommand:
    def test_writes_curves_summary_and_recursion(self, net_ini, tmp_path):
        out = tmp_path / "sweep"
        code = main(["tail-sweep", "--config", str(net_ini), "--samples",
                     "30000", "--out", str(out), "--seed", "7"])
        assert code == 0
        assert (out / "moments_layer1.csv").exists()
        assert (out / "moments_layer2.csv").exists()
        summary = read_rows(out / "theta_summary.csv")
        # both estimators for both layers
        assert len(summary) == 4
        assert {r["method"] for r in summary} == {"moment-slope",
                                                  "survival-slope"}
        assert all(float(r["theta_hat"]) > 0 for r in summary)
        rec = read_rows(out / "recursion.csv")
        assert {r["method"] for r in rec} == {"moment-slope", "survival-slope"}

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["tail-sweep", "--config", str(tmp_path / "no.ini"),
                     "--out", str(tmp_path / "o")]) == 2

    def test_out_of_range_layers_exit_2(self, net_ini, tmp_path):
        assert main(["tail-sweep", "--config", str(net_ini), "--layers", "5",
                     "--out", str(tmp_path / "o")]) == 2

    def test_assert_mode_fails_on_flat_recursion(self, net_ini, tmp_path):
        # at width 40 the deep-layer tail step stays far below 0.5 for the
        # survival estimator, so the recursion verdict must fail
        code = main(["tail-sweep", "--config", str(net_ini), "--samples",
                     "30000", "--out", str(tmp_path / "o"), "--seed", "7",
                     "--assert"])
        assert code == 1


class TestSurvivalCurvesCommand:
    def test_outputs_curves_reference_and_ordering(self, net_ini, tmp_path):
        out = tmp_path / "curves"
        code = main(["survival-curves", "--config", str(net_ini), "--samples",
                     "30000", "--out", str(out)])
        assert code == 0
        assert (out / "survival_layer1.csv").exists()
        assert (out / "survival_layer2.csv").exists()
        assert (out / "gaussian_reference.csv").exists()
        rows = read_rows(out / "ordering.csv")
        assert len(rows) == 1
        assert rows[0]["verdict"] in ("pass", "fail")

    def test_unstandardized_run_uses_exact_layer1_scale(self, net_ini,
                                                        tmp_path):
        # without IQR standardization the reference is the exact layer-1
        # Gaussian, whose scale is known in closed form
        out = tmp_path / "curves"
        code = main(["survival-curves", "--config", str(net_ini), "--samples",
                     "30000", "--standardize", "false", "--out", str(out),
                     "--assert"])
        assert code == 0
        assert (out / "gaussian_reference.csv").exists()

    def test_grid_is_shared_across_layers(self, net_ini, tmp_path):
        out = tmp_path / "curves"
        main(["survival-curves", "--config", str(net_ini), "--samples",
              "30000", "--out", str(out)])
        g1 = [r["log_x"] for r in read_rows(out / "survival_layer1.csv")]
        g2 = [r["log_x"] for r in read_rows(out / "survival_layer2.csv")]
        assert g1 == g2


class TestCovarianceCommand:
    def test_nine_cells_per_layer(self, net_ini, tmp_path):
        out = tmp_path / "cov"
        code = main(["covariance", "--config", str(net_ini), "--layers", "1",
                     "--samples", "10000", "--out", str(out), "--assert"])
        assert code == 0
        rows = read_rows(out / "covariance.csv")
        assert len(rows) == 9
        assert all(r["verdict"] != "violation" for r in rows)


class TestRerun:
    def test_byte_identical_replay_with_different_workers(self, net_ini,
                                                          tmp_path, capsys):
        out = tmp_path / "sweep"
        main(["tail-sweep", "--config", str(net_ini), "--samples", "20000",
              "--out", str(out), "--seed", "3"])
        capsys.readouterr()
        code = main(["rerun", str(out / "manifest.json"), "--out",
                     str(tmp_path / "replay"), "--workers", "4"])
        printed = capsys.readouterr().out
        assert code == 0
        assert "byte-identical" in printed

    def test_tampered_output_is_detected(self, tmp_path, capsys):
        out = tmp_path / "con"
        main(["contours", "--out", str(out)])
        path = out / "contour_q1.csv"
        path.write_text(path.read_text().replace("0.5", "0.51"))
        # hand the mismatch checker the original manifest but tampered files
        man = json.loads((out / "manifest.json").read_text())
        man["files"]["contour_q1.csv"] = sha256_file(path)
        (out / "manifest.json").write_text(json.dumps(man))
        capsys.readouterr()
        code = main(["rerun", str(out / "manifest.json"), "--out",
                     str(tmp_path / "replay")])
        printed = capsys.readouterr().out
        assert code == 1
        assert "MISMATCH" in printed

    def test_rerun_is_self_contained(self, net_ini, tmp_path):
        # the manifest embeds the network; the original config can vanish
        out = tmp_path / "sweep"
        main(["tail-sweep", "--config", str(net_ini), "--samples", "20000",
              "--out", str(out)])
        net_ini.unlink()
        code = main(["rerun", str(out / "manifest.json"), "--out",
                     str(tmp_path / "replay")])
        assert code == 0

    def test_identical_manifest_params_across_runs(self, net_ini, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            main(["tail-sweep", "--config", str(net_ini), "--samples",
                  "20000", "--out", str(out)])
        ma = RunManifest.load(a / "manifest.json")
        mb = RunManifest.load(b / "manifest.json")
        assert ma.params == mb.params
        assert ma.files == mb.files


def test_console_script_is_installed():
    proc = subprocess.run([sys.executable, "-m", "layertails.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "tail-sweep" in proc.stdout
