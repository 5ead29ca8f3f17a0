import json
import math
import subprocess
import sys

import pytest

from freediff import cli


def write_cfg(tmp_path, name="cfg.json", **doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestGrad:
    def test_square(self, capsys):
        assert run("grad", "X1^2", "-i", 1) == 0
        assert capsys.readouterr().out == "2*X1\n1 (x) X1 + X1 (x) 1\n"

    def test_x1x2x1x2(self, capsys):
        assert run("grad", "X1*X2*X1*X2", "-i", 1) == 0
        assert capsys.readouterr().out.splitlines()[0] == "2*X2*X1*X2"

    def test_absent(self, capsys):
        assert run("grad", "X2", "-i", 1, "--nvars", 2) == 0
        assert capsys.readouterr().out == "0\n0\n"

    def test_syntax_error(self, capsys):
        assert run("grad", "X1 + * X2") == 1
        assert "line 1, col 6" in capsys.readouterr().err

    def test_index_out_of_range(self, capsys):
        assert run("grad", "X1", "-i", 3) == 1


class TestSimulate:
    def test_quadratic_ok(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2", N=16, t_max=2.0, M_cap=3.0, snapshot_every=1.0)
        out = tmp_path / "o"
        assert run("simulate", "--config", cfg, "--out", out) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "ok" and summary["max_norm"] <= 3.0
        assert summary["final_moments"].keys() == {"tr[X1^2]"}
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,norm_max,tr[X1^2]"
        assert sorted(p.name for p in (out / "snapshots").iterdir())[:2] == ["snap_00000.c64", "snap_00000.json"]

    def test_negative_dt(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2", dt=-1)
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 1
        assert "dt" in capsys.readouterr().err

    def test_missing_config(self, tmp_path, capsys):
        assert run("simulate", "--config", tmp_path / "nope.json", "--out", tmp_path / "o") == 1
        assert "nope.json" in capsys.readouterr().err

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{")
        assert run("simulate", "--config", p, "--out", tmp_path / "o") == 1

    def test_unknown_key(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2", dtt=0.1)
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 1
        assert "dtt" in capsys.readouterr().err

    def test_not_self_adjoint(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="i*X1*X2")
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 1

    def test_bad_potential_text(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, potential="X1 +")
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 1
        assert "col 5" in capsys.readouterr().err

    def test_cap_exceeded_is_failure(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2", N=16, t_max=1.0, M_cap=0.2)
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2

    def test_blow_up_is_failure(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="-X1^4", N=1, dt=0.5, t_max=20.0, Z={"norm": 3.0})
        out = tmp_path / "o"
        assert run("simulate", "--config", cfg, "--out", out) == 2
        assert json.loads((out / "summary.json").read_text())["status"].startswith("blow-up")

    def test_seed_override(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2", N=4, t_max=0.1)
        run("simulate", "--config", cfg, "--out", tmp_path / "a", "--seed", 1)
        run("simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", 2)
        a = json.loads((tmp_path / "a" / "summary.json").read_text())
        b = json.loads((tmp_path / "b" / "summary.json").read_text())
        assert (a["seed"], b["seed"]) == (1, 2) and a["noise_checksum"] != b["noise_checksum"]


class TestSdCheck:
    def test_deg_zero(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2", N=4, t_max=0.5, deg_max=0, k_max=0, replicas=2)
        out = tmp_path / "o"
        assert run("sd-check", "--config", cfg, "--out", out) == 0
        assert json.loads((out / "sd_report.json").read_text())["entries"] == []

    def test_no_equilibration_fails(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2 + 0.5*X2^2", N=8, dt=0.01, t_max=0.01,
                        deg_max=2, k_max=0, replicas=4)
        out = tmp_path / "o"
        assert run("sd-check", "--config", cfg, "--out", out) == 2
        rep = json.loads((out / "sd_report.json").read_text())
        failed = {e["polynomial"] for e in rep["entries"] if not e["pass"]}
        assert "X1" in failed

    def test_short_stationary_run(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2", N=32, t_max=14.0, burn_in=4.0,
                        deg_max=3, k_max=4, replicas=8, M_cap=3.0)
        out = tmp_path / "o"
        assert run("sd-check", "--config", cfg, "--out", out) == 0
        bounds = json.loads((out / "moment_bounds.json").read_text())
        assert bounds["passed"] and 1.5 < bounds["metadata"]["B0_plateau"] < 2.5
        assert (out / "sd_report.csv").read_text().startswith("polynomial,")


class TestCouple:
    def test_quadratic(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2 + 0.5*X2^2", N=8, t_max=4.0, c=0.5,
                        Z={"norm": 1.0}, transport=["X1", "X1*X2"], fit_window=[0, 4])
        out = tmp_path / "o"
        assert run("couple", "--config", cfg, "--out", out) == 0
        s = json.loads((out / "couple_summary.json").read_text())
        assert s["noise_checksums_match"] and s["rate_check"]
        assert s["trace_distance_slope"] == pytest.approx(2 * math.log(1 - 0.005) / 0.01, rel=1e-6)
        header = (out / "coupling.csv").read_text().splitlines()[0]
        assert header == "t,dist_op,dist_trace_sq,norm_z,norm_0,transport[X1],transport[X1*X2]"

    def test_rate_too_optimistic(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2", N=4, t_max=2.0, c=5.0, Z={"norm": 1.0}, fit_window=[0, 2])
        assert run("couple", "--config", cfg, "--out", tmp_path / "o") == 2


class TestConvexity:
    def test_certified(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2 + 0.5*X2^2",
                        convexity={"c": 1.0, "M_bound": 10.0, "trials": 200, "N": 4})
        out = tmp_path / "o"
        assert run("convexity", "--config", cfg, "--out", out) == 0
        assert capsys.readouterr().out.startswith("certified-at-tolerance")
        assert not (out / "witness_X.c64").exists()

    def test_refuted(self, tmp_path):
        cfg = write_cfg(tmp_path, potential="0.5*X1^2 + 0.5*X2^2 - X1^3",
                        convexity={"c": 1.0, "M_bound": 10.0, "trials": 200, "N": 4})
        out = tmp_path / "o"
        assert run("convexity", "--config", cfg, "--out", out) == 2
        assert (out / "witness_X.c64").exists() and (out / "witness_Y.json").exists()
        assert json.loads((out / "convexity.json").read_text())["verdict"] == "refuted"


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "freediff", "grad", "X1^2"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("2*X1")


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit):
        run("--help")
    out = capsys.readouterr().out
    for name in ("grad", "simulate", "sd-check", "couple", "convexity"):
        assert name in out
