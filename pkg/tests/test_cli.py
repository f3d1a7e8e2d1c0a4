import csv
import json
import subprocess
import sys

import pytest

from ouconsume.cli import EXIT_ACCEPTANCE, EXIT_INVALID, EXIT_OK, load_config, main, ConfigError


def run(tmp_path, *args, config=None):
    argv = list(args) + ["--out", str(tmp_path)]
    if config is not None:
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(config))
        argv += ["--config", str(cfg)]
    return main(argv)


def read_csv(path):
    with open(path, newline="") as fh:
        return [row for row in csv.reader(fh) if not row[0].startswith("#")]


def test_solve_barrier_no_mc(tmp_path, capsys):
    assert run(tmp_path, "solve-barrier", "--no-mc") == EXIT_OK
    rep = json.loads((tmp_path / "barrier.json").read_text())
    assert set(rep["candidates"]) == {"sigma/b", "sigma/b@b", "printed", "printed@b"}
    for c in rep["candidates"].values():
        assert abs(c["residual"]) <= 1e-12
        assert c["H_at_zero"] < rep["sigma_over_b"] or c["target"] < rep["sigma_over_b"]
    assert json.loads(capsys.readouterr().out)["optimal_barrier"] == rep["optimal_barrier"]


def test_solve_barrier_with_arbiter(tmp_path):
    assert run(tmp_path, "solve-barrier", "--n", "4000") == EXIT_OK
    rep = json.loads((tmp_path / "barrier.json").read_text())
    arb = rep["mc_arbiter"]
    rows = read_csv(tmp_path / "barrier_scan.csv")
    best = max(rows[1:], key=lambda r: float(r[1]))
    assert float(best[0]) == arb["argmax_barrier"]
    assert arb["n"] == 4000 and "seed" in arb


def test_invalid_params_exit(tmp_path, capsys):
    assert run(tmp_path, "solve-barrier", "--no-mc", config={"params": {"b_tilde": 1.0}}) == EXIT_INVALID
    assert "b_tilde" in capsys.readouterr().err


@pytest.mark.parametrize("config", [
    {"params": {"alpha": 1.0}},
    {"colour": "blue"},
    {"mc": {"h": -1.0}},
    {"solver": {"tol": 0.0}},
])
def test_bad_config_exit(tmp_path, config):
    assert run(tmp_path, "solve-barrier", "--no-mc", config=config) == EXIT_INVALID


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))
    assert main(["paths", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_INVALID


def test_value_surface_one_point(tmp_path, vf):
    grids = {"r_min": vf.r_star, "r_max": vf.r_star, "n_r": 1, "x_min": 0.0, "x_max": 0.0, "n_x": 1}
    assert run(tmp_path, "value-surface", config={"output": {"grids": grids}}) == EXIT_OK
    rows = read_csv(tmp_path / "value_surface.csv")
    assert rows[0] == ["r", "x", "v", "branch"]
    assert len(rows) == 2
    assert float(rows[1][2]) == pytest.approx(vf.delta, abs=1e-8)
    assert rows[1][3] == "consume"


def test_value_surface_wait_rows(tmp_path, vf):
    assert run(tmp_path, "value-surface") == EXIT_OK
    rows = read_csv(tmp_path / "value_surface.csv")[1:]
    assert len(rows) == 81 * 11
    by_r = {}
    for r, x, v, branch in rows:
        by_r.setdefault(float(r), []).append((float(x), float(v), branch))
    for r, pts in by_r.items():
        assert {p[2] for p in pts} == {"wait" if r < vf.r_star else "consume"}
        (x0, v0, _), (x1, v1, _) = pts[0], pts[-1]
        slope = (v1 - v0) / (x1 - x0)
        if r < vf.r_star:
            assert slope == pytest.approx(float(vf.curves["psi1"].value(r)), rel=1e-9)
            assert slope >= 1
    assert json.loads((tmp_path / "value_surface.json").read_text())["min_v_x_wait"] >= 1


def test_paths_two_files_and_rerun(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "paths", "--seed", "17") == EXIT_OK
    assert run(b, "paths", "--seed", "17") == EXIT_OK
    rep = json.loads((a / "paths.json").read_text())
    assert len(rep["files"]) == 2
    assert any("r0_-5" in f for f in rep["files"]) and any("r0_5" in f for f in rep["files"])
    for name in rep["files"] + ["paths_r_star.csv"]:
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rows = read_csv(a / rep["files"][0])
    assert rows[0] == ["t", "r", "U"]
    assert float(rows[1][1]) == -5.0
    side = read_csv(a / "paths_r_star.csv")
    assert side[0] == ["r_star"] and float(side[1][0]) == pytest.approx(rep["r_star"])


def test_paths_zero_horizon(tmp_path):
    cfg = {"output": {"paths": {"r0": [-5, 5], "T": 0.0}}}
    assert run(tmp_path, "paths", config=cfg) == EXIT_OK
    for name in json.loads((tmp_path / "paths.json").read_text())["files"]:
        assert len(read_csv(tmp_path / name)) == 2


def test_scan_command(tmp_path, vf):
    cfg = {"mc": {"n": 3000, "scan_barriers": [vf.r_star - 0.5, vf.r_star, vf.r_star + 0.5]}}
    assert run(tmp_path, "scan", config=cfg) == EXIT_OK
    rep = json.loads((tmp_path / "scan.json").read_text())
    assert rep["argmax_barrier"] in cfg["mc"]["scan_barriers"]
    assert len(read_csv(tmp_path / "scan.csv")) == 4


def test_verify_fast_checks(tmp_path):
    assert run(tmp_path, "verify", "--only", "2,3,4,5,8") == EXIT_OK
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert rep["passed"] is True
    assert [c["number"] for c in rep["checks"]] == [2, 3, 4, 5, 8]


def test_verify_bad_only(tmp_path):
    assert run(tmp_path, "verify", "--only", "two") == EXIT_INVALID


@pytest.mark.slow
def test_verify_negative_control_huge_step(tmp_path):
    assert run(tmp_path, "verify", "--only", "6", "--h", "0.5", "--n", "20000") == EXIT_ACCEPTANCE
    rep = json.loads((tmp_path / "verify.json").read_text())
    rows = rep["checks"][0]["measured"]["rows"]
    assert not all(r["ok"] for r in rows if r["kind"] == "psi1")


@pytest.mark.slow
def test_verify_seed_stability(tmp_path):
    outcomes = []
    for seed in ("1", "2"):
        out = tmp_path / seed
        status = run(out, "verify", "--only", "6", "--n", "20000", "--seed", seed)
        rep = json.loads((out / "verify.json").read_text())
        outcomes.append((status, [c["passed"] for c in rep["checks"]],
                         rep["checks"][0]["measured"]["rows"][0]["mc"]))
    assert outcomes[0][:2] == outcomes[1][:2] == (EXIT_OK, [True])
    assert outcomes[0][2] != outcomes[1][2]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ouconsume", "solve-barrier", "--no-mc", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "optimal_barrier" in proc.stdout
