"""Command line front end.

    ouconsume solve-barrier --config run.json --out out/
    ouconsume value-surface | paths | verify | scan

Every command reads one JSON config (all fields optional), applies flag
overrides, writes CSV/JSON files into ``--out`` and prints a JSON summary.
Exit codes: 0 ok, 1 invalid input, 2 numerical failure, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ouconsume import mc_oracle as mc
from ouconsume.functionals import BarrierError, ODESolveError, SlowConvergenceError, barrier_candidates
from ouconsume.model import ModelParams, ParameterError, derive_params
from ouconsume.ou_engine import RngStream, simulate_path
from ouconsume.special_fn import ConvergenceError, h_ratio
from ouconsume.value import DeltaError, build_value_function, value_x, write_value_surface
from ouconsume import verify as V

log = logging.getLogger("ouconsume")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3
NUMERICAL_ERRORS = (BarrierError, ODESolveError, SlowConvergenceError, ConvergenceError,
                    DeltaError, mc.HorizonError, ArithmeticError)


class ConfigError(ValueError):
    pass


@dataclass
class ParamsBlock:
    a: float = 1.0
    sigma_tilde: float = 2.0
    b_tilde: float = 4.0
    mu: float = 1.0


@dataclass
class SolverBlock:
    tol: float = 1e-10  # boundary-value solves
    barrier_tol: float = 1e-12
    domain_pad: float | None = None
    n_max: int = 60  # psi2 series terms


@dataclass
class MCBlock:
    n: int = mc.DEFAULT_N
    h: float = mc.DEFAULT_H
    T: float | None = None
    seed: int = 0
    workers: int = 1
    calibration_n: int = 20_000
    calibration_h: float = mc.DEFAULT_H
    calibration_sub: int = 4
    scan_r0: float = 0.0
    scan_x0: float = 1.0
    scan_spacing: float = 0.25
    scan_halfwidth: float = 1.0
    scan_barriers: list | None = None  # explicit grid for the scan command


@dataclass
class OutputBlock:
    paths: dict = field(default_factory=lambda: {"r0": [-5.0, 5.0], "T": 10.0, "h": 0.01})
    grids: dict = field(default_factory=lambda: {"r_min": None, "r_max": None, "n_r": 81,
                                                 "x_min": 0.0, "x_max": 5.0, "n_x": 11})


@dataclass
class RunConfig:
    params: ParamsBlock = field(default_factory=ParamsBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    mc: MCBlock = field(default_factory=MCBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def model(self) -> ModelParams:
        p = self.params
        return derive_params(p.a, p.sigma_tilde, p.b_tilde, p.mu)

    def validate(self) -> ModelParams:
        model = self.model()
        s, m = self.solver, self.mc
        for name in ("tol", "barrier_tol"):
            if not getattr(s, name) > 0:
                raise ConfigError(f"solver.{name} must be > 0")
        if s.domain_pad is not None and not s.domain_pad > 0:
            raise ConfigError("solver.domain_pad must be > 0")
        if int(s.n_max) < 1:
            raise ConfigError("solver.n_max must be >= 1")
        if int(m.n) < 1 or int(m.calibration_n) < 2:
            raise ConfigError("mc.n must be >= 1 and mc.calibration_n >= 2")
        for name in ("h", "calibration_h", "scan_spacing", "scan_halfwidth"):
            if not getattr(m, name) > 0:
                raise ConfigError(f"mc.{name} must be > 0")
        if m.T is not None and not m.T >= 0:
            raise ConfigError("mc.T must be >= 0")
        if not (0 <= int(m.seed) < 2**64):
            raise ConfigError("mc.seed must be an unsigned 64-bit integer")
        if int(m.calibration_sub) < 2:
            raise ConfigError("mc.calibration_sub must be >= 2")
        if not m.scan_x0 >= 0:
            raise ConfigError("mc.scan_x0 must be >= 0")
        return model

    def verify_config(self) -> V.VerifyConfig:
        m = self.mc
        return V.VerifyConfig(
            params=self.model(), n=int(m.n), h=m.h, T=m.T, seed=int(m.seed),
            calibration_n=int(m.calibration_n), calibration_h=m.calibration_h,
            calibration_sub=int(m.calibration_sub), scan_r0=m.scan_r0, scan_x0=m.scan_x0,
            scan_spacing=m.scan_spacing, scan_halfwidth=m.scan_halfwidth, workers=int(m.workers),
            solver_tol=self.solver.tol, series_n_max=int(self.solver.n_max),
        )


def _fill(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    obj = cls()
    for k, v in data.items():
        if isinstance(getattr(obj, k), dict) and isinstance(v, dict):
            merged = dict(getattr(obj, k))
            merged.update(v)
            v = merged
        setattr(obj, k, v)
    return obj


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(raw) - {"params", "solver", "mc", "output"}
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    return RunConfig(
        params=_fill(ParamsBlock, raw.get("params"), "params"),
        solver=_fill(SolverBlock, raw.get("solver"), "solver"),
        mc=_fill(MCBlock, raw.get("mc"), "mc"),
        output=_fill(OutputBlock, raw.get("output"), "output"),
    )


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(_finite(obj), indent=2, default=_json_default) + "\n", encoding="utf-8")
    return path


def _run_header(cfg: RunConfig, model: ModelParams) -> dict:
    m = cfg.mc
    T = mc.default_horizon(model) if m.T is None else m.T
    return {"seed": int(m.seed), "n": int(m.n), "h": m.h, "T": T, "params": model.as_dict()}


# ---------------------------------------------------------------- commands

def cmd_solve_barrier(cfg: RunConfig, out: Path, with_mc: bool = True) -> dict:
    model = cfg.validate()
    cands = barrier_candidates(model, cfg.solver.barrier_tol)
    report = {"candidates": {}}
    for name, sol in cands.items():
        report["candidates"][name] = {
            **sol.as_dict(),
            "H_at_root": h_ratio(model, sol.r_star, sol.centre),
            "H_at_zero": h_ratio(model, 0.0, sol.centre),
        }
    report["sigma_over_b"] = model.sigma / model.b
    report["optimal_barrier"] = cands["sigma/b"].r_star
    if with_mc:
        vf = build_value_function(model, cands["sigma/b"].r_star, cfg.solver.domain_pad, cfg.solver.tol)
        arb = V.arbitrate(model, cfg.verify_config(), vf)
        scan = arb["scan"]
        scan.to_csv(out / "barrier_scan.csv")
        report["mc_arbiter"] = {
            **_run_header(cfg, model),
            "r0": scan.r0,
            "x0": scan.x0,
            "argmax_barrier": scan.best,
            "candidates_within_spacing": arb["near"],
            "within_3se_of_argmax": scan.within_resolution(),
            "table": "barrier_scan.csv",
        }
    _write_json(out / "barrier.json", report)
    return report


def _grid_values(cfg: RunConfig, r_star: float):
    g = cfg.output.grids
    r_min = r_star - 4 if g.get("r_min") is None else g["r_min"]
    r_max = r_star + 4 if g.get("r_max") is None else g["r_max"]
    n_r, n_x = int(g.get("n_r", 81)), int(g.get("n_x", 11))
    if n_r < 1 or n_x < 1 or r_max < r_min or g.get("x_min", 0.0) < 0 or g["x_max"] < g.get("x_min", 0.0):
        raise ConfigError("invalid output.grids bounds")
    return np.linspace(r_min, r_max, n_r), np.linspace(g.get("x_min", 0.0), g["x_max"], n_x)


def cmd_value_surface(cfg: RunConfig, out: Path) -> dict:
    model = cfg.validate()
    vf = build_value_function(model, domain_pad=cfg.solver.domain_pad, tol=cfg.solver.tol)
    rs, xs = _grid_values(cfg, vf.r_star)
    path = write_value_surface(vf, rs, xs, out / "value_surface.csv")
    report = {
        "r_star": vf.r_star,
        "delta": vf.delta,
        "csv": path.name,
        "rows": int(rs.size * xs.size),
        "min_v_x_wait": min((value_x(vf, float(r)) for r in rs if r < vf.r_star), default=None),
    }
    _write_json(out / "value_surface.json", report)
    return report


def cmd_paths(cfg: RunConfig, out: Path) -> dict:
    model = cfg.validate()
    pcfg = cfg.output.paths
    r0s = [float(r) for r in pcfg.get("r0", [])]
    T, h = float(pcfg.get("T", 10.0)), float(pcfg.get("h", 0.01))
    if not r0s:
        raise ConfigError("output.paths.r0 must list at least one starting value")
    if not (T >= 0 and h > 0):
        raise ConfigError("output.paths needs T >= 0 and h > 0")
    r_star = barrier_candidates(model, cfg.solver.barrier_tol)["sigma/b"].r_star
    files = []
    for i, r0 in enumerate(r0s):
        grid = simulate_path(model, r0, T, min(h, T) if T > 0 else h, RngStream(int(cfg.mc.seed), i))
        name = f"path_{i:02d}_r0_{r0:g}.csv"
        grid.to_csv(out / name)
        files.append(name)
    with (out / "paths_r_star.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["r_star"])
        w.writerow([repr(r_star)])
    report = {"r_star": r_star, "files": files, "sidecar": "paths_r_star.csv", "T": T, "h": h,
              "seed": int(cfg.mc.seed)}
    _write_json(out / "paths.json", report)
    return report


def cmd_verify(cfg: RunConfig, out: Path, only=None) -> tuple[dict, bool]:
    cfg.validate()
    results = V.run_all(cfg.verify_config(), only)
    for r in results:
        print(r.line(), file=sys.stderr)
    ok = all(r.passed for r in results)
    report = {"passed": ok, "checks": [r.as_dict() for r in results],
              **_run_header(cfg, cfg.model())}
    _write_json(out / "verify.json", report)
    return report, ok


def cmd_scan(cfg: RunConfig, out: Path) -> dict:
    model = cfg.validate()
    m = cfg.mc
    vf = build_value_function(model, domain_pad=cfg.solver.domain_pad, tol=cfg.solver.tol)
    if m.scan_barriers:
        grid = [float(b) for b in m.scan_barriers]
    else:
        roots = [s.r_star for s in barrier_candidates(model, cfg.solver.barrier_tol).values()]
        grid = V.scan_grid(roots, m.scan_spacing, m.scan_halfwidth)
    scan = mc.optimality_scan(model, m.scan_r0, m.scan_x0, grid, n=int(m.n), h=m.h, T=m.T,
                              seed=int(m.seed), workers=int(m.workers), r_star_ref=vf.r_star,
                              delta=vf.delta)
    scan.to_csv(out / "scan.csv")
    report = {**_run_header(cfg, model), "r0": scan.r0, "x0": scan.x0, "argmax_barrier": scan.best,
              "within_3se_of_argmax": scan.within_resolution(), "analytic_r_star": vf.r_star,
              "table": "scan.csv"}
    _write_json(out / "scan.json", report)
    return report


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ouconsume", description="Optimal barrier consumption under an OU short rate.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (all fields optional)")
    common.add_argument("--seed", type=int, help="override mc.seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--n", type=int, help="override mc.n")
    common.add_argument("--h", type=float, help="override mc.h")
    common.add_argument("--T", type=float, help="override mc.T")
    common.add_argument("-v", "--verbose", action="store_true", help="log run headers to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    sb = sub.add_parser("solve-barrier", parents=[common], help="candidate roots plus MC arbiter")
    sb.add_argument("--no-mc", action="store_true", help="skip the Monte Carlo arbiter")
    sub.add_parser("value-surface", parents=[common], help="CSV of v(r, x) and the strategy region")
    sub.add_parser("paths", parents=[common], help="simulated rate paths as CSV")
    vp = sub.add_parser("verify", parents=[common], help="run acceptance checks 1-8")
    vp.add_argument("--only", help="comma-separated check numbers, e.g. 2,3,8")
    sub.add_parser("scan", parents=[common], help="policy values over a barrier grid")
    return p


def _apply_overrides(cfg: RunConfig, args) -> None:
    for name in ("seed", "n", "h", "T"):
        val = getattr(args, name)
        if val is not None:
            setattr(cfg.mc, name, val)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        _apply_overrides(cfg, args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        status = EXIT_OK
        if args.command == "solve-barrier":
            report = cmd_solve_barrier(cfg, out, with_mc=not args.no_mc)
        elif args.command == "value-surface":
            report = cmd_value_surface(cfg, out)
        elif args.command == "paths":
            report = cmd_paths(cfg, out)
        elif args.command == "verify":
            only = None
            if args.only:
                try:
                    only = {int(x) for x in args.only.split(",")}
                except ValueError as exc:
                    raise ConfigError(f"--only expects numbers, got {args.only!r}") from exc
            report, ok = cmd_verify(cfg, out, only)
            status = EXIT_OK if ok else EXIT_ACCEPTANCE
        else:
            report = cmd_scan(cfg, out)
    except (ParameterError, ConfigError, mc.InadmissiblePolicyError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps(_finite(report), indent=2, default=_json_default))
    return status


if __name__ == "__main__":
    sys.exit(main())
