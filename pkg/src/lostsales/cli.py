"""Batch front-end.

    lostsales <subcommand> [config.json] [--seed N] [--out DIR] [--threads N] [--figures]

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 enumeration or state budget exceeded.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path

import numpy as np

from . import bounds, dp, lindley, policy, sim
from .demand import from_config, newsvendor
from .errors import BudgetExceeded, ConfigError, LostSalesError, RStarDegenerate
from .rng import child_stream

log = logging.getLogger("lostsales")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3
SCHEMA_VERSION = "1"
RATIO_COLUMNS = ["L", "T", "c", "h", "demand_id", "OPT", "cost_pi_z", "ratio", "z", "error"]


class Run:
    """Output directory, seed and manifest bookkeeping for one invocation."""

    def __init__(self, command: str, config: dict, seed: int, out: Path, figures: bool, threads: int):
        self.command = command
        self.config = config
        self.seed = seed
        self.out = out
        self.figures = figures
        self.threads = threads
        self.outputs: dict[str, str] = {}
        self.t0 = time.perf_counter()
        out.mkdir(parents=True, exist_ok=True)

    def stream(self, tag: str, index: int = 0):
        return child_stream(self.seed, f"{self.command}/{tag}", index)

    def config_hash(self) -> str:
        blob = json.dumps({"command": self.command, "config": self.config, "seed": self.seed}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def _register(self, path: Path) -> Path:
        self.outputs[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        payload = {"schema": SCHEMA_VERSION, "config_hash": self.config_hash(), "seed": self.seed, **payload}
        path = self.out / name
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
        tmp.replace(path)
        return self._register(path)

    def write_csv(self, name: str, header: list, rows: list) -> Path:
        path = self.out / name
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        tmp.replace(path)
        return self._register(path)

    def figure(self, name: str, fn, *args) -> None:
        if self.figures:
            self._register(Path(fn(*args, self.out / name)))

    def manifest(self, status: str) -> Path:
        try:
            version = metadata.version("artifact")
        except metadata.PackageNotFoundError:
            version = "unknown"
        payload = {
            "artifact_version": version,
            "command": self.command,
            "config": self.config,
            "config_hash": self.config_hash(),
            "seed": self.seed,
            "outputs": self.outputs,
            "status": status,
            "wall_seconds": round(time.perf_counter() - self.t0, 3),
        }
        path = self.out / "manifest.json"
        path.write_text(json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n")
        return path


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays become Python numbers and lists."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _need(cfg: dict, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"config is missing {', '.join(missing)}")
    return [cfg[k] for k in keys]


def _instance(cfg: dict):
    (spec,) = _need(cfg, "demand")
    d = from_config(spec)
    c = float(cfg.get("c", 1.0))
    h = float(cfg.get("h", 1.0))
    if c <= 0 or h <= 0:
        raise ConfigError("c and h must be positive")
    return d, c, h


def cmd_constants(run: Run) -> int:
    d, c, h = _instance(run.config)
    rep = bounds.constants_report(d, c, h, run.config.get("rates", []), run.config.get("eps", [0.5]))
    run.write_json("constants.json", {"c": c, "h": h, **rep.to_json()})
    return EXIT_OK


def cmd_lindley(run: Run) -> int:
    cfg = run.config
    d, _, _ = _instance(cfg)
    (r,) = _need(cfg, "r")
    sol = lindley.stationary_waiting(d, r, tol=float(cfg.get("tol", 1e-12)))
    payload = {
        "r": sol.r, "mean": sol.mean, "second_moment": sol.second_moment, "residual": sol.residual,
        "iterations": sol.iterations, "theta": lindley.theta(d, r),
    }
    samples = int(cfg.get("samples", 0))
    if samples:
        am = lindley.argmax_distribution_mc(d, r, float(cfg.get("tail_tol", 1e-5)), samples, run.stream("argmax"))
        recs = lindley.verify_tail_suite(d, r, int(cfg.get("K", 50)), samples, None, sup_sol=sol, argmax=am)
        payload["tail_checks"] = [rec.to_json() for rec in recs]
        payload["K"] = am.K
        run.write_csv("argmax_pmf.csv", ["k", "pmf", "tail"], [[k, p, t] for k, (p, t) in enumerate(zip(am.pmf, am.tail()))])
        run.figure("tail_bounds.png", _plot("tail_bounds"), am)
    run.write_csv("supremum_pmf.csv", ["value", "pmf"], [[v, p] for v, p in zip(sol.support, sol.pmf)])
    run.write_json("lindley.json", payload)
    run.figure("supremum_pmf.png", _plot("supremum_pmf"), sol)
    return EXIT_OK


def cmd_z_search(run: Run) -> int:
    d, c, h = _instance(run.config)
    zs = policy.best_constant_z(d, c, h, run.config.get("grid_step"))
    run.write_csv("z_search.csv", ["v", "objective"], [[v, o] for v, o in zip(zs.grid, zs.objectives)])
    run.write_json("z.json", {"z": zs.z, "cost": zs.cost, "objective": zs.objective})
    run.figure("z_search.png", _plot("z_search"), zs)
    return EXIT_OK


def _dp_config(cfg: dict) -> dp.DPConfig:
    L, T = _need(cfg, "L", "T")
    return dp.DPConfig(
        int(L), int(T),
        order_cap=cfg.get("order_cap"),
        inventory_cap=cfg.get("inventory_cap"),
        state_budget=int(cfg.get("state_budget", 20_000_000)),
        check_cap=bool(cfg.get("check_cap", True)),
        keep_values=False,
    )


def cmd_dp(run: Run) -> int:
    d, c, h = _instance(run.config)
    cfg = _dp_config(run.config)
    opt, table = dp.solve(d, c, h, cfg)
    table.save(run.out / "table.npz")
    run._register(run.out / "table.npz")
    zs = policy.best_constant_z(d, c, h)
    pz = dp.evaluate_policy(policy.make_constant_order(d, zs.z, zs.sup_sol), d, c, h, cfg.L, cfg.T).mean
    run.write_json("dp.json", {
        "OPT": opt, "T_times_g": cfg.T * newsvendor(d, c, h).g, "cost_pi_z": pz, "ratio": pz / opt, "z": zs.z,
        "header": table.header(), "clip_mass": table.clip_mass, "cap_check": table.cap_check,
        "order_grid": "demand lattice (non-lattice orders excluded)",
    })
    run.write_csv("dp_period_costs.csv", ["t", "expected_cost"],
                  [[t + 1, v] for t, v in enumerate(table.period_costs)])
    return EXIT_OK


def cmd_simulate(run: Run) -> int:
    cfg = run.config
    d, c, h = _instance(cfg)
    L, T = (int(v) for v in _need(cfg, "L", "T"))
    pol = policy.policy_from_config(cfg.get("policy", {"kind": "best_constant"}), d, c, h)
    reps = int(cfg.get("reps", 10_000))
    summ, traj = sim.simulate(pol, d, c, h, L, T, reps, run.stream("paths"), record=True)
    payload = {**summ.to_json(), "policy": pol.to_config(), "T_times_g": T * newsvendor(d, c, h).g}
    if cfg.get("exact", False):
        payload["exact"] = dp.evaluate_policy(pol, d, c, h, L, T).mean
    traj.seed = run.seed
    traj.to_csv(run.out / "trajectory.csv")
    run._register(run.out / "trajectory.csv")
    run.write_json("cost.json", payload)
    run.figure("trajectory.png", _plot("trajectory"), traj)
    return EXIT_OK


def _lower_bound(run: Run, d, c, h, L):
    return bounds.lower_bound_optimize(
        d, c, h, L, budget=int(run.config.get("budget", 50_000)), stream=run.stream("crn"),
        saa_scenarios=int(run.config.get("saa_scenarios", 5_000)), crn_seed=run.seed,
    )


def cmd_lower_bound(run: Run) -> int:
    d, c, h = _instance(run.config)
    (L,) = _need(run.config, "L")
    sol = _lower_bound(run, d, c, h, int(L))
    run.write_json("lower_bound.json", {
        **sol.to_json(), "zero_solution_value": c * int(L) * d.mean,
        "inventory_cap": bounds.inventory_cap_check(d, c, h, int(L), sol),
        "rate_margin": bounds.rstar_margin_check(d, c, h, int(L), sol),
    })
    return EXIT_OK


def cmd_gap(run: Run) -> int:
    d, c, h = _instance(run.config)
    (L,) = _need(run.config, "L")
    L = int(L)
    sol = _lower_bound(run, d, c, h, L)
    payload = {"lower_bound": sol.to_json(), "inventory_cap": bounds.inventory_cap_check(d, c, h, L, sol)}
    try:
        rep = bounds.gap_certificate(d, c, h, L, sol, int(run.config.get("samples", 100_000)), run.stream("gap"))
    except RStarDegenerate as exc:
        payload["degenerate"] = str(exc)
        run.write_json("gap.json", payload)
        log.warning("%s", exc)
        return EXIT_FAIL
    payload["gap"] = rep.to_json()
    run.write_json("gap.json", payload)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _ratio_cell(args):
    spec, c, h, L, T = args
    d = from_config(spec)
    did = spec.get("id") or d.label or d.fingerprint()
    try:
        res = dp.opt_ratio(d, c, h, L, T)
        return {"L": L, "T": T, "c": c, "h": h, "demand_id": did, "OPT": res.opt, "cost_pi_z": res.cost_pi_z,
                "ratio": res.ratio, "z": res.z}
    except LostSalesError as exc:
        return {"L": L, "T": T, "c": c, "h": h, "demand_id": did, "error": f"{type(exc).__name__}: {exc}"}


def cmd_ratio_table(run: Run) -> int:
    cfg = run.config
    demands = cfg.get("demands") or ([cfg["demand"]] if "demand" in cfg else [])
    if not demands:
        raise ConfigError("config needs 'demands' (list) or 'demand'")
    Ls = [int(v) for v in cfg.get("L_grid", [cfg.get("L", 4)])]
    ratios = [float(v) for v in cfg.get("c_over_h", [1, 4, 9, 19])]
    h = float(cfg.get("h", 1.0))
    T = int(cfg.get("T", 20))
    if not Ls or not ratios:
        raise ConfigError("grids must be non-empty")
    cells = [(spec, r * h, h, L, T) for L in Ls for spec in demands for r in ratios]
    if run.threads > 1:
        with ProcessPoolExecutor(run.threads) as pool:
            rows = list(pool.map(_ratio_cell, cells))
    else:
        rows = [_ratio_cell(cell) for cell in cells]
    fr = _fractions(rows)
    table = [[r.get(k, "") for k in RATIO_COLUMNS] for r in rows]
    table.append(["summary", "", "", "", "fraction_at_most", "", "", "", "",
                  "; ".join(f"{k}:{v:.4f}" for k, v in fr.items())])
    run.write_csv("ratio_table.csv", RATIO_COLUMNS, table)
    run.write_json("ratio_summary.json", {"fractions_at_most": fr, "cells": len(rows),
                                          "failed_cells": sum("error" in r for r in rows)})
    run.figure("ratio_table.png", _plot("ratio_table"), rows)
    return EXIT_OK


def _fractions(rows, thresholds=(2.0, 1.33, 1.12)):
    vals = [r["ratio"] for r in rows if "ratio" in r]
    return {str(t): (sum(v <= t for v in vals) / len(vals) if vals else float("nan")) for t in thresholds}


def cmd_verify(run: Run) -> int:
    from .verification import run_all

    only = run.config.get("criteria")
    results = run_all(seed=run.seed, only=set(only) if only else None)
    for res in results:
        print(res.line())
    run.write_json("verify.json", {"criteria": [r.to_json() for r in results],
                                   "all_pass": all(r.passed for r in results)})
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def _plot(name: str):
    def draw(*args):
        from . import plotting

        return getattr(plotting, name)(*args)

    return draw


COMMANDS = {
    "constants": cmd_constants,
    "lindley": cmd_lindley,
    "z-search": cmd_z_search,
    "dp": cmd_dp,
    "simulate": cmd_simulate,
    "lower-bound": cmd_lower_bound,
    "gap": cmd_gap,
    "ratio-table": cmd_ratio_table,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lostsales", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", nargs="?", help="JSON config file (optional for verify)")
    p.add_argument("--seed", type=int, help="root seed (overrides config 'seed')")
    p.add_argument("--out", type=Path, help="output directory (overrides config 'out')")
    p.add_argument("--threads", type=int, help="worker processes for grid commands")
    p.add_argument("--figures", action="store_true", help="also render PNG figures next to the outputs")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = json.loads(Path(args.config).read_text()) if args.config else {}
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    out = args.out or Path(config.get("out", f"out/{args.command}"))
    threads = args.threads or int(config.get("threads", 1))
    run = Run(args.command, config, seed, out, args.figures or bool(config.get("figures", False)), threads)
    try:
        code = COMMANDS[args.command](run)
    except BudgetExceeded as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        code = EXIT_BUDGET
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except LostSalesError as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_FAIL
    run.manifest({EXIT_OK: "ok", EXIT_FAIL: "failed", EXIT_CONFIG: "config_error", EXIT_BUDGET: "budget_exceeded"}[code])
    return code


if __name__ == "__main__":
    sys.exit(main())
