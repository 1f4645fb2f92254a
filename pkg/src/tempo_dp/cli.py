"""Benchmark CLI: build a scenario, run sequential/parallel solvers, check
equivalence, and emit trajectory + run-record CSVs.

Exit codes: 0 success, 1 usage error, 2 solver error.
"""

from __future__ import annotations

import argparse
import csv
import statistics
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import finite_dp, lqt, nonlinear, scenarios
from .errors import SolverError
from .scan import ScanStats

__all__ = ["Scenario", "RunRecord", "build_scenario", "run_scenario", "main"]

SCENARIOS = ("tracking2d", "mass_spring", "routing", "unicycle")


@dataclass
class Scenario:
    name: str
    params: dict
    problem: object


@dataclass
class RunRecord:
    scenario: str
    backend: str
    T: int
    wall_ms: float
    combine_count: int
    combine_depth: int
    max_deviation_vs_oracle: float | None = None


def build_scenario(name: str, T: int, N: int = 4, Dx: int = 5, seed: int = 0) -> Scenario:
    if name == "tracking2d":
        return Scenario(name, {"T": T, "seed": seed}, scenarios.build_tracking2d(T, seed=seed))
    if name == "mass_spring":
        return Scenario(name, {"T": T, "N": N}, scenarios.build_mass_spring(N, T))
    if name == "routing":
        return Scenario(name, {"T": T, "Dx": Dx, "seed": seed}, scenarios.build_routing(Dx, T, seed=seed))
    if name == "unicycle":
        return Scenario(name, {"T": T, "seed": seed}, scenarios.build_unicycle(T, seed=seed))
    raise ValueError(f"unknown scenario {name!r}")


def _median_ms(fn, repeats: int):
    fn()  # warm-up
    times = []
    result = None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        result = fn()
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times), result


def _solve_lqt(p: lqt.LqtProblem, backend: str, traj_method: int, block_size, workers: int):
    if block_size:
        xs, us = lqt.solve_condensed(p, block_size, backend="parallel" if backend == "par" else "sequential")
        return xs, us, None
    if backend == "seq":
        values, gains = lqt.riccati_backward(p)
        xs, us = lqt.closed_loop_rollout(p, values, gains)
        return xs, us, None
    values, gains, stats = lqt.parallel_backward(p, workers=workers, return_stats=True)
    if traj_method == 2:
        xs = lqt.traj_method2(p, values)
    else:
        xs = lqt.traj_method1(p, gains, values)
    us = lqt.controls_along(p, values, gains, xs)
    return xs, us, stats


def _solve_routing(p: finite_dp.FiniteProblem, backend: str, traj_method: int, workers: int):
    if backend == "seq":
        pol = finite_dp.seq_bellman(p)
        xs, us = finite_dp.rollout_policy(p, pol)
        return xs, us, None
    pol, stats = finite_dp.solve_backward(p, workers=workers, return_stats=True)
    if traj_method == 2:
        fw = finite_dp.forward_conditional(p)
        xs = finite_dp.recover_traj_m2(p, fw, pol)
    else:
        xs = finite_dp.recover_traj_m1(p, pol)
    us = np.array([pol.u[k, xs[k]] for k in range(p.N)], dtype=np.int64)
    return xs, us, stats


def _solve_unicycle(p: nonlinear.NonlinearProblem, backend: str, traj_method: int, iters: int):
    name = "sequential" if backend == "seq" else "parallel"
    xs, us, costs = nonlinear.ilqt(p, iters=iters, backend=name, traj_method=traj_method)
    return xs, us, costs


def run_scenario(
    scn: Scenario,
    backend: str = "both",
    repeats: int = 10,
    traj_method: int = 1,
    block_size: int | None = None,
    iters: int = 10,
    workers: int = 1,
) -> tuple[list[RunRecord], dict]:
    """Time the requested backends and collect trajectories and records."""
    backends = ("seq", "par") if backend == "both" else (backend,)
    records: list[RunRecord] = []
    outputs: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    p = scn.problem
    T = scn.params["T"]
    for be in backends:
        if scn.name in ("tracking2d", "mass_spring"):
            ms, (xs, us, stats) = _median_ms(
                lambda be=be: _solve_lqt(p, be, traj_method, block_size, workers), repeats
            )
        elif scn.name == "routing":
            ms, (xs, us, stats) = _median_ms(
                lambda be=be: _solve_routing(p, be, traj_method, workers), repeats
            )
        else:
            ms, (xs, us, _) = _median_ms(
                lambda be=be: _solve_unicycle(p, be, traj_method, iters), repeats
            )
            stats = None
            if be == "par":
                lin = nonlinear.linearize(p, nonlinear.Nominal(xs, us))
                std, _ = lqt.transform_general_cost(lin)
                _, _, stats = lqt.parallel_backward(std, return_stats=True)
        if stats is None:
            n_elem = len(xs)  # sequential pass: one combine per step
            stats = ScanStats(combine_count=n_elem - 1, combine_depth=n_elem - 1)
        outputs[be] = (np.asarray(xs, dtype=np.float64), np.asarray(us, dtype=np.float64))
        records.append(
            RunRecord(scn.name, "sequential" if be == "seq" else "parallel", T, ms,
                      stats.combine_count, stats.combine_depth)
        )
    if len(backends) == 2:
        xs_a, us_a = outputs["seq"]
        xs_b, us_b = outputs["par"]
        dev = float(np.max(np.abs(xs_a - xs_b)))
        if us_a.size:
            dev = max(dev, float(np.max(np.abs(us_a - us_b))))
        for rec in records:
            rec.max_deviation_vs_oracle = dev
    return records, outputs


def write_runs_csv(path, records: list[RunRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["scenario", "backend", "T", "wall_ms", "combine_count", "combine_depth",
             "max_deviation_vs_oracle"]
        )
        for r in records:
            dev = "" if r.max_deviation_vs_oracle is None else repr(r.max_deviation_vs_oracle)
            w.writerow([r.scenario, r.backend, r.T, f"{r.wall_ms:.3f}",
                        r.combine_count, r.combine_depth, dev])


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="tempo-dp",
        description="Temporal-parallel optimal control benchmarks "
        "(off-grid moves in the routing scenario are infeasible, not clamped).",
    )
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--T", type=int, required=True, help="number of time steps")
    ap.add_argument("--N", type=int, default=4, help="mass count (mass_spring)")
    ap.add_argument("--Dx", type=int, default=5, help="state count (routing)")
    ap.add_argument("--backend", choices=("seq", "par", "both"), default="both")
    ap.add_argument("--traj-method", type=int, choices=(1, 2), default=1)
    ap.add_argument("--block-size", type=int, default=None, help="partial condensing block size")
    ap.add_argument("--iters", type=int, default=10, help="linearization iterations (unicycle)")
    ap.add_argument("--workers", type=int, default=1,
                    help="worker threads for per-element combines; the default vectorized "
                    "engine always executes the same combine tree")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", required=True, help="output directory")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        scn = build_scenario(args.scenario, args.T, N=args.N, Dx=args.Dx, seed=args.seed)
    except ValueError as exc:
        print(f"tempo-dp: error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        records, outputs = run_scenario(
            scn,
            backend=args.backend,
            traj_method=args.traj_method,
            block_size=args.block_size,
            iters=args.iters,
            workers=args.workers,
        )
    except ValueError as exc:
        print(f"tempo-dp: error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"tempo-dp: solver error in {args.scenario}: {exc}", file=sys.stderr)
        return 2
    xs, us = outputs["par"] if "par" in outputs else outputs["seq"]
    lqt.write_trajectory_csv(out_dir / "trajectory.csv", xs, us)
    write_runs_csv(out_dir / "runs.csv", records)
    for rec in records:
        dev = "" if rec.max_deviation_vs_oracle is None else f"  max_dev={rec.max_deviation_vs_oracle:.3e}"
        print(
            f"{rec.scenario} {rec.backend}: T={rec.T} wall={rec.wall_ms:.3f} ms "
            f"combines={rec.combine_count} depth={rec.combine_depth}{dev}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
