"""Benchmark harness comparing the penalized-system solvers.

Each trial samples columns from a master design (random subsets for the
independent mode, contiguous blocks for the correlated mode so adjacency
survives), builds the shared Gram factor and penalized matrix during an
untimed prep phase, then times every solver on the same system and
records accuracy against the direct solve.  Trials own RNG streams
derived from (seed, mode, p, trial), so results do not depend on
execution order or worker count.
"""

from __future__ import annotations

import csv
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linalg import NotPositiveDefinite, cholesky
from .simulate import CalibrationBin, DesignSpec, gen_design
from .solvers import (
    PenalizedSystem,
    SolverOptions,
    solve_cg,
    solve_direct,
    solve_gauss_seidel,
    solve_icf,
    solve_jacobi,
    solve_sor,
    solve_steepest,
)

__all__ = [
    "BenchResult",
    "DEFAULT_METHODS",
    "SOLVERS",
    "run_benchmark",
    "summarize_benchmark",
    "write_bench_csv",
    "write_calibration_csv",
    "write_error_dist_csv",
]

SOLVERS = {
    "direct": solve_direct,
    "icf": solve_icf,
    "jacobi": solve_jacobi,
    "gauss_seidel": solve_gauss_seidel,
    "sor": solve_sor,
    "cg": solve_cg,
    "steepest": solve_steepest,
}

DEFAULT_METHODS = ("direct", "icf", "jacobi", "gauss_seidel", "sor", "cg")


@dataclass
class BenchResult:
    """One solver run on one benchmark trial."""

    method: str
    mode: str
    p: int
    trial: int
    wall_time: float
    iterations: int
    converged: bool
    max_error_vs_direct: float | None


def _bench_trial(master, mode, mode_idx, p, trial, seed, sigma_value, methods, options):
    rng = np.random.default_rng([seed, mode_idx, p, trial])
    master_p = master.shape[1]
    for _ in range(50):
        if mode == "ind":
            idx = np.sort(rng.choice(master_p, size=p, replace=False))
            cols = master[:, idx]
        else:
            start = int(rng.integers(0, master_p - p + 1))
            cols = master[:, start : start + p]
        try:
            r = cholesky(cols.T @ cols)
        except NotPositiveDefinite:
            continue
        break
    else:
        raise RuntimeError("could not draw a positive definite trial system")
    z = rng.standard_normal(p)
    system = PenalizedSystem(r, np.full(p, float(sigma_value)), z)
    # form the dense penalized matrix during prep so no solver pays for it
    # inside its timed section
    system.a_matrix()

    reports = {}
    for method in methods:
        solver = SOLVERS[method]
        start_t = time.perf_counter()
        report = solver(system) if method == "direct" else solver(system, options)
        reports[method] = (report, time.perf_counter() - start_t)
    if "direct" in reports:
        reference = reports["direct"][0].beta
    else:
        reference = solve_direct(system).beta

    rows = []
    for method in methods:
        report, wall = reports[method]
        error = None
        if report.converged:
            error = float(np.abs(report.beta - reference).max())
        rows.append(
            BenchResult(
                method, mode, p, trial, wall, report.iterations,
                bool(report.converged), error,
            )
        )
    return rows


def run_benchmark(
    modes=("ind", "dep"),
    p_grid=(50, 100, 200, 500),
    trials=200,
    n=1000,
    sigma_value=4.0,
    master_columns=2000,
    methods=DEFAULT_METHODS,
    seed=0,
    options: SolverOptions | None = None,
    workers: int = 1,
    dep_rho: float = 0.95,
) -> list[BenchResult]:
    """Run the full benchmark grid and return one row per solver per trial.

    Per-trial failures (non-convergence) are recorded in the rows, never
    raised.  Fixed seeds make the run fully reproducible, worker pool or
    not.
    """
    if max(p_grid) > master_columns:
        raise ValueError("p grid exceeds the master design width")
    unknown = set(methods) - set(SOLVERS)
    if unknown:
        raise ValueError("unknown methods: %s" % sorted(unknown))
    options = options if options is not None else SolverOptions()

    results: list[BenchResult] = []
    for mode_idx, mode in enumerate(modes):
        master = gen_design(
            DesignSpec(
                n=n,
                p_total=master_columns,
                mode=mode,
                dep_rho=dep_rho,
                seed=[seed, mode_idx],
            )
        )
        tasks = [(p, trial) for p in p_grid for trial in range(trials)]

        def one(task):
            p, trial = task
            return _bench_trial(
                master, mode, mode_idx, p, trial, seed, sigma_value, methods,
                options,
            )

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for rows in pool.map(one, tasks):
                    results.extend(rows)
        else:
            for task in tasks:
                results.extend(one(task))
    return results


def summarize_benchmark(results: list[BenchResult]) -> dict:
    """Aggregate rows into {(mode, p, method): summary} cells."""
    cells: dict[tuple, dict] = {}
    grouped: dict[tuple, list[BenchResult]] = {}
    for row in results:
        grouped.setdefault((row.mode, row.p, row.method), []).append(row)
    for key, rows in grouped.items():
        errors = [r.max_error_vs_direct for r in rows if r.converged]
        cells[key] = {
            "trials": len(rows),
            "failures": sum(not r.converged for r in rows),
            "median_wall": statistics.median(r.wall_time for r in rows),
            "median_iterations": statistics.median(r.iterations for r in rows),
            "median_error": statistics.median(errors) if errors else float("nan"),
        }
    return cells


def write_bench_csv(results: list[BenchResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "method", "mode", "p", "trial", "wall_time", "iterations",
                "converged", "max_error_vs_direct",
            ]
        )
        for r in results:
            writer.writerow(
                [
                    r.method, r.mode, r.p, r.trial, repr(r.wall_time),
                    r.iterations, int(r.converged),
                    "" if r.max_error_vs_direct is None
                    else repr(r.max_error_vs_direct),
                ]
            )


def write_error_dist_csv(results: list[BenchResult], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "mode", "p", "trial", "max_error_vs_direct"])
        for r in results:
            if r.converged:
                writer.writerow(
                    [r.method, r.mode, r.p, r.trial, repr(r.max_error_vs_direct)]
                )


def write_calibration_csv(bins: list[CalibrationBin], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count", "mean_pip", "tp_fraction", "se"])
        for b in bins:
            writer.writerow(
                [
                    repr(b.lo), repr(b.hi), b.count, repr(b.mean_pip),
                    repr(b.tp_fraction), repr(b.se),
                ]
            )
