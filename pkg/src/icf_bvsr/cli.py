"""Command-line interface: solve, bench, simulate, fit, calibrate.

Every command writes its outputs plus a ``manifest.json`` carrying the
resolved flags, seed, and input digests, so any run can be reproduced
exactly.  Exit codes: 0 success, 1 input/parse errors, 2 when a solve
finished without reaching tolerance.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import (
    SOLVERS,
    run_benchmark,
    summarize_benchmark,
    write_bench_csv,
    write_calibration_csv,
    write_error_dist_csv,
)
from .estimator import worker_cap
from .ioutil import (
    ParseError,
    RunManifest,
    read_genotypes,
    read_phenotypes,
    sha256_digest,
    write_manifest,
)
from .linalg import cholesky
from .mcmc import ChainConfig, merge_outputs, run_chain
from .model import DataError, Dataset, Hyperpriors
from .simulate import DesignSpec, PhenoSpec, calibration_bins, gen_design, simulate_phenotype
from .solvers import PenalizedSystem, SolverOptions

__all__ = ["main"]


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, command, digests, extras=None) -> RunManifest:
    flags = {
        key: value
        for key, value in vars(args).items()
        if key not in ("func", "command") and not callable(value)
    }
    return RunManifest(
        command=command,
        flags={k: (str(v) if isinstance(v, Path) else v) for k, v in flags.items()},
        seed=getattr(args, "seed", None),
        input_digests=digests,
        extras=extras or {},
    )


def cmd_solve(args) -> int:
    x, _, imputed = read_genotypes(args.matrix)
    p = x.shape[1]
    digests = {"matrix": sha256_digest(args.matrix)}
    if args.null_z:
        z = np.random.default_rng(args.seed).standard_normal(p)
    else:
        if args.z is None:
            raise ParseError("provide a right-hand-side file or --null-z")
        z = read_phenotypes(args.z)
        digests["z"] = sha256_digest(args.z)
        if z.size != p:
            raise ParseError(
                "right-hand side has %d values but the design has %d columns"
                % (z.size, p)
            )
    r = cholesky(x.T @ x)
    system = PenalizedSystem(r, np.full(p, args.sigma), z)
    options = SolverOptions(
        tolerance=args.tolerance, max_iter=args.max_iter, omega_sor=args.omega
    )
    solver = SOLVERS[args.method]
    report = solver(system) if args.method == "direct" else solver(system, options)

    out = _out_dir(args.out_dir)
    with open(out / "solution.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "beta"])
        for j, value in enumerate(report.beta):
            writer.writerow([j, repr(float(value))])
    write_manifest(
        _manifest(
            args,
            "solve",
            digests,
            extras={
                "imputed": imputed,
                "converged": bool(report.converged),
                "iterations": report.iterations,
            },
        ),
        out / "manifest.json",
    )
    print(
        "method=%s converged=%s iterations=%d max_step=%.3g"
        % (args.method, report.converged, report.iterations, report.max_step)
    )
    return 0 if report.converged else 2


def cmd_bench(args) -> int:
    modes = ("ind", "dep") if args.mode == "both" else (args.mode,)
    if args.p_grid is None:
        p_grid = (100, 200, 500, 1000) if args.full else (50, 100, 200, 500)
    else:
        try:
            p_grid = tuple(int(tok) for tok in args.p_grid.split(","))
        except ValueError:
            raise ParseError("p grid must be comma-separated integers") from None
    trials = args.trials if args.trials is not None else (1000 if args.full else 200)
    n = args.n if args.n is not None else (3000 if args.full else 1000)
    master = (
        args.master_columns
        if args.master_columns is not None
        else (20_000 if args.full else 2000)
    )
    results = run_benchmark(
        modes=modes,
        p_grid=p_grid,
        trials=trials,
        n=n,
        master_columns=master,
        seed=args.seed,
        workers=worker_cap(args.workers),
    )
    out = _out_dir(args.out_dir)
    write_bench_csv(results, out / "bench_results.csv")
    write_error_dist_csv(results, out / "error_dist.csv")
    write_manifest(_manifest(args, "bench", {}), out / "manifest.json")
    summary = summarize_benchmark(results)
    print("mode p method median_wall failures/trials median_error")
    for (mode, p, method), cell in sorted(summary.items()):
        print(
            "%s %d %s %.6f %d/%d %.3g"
            % (
                mode, p, method, cell["median_wall"], cell["failures"],
                cell["trials"], cell["median_error"],
            )
        )
    return 0


def cmd_simulate(args) -> int:
    design = gen_design(
        DesignSpec(
            n=args.n,
            p_total=args.p,
            mode=args.mode,
            dep_rho=args.dep_rho,
            seed=[args.seed, 0],
        )
    )
    y, beta_true, gamma_true = simulate_phenotype(
        design, PhenoSpec(n_causal=args.n_causal, h_target=args.h, seed=[args.seed, 1])
    )
    out = _out_dir(args.out_dir)
    with open(out / "geno.txt", "w") as fh:
        fh.write("# " + " ".join("c%d" % j for j in range(args.p)) + "\n")
        for row in design:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    with open(out / "pheno.txt", "w") as fh:
        for value in y:
            fh.write(repr(float(value)) + "\n")
    causal = np.zeros(args.p, dtype=int)
    causal[list(gamma_true)] = 1
    with open(out / "truth.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "beta_true", "causal"])
        for j in range(args.p):
            writer.writerow([j, repr(float(beta_true[j])), int(causal[j])])
    write_manifest(_manifest(args, "simulate", {}), out / "manifest.json")
    return 0


def _fit_chains(data, args) -> tuple[list, object]:
    hp = Hyperpriors(pi_min=args.pi_min, pi_max=args.pi_max)
    configs = [
        ChainConfig(
            burn_in=args.burn_in,
            sampling_steps=args.steps,
            rb_interval=args.rb_interval,
            seed=args.seed + chain,
            hyperpriors=hp,
        )
        for chain in range(args.chains)
    ]
    if len(configs) > 1:
        with ThreadPoolExecutor(max_workers=worker_cap(len(configs))) as pool:
            outputs = list(pool.map(lambda c: run_chain(data, c), configs))
    else:
        outputs = [run_chain(data, configs[0])]
    return outputs, merge_outputs(outputs)


def cmd_fit(args) -> int:
    x, _, imputed = read_genotypes(args.geno)
    y = read_phenotypes(args.pheno)
    if y.size != x.shape[0]:
        raise ParseError(
            "phenotype has %d values but genotype has %d rows" % (y.size, x.shape[0])
        )
    data = Dataset.from_raw(x, y)
    outputs, merged = _fit_chains(data, args)

    out = _out_dir(args.out_dir)
    with open(out / "pip.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "raw_pip", "rb_pip"])
        for j in range(data.n_cov):
            writer.writerow(
                [j, repr(float(merged.pip_raw[j])), repr(float(merged.pip_rb[j]))]
            )
    # pi/tau refresh on the thinned schedule; carry the latest draw forward
    # so every record row is complete
    with open(out / "hyper.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "h", "size", "pi", "tau"])
        for chain, output in enumerate(outputs):
            for rec in range(len(output.h_samples)):
                slot = min(
                    rec // args.rb_interval, max(len(output.pi_samples) - 1, 0)
                )
                pi_v = output.pi_samples[slot] if output.pi_samples else float("nan")
                tau_v = output.tau_samples[slot] if output.tau_samples else float("nan")
                writer.writerow(
                    [
                        chain,
                        repr(float(output.h_samples[rec])),
                        output.size_samples[rec],
                        repr(float(pi_v)),
                        repr(float(tau_v)),
                    ]
                )

    def column(values):
        return repr(float(np.mean(values))) if len(values) else ""

    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["metric"]
            + ["chain_%d" % c for c in range(len(outputs))]
            + ["combined"]
        )
        rows = [
            ("acceptance_rate", lambda o: [o.acceptance_rate]),
            ("mean_h", lambda o: o.h_samples),
            ("mean_size", lambda o: o.size_samples),
            ("mean_heritability", lambda o: o.heritability_samples),
            ("records", lambda o: None),
        ]
        for name, getter in rows:
            if name == "records":
                writer.writerow(
                    [name]
                    + [str(o.n_records) for o in outputs]
                    + [str(merged.n_records)]
                )
            else:
                writer.writerow(
                    [name]
                    + [column(getter(o)) for o in outputs]
                    + [column(getter(merged))]
                )
    write_manifest(
        _manifest(
            args,
            "fit",
            {"geno": sha256_digest(args.geno), "pheno": sha256_digest(args.pheno)},
            extras={"imputed": imputed, "acceptance_rate": merged.acceptance_rate},
        ),
        out / "manifest.json",
    )
    return 0


def _read_csv_column(path, column, cast=float):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file %s" % path)
    header = rows[0]
    if column not in header:
        raise ParseError("no column %r in %s" % (column, path))
    idx = header.index(column)
    try:
        return np.array([cast(row[idx]) for row in rows[1:]])
    except ValueError:
        raise ParseError("bad value in column %r of %s" % (column, path)) from None


def cmd_calibrate(args) -> int:
    if len(args.pip) != len(args.truth):
        raise ParseError("need matching counts of pip and truth files")
    pips = []
    truths = []
    digests = {}
    for pip_path, truth_path in zip(args.pip, args.truth):
        p = _read_csv_column(pip_path, args.column)
        t = _read_csv_column(truth_path, "causal", cast=int)
        if p.size != t.size:
            raise ParseError(
                "%s has %d rows but %s has %d" % (pip_path, p.size, truth_path, t.size)
            )
        pips.append(p)
        truths.append(t.astype(bool))
        digests["pip:%s" % pip_path] = sha256_digest(pip_path)
        digests["truth:%s" % truth_path] = sha256_digest(truth_path)
    bins = calibration_bins(np.concatenate(pips), np.concatenate(truths))
    out = _out_dir(args.out_dir)
    write_calibration_csv(bins, out / "calibration.csv")
    write_manifest(_manifest(args, "calibrate", digests), out / "manifest.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icf-bvsr",
        description="Penalized-system solvers and sparse Bayesian regression",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one penalized system from files")
    solve.add_argument("matrix", help="design matrix file (rows = samples)")
    solve.add_argument("z", nargs="?", default=None, help="right-hand-side file")
    solve.add_argument("--null-z", action="store_true", help="draw z ~ N(0, I)")
    solve.add_argument("--sigma", type=float, default=1.0)
    solve.add_argument("--method", choices=sorted(SOLVERS), default="icf")
    solve.add_argument("--tolerance", type=float, default=1e-6)
    solve.add_argument("--max-iter", type=int, default=200)
    solve.add_argument("--omega", type=float, default=1.2)
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--out-dir", default="solve_out")
    solve.set_defaults(func=cmd_solve)

    bench = sub.add_parser("bench", help="run the solver benchmark grid")
    bench.add_argument("--mode", choices=("ind", "dep", "both"), default="both")
    bench.add_argument("--p-grid", default=None)
    bench.add_argument("--trials", type=int, default=None)
    bench.add_argument("--n", type=int, default=None)
    bench.add_argument("--master-columns", type=int, default=None)
    bench.add_argument("--full", action="store_true")
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out-dir", default="bench_out")
    bench.set_defaults(func=cmd_bench)

    simulate = sub.add_parser("simulate", help="simulate genotypes and phenotype")
    simulate.add_argument("--n", type=int, required=True)
    simulate.add_argument("--p", type=int, required=True)
    simulate.add_argument("--n-causal", type=int, required=True)
    simulate.add_argument("--h", type=float, required=True)
    simulate.add_argument("--mode", choices=("ind", "dep"), default="ind")
    simulate.add_argument("--dep-rho", type=float, default=0.95)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--out-dir", default="sim_out")
    simulate.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit the regression by MCMC")
    fit.add_argument("geno")
    fit.add_argument("pheno")
    fit.add_argument("--burn-in", type=int, default=2000)
    fit.add_argument("--steps", type=int, default=10_000)
    fit.add_argument("--rb-interval", type=int, default=1000)
    fit.add_argument("--pi-min", type=float, default=1e-4)
    fit.add_argument("--pi-max", type=float, default=1e-2)
    fit.add_argument("--chains", type=int, default=1)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out-dir", default="fit_out")
    fit.set_defaults(func=cmd_fit)

    calibrate = sub.add_parser("calibrate", help="bin PIPs against truth")
    calibrate.add_argument("--pip", action="append", required=True)
    calibrate.add_argument("--truth", action="append", required=True)
    calibrate.add_argument("--column", default="raw_pip")
    calibrate.add_argument("--out-dir", default="calibrate_out")
    calibrate.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, DataError, OSError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
