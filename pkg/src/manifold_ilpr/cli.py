"""Command-line pipelines: simulate, fit, benchmark, embed.

Every command is a pure function of its input files and flags: identical
invocations produce identical outputs except for wall-clock columns. Each
command writes a JSON manifest next to its outputs echoing all parameters.

Exit codes: 0 success, 2 I/O, 3 parse, 4 data domain, 5 numeric failure.
"""

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import io as mio
from . import linalg, simulation, spd
from .bandwidth import GridSpec, select_bandwidth
from .embedding import EmbedConfig, linearized_pga, rie_tsne
from .errors import (
    DimensionError,
    DomainError,
    NumericError,
    ParseError,
)
from .regression import ExtrinsicAi, FitConfig, fit_at
from .simulation import McConfig, TrueModel, run_monte_carlo

EXIT_OK = 0
EXIT_IO = 2
EXIT_PARSE = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5

THREADS_ENV = "MANIFOLD_ILPR_THREADS"

METRIC_CHOICES = [
    "log-cholesky",
    "log-euclidean",
    "cholesky",
    "power-euclidean",
    "extrinsic-ai",
]


def _method_from_flag(metric, tau):
    if metric == "extrinsic-ai":
        return ExtrinsicAi()
    return spd.EpmMetric(metric, tau=tau)


def _resolve_threads(value):
    if value is not None:
        return max(1, value)
    env = os.environ.get(THREADS_ENV, "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DomainError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help=f"worker cap for internal parallelism (default: ${THREADS_ENV} or 1)",
    )

    parser = argparse.ArgumentParser(
        prog=mio.TOOL_NAME,
        description="Local polynomial regression pipelines for SPD-valued data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="generate a synthetic regression problem")
    sim.add_argument("--p", type=int, required=True, help="covariate dimension")
    sim.add_argument("--n", type=int, required=True, help="matrix dimension")
    sim.add_argument("--num-samples", type=int, default=100)
    sim.add_argument("--sigma", type=float, default=0.5)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output prefix")

    fit = sub.add_parser("fit", parents=[common], help="fit the regression at query points")
    fit.add_argument("--data", required=True)
    fit.add_argument("--metric", choices=METRIC_CHOICES, required=True)
    fit.add_argument("--tau", type=float, default=0.5, help="power-euclidean exponent")
    fit.add_argument("--degree", type=int, default=1)
    band = fit.add_mutually_exclusive_group(required=True)
    band.add_argument("--bandwidth", type=float)
    band.add_argument("--cv", action="store_true", help="select the bandwidth by LOOCV")
    fit.add_argument("--ridge", type=float, default=1e-3)
    fit.add_argument("--query", default="self", help="'self' or a covariate CSV path")
    fit.add_argument("--out", required=True, help="output prefix")

    bench = sub.add_parser("benchmark", parents=[common], help="Monte Carlo method comparison")
    bench.add_argument("--grid", default="1:2,3:10", help='"pmin:pmax,nmin:nmax"')
    bench.add_argument("--realizations", type=int, default=20)
    bench.add_argument("--num-samples", type=int, default=100)
    bench.add_argument("--sigma", type=float, default=0.5)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument(
        "--methods",
        default=",".join(simulation.METHOD_NAMES),
        help="comma-separated subset of " + ",".join(simulation.METHOD_NAMES),
    )
    bench.add_argument("--out", required=True, help="output prefix")

    emb = sub.add_parser("embed", parents=[common], help="low-dimensional inspection")
    emb.add_argument(
        "--data",
        action="append",
        required=True,
        help="dataset CSV, optionally 'label=path'; repeatable",
    )
    emb.add_argument("--method", choices=["tsne", "pga"], required=True)
    emb.add_argument(
        "--metric",
        choices=METRIC_CHOICES[:-1] + ["affine-invariant"],  # affine-invariant: pga only
        default="log-cholesky",
    )
    emb.add_argument("--tau", type=float, default=0.5)
    emb.add_argument("--perplexity", type=float, default=30.0)
    emb.add_argument("--iters", type=int, default=1000)
    emb.add_argument("--seed", type=int, default=0)
    emb.add_argument("--components", default="2", help="PGA component count or 'full'")
    emb.add_argument("--out", required=True, help="output prefix")

    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(args.seed, spawn_key=(args.p, args.n, 0))))
    model = TrueModel.draw(args.p, args.n, rng)
    x = simulation.gen_covariates(args.num_samples, args.p, rng)
    y_true = simulation.true_response_many(model, x)
    y_noisy = simulation.add_lognormal_noise_many(y_true, args.sigma, rng)
    params = {
        "p": args.p,
        "n": args.n,
        "num_samples": args.num_samples,
        "sigma": args.sigma,
        "seed": args.seed,
        "out": args.out,
    }
    true_path = f"{args.out}.true.csv"
    noisy_path = f"{args.out}.noisy.csv"
    mio.write_dataset(true_path, x, y_true, extra_meta={"kind": "true", "seed": args.seed})
    mio.write_dataset(noisy_path, x, y_noisy, extra_meta={"kind": "noisy", "seed": args.seed, "sigma": args.sigma})
    mio.write_manifest(f"{args.out}.manifest.json", "simulate", params, [true_path, noisy_path])
    print(f"wrote {true_path} and {noisy_path} ({args.num_samples} samples)")
    return EXIT_OK


def cmd_fit(args):
    ds, _ = mio.read_dataset(args.data)
    method = _method_from_flag(args.metric, args.tau)
    if args.query == "self":
        queries = ds.x
    else:
        queries = mio.read_covariates(args.query)
        if queries.shape[1] != ds.covariate_dim:
            raise DimensionError(
                f"query file has p={queries.shape[1]}, dataset has p={ds.covariate_dim}"
            )
    if args.cv:
        cv = select_bandwidth(ds, args.degree, method, GridSpec(), args.ridge)
        h = cv.best_h
    else:
        h = args.bandwidth
    cfg = FitConfig(degree=args.degree, bandwidth=h, ridge=args.ridge)
    estimates = fit_at(ds, queries, cfg, method)
    out_path = f"{args.out}.csv"
    meta = {"metric": args.metric, "degree": args.degree, "h": mio.fmt_float(h), "ridge": args.ridge}
    if args.metric == "power-euclidean":
        meta["tau"] = args.tau
    mio.write_dataset(out_path, queries, estimates, extra_meta=meta)
    params = {
        "data": args.data,
        "metric": args.metric,
        "tau": args.tau,
        "degree": args.degree,
        "bandwidth": None if args.cv else args.bandwidth,
        "cv": bool(args.cv),
        "h_selected": h,
        "ridge": args.ridge,
        "query": args.query,
        "out": args.out,
    }
    mio.write_manifest(f"{args.out}.manifest.json", "fit", params, [out_path])
    print(f"wrote {out_path} (h={mio.fmt_float(h)})")
    return EXIT_OK


def _parse_grid(text):
    try:
        p_part, n_part = text.split(",")
        p_lo, p_hi = (int(v) for v in p_part.split(":"))
        n_lo, n_hi = (int(v) for v in n_part.split(":"))
    except ValueError:
        raise DomainError(f'grid must look like "pmin:pmax,nmin:nmax", got {text!r}') from None
    if p_lo < 1 or n_lo < 1 or p_hi < p_lo or n_hi < n_lo:
        raise DomainError(f"degenerate grid bounds {text!r}")
    return tuple((p, n) for p in range(p_lo, p_hi + 1) for n in range(n_lo, n_hi + 1))


def cmd_benchmark(args):
    grid = _parse_grid(args.grid)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    threads = _resolve_threads(args.threads)
    cfg = McConfig(
        grid=grid,
        realizations=args.realizations,
        num_samples=args.num_samples,
        sigma=args.sigma,
        seed=args.seed,
        methods=methods,
        threads=threads,
    )
    total = len(grid) * args.realizations

    def progress(done, total_tasks, batch):
        cell = batch[0]
        print(f"[{done}/{total_tasks}] p={cell.p} n={cell.n} realization={cell.realization}", flush=True)

    report = run_monte_carlo(cfg, progress=progress if total > 1 else None)
    out_path = f"{args.out}.csv"
    mio.write_report_csv(out_path, report.rows, extra_meta={"seed": args.seed})
    params = {
        "grid": args.grid,
        "realizations": args.realizations,
        "num_samples": args.num_samples,
        "sigma": args.sigma,
        "seed": args.seed,
        "methods": list(methods),
        "threads": threads,
        "out": args.out,
    }
    mio.write_manifest(f"{args.out}.manifest.json", "benchmark", params, [out_path])
    _print_summary(report)
    failed = [r for r in report.rows if r.error]
    if len(failed) == len(report.rows):
        print("error: every benchmark row failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _print_summary(report):
    cells = {}
    for row in report.rows:
        if row.error:
            continue
        cells.setdefault((row.p, row.n, row.method), []).append(row)
    print(f"{'p':>3} {'n':>3} {'method':<14} {'median rmse':>12} {'median sec':>11} {'runs':>5}")
    for (p, n, method), rows in sorted(cells.items()):
        rmse = float(np.median([r.rmse for r in rows]))
        sec = float(np.median([r.fit_seconds for r in rows]))
        print(f"{p:>3} {n:>3} {method:<14} {rmse:>12.4g} {sec:>11.4g} {len(rows):>5}")


def _parse_data_args(specs):
    labeled = []
    for spec in specs:
        label, sep, path = spec.partition("=")
        if sep and not os.path.exists(spec) and os.sep not in label:
            labeled.append((label, path))
        else:
            labeled.append((Path(spec).stem.split(".")[-1], spec))
    return labeled


def cmd_embed(args):
    labeled = _parse_data_args(args.data)
    parts = []
    labels = []
    dim = None
    for label, path in labeled:
        ds, _ = mio.read_dataset(path)
        if dim is None:
            dim = ds.matrix_dim
        elif ds.matrix_dim != dim:
            raise DimensionError(f"{path}: matrix dimension {ds.matrix_dim} != {dim}")
        parts.append(ds.y)
        labels.extend([label] * ds.num_samples)
    ys = np.concatenate(parts, axis=0)
    if args.metric == "affine-invariant":
        if args.method == "tsne":
            raise DomainError("the affine-invariant metric has no flat chart; use pga")
        metric = spd.AiMetric()
    else:
        metric = spd.EpmMetric(args.metric, tau=args.tau)
    out_path = f"{args.out}.csv"
    outputs = [out_path]
    params = {
        "data": args.data,
        "method": args.method,
        "metric": args.metric,
        "perplexity": args.perplexity,
        "iters": args.iters,
        "seed": args.seed,
        "components": args.components,
        "out": args.out,
    }
    if args.method == "tsne":
        cfg = EmbedConfig(perplexity=args.perplexity, iterations=args.iters, seed=args.seed)
        emb = rie_tsne(ys, metric, cfg)
        mio.write_embedding_csv(out_path, emb.points, labels, extra_meta={"method": "tsne"})
        params["final_kl"] = float(emb.kl_trace[-1])
    else:
        tangent_dim = linalg.vech_len(dim)
        if args.components == "full":
            components = tangent_dim
        else:
            try:
                components = int(args.components)
            except ValueError:
                raise DomainError(
                    f"--components must be an integer or 'full', got {args.components!r}"
                ) from None
        res = linearized_pga(ys, metric=metric, components=components)
        mio.write_embedding_csv(out_path, res.scores, labels, extra_meta={"method": "pga"})
        dir_path = f"{args.out}.directions.csv"
        _write_pga_directions(dir_path, res)
        outputs.append(dir_path)
        params["explained_variance"] = [float(v) for v in res.explained_variance]
    mio.write_manifest(f"{args.out}.manifest.json", "embed", params, outputs)
    print(f"wrote {out_path} ({ys.shape[0]} points)")
    return EXIT_OK


def _write_pga_directions(path, res):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {mio.TOOL_NAME} pga directions\n")
        fh.write("# rows: tangent_mean, then one unit direction per component\n")
        fh.write(f"# base_vech={';'.join(mio.fmt_float(v) for v in linalg.vech(res.base_point))}\n")
        writer = csv.writer(fh)
        writer.writerow([f"t{i}" for i in range(res.directions.shape[1])])
        writer.writerow([mio.fmt_float(v) for v in res.tangent_mean])
        for row in res.directions:
            writer.writerow([mio.fmt_float(v) for v in row])


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "benchmark": cmd_benchmark,
    "embed": cmd_embed,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (DomainError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
