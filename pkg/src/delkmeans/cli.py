"""Command-line front end: gen, train, delete, bench, metrics.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation (including a failed deletion-equality verdict).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .bench import (
    BenchConfig,
    baseline_algorithm,
    deletion_equality_test,
    dckmeans_algorithm,
    emit_report,
    qkmeans_algorithm,
    run_benchmark,
)
from .core import assign, kmeans_loss, lloyd, load_centroids_csv, save_centroids_csv
from .dataset import (
    DataError,
    LabeledDataset,
    gen_deletion_stream,
    gen_gaussian_mixture,
    load_csv,
    minmax_scale,
    save_csv,
)
from .dckmeans import DcParams, dckmeans_delete, dckmeans_train
from .heuristics import heuristic_epsilon, heuristic_width
from .metrics import loss_ratio, nmi, silhouette
from .qkmeans import QkParams, ReplayError, qkmeans_delete, qkmeans_train
from .serialize import LloydModel, ModelFile, load_model, save_model

SEED_ENV = "DELKMEANS_SEED"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# -- shared argument groups --------------------------------------------------


def _add_data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset source (exactly one of --csv / --synthetic)")
    g.add_argument("--csv", type=Path, help="numeric CSV file, one point per row")
    g.add_argument("--header", action="store_true", help="the CSV has one header row to skip")
    g.add_argument("--label-column", type=int, default=None, help="index of an integer label column (negative counts from the end)")
    g.add_argument("--synthetic", choices=["gaussian"], help="generate an isotropic Gaussian mixture instead of reading a file")
    g.add_argument("--n-per-cluster", type=int, default=4000, help="synthetic: points per mixture component (default 4000)")
    g.add_argument("--dim", type=int, default=25, help="synthetic: dimension (default 25)")
    g.add_argument("--components", type=int, default=5, help="synthetic: mixture components (default 5)")
    g.add_argument("--variance", type=float, default=0.8, help="synthetic: per-coordinate variance (default 0.8)")
    g.add_argument("--data-seed", type=int, default=0, help="synthetic: generator seed (default 0)")
    g.add_argument("--scale", action="store_true", help="min-max scale every dimension to [0, 1] before use")


def _add_algo_args(p: argparse.ArgumentParser, algos) -> None:
    p.add_argument("--algo", choices=algos, required=True, help="algorithm to run")
    p.add_argument("--k", type=int, required=True, help="number of clusters")
    p.add_argument("--T", type=int, default=10, help="maximum iterations (default 10)")
    p.add_argument("--epsilon", type=float, help="qkmeans: lattice spacing")
    p.add_argument("--gamma", type=float, default=0.2, help="qkmeans: balance threshold (default 0.2)")
    p.add_argument("--width", type=int, help="dckmeans: tree width, rounded to a power of two")
    p.add_argument("--height", type=int, default=1, help="dckmeans: tree height (default 1)")
    p.add_argument("--heuristic", action="store_true", help="fill in --epsilon / --width from the dataset size; the resolved values are printed")


def _add_seed_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help=f"training seed (default ${SEED_ENV} or 0)")


def _load_dataset(args) -> LabeledDataset:
    if (args.csv is None) == (args.synthetic is None):
        raise UsageError("give exactly one of --csv or --synthetic")
    if args.csv is not None:
        ds = load_csv(args.csv, has_header=args.header, label_column=args.label_column)
    else:
        ds = gen_gaussian_mixture(args.n_per_cluster, args.dim, args.components, args.variance, args.data_seed)
    if args.scale:
        ds = LabeledDataset(minmax_scale(ds.data)[0], ds.labels)
    return ds


def _resolve_params(args, n: int, d: int, algos) -> dict:
    """Complete algorithm parameters, applying heuristics where asked."""
    out = {}
    if "qkmeans" in algos:
        eps = args.epsilon
        if args.heuristic and eps is None:
            eps = heuristic_epsilon(n, args.k, d)
            print(f"heuristic: epsilon={eps!r} (n={n}, k={args.k}, d={d})")
        if eps is None:
            raise UsageError("qkmeans needs --epsilon or --heuristic")
        out["epsilon"] = eps
    if "dckmeans" in algos:
        w = args.width
        if args.heuristic and w is None:
            w = heuristic_width(n)
            print(f"heuristic: w={w} (n={n})")
        if w is None:
            raise UsageError("dckmeans needs --width or --heuristic")
        out["width"] = w
    return out


def _seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


# -- subcommands ----------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.synthetic is None:
        raise UsageError("gen needs --synthetic")
    args.csv = None
    ds = _load_dataset(args)
    save_csv(args.out, ds.data, ds.labels)
    print(f"wrote {ds.data.live_count} rows, d={ds.data.d}, labels in last column -> {args.out}")
    if args.deletions:
        if args.deletions_out is None:
            raise UsageError("--deletions needs --deletions-out")
        stream = gen_deletion_stream(ds.data, args.deletions, _seed(args))
        stream.save(args.deletions_out)
        print(f"wrote {len(stream)} deletion requests -> {args.deletions_out}")
    return EXIT_OK


def cmd_train(args) -> int:
    ds = _load_dataset(args)
    D = ds.data
    seed = _seed(args)
    resolved = _resolve_params(args, D.live_count, D.d, [args.algo])
    if args.algo == "qkmeans":
        params = QkParams(args.k, resolved["epsilon"], args.T, args.gamma)
        model = qkmeans_train(D, params, seed)
        loss = model.loss
        C = model.centroids
        desc = f"epsilon={params.epsilon!r} gamma={params.gamma}"
    elif args.algo == "dckmeans":
        params = DcParams(args.k, resolved["width"], args.height, args.T)
        model = dckmeans_train(D, params, seed)
        C = model.centroids
        loss = kmeans_loss(D, C)
        desc = f"w={params.width} h={params.height}"
    else:
        C, _ = lloyd(D, args.k, args.T, np.random.default_rng(seed))
        model = LloydModel(args.k, args.T, C, seed)
        loss = kmeans_loss(D, C)
        desc = ""
    save_model(args.out, ModelFile(model, D.fingerprint()))
    if args.centroids_out:
        save_centroids_csv(args.centroids_out, C)
    print(f"algo={args.algo} k={args.k} T={args.T} {desc} seed={seed} loss={loss!r}".replace("  ", " "))
    return EXIT_OK


def cmd_delete(args) -> int:
    mf = load_model(args.model)
    D = mf.bind(_load_dataset(args).data)
    model = mf.model
    for row in args.row_id:
        if not D.is_live(row):
            raise DataError(f"row_id {row} is not a live row")
        t0 = time.perf_counter()
        if isinstance(model, LloydModel):
            D.delete_row(row)
            model.retrains += 1
            rng = np.random.default_rng([model.seed, model.retrains])
            model.centroids, _ = lloyd(D, model.k, model.T, rng)
            retrained = True
        elif mf.kind == "qkmeans":
            model, retrained = qkmeans_delete(model, D, row)
        else:
            model, retrained = dckmeans_delete(model, D, row)
        elapsed = time.perf_counter() - t0
        mf.model = model
        mf.deleted_row_ids.append(int(row))
        print(f"row_id={row} retrained={str(retrained).lower()} seconds={elapsed:.6f}")
    mf.fingerprint = D.fingerprint()
    save_model(args.model, mf)
    return EXIT_OK


def _parse_checkpoints(text: str | None):
    if text is None:
        return None
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise UsageError(f"bad --checkpoints {text!r}") from None


def cmd_bench(args) -> int:
    ds = _load_dataset(args)
    n, d = ds.data.live_count, ds.data.d
    algos = ["baseline", "qkmeans", "dckmeans"] if args.algo == "all" else [args.algo]
    resolved = _resolve_params(args, n, d, algos)
    seed = _seed(args)
    if args.equality_test is not None:
        return _equality_mode(args, ds, algos, resolved, seed)
    if args.m is None:
        raise UsageError("bench needs --m")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoints = _parse_checkpoints(args.checkpoints)
    if checkpoints and (min(checkpoints) < 1 or max(checkpoints) > args.m):
        raise UsageError(f"--checkpoints must lie in [1, {args.m}]")
    references: dict = {}
    amortized = {}
    for algo in algos:
        cfg = BenchConfig(
            algorithm=algo,
            m=args.m,
            k=args.k,
            T=args.T,
            epsilon=resolved.get("epsilon"),
            gamma=args.gamma,
            width=resolved.get("width"),
            height=args.height,
            stream_seed=args.stream_seed,
            train_seed=seed,
            eval_seed=args.eval_seed,
            checkpoints=checkpoints,
            replicates=args.replicates,
        )
        report = run_benchmark(ds, cfg, references)
        emit_report(report, "json", out_dir / f"{algo}.json")
        emit_report(report, "csv", out_dir / f"{algo}.csv")
        mean, std = report.amortized
        amortized[algo] = mean
        retrains = np.mean([len(r.retrain_events) for r in report.runs])
        print(f"{algo}: amortized={mean:.6g}s +/- {std:.3g} retrains/run={retrains:g} -> {out_dir / algo}.json")
    base = amortized.get("baseline")
    if base is None and args.baseline_report:
        with open(args.baseline_report, encoding="utf-8") as fh:
            base = json.load(fh)["amortized_mean"]
    if base is not None:
        for algo, mean in amortized.items():
            if algo != "baseline":
                print(f"speedup {algo}: {base / mean:.2f}x")
    return EXIT_OK


def _equality_mode(args, ds, algos, resolved, seed) -> int:
    failed = False
    for algo in algos:
        if algo == "baseline":
            alg = baseline_algorithm(args.k, args.T)
        elif algo == "qkmeans":
            alg = qkmeans_algorithm(QkParams(args.k, resolved["epsilon"], args.T, args.gamma))
        else:
            alg = dckmeans_algorithm(DcParams(args.k, resolved["width"], args.height, args.T))
        v = deletion_equality_test(alg, ds, args.equality_test, args.trials, args.significance, seed)
        worst = min(v.pvalues, key=v.pvalues.get)
        print(f"{algo}: {'pass' if v.passed else 'FAIL'} min_p={v.pvalues[worst]:.4g} ({worst}) threshold={v.threshold:.4g}")
        failed |= not v.passed
    return EXIT_INTERNAL if failed else EXIT_OK


def cmd_metrics(args) -> int:
    ds = _load_dataset(args)
    D = ds.data
    if (args.model is None) == (args.centroids is None):
        raise UsageError("give exactly one of --model or --centroids")
    if args.model is not None:
        mf = load_model(args.model)
        D = mf.bind(D)
        C = mf.model.centroids
    else:
        C = load_centroids_csv(args.centroids)
    a = assign(D, C)
    loss = kmeans_loss(D, C)
    out = {"loss": loss}
    if args.baseline_loss is not None:
        out["loss_ratio"] = loss_ratio(loss, args.baseline_loss)
    try:
        out["silhouette"] = silhouette(D, a, args.silhouette_cap, np.random.default_rng(args.eval_seed))
    except ValueError:
        out["silhouette"] = None
    if ds.labels is not None:
        out["nmi"] = nmi(a.labels, ds.labels[D.live])
    for key, val in out.items():
        print(f"{key}={val!r}")
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(out, indent=1))
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="delkmeans", description="k-means with efficient data deletion")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a synthetic dataset (and optionally a deletion stream)")
    _add_data_args(p)
    _add_seed_arg(p)
    p.add_argument("--out", type=Path, required=True, help="CSV output path")
    p.add_argument("--deletions", type=int, default=0, help="also draw this many deletion requests")
    p.add_argument("--deletions-out", type=Path, help="deletion stream output path, one row id per line")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model and write it to a file")
    _add_data_args(p)
    _add_algo_args(p, ["lloyd", "qkmeans", "dckmeans"])
    _add_seed_arg(p)
    p.add_argument("--out", type=Path, required=True, help="model file to write (JSON)")
    p.add_argument("--centroids-out", type=Path, help="also write the centroids as CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("delete", help="delete rows from a trained model in place")
    _add_data_args(p)
    p.add_argument("--model", type=Path, required=True, help="model file; replaced atomically")
    p.add_argument("--row-id", type=int, action="append", required=True, help="row to delete (repeatable)")
    p.set_defaults(func=cmd_delete)

    p = sub.add_parser("bench", help="run the online deletion benchmark")
    _add_data_args(p)
    _add_algo_args(p, ["baseline", "qkmeans", "dckmeans", "all"])
    _add_seed_arg(p)
    p.add_argument("--m", type=int, help="number of deletion requests")
    p.add_argument("--replicates", type=int, default=5, help="independent replicates (default 5)")
    p.add_argument("--checkpoints", help="comma-separated deletion indices for quality metrics (default 1,10,100,1000 up to m)")
    p.add_argument("--stream-seed", type=int, default=0, help="deletion stream seed (default 0)")
    p.add_argument("--eval-seed", type=int, default=0, help="seed for reference losses and silhouette subsampling")
    p.add_argument("--out-dir", default=".", help="directory for <algo>.json and <algo>.csv reports")
    p.add_argument("--baseline-report", type=Path, help="baseline JSON report to compute speedups against")
    p.add_argument("--equality-test", type=int, metavar="ROW_ID", help="instead of timing, run the distributional deletion check for this row; exits 3 on failure")
    p.add_argument("--trials", type=int, default=2000, help="equality test: pipelines per side (default 2000)")
    p.add_argument("--significance", type=float, default=0.01, help="equality test: significance level (default 0.01)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("metrics", help="score centroids on a dataset")
    _add_data_args(p)
    p.add_argument("--model", type=Path, help="model file whose centroids to score")
    p.add_argument("--centroids", type=Path, help="centroid CSV to score")
    p.add_argument("--baseline-loss", type=float, help="reference loss for the loss ratio")
    p.add_argument("--silhouette-cap", type=int, default=10_000, help="subsample size cap for the silhouette (default 10000)")
    p.add_argument("--eval-seed", type=int, default=0, help="silhouette subsampling seed")
    p.add_argument("--json-out", type=Path, help="also write the scores as JSON")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"delkmeans: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as e:
        print(f"delkmeans: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ReplayError, AssertionError) as e:
        print(f"delkmeans: internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as e:
        print(f"delkmeans: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
