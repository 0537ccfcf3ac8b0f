"""Command-line interface.

Exit codes: 0 success, 1 verification failure, 2 parse/data error,
3 infeasible target, 4 usage error. Results go to stdout as ``key=value``
lines; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import sys
import tempfile

import numpy as np

from . import matfile, measures, nn, verify
from .errors import Infeasible, InvalidTarget, MalformedCsv, ParseError, SrnError, ZeroMatrix
from .linalg import DEFAULT_TOL, iter_singular_triplets, spectral_norm, stable_rank
from .normalize import (
    SrnConfig,
    greedy_scale,
    spectral_clip_optimal,
    spectral_normalize_approx,
    srn_optimal,
    truncate_rank,
)

EXIT_OK, EXIT_VERIFY, EXIT_DATA, EXIT_INFEASIBLE, EXIT_USAGE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _read(path) -> np.ndarray:
    return matfile.read_matrix(path)


def cmd_analyze(args) -> int:
    W = _read(args.input)
    if not np.any(W):
        raise ZeroMatrix("matrix is identically zero")
    fro = float(np.sqrt(np.sum(W * W)))
    sigma1 = spectral_norm(W, args.tol, 100_000, args.seed)
    triplets = list(iter_singular_triplets(W, args.tol, 100_000, args.seed, strict=False))
    rank_est = sum(t.sigma > args.tol * triplets[0].sigma for t in triplets)
    print(f"frobenius={_fmt(fro)} sigma1={_fmt(sigma1)} srank={_fmt(fro**2 / sigma1**2)} rank_est={rank_est}")
    return EXIT_OK


def _target(args, shape) -> float:
    if (args.r is None) == (args.c is None):
        raise UsageError(f"mode {args.mode} needs exactly one of --r and --c")
    return SrnConfig(r=args.r, c=args.c).target(shape)


def cmd_normalize(args) -> int:
    W = _read(args.input)
    nan = float("nan")
    if args.mode == "srn-optimal":
        r = _target(args, W.shape)
        out, rep = srn_optimal(W, SrnConfig(r=r, k=args.k if args.k is not None else 0), args.tol, args.seed)
        g1, g2, l = rep.gamma1, rep.gamma2, rep.achieved_l
    elif args.mode == "srn-greedy":
        r = _target(args, W.shape)
        out, l, g2 = greedy_scale(W, r, args.k if args.k is not None else 1, args.tol, args.seed)
        g1 = 1.0
    elif args.mode == "sn":
        out = spectral_normalize_approx(W, args.tol, args.seed)
        g1 = g2 = 1.0 / spectral_norm(W, args.tol, 100_000, args.seed)
        l = 0
    elif args.mode == "clip":
        if args.s is None:
            raise UsageError("mode clip needs --s")
        out = spectral_clip_optimal(W, args.s, args.tol, args.seed)
        g1 = g2 = nan
        l = 0
    else:
        if args.t is None:
            raise UsageError("mode truncate needs --t")
        out = truncate_rank(W, args.t, args.tol, args.seed)
        g1, g2, l = 1.0, 0.0, args.t
    srank = stable_rank(out, args.tol, seed=args.seed) if np.any(out) else nan
    dist = float(np.sqrt(np.sum((W - out) ** 2)))
    matfile.write_matrix(args.out, out)
    print(f"gamma1={_fmt(g1)} gamma2={_fmt(g2)} srank={_fmt(srank)} fro_dist={_fmt(dist)} l={l}")
    return EXIT_OK


def cmd_verify(args) -> int:
    res = verify.run_suite(args.suite, args.n, args.seed)
    for line in res.lines():
        print(line)
    for prop, W in sorted(res.witnesses.items()):
        with tempfile.NamedTemporaryFile(
            "w", suffix=".srnmat", prefix=f"srnorm-{args.suite}-{prop}-", delete=False, encoding="utf-8"
        ) as fh:
            fh.write(matfile.format_matrix(W))
        print(f"witness property={prop} path={fh.name}")
    print(f"suite={args.suite} status={'fail' if res.failed else 'pass'}")
    return EXIT_VERIFY if res.failed else EXIT_OK


def _load_data(spec: str, seed: int) -> nn.Dataset:
    if spec.startswith("blobs:"):
        try:
            n, d, k, spread = spec[len("blobs:") :].split(",")
            return nn.make_blobs(int(n), int(d), int(k), float(spread), seed)
        except ValueError as err:
            raise MalformedCsv(f"bad blobs spec {spec!r}: {err}") from None
    return nn.load_csv(spec)


def cmd_train(args) -> int:
    ds = _load_data(args.data, args.seed)
    train_ds, test_ds = nn.split(ds, args.test_fraction, args.seed) if args.test_fraction > 0 else (ds, None)
    hidden = [int(h) for h in args.hidden.split(",") if h] if args.hidden else []
    model = nn.MlpModel.init([ds.inputs.shape[1], *hidden, ds.n_classes], seed=args.seed)
    cfg = nn.TrainConfig(
        mode=args.mode,
        c=args.c if args.mode == "srn" else None,
        lr=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        label_randomization=args.shatter,
    )
    trace = nn.train(model, train_ds, cfg, test_ds)
    if args.trace:
        trace.to_csv(args.trace)
    if args.save_model:
        matfile.save_model(nn.normalized_model(model, cfg), args.save_model)
    print(f"train_acc={_fmt(trace.final_train_acc)} test_acc={_fmt(trace.final_test_acc)}")
    return EXIT_OK


def cmd_elhist(args) -> int:
    model = matfile.load_model(args.model)
    if args.data:
        X = nn.load_csv(args.data).inputs
        sa = sb = measures.dataset_sampler(X)
    else:
        sa = sb = measures.gaussian_sampler(model.input_dim, args.scale)
    hist = measures.elhist(model, sa, sb, args.pairs, args.bins, args.seed, batched=True,
                           exclude_duplicates=bool(args.data))
    if args.out:
        hist.to_csv(args.out)
    print(f"p90={_fmt(hist.percentile_90)} p95={_fmt(hist.percentile_95)} n={hist.n_pairs}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="power iteration tolerance (default 1e-10)")

    parser = _Parser(prog="srnorm", description="Stable rank normalization toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", parents=[common], help="norms and stable rank of a matrix file")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("normalize", parents=[common], help="normalize a matrix file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", required=True, choices=["srn-optimal", "srn-greedy", "sn", "clip", "truncate"])
    p.add_argument("--r", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--s", type=float)
    p.add_argument("--t", type=int)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("verify", parents=[common], help="run a seeded property suite")
    p.add_argument("--suite", required=True, choices=verify.SUITES)
    p.add_argument("--n", type=int, default=100)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", parents=[common], help="train the toy MLP")
    p.add_argument("--data", required=True, help="CSV path or blobs:n,d,k,spread")
    p.add_argument("--mode", choices=["vanilla", "sn", "srn"], default="vanilla")
    p.add_argument("--c", type=float, default=0.3)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--hidden", default="32,32", help="comma-separated hidden widths")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--shatter", action="store_true", help="train on randomized labels")
    p.add_argument("--trace", help="write the per-epoch trace CSV here")
    p.add_argument("--save-model", help="write a snapshot of the normalized weights to this directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("elhist", parents=[common], help="empirical Lipschitz histogram of a model snapshot")
    p.add_argument("--model", required=True)
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out")
    p.add_argument("--data", help="draw pairs from the rows of this CSV instead of a Gaussian")
    p.add_argument("--scale", type=float, default=1.0)
    p.set_defaults(func=cmd_elhist)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"srnorm: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except Infeasible as err:
        print(str(err), file=sys.stderr)
        return EXIT_INFEASIBLE
    except ParseError as err:
        print(str(err), file=sys.stderr)
        return EXIT_DATA
    except (MalformedCsv, FileNotFoundError, IsADirectoryError, ZeroMatrix) as err:
        print(f"srnorm: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidTarget, SrnError, ValueError) as err:
        print(f"srnorm: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
