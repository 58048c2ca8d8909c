"""Command-line pipeline: ingestion, projection, inference, assignment,
benchmarking and synthesis as reproducible batch runs.

Every command writes its artifacts plus a manifest JSON (config, seed,
version, output paths) alongside them; re-running the same invocation
reproduces every output byte for byte.  Exit codes: 0 success, 1 usage or
I/O error, 2 data validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .communities import best_of_restarts
from .data import (load_learner_category_matrix, load_similarity_matrix,
                   one_mode_projection, write_similarity_matrix)
from .errors import DataValidationError, NumericalError
from .evaluation import benchmark
from .model import Hyperparameters, fit
from .synthetic import PlantedSpec, sample_generative, sample_planted


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_hp_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k0", type=int, default=None,
                   help="initial community count (default: min(N, 100))")
    p.add_argument("--a", type=float, default=5.0, help="Gamma shape on precisions")
    p.add_argument("--b", type=float, default=2.0, help="Gamma rate on precisions")
    p.add_argument("--iters", type=int, default=2000, help="maximum sweeps")
    p.add_argument("--tol", type=float, default=1e-9,
                   help="relative energy-change early-stop threshold")


def _hp(args) -> Hyperparameters:
    return Hyperparameters(a=args.a, b=args.b, k0=args.k0,
                           n_iter=args.iters, rel_tol=args.tol)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forumcd",
                     description="Community detection on content-labelled "
                                 "forum data via Poisson matrix factorization "
                                 "with automatic relevance determination.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project",
                       help="project a learner-by-category CSV onto learners")
    p.add_argument("input", help="learner-by-category CSV")
    p.add_argument("--out", required=True, help="similarity-matrix CSV to write")
    p.add_argument("--zero-diagonal", action="store_true",
                   help="zero out self-similarity before writing")

    p = sub.add_parser("fit", help="fit the factor model to a similarity CSV")
    p.add_argument("input", help="similarity-matrix CSV")
    p.add_argument("--out", required=True, help="fit-result JSON to write")
    _add_hp_flags(p)
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.add_argument("--zero-diagonal", action="store_true",
                   help="zero out self-similarity before fitting")

    p = sub.add_parser("assign",
                       help="assign learners to communities via restarts")
    p.add_argument("input", help="similarity-matrix CSV")
    p.add_argument("--out", required=True, help="community-report JSON to write "
                                                "(a flat CSV lands next to it)")
    _add_hp_flags(p)
    p.add_argument("--restarts", type=int, default=100,
                   help="number of seeded restarts")
    p.add_argument("--seed", type=int, default=0, help="outer RNG seed")
    p.add_argument("--zero-diagonal", action="store_true",
                   help="zero out self-similarity before fitting")

    p = sub.add_parser("benchmark",
                       help="hold-out comparison against Pred-Avg and Pred-0")
    p.add_argument("input", help="similarity-matrix CSV")
    p.add_argument("--out", required=True, help="evaluation JSON to write "
                                                "(a text table lands next to it)")
    _add_hp_flags(p)
    p.add_argument("--subsets", type=int, default=20, help="number of subsets")
    p.add_argument("--subset-size", type=int, default=50,
                   help="order of each principal submatrix")
    p.add_argument("--fraction", type=float, default=0.1,
                   help="held-out fraction per row")
    p.add_argument("--symmetric-mask", action="store_true",
                   help="mask (j, i) alongside every held-out (i, j)")
    p.add_argument("--seed", type=int, default=0, help="outer RNG seed")
    p.add_argument("--zero-diagonal", action="store_true",
                   help="zero out self-similarity before benchmarking")

    p = sub.add_parser("synth", help="generate synthetic similarity data")
    p.add_argument("--out", required=True, help="similarity-matrix CSV to write")
    p.add_argument("--mode", choices=("planted", "generative"),
                   default="planted")
    p.add_argument("--n", type=int, default=60, help="number of learners")
    p.add_argument("--k", type=int, default=3, help="number of communities")
    p.add_argument("--sizes", default=None,
                   help="comma-separated community sizes (planted mode; "
                        "default: as equal as possible)")
    p.add_argument("--within", type=float, default=8.0,
                   help="within-community Poisson rate (planted mode)")
    p.add_argument("--between", type=float, default=0.5,
                   help="between-community Poisson rate (planted mode)")
    p.add_argument("--a", type=float, default=5.0,
                   help="Gamma shape on precisions (generative mode)")
    p.add_argument("--b", type=float, default=2.0,
                   help="Gamma rate on precisions (generative mode)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    return parser


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _manifest(args, outputs: list[Path]) -> dict:
    config = {k: v for k, v in sorted(vars(args).items())
              if k not in ("command", "func")}
    for key in ("input", "out"):
        if key in config:
            config[key] = str(config[key])
    return {
        "version": __version__,
        "command": args.command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "outputs": [str(o) for o in outputs],
    }


def _emit_manifest(args, outputs: list[Path]) -> None:
    primary = outputs[0]
    path = primary.with_suffix(primary.suffix + ".manifest.json")
    manifest = _manifest(args, outputs)
    _write_json(manifest, path)
    print(json.dumps(manifest, sort_keys=True))


def _load_x(args):
    x = load_similarity_matrix(args.input)
    if getattr(args, "zero_diagonal", False):
        x = x.zero_diagonal()
    return x


def _cmd_project(args) -> None:
    c = load_learner_category_matrix(args.input)
    x = one_mode_projection(c)
    if args.zero_diagonal:
        x = x.zero_diagonal()
    out = Path(args.out)
    write_similarity_matrix(x, out)
    _emit_manifest(args, [out])


def _cmd_fit(args) -> None:
    x = _load_x(args)
    result = fit(x, _hp(args), args.seed)
    out = Path(args.out)
    out.write_text(result.to_json(indent=2) + "\n", encoding="utf-8")
    _emit_manifest(args, [out])


def _cmd_assign(args) -> None:
    x = _load_x(args)
    report = best_of_restarts(x, _hp(args), args.restarts, args.seed)
    out = Path(args.out)
    out.write_text(report.to_json(indent=2) + "\n", encoding="utf-8")
    csv_out = out.with_suffix(".csv")
    report.to_csv(csv_out)
    _emit_manifest(args, [out, csv_out])


def _cmd_benchmark(args) -> None:
    x = _load_x(args)
    report = benchmark(x, n_subsets=args.subsets, subset_size=args.subset_size,
                       fraction=args.fraction, hp=_hp(args), seed=args.seed,
                       symmetric_mask=args.symmetric_mask)
    out = Path(args.out)
    out.write_text(report.to_json(indent=2) + "\n", encoding="utf-8")
    table_out = out.with_suffix(".txt")
    table_out.write_text(report.format_table(), encoding="utf-8")
    print(report.format_table(), end="")
    _emit_manifest(args, [out, table_out])


def _parse_sizes(args) -> tuple[int, ...]:
    if args.sizes is None:
        base, extra = divmod(args.n, args.k)
        return tuple(base + (1 if i < extra else 0) for i in range(args.k))
    try:
        sizes = tuple(int(s) for s in args.sizes.split(","))
    except ValueError:
        raise DataValidationError(f"cannot parse sizes {args.sizes!r}") from None
    return sizes


def _cmd_synth(args) -> None:
    out = Path(args.out)
    outputs = [out]
    if args.mode == "planted":
        spec = PlantedSpec(n=args.n, k=args.k, sizes=_parse_sizes(args),
                           within_rate=args.within, between_rate=args.between,
                           seed=args.seed)
        labels, x = sample_planted(spec)
        write_similarity_matrix(x, out)
        labels_out = out.with_suffix(".labels.csv")
        with open(labels_out, "w", encoding="utf-8") as handle:
            handle.write("learner_id,community\n")
            for lid, lab in zip(x.learner_ids, labels):
                handle.write(f"{lid},{int(lab)}\n")
        outputs.append(labels_out)
    else:
        hp = Hyperparameters(a=args.a, b=args.b)
        model, x = sample_generative(args.n, args.k, hp, args.seed)
        write_similarity_matrix(x, out)
        factors_out = out.with_suffix(".factors.json")
        _write_json({
            "w": [[float(v) for v in row] for row in model.w],
            "h": [[float(v) for v in row] for row in model.h],
            "beta": [float(v) for v in model.beta],
        }, factors_out)
        outputs.append(factors_out)
    _emit_manifest(args, outputs)


_COMMANDS = {
    "project": _cmd_project,
    "fit": _cmd_fit,
    "assign": _cmd_assign,
    "benchmark": _cmd_benchmark,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"forumcd: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataValidationError, ValueError) as exc:
        print(f"forumcd: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"forumcd: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
