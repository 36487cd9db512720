"""Command-line front end.

Subcommands:

* ``train-semi``   train the node classifier, write checkpoint/metrics,
  print the final test accuracy;
* ``eval``         score a saved classifier checkpoint on a chosen mask;
* ``diffuse``      run the closed-form diffusion alone and write Z;
* ``train-gae``    edge split + auto-encoder training, print test AUC;
* ``export-embed`` write the last-layer embedding for external tools.

Exit codes: 0 success, 2 bad flags (detected before any compute),
1 runtime failure (missing files, solver breakdown, shape mismatches).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

from .data import DatasetError, load_dataset, write_dense_features
from .diffusion import (
    DiffusionKind,
    DiffusionOperator,
    SolverConfig,
    SolverError,
    validate_alpha,
)
from .graphs import add_self_loops
from .network import embed, forward_semi, load_checkpoint, save_checkpoint
from .training import (
    TrainConfig,
    evaluate_accuracy,
    split_edges,
    train_gae,
    train_semi,
    write_metrics,
)

# Short kind names as exposed on the command line.
KIND_NAMES = {
    "l": DiffusionKind.LAPLACIAN_REG,
    "rwr": DiffusionKind.RWR,
    "nl": DiffusionKind.NORMALIZED_LAPLACIAN,
    "multi-l": DiffusionKind.MULTI_LAPLACIAN,
}

DEFAULT_ALPHAS = {
    DiffusionKind.LAPLACIAN_REG: 4.5,
    DiffusionKind.RWR: 0.91,
    DiffusionKind.NORMALIZED_LAPLACIAN: 0.65,
    DiffusionKind.MULTI_LAPLACIAN: 4.5,
}


class UsageError(Exception):
    """Bad flag combination; reported with exit code 2."""


@dataclass
class RunSpec:
    """A fully validated run: everything a subcommand needs, no raw flags.

    Construction performs all flag validation (alpha ranges, hidden dims,
    optimizer settings) so handlers never fail on user input after
    compute has started.
    """

    command: str
    data_dir: str = None
    kind: DiffusionKind = None
    alpha: float = None
    variant: str = "paper"
    head_diffusion: bool = True
    arch: tuple = ()
    train: TrainConfig = None
    solver: SolverConfig = None
    row_normalize: bool = False
    self_loops: str = "isolated"
    checkpoint: str = None
    metrics: str = None
    out: str = None
    mask: str = "test"
    val_frac: float = 0.05
    test_frac: float = 0.1

    @classmethod
    def from_args(cls, args):
        spec = cls(command=args.command)
        spec.data_dir = args.data
        spec.row_normalize = args.row_normalize
        spec.self_loops = args.self_loops
        try:
            spec.solver = SolverConfig(tolerance=args.solver_tol, mode=args.solver_mode)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if hasattr(args, "kind"):
            spec.kind = KIND_NAMES[args.kind]
            alpha = DEFAULT_ALPHAS[spec.kind] if args.alpha is None else args.alpha
            try:
                spec.alpha = validate_alpha(spec.kind, alpha)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
            spec.variant = args.variant
        if hasattr(args, "hidden"):
            spec.arch = _parse_hidden(args.hidden)
            try:
                spec.train = TrainConfig(
                    epochs=args.epochs,
                    learning_rate=args.lr,
                    weight_decay=args.weight_decay,
                    patience=args.patience,
                    dropout=args.dropout,
                    seed=args.seed,
                )
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        spec.head_diffusion = not getattr(args, "no_head_diffusion", False)
        spec.checkpoint = getattr(args, "checkpoint", None)
        spec.metrics = getattr(args, "metrics", None)
        spec.out = getattr(args, "out", None)
        spec.mask = getattr(args, "mask", "test")
        if args.command == "train-gae":
            if not spec.arch:
                raise UsageError("the auto-encoder needs at least one hidden width")
            spec.val_frac = args.val_frac
            spec.test_frac = args.test_frac
            if spec.val_frac <= 0 or spec.test_frac <= 0 \
                    or spec.val_frac + spec.test_frac >= 1:
                raise UsageError(
                    f"need 0 < val-frac, 0 < test-frac, val-frac + test-frac < 1; "
                    f"got {spec.val_frac} and {spec.test_frac}"
                )
        return spec


def _parse_hidden(text):
    text = text.strip()
    if not text:
        return ()
    dims = []
    for part in text.split(","):
        try:
            h = int(part)
        except ValueError:
            raise UsageError(f"bad hidden width {part!r}") from None
        if h < 1:
            raise UsageError(f"hidden widths must be >= 1, got {h}")
        dims.append(h)
    return tuple(dims)


def _load_bundle(spec):
    bundle = load_dataset(spec.data_dir, row_normalize=spec.row_normalize)
    if spec.self_loops != "none":
        only_isolated = spec.self_loops == "isolated"
        bundle.graphs = tuple(
            add_self_loops(g, only_isolated=only_isolated) for g in bundle.graphs
        )
    return bundle


def _make_operator(spec, bundle, kind=None, alpha=None, variant=None):
    kind = spec.kind if kind is None else DiffusionKind(kind)
    alpha = spec.alpha if alpha is None else alpha
    variant = spec.variant if variant is None else variant
    return DiffusionOperator(kind, bundle.graphs, alpha, variant, spec.solver)


def _cmd_train_semi(spec):
    bundle = _load_bundle(spec)
    op = _make_operator(spec, bundle)
    params, history = train_semi(
        bundle, op, spec.arch, spec.train, head_diffusion=spec.head_diffusion
    )
    if spec.metrics:
        write_metrics(history, spec.metrics)
    if spec.checkpoint:
        save_checkpoint(
            spec.checkpoint, params, spec.kind, spec.alpha, spec.variant,
            head_diffusion=spec.head_diffusion, seed=spec.train.seed, model="semi",
        )
    print(f"test_accuracy={float(history.final_test_metric)!r}")
    return 0


def _cmd_eval(spec):
    params, header = load_checkpoint(spec.checkpoint)
    if header["model"] != "semi":
        raise RuntimeError(
            f"{spec.checkpoint}: checkpoint holds a {header['model']!r} model, "
            "eval needs a classifier"
        )
    bundle = _load_bundle(spec)
    if params.layer_dims[0] != bundle.d:
        raise RuntimeError(
            f"checkpoint expects {params.layer_dims[0]} input features, "
            f"dataset has {bundle.d}"
        )
    if params.layer_dims[-1] != bundle.num_classes:
        raise RuntimeError(
            f"checkpoint predicts {params.layer_dims[-1]} classes, "
            f"dataset has {bundle.num_classes}"
        )
    op = _make_operator(spec, bundle, header["kind"], header["alpha"], header["variant"])
    M, _ = forward_semi(params, op, bundle.features, head_diffusion=header["head_diffusion"])
    mask = getattr(bundle, spec.mask + "_mask")
    print(f"accuracy={evaluate_accuracy(M, bundle.labels, mask)!r}")
    return 0


def _cmd_diffuse(spec):
    bundle = _load_bundle(spec)
    op = _make_operator(spec, bundle)
    Z = op.diffuse(bundle.features)
    write_dense_features(Z, spec.out)
    return 0


def _cmd_train_gae(spec):
    bundle = _load_bundle(spec)
    split = split_edges(bundle.graph, spec.val_frac, spec.test_frac, spec.train.seed)
    g_train = split.train_graph(bundle.n)
    if spec.self_loops != "none":
        g_train = add_self_loops(g_train, only_isolated=spec.self_loops == "isolated")
    op = DiffusionOperator(spec.kind, (g_train,), spec.alpha, spec.variant, spec.solver)
    params, history = train_gae(bundle, op, spec.arch, spec.train, split)
    if spec.metrics:
        write_metrics(history, spec.metrics)
    if spec.checkpoint:
        save_checkpoint(
            spec.checkpoint, params, spec.kind, spec.alpha, spec.variant,
            head_diffusion=False, seed=spec.train.seed, model="gae",
        )
    print(f"test_auc={float(history.final_test_metric)!r}")
    return 0


def _cmd_export_embed(spec):
    params, header = load_checkpoint(spec.checkpoint)
    bundle = _load_bundle(spec)
    if params.layer_dims[0] != bundle.d:
        raise RuntimeError(
            f"checkpoint expects {params.layer_dims[0]} input features, "
            f"dataset has {bundle.d}"
        )
    op = _make_operator(spec, bundle, header["kind"], header["alpha"], header["variant"])
    H = embed(params, op, bundle.features, model=header["model"])
    write_dense_features(H, spec.out)
    return 0


_HANDLERS = {
    "train-semi": _cmd_train_semi,
    "eval": _cmd_eval,
    "diffuse": _cmd_diffuse,
    "train-gae": _cmd_train_gae,
    "export-embed": _cmd_export_embed,
}


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    data_parent = argparse.ArgumentParser(add_help=False)
    data_parent.add_argument("--data", required=True, metavar="DIR",
                             help="dataset directory in the plain-text format")
    data_parent.add_argument("--row-normalize", action="store_true",
                             help="scale each feature row to unit L1 norm on load")
    data_parent.add_argument("--self-loops", choices=("none", "isolated", "all"),
                             default="isolated",
                             help="add unit self-loops: to zero-degree nodes only, "
                                  "to every node, or not at all")
    data_parent.add_argument("--solver-tol", type=float, default=1e-7,
                             help="relative residual target for the linear solver")
    data_parent.add_argument("--solver-mode", choices=("iterative", "dense"),
                             default="iterative",
                             help="conjugate-gradient solves or dense factorization")

    diff_parent = argparse.ArgumentParser(add_help=False)
    diff_parent.add_argument("--kind", choices=tuple(KIND_NAMES), default="l",
                             help="diffusion kind")
    diff_parent.add_argument("--alpha", type=float, default=None,
                             help="diffusion strength; defaults per kind: "
                                  "l/multi-l 4.5, rwr 0.91, nl 0.65")
    diff_parent.add_argument("--variant", choices=("paper", "derived"), default="paper",
                             help="closed-form variant")

    train_parent = argparse.ArgumentParser(add_help=False)
    train_parent.add_argument("--hidden", default="16", metavar="DIMS",
                              help="comma-separated hidden widths; empty for none")
    train_parent.add_argument("--epochs", type=int, default=200, help="training epochs")
    train_parent.add_argument("--lr", type=float, default=0.01, help="Adam learning rate")
    train_parent.add_argument("--weight-decay", type=float, default=5e-4,
                              help="L2 penalty on the first-layer weights")
    train_parent.add_argument("--dropout", type=float, default=0.5,
                              help="dropout rate on diffused layer inputs")
    train_parent.add_argument("--patience", type=int, default=10,
                              help="early-stopping patience in epochs")
    train_parent.add_argument("--seed", type=int, default=0,
                              help="seed for weight init, dropout and splits")
    train_parent.add_argument("--checkpoint", metavar="PATH", default=None,
                              help="where to write the trained model")
    train_parent.add_argument("--metrics", metavar="PATH", default=None,
                              help="where to write the per-epoch metrics table")

    parser = argparse.ArgumentParser(
        prog="gden",
        description="Graph diffusion-embedding networks: closed-form feature "
                    "diffusion with stacked projection layers.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train-semi", parents=[data_parent, diff_parent, train_parent],
                       formatter_class=fmt,
                       help="train the semi-supervised node classifier")
    p.add_argument("--no-head-diffusion", action="store_true",
                   help="skip the extra diffusion inside the prediction head")

    p = sub.add_parser("eval", parents=[data_parent], formatter_class=fmt,
                       help="evaluate a classifier checkpoint")
    p.add_argument("--checkpoint", required=True, metavar="PATH",
                   help="trained model to score")
    p.add_argument("--mask", choices=("train", "val", "test"), default="test",
                   help="which split to score")

    p = sub.add_parser("diffuse", parents=[data_parent, diff_parent],
                       formatter_class=fmt,
                       help="apply the closed-form diffusion to the features")
    p.add_argument("--out", required=True, metavar="PATH",
                   help="output path for the diffused features (dense rows)")

    p = sub.add_parser("train-gae", parents=[data_parent, diff_parent, train_parent],
                       formatter_class=fmt,
                       help="train the link-prediction auto-encoder on an edge split")
    p.add_argument("--val-frac", type=float, default=0.05,
                   help="fraction of edges held out for validation")
    p.add_argument("--test-frac", type=float, default=0.1,
                   help="fraction of edges held out for testing")

    p = sub.add_parser("export-embed", parents=[data_parent], formatter_class=fmt,
                       help="write the last-layer node embedding")
    p.add_argument("--checkpoint", required=True, metavar="PATH",
                   help="trained model to read")
    p.add_argument("--out", required=True, metavar="PATH",
                   help="output path for the embedding (dense rows)")

    return parser


def run_cli(argv=None):
    """Parse ``argv`` and run the chosen subcommand; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code is None else int(exc.code)
    try:
        spec = RunSpec.from_args(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return _HANDLERS[spec.command](spec)
    except (DatasetError, SolverError, OSError, ValueError, RuntimeError,
            FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
