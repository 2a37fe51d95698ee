"""Command-line entry point.

Exit codes: 0 success, 1 a verification check failed, 2 usage or input error.
Every command is deterministic for a fixed --seed; wall-clock times are only
written when --timing is given, so repeated runs produce identical files.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import harness, plotting
from .canonical import canonical_frame, project
from .config import DESK_CONFIG, RunConfig, load_config
from .errors import DegenerateSpectrum, RotinvError
from .geometry import estimate_normals
from .io import export_features, parse_xyzn, write_json, write_rows_csv
from .local import local_representation
from .network import build_model, load_checkpoint, prepare_cloud, save_checkpoint, train

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def _load_points(path, normals_k: int):
    cloud = prepare_cloud(parse_xyzn(path))
    if not cloud.has_normals:
        cloud = estimate_normals(cloud, min(normals_k, len(cloud) - 1))
    return cloud


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    base = load_config(args.config) if args.config else DESK_CONFIG
    overrides = {name: getattr(args, name, None) for name in ("k", "m", "epochs", "lr", "batch")}
    if getattr(args, "fusion", None):
        overrides["fusion"] = args.fusion
    return base.updated(seed=args.seed, **overrides)


def _report_rows(named_reports):
    header = ["name", "condition", "seed", "accuracy", "invariance_max_diff"]
    rows = [[name, rep.condition, str(rep.seed), rep.accuracy, rep.invariance_max_diff]
            for name, rep in named_reports]
    return header, rows


# ---------------------------------------------------------------------------
# subcommands


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def cmd_extract(args) -> int:
    cloud = _load_points(args.input, args.normals_k)
    local = local_representation(cloud, args.k)
    projected = project(cloud, canonical_frame(cloud, min(args.m, len(cloud)), seed=_seed(args)))
    export_features(args.output, local, projected)
    print(f"wrote {args.output}: {local.shape[0]} points x {local.shape[1]} neighbors")
    return EXIT_OK


def cmd_verify(args) -> int:
    cloud = _load_points(args.input, args.normals_k)
    k = min(args.k, len(cloud) - 1)
    seed = _seed(args)
    reports = [harness.verify_pairwise_invariance(cloud, args.trials, args.pairwise_tol, seed)]
    try:
        reports.append(harness.verify_svd_invariance(cloud, args.trials, args.m, args.tol, seed))
        reports.append(harness.verify_feature_invariance(cloud, args.trials, args.tol, k, args.m, seed))
    except DegenerateSpectrum as exc:
        print(f"svd: FAIL ({exc})")
        return EXIT_FAIL
    for rep in reports:
        print(f"{rep.check}: {'pass' if rep.passed else 'FAIL'} max_diff={rep.max_diff:.3e} tol={rep.tol:g}")
    if args.json:
        write_json(args.json, {"input": str(args.input), "seed": seed,
                               "checks": [r.to_dict() for r in reports]})
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_train(args) -> int:
    config = _config(args)
    out = _out_dir(args)
    train_set, _ = harness.build_splits(config)
    model, history = train(build_model(config), *train_set, augment=args.augment, config=config)
    save_checkpoint(model, out / "model.ckpt")
    write_rows_csv(out / "history.csv", ["epoch", "loss", "train_accuracy"],
                   [[str(h.epoch), h.loss, h.train_accuracy] for h in history])
    write_json(out / "config.json", config.to_dict())
    plotting.training_curves({args.augment: history}, out / "training_curve.png")
    print(f"trained {len(history)} epochs, final loss {history[-1].loss:.4f}; wrote {out / 'model.ckpt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.condition not in harness.CONDITIONS:
        raise _UsageError(f"condition must be one of {', '.join(harness.CONDITIONS)}")
    model = load_checkpoint(args.checkpoint)
    seed = model.config.seed if args.seed is None else args.seed
    _, test_set = harness.build_splits(model.config.updated(seed=seed))
    report = harness.evaluate_model(model, test_set, args.condition, seed)
    out = _out_dir(args)
    stem = "eval_" + args.condition.replace("/", "_")
    write_json(out / f"{stem}.json", report.to_dict())
    plotting.confusion_heatmap(report.confusion, out / f"{stem}_confusion.png", title=args.condition)
    print(f"{args.condition}: accuracy {report.accuracy:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = _config(args)
    table = harness.run_ablation(args.suite, config, config.seed, args.condition, args.timing)
    out = _out_dir(args)
    write_json(out / f"ablation_{args.suite}.json", table.to_dict())
    header, rows = _report_rows(table.rows)
    write_rows_csv(out / f"ablation_{args.suite}.csv", header, rows)
    plotting.ablation_bars(table, out / f"ablation_{args.suite}.png")
    print(table.format())
    return EXIT_OK


def cmd_protocol(args) -> int:
    config = _config(args)
    out = _out_dir(args)
    if args.all:
        results = harness.run_all_conditions(config, config.seed, args.timing, baseline=not args.no_baseline)
    else:
        results = {"lgr": [harness.run_protocol(config, args.condition, config.seed, args.timing)]}
    write_json(out / "protocol.json", {name: [r.to_dict() for r in reps] for name, reps in results.items()})
    header, rows = _report_rows((name, r) for name, reps in results.items() for r in reps)
    write_rows_csv(out / "protocol.csv", header, rows)
    plotting.accuracy_bars(results, out / "protocol_accuracy.png")
    curves = {}
    for name, reps in results.items():
        for rep in reps:
            tag = f"{name}_{rep.condition.replace('/', '_')}"
            plotting.confusion_heatmap(rep.confusion, out / f"confusion_{tag}.png",
                                       title=f"{name} {rep.condition}")
            curves[f"{name} {rep.condition}"] = rep.history
    plotting.training_curves(curves, out / "protocol_training.png")
    for name, reps in results.items():
        print(name + ": " + "  ".join(f"{r.condition} {r.accuracy:.3f}" for r in reps))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotinv", description="Rotation-invariant point-cloud toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for every random stream (default: config seed)")
    common.add_argument("--timing", action="store_true", help="record wall-clock runtimes in reports")
    common.add_argument("--out-dir", default="rotinv-out", help="directory for reports and figures")

    model_opts = argparse.ArgumentParser(add_help=False)
    model_opts.add_argument("--config", help="JSON or key=value file; flags below override it")
    model_opts.add_argument("--k", type=int)
    model_opts.add_argument("--m", type=int)
    model_opts.add_argument("--epochs", type=int)
    model_opts.add_argument("--lr", type=float)
    model_opts.add_argument("--batch", type=int)

    p = sub.add_parser("extract", parents=[common], help="write local and projected features as CSV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--m", type=int, default=32)
    p.add_argument("--normals-k", type=int, default=16, help="neighbors for normal estimation")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("verify", parents=[common], help="run the rotation-invariance checks on a cloud")
    p.add_argument("input")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-6, help="tolerance for projected and feature checks")
    p.add_argument("--pairwise-tol", type=float, default=1e-12)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--m", type=int, default=32)
    p.add_argument("--normals-k", type=int, default=16)
    p.add_argument("--json", help="also write the check results to this file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", parents=[common, model_opts], help="train on the synthetic shape set")
    p.add_argument("--augment", choices=("none", "z", "so3"), default="z")
    p.add_argument("--fusion", choices=("attention", "avg", "cat", "global", "local"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint under a rotation condition")
    p.add_argument("checkpoint")
    p.add_argument("condition", help="z/z, z/SO3 or SO3/SO3")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[common, model_opts], help="run an ablation suite")
    p.add_argument("suite", choices=harness.SUITES)
    p.add_argument("--condition", choices=harness.CONDITIONS, default="z/SO3")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("protocol", parents=[common, model_opts], help="train and evaluate under rotation conditions")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--all", action="store_true", help="all conditions plus the raw-xyz baseline")
    group.add_argument("--condition", choices=harness.CONDITIONS)
    p.add_argument("--no-baseline", action="store_true", help="skip the raw-xyz baseline runs")
    p.add_argument("--fusion", choices=("attention", "avg", "cat", "global", "local"))
    p.set_defaults(func=cmd_protocol)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (_UsageError, RotinvError, ValueError, OSError) as exc:
        print(f"rotinv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
