"""Command-line interface.

Subcommands: `synth` (generate a synthetic CFEB benchmark), `run` (execute
a continual-learning experiment and write a JSON report), `export-features`
(dump calibrated features from a saved state as CSV), and `metrics`
(recompute and verify Avg/Last of a report).

Exit codes: 0 success, 1 validation error (including bad arguments),
2 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import generate_synthetic, read_dataset, write_dataset
from .errors import FormatError, ValidationError
from .harness import (
    ExperimentConfig,
    compute_metrics,
    export_features,
    load_state,
    run_experiment,
)
from .trainer import TrainConfig


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; bad arguments are
    validation errors here, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="calfuse", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic CFEB benchmark file")
    synth.add_argument("--classes", type=int, required=True)
    synth.add_argument("--per-class-train", type=int, required=True)
    synth.add_argument("--per-class-test", type=int, required=True)
    synth.add_argument("--dim", type=int, required=True)
    synth.add_argument("--spread", type=float, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)

    run = sub.add_parser("run", help="run a continual-learning experiment")
    run.add_argument("--data", required=True, help="path to a CFEB file")
    run.add_argument("--protocol", choices=("b0", "b50"), default="b0")
    run.add_argument("--inc", type=int, default=10)
    run.add_argument("--alpha", type=float, default=0.8)
    run.add_argument("--beta", type=float, default=0.55)
    run.add_argument(
        "--fusion-variant", choices=("literal", "r-inclusive"), default="literal"
    )
    run.add_argument("--tau", type=float, default=0.01)
    run.add_argument("--replay", type=int, default=2000)
    run.add_argument("--epochs", type=int, default=15)
    run.add_argument("--lr", type=float, default=0.001)
    run.add_argument(
        "--decay-epochs", default="4,10",
        help="comma-separated 1-based epochs where the rate decays",
    )
    run.add_argument("--decay-factor", type=float, default=0.1)
    run.add_argument("--batch", type=int, default=100)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--no-fc", action="store_true", help="disable the trainable path")
    run.add_argument("--no-pf", action="store_true", help="disable parameter fusion")
    run.add_argument("--no-distill", action="store_true", help="disable distillation")
    run.add_argument(
        "--eval-raw", action="store_true",
        help="evaluate with the freshly trained params instead of the fused ones",
    )
    run.add_argument("--out", required=True, help="report JSON path")
    run.add_argument("--save-state", help="also write an adapter checkpoint (.npz)")

    export = sub.add_parser(
        "export-features", help="write calibrated features for chosen classes as CSV"
    )
    export.add_argument("--state", required=True, help="checkpoint from run --save-state")
    export.add_argument("--classes", required=True, help="comma-separated class ids")
    export.add_argument("--data", help="override the dataset path stored in the state")
    export.add_argument("--out", required=True)

    metrics = sub.add_parser("metrics", help="recompute and verify Avg/Last of a report")
    metrics.add_argument("--report", required=True)
    return parser


def _parse_decay_epochs(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    try:
        return tuple(int(part) for part in raw.split(","))
    except ValueError:
        raise ValidationError(f"bad --decay-epochs value {raw!r}") from None


def _cmd_synth(args) -> int:
    dataset = generate_synthetic(
        num_classes=args.classes,
        per_class_train=args.per_class_train,
        per_class_test=args.per_class_test,
        d=args.dim,
        cluster_spread=args.spread,
        seed=args.seed,
    )
    write_dataset(dataset, args.out)
    print(
        f"wrote {args.out}: {dataset.num_classes} classes, d={dataset.feature_dim}, "
        f"{dataset.train_features.shape[0]} train / {dataset.test_features.shape[0]} test rows"
    )
    return 0


def _cmd_run(args) -> int:
    config = ExperimentConfig(
        dataset=args.data,
        protocol=args.protocol,
        increment=args.inc,
        class_seed=args.seed,
        alpha=args.alpha,
        beta=args.beta,
        fusion_variant=args.fusion_variant.replace("-", "_"),
        tau=args.tau,
        replay_total=args.replay,
        train=TrainConfig(
            epochs=args.epochs,
            learning_rate=args.lr,
            decay_epochs=_parse_decay_epochs(args.decay_epochs),
            decay_factor=args.decay_factor,
            batch_size=args.batch,
            seed=args.seed,
        ),
        use_fc=not args.no_fc,
        use_pf=not args.no_pf,
        use_distill=not args.no_distill,
        eval_with_fused=not args.eval_raw,
        report_path=args.out,
        state_path=args.save_state,
    )
    report = run_experiment(config)
    print(f"{'phase':>5} {'classes':>8} {'accuracy':>9} {'seconds':>8}")
    for i, (acc, count, sec) in enumerate(
        zip(report.phase_accuracies, report.phase_class_counts, report.phase_seconds),
        start=1,
    ):
        print(f"{i:>5} {count:>8} {acc:>9.2f} {sec:>8.2f}")
    print(f"Avg = {report.avg:.2f}   Last = {report.last:.2f}")
    print(f"report written to {args.out}")
    return 0


def _cmd_export(args) -> int:
    params, calibration, dataset_path, _ = load_state(args.state)
    data_path = args.data or dataset_path
    if not data_path:
        raise ValidationError(
            "state has no dataset path; pass --data to point at a CFEB file"
        )
    dataset = read_dataset(data_path)
    try:
        subset = [int(part) for part in args.classes.split(",") if part.strip() != ""]
    except ValueError:
        raise ValidationError(f"bad --classes value {args.classes!r}") from None
    export_features(params, calibration, dataset, subset, args.out)
    print(f"wrote {args.out} ({len(subset)} classes)")
    return 0


def _cmd_metrics(args) -> int:
    try:
        raw = json.loads(Path(args.report).read_text())
    except ValueError as e:
        raise FormatError(f"report is not valid JSON: {e}") from None
    if "phase_accuracies" not in raw:
        raise ValidationError("report has no phase_accuracies field")
    avg, last = compute_metrics(raw["phase_accuracies"])
    print(f"recomputed: Avg = {avg:.4f}   Last = {last:.4f}")
    stored_avg, stored_last = raw.get("avg"), raw.get("last")
    if stored_avg is None or stored_last is None:
        raise ValidationError("report is missing stored avg/last values")
    if abs(avg - float(stored_avg)) > 1e-9 or float(stored_last) != last:
        raise ValidationError(
            f"stored metrics disagree: Avg {stored_avg} vs {avg}, "
            f"Last {stored_last} vs {last}"
        )
    print("stored metrics verified")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "synth": _cmd_synth,
        "run": _cmd_run,
        "export-features": _cmd_export,
        "metrics": _cmd_metrics,
    }
    try:
        return handlers[args.command](args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
