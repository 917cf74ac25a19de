"""Full continual-learning runs: schedule, per-phase training, fusion,
teacher snapshots, evaluation, metrics, ablation switches, and state I/O.

Per phase t the harness: snapshots the previous phase's evaluation params
as the distillation teacher (when enabled), initializes the adapter from
the fused accumulator (when fusion is enabled) or the previous raw params,
trains on the phase's classes plus Gaussian replay of older ones, fuses the
result with the accumulator, evaluates over all classes seen so far, and
fits replay statistics for the new classes. Ablation switches: fc off
disables the whole trainable path (pure zero-shot), pf off disables
fusion, distill off drops the teacher term.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adapter import AdapterParams, CalibrationConfig, init_adapter
from .data import EmbeddingDataset, build_schedule, read_dataset
from .errors import ValidationError
from .fusion import FusionConfig, fuse_adapter
from .objective import ObjectiveConfig, TeacherSnapshot
from .replay import ClassGaussian, fit_class_gaussian, sample_replay
from .trainer import TrainConfig, derive_seed, scored_features, train_task

STATE_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed for one run; `dataset` may be an EmbeddingDataset
    or a path to a CFEB file."""

    dataset: EmbeddingDataset | str | Path
    protocol: str = "b0"
    increment: int = 10
    class_seed: int = 0
    alpha: float = 0.8
    beta: float = 0.55
    fusion_variant: str = "literal"
    tau: float = 0.01
    replay_total: int = 2000
    train: TrainConfig = field(default_factory=TrainConfig)
    use_fc: bool = True
    use_pf: bool = True
    use_distill: bool = True
    eval_with_fused: bool = True
    report_path: str | Path | None = None
    state_path: str | Path | None = None

    def describe(self) -> dict:
        """Config echo for reports (dataset reduced to a path or summary)."""
        if isinstance(self.dataset, EmbeddingDataset):
            ds = (
                f"<in-memory: {self.dataset.num_classes} classes, "
                f"d={self.dataset.feature_dim}>"
            )
        else:
            ds = str(self.dataset)
        return {
            "dataset": ds,
            "protocol": self.protocol,
            "increment": self.increment,
            "class_seed": self.class_seed,
            "alpha": self.alpha,
            "beta": self.beta,
            "fusion_variant": self.fusion_variant,
            "tau": self.tau,
            "replay_total": self.replay_total,
            "epochs": self.train.epochs,
            "learning_rate": self.train.learning_rate,
            "decay_epochs": list(self.train.decay_epochs),
            "decay_factor": self.train.decay_factor,
            "batch_size": self.train.batch_size,
            "seed": self.train.seed,
            "use_fc": self.use_fc,
            "use_pf": self.use_pf,
            "use_distill": self.use_distill,
            "eval_with_fused": self.eval_with_fused,
        }


@dataclass(frozen=True)
class MetricsReport:
    """Per-phase accuracies plus their mean (Avg) and final value (Last)."""

    phase_accuracies: list[float]
    avg: float
    last: float
    phase_class_counts: list[int]
    config: dict
    phase_seconds: list[float]

    def __post_init__(self):
        expected_avg, expected_last = compute_metrics(self.phase_accuracies)
        if abs(self.avg - expected_avg) > 1e-9 or self.last != expected_last:
            raise ValidationError("report Avg/Last inconsistent with phase accuracies")

    def to_dict(self) -> dict:
        return {
            "phase_accuracies": self.phase_accuracies,
            "avg": self.avg,
            "last": self.last,
            "phase_class_counts": self.phase_class_counts,
            "config": self.config,
            "phase_seconds": self.phase_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            phase_accuracies=[float(a) for a in d["phase_accuracies"]],
            avg=float(d["avg"]),
            last=float(d["last"]),
            phase_class_counts=[int(c) for c in d["phase_class_counts"]],
            config=d.get("config", {}),
            phase_seconds=[float(s) for s in d.get("phase_seconds", [])],
        )


def compute_metrics(per_phase_accuracies) -> tuple[float, float]:
    """(Avg, Last) = (arithmetic mean, final element)."""
    accs = [float(a) for a in per_phase_accuracies]
    if not accs:
        raise ValidationError("need at least one phase accuracy")
    return float(np.mean(accs)), accs[-1]


def evaluate_phase(
    params: AdapterParams | None,
    calibration: CalibrationConfig,
    dataset: EmbeddingDataset,
    seen_classes,
) -> float:
    """Accuracy (percent) over test samples of the seen classes, predicting
    the best-scoring seen class. Softmax is monotone, so the similarity
    argmax equals the probability argmax."""
    seen = [int(c) for c in seen_classes]
    if not seen:
        raise ValidationError("no classes seen yet")
    mask = np.isin(dataset.test_labels, seen)
    x = dataset.test_features[mask]
    y = dataset.test_labels[mask]
    if x.shape[0] == 0:
        raise ValidationError("no test samples for the seen classes")
    index_of = {c: i for i, c in enumerate(seen)}
    target = np.array([index_of[int(c)] for c in y])
    feats = scored_features(params, calibration, x)
    sims = feats @ dataset.text_features[seen].T
    pred = np.argmax(sims, axis=1)
    return float(100.0 * np.mean(pred == target))


def _resolve_dataset(config: ExperimentConfig) -> EmbeddingDataset:
    if isinstance(config.dataset, EmbeddingDataset):
        return config.dataset
    return read_dataset(config.dataset)


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """Execute the full schedule and return the metrics report.

    If report_path is set, the report (or a partial one on failure) is
    written as JSON; if state_path is set, the final adapter checkpoint is
    saved for feature export.
    """
    seen: list[int] = []
    gaussians: list[ClassGaussian] = []
    kept: AdapterParams | None = None
    prev_trained: AdapterParams | None = None
    prev_eval: AdapterParams | None = None
    accuracies: list[float] = []
    counts: list[int] = []
    seconds: list[float] = []

    try:
        dataset = _resolve_dataset(config)
        schedule = build_schedule(
            config.protocol, dataset.num_classes, config.increment, config.class_seed
        )
        calibration = CalibrationConfig(alpha=config.alpha if config.use_fc else 1.0)
        objective = ObjectiveConfig(tau=config.tau)
        fusion = FusionConfig(beta=config.beta, variant=config.fusion_variant)

        for t, phase in enumerate(schedule.phases, start=1):
            tic = time.perf_counter()
            old_count = len(seen)
            seen = seen + list(phase)
            if not config.use_fc:
                accuracies.append(evaluate_phase(None, calibration, dataset, seen))
            else:
                eval_params = _train_phase(
                    config, dataset, seen, phase, old_count, gaussians,
                    calibration, objective, fusion, t,
                    kept, prev_trained, prev_eval,
                )
                kept, prev_trained, prev_eval = eval_params.kept, eval_params.trained, eval_params.evaluated
                accuracies.append(
                    evaluate_phase(eval_params.evaluated, calibration, dataset, seen)
                )
                for class_id in phase:
                    rows = dataset.train_features[dataset.train_labels == class_id]
                    gaussians.append(fit_class_gaussian(rows, class_id))
            counts.append(len(seen))
            seconds.append(time.perf_counter() - tic)
    except Exception:
        _flush_partial(config, accuracies, counts, seconds)
        raise

    avg, last = compute_metrics(accuracies)
    report = MetricsReport(
        phase_accuracies=accuracies,
        avg=avg,
        last=last,
        phase_class_counts=counts,
        config=config.describe(),
        phase_seconds=seconds,
    )
    if config.report_path is not None:
        Path(config.report_path).write_text(json.dumps(report.to_dict(), indent=2))
    if config.state_path is not None and config.use_fc and prev_eval is not None:
        save_state(
            config.state_path,
            prev_eval,
            calibration,
            dataset_path="" if isinstance(config.dataset, EmbeddingDataset)
            else str(config.dataset),
            seen_classes=seen,
        )
    return report


@dataclass(frozen=True)
class _PhaseParams:
    trained: AdapterParams
    kept: AdapterParams
    evaluated: AdapterParams


def _train_phase(
    config, dataset, seen, phase, old_count, gaussians,
    calibration, objective, fusion, t,
    kept, prev_trained, prev_eval,
) -> _PhaseParams:
    index_of = {c: i for i, c in enumerate(seen)}
    mask = np.isin(dataset.train_labels, list(phase))
    x = dataset.train_features[mask]
    y = np.array([index_of[int(c)] for c in dataset.train_labels[mask]])
    text_seen = dataset.text_features[seen]

    replay_x = replay_y = None
    if old_count > 0 and config.replay_total > 0:
        replay_x, raw_labels = sample_replay(
            gaussians, config.replay_total, derive_seed(config.train.seed, 2, t)
        )
        replay_y = np.array([index_of[int(c)] for c in raw_labels])

    teacher = None
    if t > 1 and config.use_distill:
        teacher = TeacherSnapshot(
            params=prev_eval, calibration=calibration, old_class_count=old_count
        )

    if t == 1:
        init = init_adapter(dataset.feature_dim, dataset.feature_dim, config.train.seed)
    elif config.use_pf:
        init = kept
    else:
        init = prev_trained

    trained, _ = train_task(
        x, y, text_seen, init, calibration, objective, config.train,
        replay_features=replay_x, replay_labels=replay_y,
        teacher=teacher, task_index=t,
    )

    if config.use_pf:
        new_kept = fuse_adapter(fusion, kept, trained) if kept is not None else trained
        evaluated = new_kept if config.eval_with_fused else trained
    else:
        new_kept = trained
        evaluated = trained
    return _PhaseParams(trained=trained, kept=new_kept, evaluated=evaluated)


def _flush_partial(config, accuracies, counts, seconds):
    if config.report_path is None:
        return
    partial = {
        "failed": True,
        "phase_accuracies": accuracies,
        "phase_class_counts": counts,
        "phase_seconds": seconds,
        "config": config.describe(),
    }
    try:
        Path(config.report_path).write_text(json.dumps(partial, indent=2))
    except OSError:
        pass


def export_features(
    params: AdapterParams | None,
    calibration: CalibrationConfig,
    dataset: EmbeddingDataset,
    class_subset,
    path,
) -> None:
    """Write calibrated test features of the given classes as CSV
    (header `label,f0..f{d-1}`, 9 significant digits)."""
    subset = [int(c) for c in class_subset]
    for c in subset:
        if not (0 <= c < dataset.num_classes):
            raise ValidationError(f"class id {c} out of range")
    d = dataset.feature_dim
    header = "label," + ",".join(f"f{i}" for i in range(d))
    lines = [header]
    if subset:
        mask = np.isin(dataset.test_labels, subset)
        feats = scored_features(params, calibration, dataset.test_features[mask])
        for label, row in zip(dataset.test_labels[mask], feats):
            lines.append(f"{int(label)}," + ",".join(f"{v:.9g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def save_state(path, params: AdapterParams, calibration: CalibrationConfig,
               dataset_path: str, seen_classes) -> None:
    """Checkpoint the adapter + calibration + dataset pointer as .npz."""
    arrays = dict(zip(("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4"), params.tensors()))
    np.savez(
        path,
        state_version=np.int64(STATE_VERSION),
        alpha=np.float64(calibration.alpha),
        dataset_path=np.array(dataset_path),
        seen_classes=np.asarray(list(seen_classes), dtype=np.int64),
        **arrays,
    )


def load_state(path) -> tuple[AdapterParams, CalibrationConfig, str, list[int]]:
    with np.load(path, allow_pickle=False) as z:
        if int(z["state_version"]) != STATE_VERSION:
            raise ValidationError(f"unsupported state version {int(z['state_version'])}")
        params = AdapterParams.from_tensors(
            [z[name] for name in ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")]
        )
        calibration = CalibrationConfig(alpha=float(z["alpha"]))
        dataset_path = str(z["dataset_path"])
        seen = [int(c) for c in z["seen_classes"]]
    return params, calibration, dataset_path, seen
