import numpy as np
import pytest

from calfuse.adapter import CalibrationConfig, init_adapter, l2_normalize_rows
from calfuse.data import generate_synthetic
from calfuse.errors import ValidationError
from calfuse.objective import ObjectiveConfig, TeacherSnapshot, dynamic_lambda
from calfuse.trainer import (
    AdamState,
    TrainConfig,
    adam_step,
    loss_and_grads,
    lr_at_epoch,
    scored_features,
    train_task,
)

from oracles import finite_difference_param_grads, max_relative_error
from test_adapter import random_params, zero_params


def scalar_params(value=0.0):
    p = zero_params(1, 1)
    return type(p).from_tensors(
        [np.full_like(t, value) if t.ndim == 2 and i == 0 else t
         for i, t in enumerate(p.tensors())]
    )


def grads_with_w1(value):
    g = zero_params(1, 1)
    return type(g).from_tensors(
        [np.full_like(t, value) if i == 0 else t for i, t in enumerate(g.tensors())]
    )


def test_adam_zero_gradients_leave_params_unchanged():
    params = random_params(3, 3, seed=0)
    state = AdamState.zeros_like(params)
    new_state, new_params = adam_step(state, params, zero_params(3, 3), lr=0.01)
    assert new_state.step == 1
    for a, b in zip(params.tensors(), new_params.tensors()):
        assert np.array_equal(a, b)


def test_adam_first_step_delta():
    params = scalar_params(0.5)
    state = AdamState.zeros_like(params)
    _, new_params = adam_step(state, params, grads_with_w1(1.0), lr=0.001)
    delta = new_params.w1[0, 0] - 0.5
    expected = -0.001 * (1.0 / (1.0 + 1e-8))
    assert abs(delta - expected) < 1e-15
    assert abs(delta + 0.001) < 1e-10


def test_adam_optimizes_quadratic():
    # f(x) = x^2 from x = 1 with lr 0.01: |x| < 0.5 after 100 steps
    params = scalar_params(1.0)
    state = AdamState.zeros_like(params)
    for _ in range(100):
        x = params.w1[0, 0]
        state, params = adam_step(state, params, grads_with_w1(2 * x), lr=0.01)
    assert abs(params.w1[0, 0]) < 0.5


def test_adam_shape_mismatch():
    with pytest.raises(ValidationError):
        adam_step(
            AdamState.zeros_like(zero_params(2, 2)),
            zero_params(2, 2),
            zero_params(3, 3),
            lr=0.1,
        )


def test_lr_schedule():
    config = TrainConfig(epochs=15)
    assert lr_at_epoch(config, 1) == 0.001
    assert lr_at_epoch(config, 3) == 0.001
    assert abs(lr_at_epoch(config, 4) - 0.0001) < 1e-18
    assert abs(lr_at_epoch(config, 9) - 0.0001) < 1e-18
    assert abs(lr_at_epoch(config, 10) - 0.00001) < 1e-18
    assert abs(lr_at_epoch(config, 15) - 0.00001) < 1e-18
    with pytest.raises(ValidationError):
        lr_at_epoch(config, 0)
    with pytest.raises(ValidationError):
        lr_at_epoch(config, 16)


def test_train_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(epochs=0)
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ValidationError):
        TrainConfig(decay_factor=0.0)


def _task_fixture(seed=0, classes=2, per_class=30, spread=0.1, d=8):
    ds = generate_synthetic(classes, per_class, 10, d=d, cluster_spread=spread, seed=seed)
    return ds


def test_first_task_total_equals_ce_at_every_step():
    ds = _task_fixture()
    params, log = train_task(
        ds.train_features,
        ds.train_labels,
        ds.text_features,
        init_adapter(ds.feature_dim, ds.feature_dim, seed=0),
        CalibrationConfig(alpha=0.8),
        ObjectiveConfig(tau=0.01),
        TrainConfig(epochs=3, batch_size=16, seed=0),
    )
    assert log.lam == 0.0
    assert len(log.steps) > 0
    for step in log.steps:
        assert step.total == step.ce
        assert step.distill == 0.0


def test_separable_task_trains_to_high_accuracy():
    ds = _task_fixture(spread=0.1)
    cal = CalibrationConfig(alpha=0.8)
    params, _ = train_task(
        ds.train_features,
        ds.train_labels,
        ds.text_features,
        init_adapter(ds.feature_dim, ds.feature_dim, seed=0),
        cal,
        ObjectiveConfig(tau=0.01),
        TrainConfig(epochs=15, batch_size=16, seed=0),
    )
    feats = scored_features(params, cal, ds.train_features)
    pred = np.argmax(feats @ ds.text_features.T, axis=1)
    assert np.mean(pred == ds.train_labels) >= 0.99


def test_loss_decreases_over_epochs():
    # wide enough clusters that the initial loss is meaningfully nonzero
    ds = _task_fixture(classes=10, per_class=20, spread=0.3, d=16)
    _, log = train_task(
        ds.train_features,
        ds.train_labels,
        ds.text_features,
        init_adapter(ds.feature_dim, ds.feature_dim, seed=0),
        CalibrationConfig(alpha=0.8),
        ObjectiveConfig(tau=0.01),
        TrainConfig(epochs=15, batch_size=16, seed=0),
    )
    assert log.epoch_mean_total(15) < log.epoch_mean_total(1)


def test_training_is_bit_reproducible():
    ds = _task_fixture()
    args = dict(
        features=ds.train_features,
        labels=ds.train_labels,
        text_features=ds.text_features,
        init_params=init_adapter(ds.feature_dim, ds.feature_dim, seed=1),
        calibration=CalibrationConfig(alpha=0.8),
        objective=ObjectiveConfig(tau=0.01),
        config=TrainConfig(epochs=2, batch_size=16, seed=3),
    )
    a, _ = train_task(**args)
    b, _ = train_task(**args)
    for ta, tb in zip(a.tensors(), b.tensors()):
        assert np.array_equal(ta, tb)


def test_lambda_equals_dynamic_lambda():
    ds = _task_fixture(classes=4, per_class=10)
    init = init_adapter(ds.feature_dim, ds.feature_dim, seed=0)
    teacher = TeacherSnapshot(
        params=init, calibration=CalibrationConfig(alpha=0.8), old_class_count=3
    )
    _, log = train_task(
        ds.train_features,
        ds.train_labels,
        ds.text_features,
        init,
        CalibrationConfig(alpha=0.8),
        ObjectiveConfig(tau=0.01),
        TrainConfig(epochs=1, batch_size=16, seed=0),
        teacher=teacher,
    )
    assert log.lam == dynamic_lambda(3, ds.num_classes)


def test_identical_teacher_distill_equals_teacher_entropy():
    ds = _task_fixture(classes=3, per_class=5)
    cal = CalibrationConfig(alpha=0.8)
    obj = ObjectiveConfig(tau=0.5)
    params = init_adapter(ds.feature_dim, ds.feature_dim, seed=0)
    teacher = TeacherSnapshot(params=params, calibration=cal, old_class_count=2)
    x = ds.train_features[:6]
    y = ds.train_labels[:6]
    _, _, distill, _ = loss_and_grads(
        params, cal, obj, x, y, ds.text_features, teacher, lam=0.5
    )
    from calfuse.objective import class_probabilities

    teacher_feats = scored_features(params, cal, x)
    t_probs = class_probabilities(obj, teacher_feats, ds.text_features[:2])
    entropy = float(np.mean(-(t_probs * np.log(t_probs)).sum(axis=1)))
    assert abs(distill - entropy) < 1e-10


def test_replay_rows_join_the_stream():
    ds = _task_fixture(classes=3, per_class=4)
    replay_x = l2_normalize_rows(np.random.default_rng(0).standard_normal((5, 8)))
    replay_y = np.zeros(5, dtype=int)
    _, log = train_task(
        ds.train_features,
        ds.train_labels,
        ds.text_features,
        init_adapter(8, 8, seed=0),
        CalibrationConfig(alpha=0.8),
        ObjectiveConfig(tau=0.01),
        TrainConfig(epochs=1, batch_size=17, seed=0),
        replay_features=replay_x,
        replay_labels=replay_y,
    )
    # 12 real + 5 replay rows = 17 = one full batch at this batch size
    assert len(log.steps) == 1


def test_bad_labels_rejected():
    ds = _task_fixture(classes=2, per_class=3)
    with pytest.raises(ValidationError):
        train_task(
            ds.train_features,
            np.full(ds.train_labels.shape, 7),
            ds.text_features,
            init_adapter(8, 8, seed=0),
            CalibrationConfig(alpha=0.8),
            ObjectiveConfig(tau=0.01),
            TrainConfig(epochs=1, seed=0),
        )


def _pipeline_fd_check(seed, lam, d=5, h=4, batch=3, classes=4, tol=1e-4):
    """End-to-end gradient vs central differences through the whole loss."""
    rng = np.random.default_rng(seed)
    x = l2_normalize_rows(rng.standard_normal((batch, d)))
    text = l2_normalize_rows(rng.standard_normal((classes, d)))
    labels = rng.integers(0, classes, size=batch)
    params = random_params(d, h, seed=seed)
    cal = CalibrationConfig(alpha=0.8)
    obj = ObjectiveConfig(tau=1.0)
    teacher = None
    if lam > 0:
        teacher = TeacherSnapshot(
            params=random_params(d, h, seed=seed + 77),
            calibration=cal,
            old_class_count=2,
        )

    total, _, _, grads = loss_and_grads(params, cal, obj, x, labels, text, teacher, lam)

    def loss_of(p):
        t, _, _, _ = loss_and_grads(p, cal, obj, x, labels, text, teacher, lam)
        return t

    fd = finite_difference_param_grads(loss_of, params)
    worst = max(
        max_relative_error(got, want)
        for got, want in zip(grads.tensors(), fd.tensors())
    )
    assert worst < tol, f"seed={seed} lam={lam}: rel error {worst}"


@pytest.mark.parametrize("lam", [0.0, 0.5])
def test_pipeline_gradient_matches_finite_differences(lam):
    for seed in (0, 1, 2):
        _pipeline_fd_check(seed, lam)
