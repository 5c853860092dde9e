import numpy as np
import pytest

from rotcloud.autodiff import Var, gradcheck, ops
from rotcloud.config import FitConfig, TrainConfig
from rotcloud.dirset import build_direction_set, rotations_for
from rotcloud.encoder import HeadKind, HeadSpec, build_model
from rotcloud.errors import DegenerateRotationError, InvalidInputError, NonFiniteError
from rotcloud.pretrain import (
    axis_angle_loss,
    classification_sample,
    evaluate_geodesic_error,
    evaluate_pretext,
    evaluate_rotation_accuracy,
    gram_schmidt,
    label_from_rotation,
    make_axis_angle_sample,
    make_classification_sample,
    make_sixd_sample,
    predicted_rotation,
    sixd_loss,
    train_pretext,
)
from rotcloud.so3 import AxisAngle, SixD, axis_angle_to_rotation, sample_rotation, sixd_to_rotation
from rotcloud.training import fit, holdout_split

TINY = dict(widths=[8, 16], head_hidden=8, batch_size=4)


def _config(**overrides):
    values = dict(task="classify", k=6, epochs=2, holdout_fraction=0.25, **TINY)
    values.update(overrides)
    return TrainConfig(**values)


# --- holdout split ---


def test_holdout_split_partitions_indices():
    train, hold = holdout_split(20, 0.25, seed=3)
    assert len(hold) == 5
    assert sorted(train + hold) == list(range(20))
    assert train == sorted(train) and hold == sorted(hold)
    assert holdout_split(20, 0.25, seed=3) == (train, hold)


def test_holdout_split_edge_cases():
    assert holdout_split(10, 0.0, seed=0) == (list(range(10)), [])
    assert holdout_split(1, 0.5, seed=0) == ([0], [])
    train, hold = holdout_split(2, 0.9, seed=0)
    assert len(train) == 1 and len(hold) == 1


# --- pretext samples ---


def test_classification_sample_label_matches_rotation(cube_cloud):
    ds = build_direction_set(18)
    rng = np.random.default_rng(0)
    for _ in range(20):
        sample = classification_sample(cube_cloud, ds, rng)
        assert 0 <= sample.label < 18
        assert label_from_rotation(ds, sample.rotation) == sample.label
        np.testing.assert_allclose(sample.cloud.points, sample.rotation.apply(cube_cloud.points))


def test_classification_samples_are_seeded(cube_cloud):
    ds = build_direction_set(6)
    rotations = rotations_for(ds)
    a = make_classification_sample(cube_cloud, ds, np.random.default_rng(5), rotations=rotations)
    b = make_classification_sample(cube_cloud, ds, np.random.default_rng(5), rotations=rotations)
    assert a[1] == b[1]
    np.testing.assert_array_equal(a[0].points, b[0].points)


def test_classification_labels_are_uniform(cube_cloud):
    ds = build_direction_set(6)
    rotations = rotations_for(ds)
    rng = np.random.default_rng(21)
    counts = np.zeros(6, dtype=int)
    for _ in range(6000):
        _, label = make_classification_sample(cube_cloud, ds, rng, rotations=rotations)
        counts[label] += 1
    assert counts.sum() == 6000
    assert np.all((counts >= 800) & (counts <= 1200))


def test_regression_samples(cube_cloud):
    rng = np.random.default_rng(1)
    aa = make_axis_angle_sample(cube_cloud, rng)
    assert isinstance(aa.label, AxisAngle) and 0.0 <= aa.label.angle <= np.pi
    np.testing.assert_allclose(axis_angle_to_rotation(aa.label).m, aa.rotation.m)
    sixd = make_sixd_sample(cube_cloud, rng)
    np.testing.assert_allclose(sixd_to_rotation(sixd.label).m, sixd.rotation.m, atol=1e-12)


# --- losses ---


def test_gram_schmidt_matches_sixd_mapping():
    rng = np.random.default_rng(2)
    out = rng.normal(size=(5, 6))
    mats = gram_schmidt(Var(out)).value
    for row, m in zip(out, mats):
        np.testing.assert_allclose(m, sixd_to_rotation(SixD(row[:3], row[3:])).m, atol=1e-12)


def test_sixd_loss_zero_at_target_and_none_when_degenerate():
    r = sample_rotation(np.random.default_rng(3))
    exact = Var(SixD.from_rotation(r).as_vector()[None] * 3.0)
    assert sixd_loss(exact, r).item() == pytest.approx(0.0, abs=1e-20)
    assert sixd_loss(Var(np.zeros((1, 6))), r) is None


def test_regression_losses_gradcheck():
    rng = np.random.default_rng(4)
    r = sample_rotation(rng)
    target = AxisAngle([0.0, 0.6, 0.8], 1.1)
    for loss, arg in ((sixd_loss, r), (axis_angle_loss, target)):
        out = Var(rng.normal(size=(1, 6 if loss is sixd_loss else 4)), requires_grad=True)
        result = gradcheck(lambda: loss(out, arg), [out])
        assert result.passed()


def test_axis_angle_loss_is_zero_at_target():
    target = AxisAngle([1.0, 0.0, 0.0], 0.5)
    assert axis_angle_loss(Var(target.as_vector()[None]), target).item() == 0.0


# --- training loop ---


def test_classifier_training_logs_every_epoch(tiny_train):
    model, log = train_pretext(tiny_train, _config())
    assert [r.epoch for r in log.records] == [1, 2]
    assert all(0.0 <= r.metric <= 1.0 for r in log.records)
    assert log.metric_name == "rotation_accuracy"
    assert model.head == HeadSpec.classify(6)
    assert model.metadata["k"] == 6 and model.metadata["scheme"] == "axes6"
    assert model.metadata["task"] == "classify" and model.metadata["up_axis"] == "y"


def test_training_is_reproducible_across_thread_counts(tiny_train):
    a, log_a = train_pretext(tiny_train, _config(threads=1))
    b, log_b = train_pretext(tiny_train, _config(threads=3))
    for name, value in a.state_dict().items():
        np.testing.assert_array_equal(value, b.state_dict()[name])
    assert log_a.to_frame().equals(log_b.to_frame())


def test_classifier_loss_decreases(tiny_train):
    clouds = tiny_train.subset([0, 1])
    config = _config(epochs=40, holdout_fraction=0.0, learning_rate=5e-3, widths=[16, 32], head_hidden=32)
    _, log = train_pretext(clouds, config)
    losses = [r.loss for r in log.records]
    assert np.mean(losses[-5:]) < losses[0]


@pytest.mark.slow
def test_classifier_overfits_two_shapes(tiny_train):
    clouds = tiny_train.subset([0, 1])
    config = _config(epochs=400, holdout_fraction=0.0, learning_rate=5e-3, widths=[16, 32], head_hidden=32, batch_size=2)
    model, _ = train_pretext(clouds, config)
    accuracy = evaluate_rotation_accuracy(model, clouds.clouds, build_direction_set(6))
    assert accuracy >= 0.8


@pytest.mark.parametrize("task", ["axisangle", "sixd"])
def test_regressors_report_geodesic_error(tiny_train, task):
    model, log = train_pretext(tiny_train, _config(task=task, epochs=1))
    assert log.metric_name == "geodesic_error"
    assert 0.0 <= log.records[0].metric <= np.pi
    assert model.head.kind is HeadKind(task)
    name, value = evaluate_pretext(model, tiny_train.clouds[:2], seed=0)
    assert name == "geodesic_error" and 0.0 <= value <= np.pi


def test_geodesic_error_is_seeded(tiny_train):
    model = build_model(HeadSpec(HeadKind.AXIS_ANGLE), seed=0, widths=[8], head_hidden=4)
    a = evaluate_geodesic_error(model, tiny_train.clouds, seed=2)
    assert a == evaluate_geodesic_error(model, tiny_train.clouds, seed=2, threads=2)
    assert predicted_rotation(model, tiny_train.clouds[0]) is not None


def test_exhaustive_rotation_accuracy_counts_every_direction(tiny_train):
    model = build_model(HeadSpec.classify(6), seed=0, widths=[8], head_hidden=4)
    ds = build_direction_set(6)
    accuracy = evaluate_rotation_accuracy(model, tiny_train.clouds[:3], ds)
    # 3 clouds × 6 rotations
    assert accuracy * 18 == pytest.approx(round(accuracy * 18))
    name, value = evaluate_pretext(model, tiny_train.clouds[:3], seed=0, all_directions=True)
    assert name == "accuracy" and value == accuracy


def test_evaluate_pretext_rejects_keypoint_heads(tiny_train):
    model = build_model(HeadSpec.keypoints(10), seed=0, widths=[8], head_hidden=4)
    with pytest.raises(InvalidInputError):
        evaluate_pretext(model, tiny_train.clouds, seed=0)


def test_fit_aborts_when_samples_are_degenerate(tiny_train):
    model = build_model(HeadSpec(HeadKind.SIXD), seed=0, widths=[8], head_hidden=4)
    config = FitConfig(epochs=1, batch_size=4, widths=[8], head_hidden=4)
    with pytest.raises(DegenerateRotationError):
        fit(
            model,
            range(len(tiny_train)),
            lambda i, rng: (tiny_train.clouds[i].points, None),
            lambda out, target: None,
            lambda m: 0.0,
            config,
            metric_name="none",
        )


def test_fit_reports_non_finite_loss(tiny_train):
    model = build_model(HeadSpec.classify(6), seed=0, widths=[8], head_hidden=4)
    config = FitConfig(epochs=1, batch_size=4, widths=[8], head_hidden=4)
    with pytest.raises(NonFiniteError, match="epoch 1"):
        fit(
            model,
            range(4),
            lambda i, rng: (tiny_train.clouds[i].points, None),
            lambda out, target: ops.sum(out) * np.nan,
            lambda m: 0.0,
            config,
            metric_name="none",
        )
