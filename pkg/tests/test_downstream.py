import numpy as np
import pandas as pd
import pytest

from rotcloud.config import SVMConfig, TrainConfig
from rotcloud.downstream import (
    FeatureMatrix,
    concat_features,
    extract_dataset_features,
    label_efficiency_sweep,
    model_label_efficiency_sweep,
    stratified_subset,
    train_svm,
)
from rotcloud.encoder import HeadSpec, build_model
from rotcloud.errors import FeatureMismatchError, InsufficientSamplesError, InvalidInputError, SchemaError
from rotcloud.pcdata import generate_dataset, load_split
from rotcloud.pretrain import train_pretext
from rotcloud.schemas import Split


def _blobs(per_class=20, classes=3, dim=5, spread=0.3, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 4.0, size=(classes, dim))
    labels = np.repeat(np.arange(classes), per_class)
    rows = centers[labels] + rng.normal(0.0, spread, size=(labels.size, dim))
    return FeatureMatrix(rows, labels, "blobs")


def test_feature_csv_round_trip_is_exact(tmp_path):
    fm = _blobs(per_class=4)
    path = fm.save_csv(tmp_path / "feats.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["label"] + [f"f{j}" for j in range(5)]
    loaded = FeatureMatrix.load_csv(path)
    np.testing.assert_array_equal(loaded.rows, fm.rows)
    np.testing.assert_array_equal(loaded.labels, fm.labels)
    assert loaded.source == "feats"


def test_feature_matrix_validation(tmp_path):
    with pytest.raises(FeatureMismatchError):
        FeatureMatrix(np.zeros((3, 2)), [0, 1])
    with pytest.raises(InvalidInputError):
        FeatureMatrix(np.array([[np.inf, 0.0]]), [0])
    path = tmp_path / "nolabel.csv"
    pd.DataFrame({"f0": [1.0]}).to_csv(path, index=False)
    with pytest.raises(SchemaError, match="'label'"):
        FeatureMatrix.load_csv(path)


def test_concat_features():
    a = FeatureMatrix(np.ones((3, 2)), [0, 1, 1], "classify")
    b = FeatureMatrix(np.zeros((3, 4)), [0, 1, 1], "sixd")
    joined = concat_features(a, b)
    assert joined.dim == 6 and joined.source == "classify+sixd"
    np.testing.assert_array_equal(joined.rows[:, :2], a.rows)
    with pytest.raises(FeatureMismatchError, match="row 2"):
        concat_features(a, FeatureMatrix(np.zeros((3, 1)), [0, 1, 0]))
    with pytest.raises(FeatureMismatchError):
        concat_features(a, FeatureMatrix(np.zeros((2, 1)), [0, 1]))


def test_svm_separates_blobs():
    fm = _blobs()
    model = train_svm(fm, lam=1e-3, iters=500)
    assert model.n_classes == 3
    assert model.accuracy(fm) >= 0.95
    assert model.accuracy(_blobs(seed=0, spread=0.3, per_class=5)) >= 0.9


def test_svm_objective_never_increases():
    model = train_svm(_blobs(spread=3.0, seed=2), lam=1e-2, iters=200)
    assert len(model.objective) > 1
    assert np.all(np.diff(model.objective) <= 0.0)


def test_strong_regularization_predicts_majority_class():
    rng = np.random.default_rng(3)
    labels = np.array([0] * 30 + [1] * 10)
    fm = FeatureMatrix(rng.normal(size=(40, 4)), labels)
    model = train_svm(fm, lam=1e6, iters=50)
    assert np.all(model.predict(fm.rows) == 0)
    assert model.accuracy(fm) == pytest.approx(0.75)


def test_svm_rejects_bad_input():
    with pytest.raises(InvalidInputError, match="at least 2 classes"):
        train_svm(FeatureMatrix(np.ones((4, 2)), [1, 1, 1, 1]))
    model = train_svm(_blobs(per_class=3))
    with pytest.raises(FeatureMismatchError):
        model.predict(np.zeros((2, 3)))


def test_stratified_subset_rounds_per_class():
    labels = np.array([0] * 10 + [1] * 5)
    rng = np.random.default_rng(0)
    picked = stratified_subset(labels, 0.25, rng)
    assert np.all(np.diff(picked) > 0)
    assert np.bincount(labels[picked]).tolist() == [3, 1]
    np.testing.assert_array_equal(stratified_subset(labels, 1.0, rng), np.arange(15))


def test_stratified_subset_errors():
    labels = np.array([0] * 10 + [1] * 5)
    with pytest.raises(InsufficientSamplesError, match="class sphere"):
        stratified_subset(labels, 0.05, np.random.default_rng(0), class_names=["cube", "sphere"])
    for fraction in (0.0, 1.5):
        with pytest.raises(InvalidInputError):
            stratified_subset(labels, fraction, np.random.default_rng(0))


def test_label_efficiency_sweep_frame():
    train, test = _blobs(per_class=20, seed=4), _blobs(per_class=5, seed=4)
    frame = label_efficiency_sweep(train, test, [0.1, 0.5, 1.0], seed=1, svm=SVMConfig(iters=200))
    assert list(frame.columns) == ["fraction", "accuracy"]
    assert frame["fraction"].tolist() == [0.1, 0.5, 1.0]
    assert frame["accuracy"].between(0.0, 1.0).all()
    again = label_efficiency_sweep(train, test, [0.1, 0.5, 1.0], seed=1, svm=SVMConfig(iters=200))
    pd.testing.assert_frame_equal(frame, again)
    full = train_svm(train, iters=200).accuracy(test)
    assert frame["accuracy"].iloc[-1] == full


def test_dataset_features_follow_manifest_order(tiny_train, tiny_test):
    model = build_model(HeadSpec.classify(6), [8, 16], 8, seed=0, task="classify")
    fm = extract_dataset_features(model, tiny_train)
    assert fm.rows.shape == (len(tiny_train), 16)
    np.testing.assert_array_equal(fm.labels, tiny_train.labels)
    assert fm.source == "classify"
    np.testing.assert_array_equal(fm.rows[3], model.extract_feature(tiny_train.clouds[3]))

    frame = model_label_efficiency_sweep(model, tiny_train, tiny_test, [0.5, 1.0], svm=SVMConfig(iters=50))
    assert len(frame) == 2


def test_concat_with_zero_width_matrix_is_identity():
    a = FeatureMatrix(np.arange(6.0).reshape(3, 2), [0, 1, 1], "classify")
    empty = FeatureMatrix(np.zeros((3, 0)), [0, 1, 1])
    for joined in (concat_features(a, empty), concat_features(empty, a)):
        np.testing.assert_array_equal(joined.rows, a.rows)
        np.testing.assert_array_equal(joined.labels, a.labels)


def test_svm_predictions_ignore_a_constant_feature_shift():
    train, test = _blobs(per_class=15, seed=5), _blobs(per_class=5, seed=5)
    shift = np.full(train.dim, 3.0)
    base = train_svm(train, iters=300)
    moved = train_svm(FeatureMatrix(train.rows + shift, train.labels), iters=300)
    np.testing.assert_array_equal(base.predict(test.rows), moved.predict(test.rows + shift))


def test_feature_extraction_leaves_weights_untouched(tiny_train, tiny_test):
    model = build_model(HeadSpec.classify(6), [8, 16], 8, seed=2, task="classify")
    before = {name: value.tobytes() for name, value in model.state_dict().items()}
    extract_dataset_features(model, tiny_train, threads=2)
    model_label_efficiency_sweep(model, tiny_train, tiny_test, [0.5, 1.0], svm=SVMConfig(iters=20))
    after = {name: value.tobytes() for name, value in model.state_dict().items()}
    assert after == before


@pytest.mark.slow
def test_rotation_pretraining_beats_random_features(tmp_path):
    generate_dataset(tmp_path, categories=8, train=40, test=15, points=512, seed=0)
    train, test = load_split(tmp_path, Split.TRAIN), load_split(tmp_path, Split.TEST)
    config = TrainConfig(task="classify", k=18, epochs=20, batch_size=16, holdout_fraction=0.1)
    pretrained, _ = train_pretext(train, config)
    random_init = build_model(HeadSpec.classify(18), config.widths, config.head_hidden, seed=config.seed)

    def linear_accuracy(model):
        fm_train = extract_dataset_features(model, train)
        return train_svm(fm_train).accuracy(extract_dataset_features(model, test))

    assert linear_accuracy(pretrained) > linear_accuracy(random_init)
