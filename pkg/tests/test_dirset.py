import itertools

import numpy as np
import pandas as pd
import pytest

from rotcloud.dirset import (
    DirectionSet,
    Scheme,
    build_direction_set,
    icosahedron_vertices,
    load_csv,
    min_pairwise_angle,
    nearest_direction,
    parse_up_axis,
    rotations_for,
    save_csv,
)
from rotcloud.errors import InvalidInputError, SchemaError


def _as_set(dirs):
    return {tuple(np.round(d, 9)) for d in dirs}


def test_k6_is_the_six_axes():
    ds = build_direction_set(6)
    assert ds.scheme is Scheme.AXES6
    expected = [tuple(s * e) for e in np.eye(3) for s in (1.0, -1.0)]
    assert _as_set(ds.dirs) == _as_set(expected)


def test_k18_axes_plus_bisectors_closed_under_negation():
    ds = build_direction_set(18)
    assert ds.k == 18
    assert ds.scheme is Scheme.AXES_BISECTORS18
    assert _as_set(ds.dirs) == _as_set(-ds.dirs)
    assert min_pairwise_angle(ds.dirs) == pytest.approx(np.pi / 4, abs=1e-12)


def test_k32_matches_brute_force_icosahedral_angle():
    ds = build_direction_set(32)
    assert ds.scheme is Scheme.ICOSA32
    vertices = icosahedron_vertices()
    vertices = vertices / np.linalg.norm(vertices, axis=1, keepdims=True)
    faces = [
        t
        for t in itertools.combinations(range(12), 3)
        if all(np.dot(vertices[i], vertices[j]) > 0.4 for i, j in itertools.combinations(t, 2))
    ]
    assert len(faces) == 20
    centers = np.array([vertices[list(t)].mean(axis=0) for t in faces])
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    brute = np.vstack([vertices, centers])
    best = min(
        np.arccos(np.clip(brute[i] @ brute[j], -1.0, 1.0)) for i, j in itertools.combinations(range(32), 2)
    )
    assert min_pairwise_angle(ds.dirs) == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("k", [54, 100])
def test_sunflower_unit_and_balanced(k):
    ds = build_direction_set(k)
    assert ds.scheme is Scheme.SUNFLOWER
    np.testing.assert_allclose(np.linalg.norm(ds.dirs, axis=1), 1.0, atol=1e-12)
    assert np.linalg.norm(ds.dirs.mean(axis=0)) < 2.0 / k


def test_small_k_and_validation():
    assert build_direction_set(2).k == 2
    with pytest.raises(InvalidInputError):
        build_direction_set(1)
    with pytest.raises(InvalidInputError):
        DirectionSet([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], Scheme.SUNFLOWER)
    with pytest.raises(InvalidInputError):
        DirectionSet([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0]], Scheme.SUNFLOWER)


def test_rotations_send_up_to_each_direction():
    ds = build_direction_set(18)
    up = np.array([0.0, 1.0, 0.0])
    for d, r in zip(ds.dirs, rotations_for(ds)):
        np.testing.assert_allclose(r.apply(up), d, atol=1e-9)


def test_rotations_with_other_up_axis():
    ds = build_direction_set(6)
    up = parse_up_axis("-z")
    for d, r in zip(ds.dirs, rotations_for(ds, up)):
        np.testing.assert_allclose(r.apply(up), d, atol=1e-9)


def test_nearest_direction_prefers_lowest_index_on_ties():
    ds = build_direction_set(6)
    # equidistant from +x (0) and +y (2)
    assert nearest_direction(ds, [1.0, 1.0, 0.0]) == 0
    assert nearest_direction(ds, [0.0, -0.2, -1.0]) == 5


def test_parse_up_axis():
    np.testing.assert_array_equal(parse_up_axis("y"), [0.0, 1.0, 0.0])
    np.testing.assert_array_equal(parse_up_axis("+X"), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(parse_up_axis("-z"), [0.0, 0.0, -1.0])
    for bad in ("w", "--y", ""):
        with pytest.raises(InvalidInputError):
            parse_up_axis(bad)


def test_csv_export(tmp_path):
    ds = build_direction_set(32)
    path = save_csv(ds, tmp_path / "dirs.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["index", "x", "y", "z"]
    assert len(frame) == 32
    again = load_csv(path)
    np.testing.assert_array_equal(again.dirs, ds.dirs)
    assert again.scheme is Scheme.ICOSA32


def test_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    pd.DataFrame({"index": [0, 1], "x": [1.0, 0.0], "y": [0.0, 1.0]}).to_csv(path, index=False)
    with pytest.raises(SchemaError, match="'z'"):
        load_csv(path)
