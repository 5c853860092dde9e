import json

import numpy as np
import pytest

from rotcloud.errors import InvalidInputError, MeshParseError
from rotcloud.pcdata import (
    CANONICAL,
    CATEGORIES,
    Mesh,
    PointCloud,
    ShapeVariation,
    category_label,
    generate_dataset,
    generate_shape,
    ingest,
    load_dataset,
    load_mesh,
    load_obj,
    load_off,
    load_split,
    manifest_path,
    normalize,
    read_xyz,
    sample_mesh,
    write_xyz,
)
from rotcloud.schemas import DatasetManifest, ManifestEntry, Split

UNIT_SQUARE_OFF = """OFF
# unit square in the xz plane
4 1 0
0 0 0
1 0 0
1 0 1
0 0 1
4 0 1 2 3
"""


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# --- clouds ---


def test_point_cloud_validation():
    with pytest.raises(InvalidInputError):
        PointCloud(np.zeros((4, 2)))
    with pytest.raises(InvalidInputError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(InvalidInputError):
        PointCloud([[0.0, np.nan, 0.0]])
    with pytest.raises(InvalidInputError):
        PointCloud(np.zeros((3, 3)), keypoints=np.zeros((2, 2)))


def test_normalize_centers_and_scales(rng):
    pc = PointCloud(rng.normal(3.0, 2.0, size=(200, 3)), keypoints=[[3.0, 3.0, 3.0]])
    out = normalize(pc)
    np.testing.assert_allclose(out.points.mean(axis=0), 0.0, atol=1e-12)
    assert np.linalg.norm(out.points, axis=1).max() == pytest.approx(1.0, abs=1e-12)
    centroid = pc.points.mean(axis=0)
    scale = np.linalg.norm(pc.points - centroid, axis=1).max()
    np.testing.assert_allclose(out.keypoints[0], (np.array([3.0, 3.0, 3.0]) - centroid) / scale)


def test_normalize_rejects_coincident_points():
    with pytest.raises(InvalidInputError):
        normalize(PointCloud(np.ones((5, 3))))


def test_xyz_files(tmp_path, rng):
    points = rng.normal(size=(10, 3))
    path = write_xyz(tmp_path / "a.xyz", points)
    np.testing.assert_array_equal(read_xyz(path), points)
    _write(tmp_path / "bad.xyz", "1 2\n3 4\n")
    with pytest.raises(InvalidInputError):
        read_xyz(tmp_path / "bad.xyz")


# --- meshes ---


def test_load_off_fan_triangulates(tmp_path):
    mesh = load_off(_write(tmp_path / "square.off", UNIT_SQUARE_OFF))
    assert mesh.vertices.shape == (4, 3)
    np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3]])
    assert mesh.face_areas().sum() == pytest.approx(1.0)


def test_load_off_glued_header(tmp_path):
    text = "OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
    mesh = load_off(_write(tmp_path / "tri.off", text))
    assert mesh.faces.shape == (1, 3)


def test_load_off_errors_carry_line_numbers(tmp_path):
    bad_index = UNIT_SQUARE_OFF.replace("4 0 1 2 3", "4 0 1 2 9")
    with pytest.raises(MeshParseError) as info:
        load_off(_write(tmp_path / "bad.off", bad_index))
    assert info.value.line == 8
    with pytest.raises(MeshParseError, match="expected OFF header"):
        load_off(_write(tmp_path / "nohdr.off", "4 1 0\n"))
    with pytest.raises(MeshParseError, match="faces"):
        load_off(_write(tmp_path / "short.off", "OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"))
    with pytest.raises(MeshParseError, match="repeats"):
        load_off(_write(tmp_path / "rep.off", "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 1\n"))


def test_load_obj(tmp_path):
    text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 0 1\nv 0 0 1\nvn 0 1 0\nf 1//1 2//1 3//1 4//1\nf -4 -3 -2\n"
    mesh = load_obj(_write(tmp_path / "quad.obj", text))
    np.testing.assert_array_equal(mesh.faces, [[0, 1, 2], [0, 2, 3], [0, 1, 2]])
    with pytest.raises(MeshParseError) as info:
        load_obj(_write(tmp_path / "bad.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n"))
    assert info.value.line == 4


def test_load_mesh_dispatches_on_suffix(tmp_path):
    assert len(load_mesh(_write(tmp_path / "s.OFF", UNIT_SQUARE_OFF)).faces) == 2
    with pytest.raises(InvalidInputError, match="unsupported"):
        load_mesh(_write(tmp_path / "s.ply", "ply\n"))


def test_mesh_rejects_degenerate_faces():
    with pytest.raises(InvalidInputError):
        Mesh(np.eye(3), [[0, 0, 1]])
    with pytest.raises(InvalidInputError):
        Mesh(np.eye(3), [[0, 1, 3]])


def test_sample_mesh_is_area_weighted(rng):
    # one big and one small triangle, areas 2 and 0.5
    mesh = Mesh(
        vertices=[[0, 0, 0], [2, 0, 0], [0, 2, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]],
        faces=[[0, 1, 2], [3, 4, 5]],
    )
    pc = sample_mesh(mesh, 20000, rng)
    share_small = np.mean(pc.points[:, 0] >= 10.0)
    assert share_small == pytest.approx(0.2, abs=0.015)
    big = pc.points[pc.points[:, 0] < 10.0]
    assert np.all(big[:, 0] + big[:, 1] <= 2.0 + 1e-12)


def test_sample_mesh_errors(rng):
    with pytest.raises(InvalidInputError):
        sample_mesh(Mesh(np.eye(3), np.zeros((0, 3))), 10, rng)
    with pytest.raises(InvalidInputError):
        sample_mesh(Mesh(np.eye(3), [[0, 1, 2]]), 0, rng)
    collinear = Mesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(InvalidInputError, match="zero"):
        sample_mesh(collinear, 10, rng)


# --- synthetic shapes ---


@pytest.mark.parametrize("category", [c.value for c in CATEGORIES])
def test_every_category_is_normalized_with_keypoints(category):
    pc = generate_shape(category, 256, np.random.default_rng(3))
    assert pc.points.shape == (256, 3)
    assert pc.keypoints.shape == (10, 3)
    assert pc.category == [c.value for c in CATEGORIES].index(category)
    np.testing.assert_allclose(pc.points.mean(axis=0), 0.0, atol=1e-12)
    assert np.linalg.norm(pc.points, axis=1).max() == pytest.approx(1.0, abs=1e-12)


def test_sphere_points_lie_near_unit_radius():
    pc = generate_shape("sphere", 2048, np.random.default_rng(0), CANONICAL)
    assert np.linalg.norm(pc.points, axis=1).std() < 0.03


def test_default_variation_stretches_and_cuts_shapes():
    spreads = [
        np.linalg.norm(generate_shape("sphere", 1024, np.random.default_rng(seed)).points, axis=1).std()
        for seed in range(8)
    ]
    assert max(spreads) > 0.04
    cut = generate_shape("sphere", 1024, np.random.default_rng(0), ShapeVariation(stretch=0.0, occlusion=0.4))
    assert cut.points.shape == (1024, 3)
    assert cut.keypoints.shape == (10, 3)


def test_cube_is_an_open_topped_box():
    pc = generate_shape("cube", 2048, np.random.default_rng(5), CANONICAL)
    x, y, z = pc.points.T
    central = np.hypot(x, z) < 0.15
    assert not np.any(central & (y > y.max() - 0.05))
    assert np.any(central & (y < y.min() + 0.05))


@pytest.mark.parametrize("values", [dict(stretch=1.0), dict(stretch=-0.1), dict(occlusion=0.5)])
def test_shape_variation_bounds(values):
    with pytest.raises(InvalidInputError):
        ShapeVariation(**values)


def test_shapes_are_seed_deterministic():
    a = generate_shape("torus", 128, np.random.default_rng(11))
    b = generate_shape("torus", 128, np.random.default_rng(11))
    np.testing.assert_array_equal(a.points, b.points)


def test_generate_shape_errors(rng):
    with pytest.raises(InvalidInputError, match="unknown category"):
        generate_shape("teapot", 128, rng)
    with pytest.raises(InvalidInputError):
        generate_shape("cube", 10, rng)


# --- datasets ---


def test_generated_dataset_layout(tiny_data_dir):
    train = DatasetManifest.load(manifest_path(tiny_data_dir, Split.TRAIN))
    test = DatasetManifest.load(manifest_path(tiny_data_dir, Split.TEST))
    assert len(train.entries) == 8 and len(test.entries) == 4
    assert train.categories == ["sphere", "cube"]
    assert [e.label for e in train.entries] == [0, 1] * 4
    assert test.seed == train.seed + len(train.entries)
    assert (tiny_data_dir / train.entries[0].path).exists()
    assert (tiny_data_dir / train.entries[0].keypoints).exists()


def test_loaded_split_is_normalized(tiny_train):
    assert len(tiny_train) == 8
    for pc in tiny_train.clouds:
        assert len(pc) == 64
        assert np.linalg.norm(pc.points, axis=1).max() == pytest.approx(1.0, abs=1e-9)
        assert pc.keypoints.shape == (10, 3)


def test_generation_is_reproducible(tmp_path):
    generate_dataset(tmp_path / "a", categories=2, train=1, test=1, points=64, seed=5)
    generate_dataset(tmp_path / "b", categories=2, train=1, test=1, points=64, seed=5, threads=2)
    for name in ("train/000000.xyz", "train/000001.kp.xyz", "test/000001.xyz", "train.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_dataset_subset_and_label_filter(tiny_train):
    cubes = tiny_train.of_label(1)
    assert len(cubes) == 4
    assert set(cubes.labels.tolist()) == {1}
    first = tiny_train.subset([2, 0])
    assert [e.path for e in first.manifest.entries] == [tiny_train.manifest.entries[2].path, tiny_train.manifest.entries[0].path]


def test_category_label(tiny_train):
    assert category_label(tiny_train.manifest, None) is None
    assert category_label(tiny_train.manifest, "cube") == 1
    with pytest.raises(InvalidInputError):
        category_label(tiny_train.manifest, "torus")


def test_manifest_mesh_entries_are_sampled_on_load(tmp_path):
    _write(tmp_path / "sq.off", UNIT_SQUARE_OFF)
    _write(tmp_path / "sq2.off", UNIT_SQUARE_OFF)
    manifest = DatasetManifest(
        seed=3,
        split=Split.TRAIN,
        entries=[ManifestEntry(path="sq.off", label=0), ManifestEntry(path="sq2.off", label=0)],
    )
    manifest.save(tmp_path / "train.json")
    a = load_dataset(tmp_path / "train.json", n_points=100)
    b = load_dataset(tmp_path / "train.json", n_points=100)
    assert a.clouds[0].points.shape == (100, 3)
    np.testing.assert_array_equal(a.clouds[1].points, b.clouds[1].points)
    # entries are seeded by position, so identical meshes still differ
    assert not np.array_equal(a.clouds[0].points, a.clouds[1].points)


def test_load_split_missing_manifest(tmp_path):
    with pytest.raises(InvalidInputError, match="no test manifest"):
        load_split(tmp_path, Split.TEST)


def test_bad_entry_names_its_file(tmp_path):
    _write(tmp_path / "x.xyz", "1 2\n")
    DatasetManifest(seed=0, split=Split.TRAIN, entries=[ManifestEntry(path="x.xyz", label=0)]).save(
        tmp_path / "train.json"
    )
    with pytest.raises(InvalidInputError, match="x.xyz"):
        load_split(tmp_path, Split.TRAIN)


def test_ingest_mesh_tree(tmp_path):
    root = tmp_path / "meshes"
    for category in ("chair", "bowl"):
        for split in ("train", "test"):
            (root / category / split).mkdir(parents=True)
            _write(root / category / split / "a.off", UNIT_SQUARE_OFF.replace("0 0 1\n4", "0 0.5 1\n4"))
    train, test = ingest(root, tmp_path / "out", points=50, seed=2)
    assert train.categories == ["bowl", "chair"]
    assert [e.label for e in train.entries] == [0, 1]
    assert test.seed == 2 + len(train.entries)
    loaded = load_split(tmp_path / "out", Split.TEST)
    assert len(loaded) == 2 and len(loaded.clouds[0]) == 50
    manifest = json.loads((tmp_path / "out" / "test.json").read_text())
    assert manifest["split"] == "test"


def test_ingest_requires_both_splits(tmp_path):
    (tmp_path / "root" / "chair" / "train").mkdir(parents=True)
    _write(tmp_path / "root" / "chair" / "train" / "a.off", UNIT_SQUARE_OFF)
    with pytest.raises(InvalidInputError, match="no test meshes"):
        ingest(tmp_path / "root", tmp_path / "out")
