import pandas as pd
import pytest

from rotcloud.errors import InvalidInputError, SchemaError
from rotcloud.plotting import PlotKind, plot_curves, read_curve


def _sweep_csv(path, scale=1.0):
    pd.DataFrame({"fraction": [1.0, 0.1, 0.5], "accuracy": [0.9 * scale, 0.4 * scale, 0.7 * scale]}).to_csv(path, index=False)
    return path


def test_single_series(tmp_path):
    out = plot_curves([_sweep_csv(tmp_path / "pretrained.csv")], PlotKind.SWEEP, tmp_path / "sweep.svg")
    svg = out.read_text()
    assert svg.count('id="series-') == 1
    assert "pretrained" in svg


def test_one_line_per_input_labelled_by_stem(tmp_path):
    inputs = [_sweep_csv(tmp_path / "pretrained_k18.csv"), _sweep_csv(tmp_path / "random_init.csv", 0.5)]
    svg = plot_curves(inputs, "sweep", tmp_path / "plots" / "sweep.svg", title="Transfer").read_text()
    assert svg.count('id="series-') == 2
    assert "pretrained_k18" in svg and "random_init" in svg
    assert "Transfer" in svg


def test_rerun_is_byte_identical(tmp_path):
    inputs = [_sweep_csv(tmp_path / "a.csv")]
    first = plot_curves(inputs, PlotKind.SWEEP, tmp_path / "one.svg").read_bytes()
    second = plot_curves(inputs, PlotKind.SWEEP, tmp_path / "two.svg").read_bytes()
    assert first == second


def test_read_curve_sorts_by_x(tmp_path):
    frame = read_curve(_sweep_csv(tmp_path / "s.csv"), PlotKind.SWEEP)
    assert frame["fraction"].tolist() == [0.1, 0.5, 1.0]


def test_missing_column_and_no_inputs(tmp_path):
    path = tmp_path / "pck.csv"
    pd.DataFrame({"threshold": [0.0, 0.1]}).to_csv(path, index=False)
    with pytest.raises(SchemaError, match="'value'"):
        plot_curves([path], PlotKind.PCK, tmp_path / "pck.svg")
    with pytest.raises(InvalidInputError):
        plot_curves([], PlotKind.PCK, tmp_path / "pck.svg")
