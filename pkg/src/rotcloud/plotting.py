"""
SVG plots of the curve CSVs written by the pipeline.
"""

from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .errors import InvalidInputError, SchemaError  # noqa: E402
from .utils import PathLike  # noqa: E402

PLOT_STYLE = "seaborn-v0_8-whitegrid"

# Fixed salt and no timestamp make the SVG bytes a function of the data only
SVG_RC = {
    "svg.fonttype": "none",
    "svg.hashsalt": "rotcloud",
    "path.simplify": False,
}


class PlotKind(str, Enum):
    PCK = "pck"
    SWEEP = "sweep"
    TABLE1 = "table1"
    LOG = "log"


# (x column, y column, x label, y label, title)
_LAYOUT: Dict[PlotKind, Tuple[str, str, str, str, str]] = {
    PlotKind.PCK: ("threshold", "value", "Error threshold (normalized units)", "PCK", "Keypoint PCK"),
    PlotKind.SWEEP: ("fraction", "accuracy", "Fraction of labelled training data", "Test accuracy", "Label efficiency"),
    PlotKind.TABLE1: ("k", "accuracy", "Number of rotation classes K", "Rotation accuracy", "Pretext accuracy vs K"),
    PlotKind.LOG: ("epoch", "loss", "Epoch", "Training loss", "Training loss"),
}


def read_curve(path: PathLike, kind: PlotKind) -> pd.DataFrame:
    x_col, y_col = _LAYOUT[kind][:2]
    frame = pd.read_csv(path)
    for column in (x_col, y_col):
        if column not in frame.columns:
            raise SchemaError(f"{path}: missing column {column!r} for a {kind.value} plot")
    return frame.sort_values(x_col, kind="mergesort")


def plot_curves(inputs: Sequence[PathLike], kind: PlotKind, output: PathLike, title: Optional[str] = None) -> Path:
    """Render one line per input CSV, labelled with the file stem."""
    kind = PlotKind(kind)
    if not inputs:
        raise InvalidInputError("plot needs at least one input CSV")
    x_col, y_col, x_label, y_label, default_title = _LAYOUT[kind]
    curves = [(Path(p).stem, read_curve(p, kind)) for p in inputs]

    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    with plt.style.context(PLOT_STYLE), matplotlib.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        try:
            for i, (label, frame) in enumerate(curves):
                (line,) = ax.plot(frame[x_col].to_numpy(), frame[y_col].to_numpy(), marker="o", markersize=3, label=label)
                line.set_gid(f"series-{i}")
            if kind is PlotKind.SWEEP:
                ax.set_xscale("log")
            if kind in (PlotKind.PCK, PlotKind.SWEEP, PlotKind.TABLE1):
                ax.set_ylim(0.0, 1.02)
            ax.set_xlabel(x_label)
            ax.set_ylabel(y_label)
            ax.set_title(title or default_title)
            ax.legend(loc="best")
            fig.tight_layout()
            fig.savefig(output, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return output
