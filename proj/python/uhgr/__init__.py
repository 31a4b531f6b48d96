"""Python bindings for the uhgr C++ core.

Graphs are built from an edge list and a feature matrix (numpy, float64);
matrices come back as numpy arrays.
"""

from pathlib import Path

from ._core import (
    Config,
    ConfigError,
    Dataset,
    FormatError,
    Graph,
    IntegrityError,
    IoError,
    LinearProbe,
    Model,
    NumericError,
    ProbeOptions,
    ShapeError,
    Split,
    UhgrError,
    folds,
    load_data,
    node_splits,
    normalize_adjacency,
    train,
)

__all__ = [
    "Config", "ConfigError", "Dataset", "FormatError", "Graph", "IntegrityError", "IoError",
    "LinearProbe", "Model", "NumericError", "ProbeOptions", "ShapeError", "Split", "UhgrError",
    "cli_path", "folds", "load_data", "node_splits", "normalize_adjacency", "train",
]


def cli_path():
    """Path of the bundled `uhgr` executable, or None when not installed alongside."""
    exe = Path(__file__).parent / "bin" / "uhgr"
    return exe if exe.exists() else None
