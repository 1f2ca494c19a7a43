"""CSV persistence of paths and tables (17 significant digits)."""
import os
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from ..core.model import Path
from .errors import InvalidArgumentError

FLOAT_FORMAT = "%.17g"


def path_columns(d: int, prefix: str = "x") -> List[str]:
    return [f"{prefix}{k + 1}" for k in range(d)]


def path_frame(path: Path, prefix: str = "x", time_label: str = "t") -> pd.DataFrame:
    frame = pd.DataFrame(path.states, columns=path_columns(path.d, prefix))
    frame.insert(0, time_label, path.times)
    return frame


def write_path(path: Path, filename: str, prefix: str = "x", time_label: str = "t") -> str:
    """Write a path as CSV with header ``t,x1,...,xd``."""
    path_frame(path, prefix, time_label).to_csv(filename, index=False, float_format=FLOAT_FORMAT,
                                                 lineterminator="\n")
    return filename


def read_path(filename: str) -> Path:
    """Read a CSV written by :func:`write_path` (first column is time)."""
    if not os.path.exists(filename):
        raise InvalidArgumentError(f"path file not found: {filename}")
    frame = pd.read_csv(filename, float_precision="round_trip")
    if frame.shape[1] < 2:
        raise InvalidArgumentError(f"{filename} needs a time column and at least one state column")
    return Path(frame.iloc[:, 0].to_numpy(dtype=float), frame.iloc[:, 1:].to_numpy(dtype=float))


def write_table(columns: Dict[str, Sequence], filename: str) -> str:
    """Write named columns as CSV."""
    pd.DataFrame({k: np.asarray(v) for k, v in columns.items()}).to_csv(
        filename, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return filename


def write_lines(lines: Sequence[str], filename: str) -> str:
    with open(filename, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")
    return filename
