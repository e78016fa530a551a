"""Plain numeric CSV tables: one header row, ``%.17g`` cells, LF endings.

``%.17g`` round-trips every finite double exactly, so a table written and
read back is bit-identical to the array that produced it.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

FMT = "%.17g"


def write_table(path: str | Path, header: Sequence[str], data: np.ndarray) -> None:
    """Write a 2-D array under a comma-separated header.

    Raises:
        OSError: with the offending path in the message.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"table has shape {data.shape} but {len(header)} header columns")
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            np.savetxt(fh, data, fmt=FMT, delimiter=",", newline="\n",
                       header=",".join(header), comments="")
    except OSError as err:
        raise OSError(f"cannot write {path}: {err.strerror or err}") from err


def read_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Inverse of :func:`write_table`; returns ``(header, data)``."""
    try:
        with open(path, encoding="ascii") as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as err:
        raise OSError(f"cannot read {path}: {err.strerror or err}") from err
    if data.size and data.shape[1] != len(header):
        raise ValueError(f"{path}: rows have {data.shape[1]} cells, header has {len(header)}")
    return header, data.reshape(-1, len(header))
