"""Delimited-text input/output.

Everything is comma-separated UTF-8 with a header row, LF line endings, '.'
decimal separator. Floats are written with ``repr`` (shortest round-trip
form), which makes outputs byte-stable for a fixed seed and lossless to read
back.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .models.base import Dataset
from .spatial import LocationSet, Partition

__all__ = [
    "read_locations",
    "read_dataset",
    "write_dataset",
    "read_matrix",
    "write_matrix",
    "read_partition_row",
    "write_partition_row",
    "write_partitions",
    "read_partitions",
    "write_rows",
]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _read_table(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    return [h.strip() for h in header], rows


def read_locations(path) -> np.ndarray:
    """Raw coordinates from a file with columns s1, s2 (extras ignored)."""
    header, rows = _read_table(path)
    try:
        i1, i2 = header.index("s1"), header.index("s2")
    except ValueError as err:
        raise ValueError(f"{path}: locations need columns s1 and s2") from err
    return np.array([[float(r[i1]), float(r[i2])] for r in rows])


def read_dataset(path) -> Dataset:
    """Dataset from columns s1, s2, (y | y1, y2), x1..xp."""
    header, rows = _read_table(path)
    cols = {name: idx for idx, name in enumerate(header)}
    if "s1" not in cols or "s2" not in cols:
        raise ValueError(f"{path}: dataset needs columns s1 and s2")
    data = np.array([[float(v) for v in r] for r in rows])
    coords = data[:, [cols["s1"], cols["s2"]]]
    if "y" in cols:
        y = data[:, cols["y"]]
    elif "y1" in cols and "y2" in cols:
        y = data[:, [cols["y1"], cols["y2"]]]
    else:
        raise ValueError(f"{path}: dataset needs column y, or columns y1 and y2")
    x_names = sorted(
        (name for name in cols if name.startswith("x") and name[1:].isdigit()),
        key=lambda s: int(s[1:]),
    )
    x = data[:, [cols[name] for name in x_names]] if x_names else None
    return Dataset(LocationSet(coords), y, x)


def write_dataset(path, data: Dataset, labels: Optional[Sequence[int]] = None) -> None:
    header: List[str] = ["s1", "s2"]
    cols: List[np.ndarray] = [data.loc.coords[:, 0], data.loc.coords[:, 1]]
    if data.bivariate:
        header += ["y1", "y2"]
        cols += [data.y[:, 0], data.y[:, 1]]
    else:
        header.append("y")
        cols.append(data.y)
    if data.x is not None:
        for j in range(data.x.shape[1]):
            header.append(f"x{j + 1}")
            cols.append(data.x[:, j])
    if labels is not None:
        header.append("cluster")
        cols.append(np.asarray(labels))
    write_rows(path, header, zip(*cols))


def write_matrix(path, mat, prefix: str = "c") -> None:
    mat = np.atleast_2d(np.asarray(mat))
    header = [f"{prefix}{j + 1}" for j in range(mat.shape[1])]
    write_rows(path, header, mat)


def read_matrix(path) -> np.ndarray:
    _, rows = _read_table(path)
    return np.array([[float(v) for v in r] for r in rows])


def write_partition_row(path, partition: Partition) -> None:
    """One partition as a single row of integer labels."""
    header = [f"c{i + 1}" for i in range(len(partition))]
    write_rows(path, header, [partition.labels])


def read_partition_row(path) -> Partition:
    _, rows = _read_table(path)
    if len(rows) != 1:
        raise ValueError(f"{path}: expected exactly one row of labels")
    return Partition([int(float(v)) for v in rows[0]])


def write_partitions(path, partitions: Sequence[Partition]) -> None:
    """One row of labels per posterior draw."""
    if not partitions:
        raise ValueError("no partitions to write")
    header = [f"c{i + 1}" for i in range(len(partitions[0]))]
    write_rows(path, header, (p.labels for p in partitions))


def read_partitions(path) -> List[Partition]:
    _, rows = _read_table(path)
    return [Partition([int(float(v)) for v in r]) for r in rows]
