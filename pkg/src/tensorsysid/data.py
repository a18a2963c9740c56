"""Datasets of sampled inputs and observed outputs, and delimited-file loading."""
import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import DataError
from .model import InputSignal

Column = Union[int, str]


class Dataset:
    """Sample times ``t_h``, inputs ``u(t_h)`` and observations ``y_obs(t_h)``.

    ``outputs`` has shape ``(P + 1, S)``.  ``first_row`` is the 1-based row
    number of the first sample in the file it came from, so slices can be
    addressed in file coordinates.
    """

    def __init__(self, times, inputs, outputs, sampling_period=None, source=None,
                 first_row=1):
        self.times = np.asarray(times, dtype=float).ravel()
        self.inputs = np.asarray(inputs, dtype=float).ravel()
        outputs = np.asarray(outputs, dtype=float)
        if outputs.ndim == 1:
            outputs = outputs[:, None]
        self.outputs = outputs
        self.sampling_period = sampling_period
        self.source = source
        self.first_row = int(first_row)
        P1 = len(self.times)
        if self.inputs.shape != (P1,) or self.outputs.shape[0] != P1:
            raise DataError(
                f"inconsistent sample counts: {P1} times, {self.inputs.shape[0]} inputs, "
                f"{self.outputs.shape[0]} observations")
        if np.any(np.diff(self.times) <= 0):
            raise DataError("sample times must be strictly increasing")
        if not (np.all(np.isfinite(self.outputs)) and np.all(np.isfinite(self.inputs))):
            raise DataError("inputs and observations must be finite")

    def __len__(self):
        return len(self.times)

    def __repr__(self):
        return (f"Dataset({len(self)} samples, S={self.n_outputs}, "
                f"Ts={self.sampling_period}, source={self.source!r})")

    @property
    def n_outputs(self):
        return self.outputs.shape[1]

    def input_signal(self):
        return InputSignal(self.times, self.inputs)

    def slice_rows(self, first, last):
        """Samples whose 1-based file row numbers lie in ``[first, last]``."""
        if first > last:
            raise DataError(f"empty row range {first}..{last}")
        lo = first - self.first_row
        hi = last - self.first_row + 1
        if lo < 0 or hi > len(self):
            raise DataError(
                f"rows {first}..{last} outside available rows "
                f"{self.first_row}..{self.first_row + len(self) - 1}")
        return Dataset(self.times[lo:hi], self.inputs[lo:hi], self.outputs[lo:hi],
                       self.sampling_period, self.source, first_row=first)

    def subset(self, index):
        """Samples at positions ``index`` (times kept, order preserved)."""
        index = np.sort(np.asarray(index, dtype=int))
        return Dataset(self.times[index], self.inputs[index], self.outputs[index],
                       self.sampling_period, self.source,
                       first_row=self.first_row + (int(index[0]) if len(index) else 0))


@dataclass
class DataFormat:
    """How to read a delimited text file.

    Columns are 0-based indices, or names looked up in the header line (the
    last of the ``skip_header`` skipped lines).  Without a time column the
    grid ``t0 + (row - 1) * sampling_period`` is used.
    """

    delimiter: Optional[str] = None
    skip_header: int = 0
    time_column: Optional[Column] = None
    input_column: Column = 0
    output_columns: Sequence[Column] = (1,)
    sampling_period: Optional[float] = None
    t0: float = 0.0
    comment: str = "#"


def _split(line, delimiter):
    if delimiter is None:
        delimiter = "," if "," in line else None
    if delimiter is None:
        return line.split()
    return [c.strip() for c in next(csv.reader(io.StringIO(line), delimiter=delimiter))]


def load_dataset(path, fmt=None):
    """Read ``path`` according to ``fmt`` into a Dataset.

    Raises
    ------
    DataError
        Malformed rows (with their line number), unresolvable columns,
        missing time information or non-increasing times.
    """
    fmt = fmt or DataFormat()
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    header = None
    if fmt.skip_header > 0:
        if len(lines) < fmt.skip_header:
            raise DataError(f"{path}: fewer lines than skip_header={fmt.skip_header}")
        header = _split(lines[fmt.skip_header - 1], fmt.delimiter)

    def resolve(col):
        if isinstance(col, str):
            if header is None or col not in header:
                raise DataError(f"{path}: column {col!r} not found in header {header}")
            return header.index(col)
        return int(col)

    t_col = None if fmt.time_column is None else resolve(fmt.time_column)
    u_col = resolve(fmt.input_column)
    y_cols = [resolve(c) for c in fmt.output_columns]
    if t_col is None and fmt.sampling_period is None:
        raise DataError(f"{path}: need a time column or a sampling period")
    needed = max([u_col] + y_cols + ([t_col] if t_col is not None else []))

    rows = []
    for lineno, line in enumerate(lines[fmt.skip_header:], start=fmt.skip_header + 1):
        text = line.strip()
        if not text or (fmt.comment and text.startswith(fmt.comment)):
            continue
        cells = _split(text, fmt.delimiter)
        if len(cells) <= needed:
            raise DataError(f"{path}:{lineno}: expected at least {needed + 1} columns, "
                            f"got {len(cells)}")
        try:
            rows.append([float(c) for c in cells[: needed + 1]])
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    table = np.array(rows, dtype=float).reshape(len(rows), needed + 1)

    if t_col is None:
        times = fmt.t0 + fmt.sampling_period * np.arange(len(rows))
    else:
        times = table[:, t_col]
        bad = np.nonzero(np.diff(times) <= 0)[0]
        if len(bad):
            raise DataError(f"{path}: time not strictly increasing at data row {bad[0] + 2}")
    return Dataset(times, table[:, u_col], table[:, y_cols],
                   sampling_period=fmt.sampling_period, source=str(path))


def write_columns(path, columns, header):
    """Write equal-length 1-D columns as comma-separated text with a header line.

    ``path`` may also be an open text stream.
    """
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if columns else []
    if hasattr(path, "write"):
        _write_rows(path, data, header)
        return
    with open(path, "w", newline="") as fh:
        _write_rows(fh, data, header)


def _write_rows(fh, data, header):
    fh.write(",".join(header) + "\n")
    for row in data:
        fh.write(",".join(repr(float(v)) for v in row) + "\n")
