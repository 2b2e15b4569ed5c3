"""Multivariate daily time-series container, chronological splitting, and
rolling-window generation.

Values are stored time-major: ``values[t, c]`` is covariate ``c`` at step
``t``.  Calendar handling is confined to ingestion; internally a frame only
knows integer day offsets from a dataset epoch.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, InsufficientDataError

__all__ = ["SeriesFrame", "SplitSpec", "WindowBatch", "split", "make_windows"]


@dataclass(frozen=True)
class SeriesFrame:
    """A k-covariate daily series with designated predictand columns.

    Invariants (checked at construction): offsets are consecutive integers,
    values are finite with no gaps, and predictand indices are a non-empty
    subset of the columns.
    """

    epoch: datetime.date
    offsets: np.ndarray          # (T,) int64 day offsets from epoch
    values: np.ndarray           # (T, k) float64
    columns: tuple[str, ...]
    predictand_indices: tuple[int, ...]

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.int64)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ContractError("values must be a (steps, covariates) matrix")
        if offsets.shape != (values.shape[0],):
            raise ContractError("offsets length must match value rows")
        if values.shape[1] != len(self.columns):
            raise ContractError("column names must match value columns")
        if offsets.size > 1 and not np.all(np.diff(offsets) == 1):
            raise ContractError("offsets must be consecutive daily steps")
        if not np.all(np.isfinite(values)):
            raise ContractError("values must be finite and gap-free")
        if not self.predictand_indices:
            raise ContractError("at least one predictand column is required")
        for idx in self.predictand_indices:
            if not 0 <= idx < values.shape[1]:
                raise ContractError(f"predictand index {idx} out of bounds")
        offsets.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "predictand_indices", tuple(self.predictand_indices))

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.values.shape[1]

    @property
    def predictand_names(self) -> tuple[str, ...]:
        return tuple(self.columns[i] for i in self.predictand_indices)

    def date_at(self, row: int) -> datetime.date:
        return self.epoch + datetime.timedelta(days=int(self.offsets[row]))

    def predictand_values(self) -> np.ndarray:
        """Predictand columns only, shape (T, j)."""
        return self.values[:, list(self.predictand_indices)]

    def slice_rows(self, start: int, stop: int) -> "SeriesFrame":
        """Contiguous row slice as a new frame (arrays are views)."""
        return replace(self, offsets=self.offsets[start:stop],
                       values=self.values[start:stop])

    def tail(self, n: int) -> "SeriesFrame":
        if n > self.n_steps:
            raise InsufficientDataError(
                f"cannot take tail of {n} rows from a {self.n_steps}-row frame")
        return self.slice_rows(self.n_steps - n, self.n_steps)

    def same_schema(self, other: "SeriesFrame") -> bool:
        return (self.columns == other.columns
                and self.predictand_indices == other.predictand_indices)


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/validation/test fractions; must sum to one."""

    train: float = 0.75
    validation: float = 0.15
    test: float = 0.10

    def __post_init__(self):
        for name, f in (("train", self.train), ("validation", self.validation),
                        ("test", self.test)):
            if not 0.0 < f < 1.0:
                raise ContractError(f"{name} fraction must lie in (0, 1), got {f}")
        if abs(self.train + self.validation + self.test - 1.0) > 1e-9:
            raise ContractError("split fractions must sum to 1")


@dataclass(frozen=True)
class WindowBatch:
    """Rolling (input, target) window pairs for the neural core.

    ``inputs[i]`` is the (m, k) block starting at ``origin_indices[i]``;
    ``targets[i]`` is the immediately following (m, j) predictand block.
    """

    inputs: np.ndarray           # (n, m, k)
    targets: np.ndarray          # (n, m, j)
    origin_indices: np.ndarray   # (n,) int64
    column_names: tuple[str, ...] = field(default=())
    target_names: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def window(self) -> int:
        return self.inputs.shape[1]


def split(frame: SeriesFrame, spec: SplitSpec,
          window: int | None = None) -> tuple[SeriesFrame, SeriesFrame, SeriesFrame]:
    """Split a frame chronologically into train/validation/test.

    Train and validation get floor(T * fraction) rows; the remainder goes to
    test.  When ``window`` is given, every partition must hold at least one
    full input+target window (2 * window rows).
    """
    total = frame.n_steps
    n_train = int(np.floor(total * spec.train))
    n_val = int(np.floor(total * spec.validation))
    n_test = total - n_train - n_val
    parts = {"train": n_train, "validation": n_val, "test": n_test}
    minimum = 1 if window is None else 2 * window
    offenders = [f"{name} ({rows} rows)" for name, rows in parts.items()
                 if rows < minimum]
    if offenders:
        need = f"at least {minimum} rows" if window is None else \
            f"at least {minimum} rows for one window of size {window}"
        raise InsufficientDataError(
            f"partition(s) too small: {', '.join(offenders)}; each needs "
            + need)
    train = frame.slice_rows(0, n_train)
    validation = frame.slice_rows(n_train, n_train + n_val)
    test = frame.slice_rows(n_train + n_val, total)
    return train, validation, test


def make_windows(frame: SeriesFrame, window: int, stride: int = 1) -> WindowBatch:
    """All (input m-block, target m-block) pairs at the given stride.

    Inputs span every covariate; targets span only the predictand columns.
    For stride 1 the window count is T - 2m + 1.
    """
    if window < 1 or stride < 1:
        raise ContractError("window and stride must be positive")
    total = frame.n_steps
    if total < 2 * window:
        raise InsufficientDataError(
            f"frame has {total} rows; needs at least {2 * window} for one "
            f"window of size {window}")
    origins = np.arange(0, total - 2 * window + 1, stride, dtype=np.int64)
    pred_cols = list(frame.predictand_indices)
    inputs = np.stack([frame.values[o:o + window] for o in origins])
    targets = np.stack([frame.values[o + window:o + 2 * window][:, pred_cols]
                        for o in origins])
    return WindowBatch(inputs=inputs, targets=targets, origin_indices=origins,
                       column_names=frame.columns,
                       target_names=frame.predictand_names)
