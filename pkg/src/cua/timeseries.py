"""Uniformly sampled count series with an explicit missing-sample mask."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class Unit(enum.Enum):
    USER_REPORTS = "userreports"
    ONLINE_PLAYERS = "onlineplayers"
    GENERIC = "generic"


class Resample(enum.Enum):
    SUM = "sum"
    MEAN = "mean"
    LAST = "last"


class FillPolicy(enum.Enum):
    ZERO = "zero"
    LINEAR = "linear"


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Samples at ``start_epoch + i * interval`` (integer Unix seconds).

    ``mask`` marks samples that were absent from the source; ``None`` means
    every sample is present. Values under the mask are stored as 0 and carry
    no meaning.
    """

    start_epoch: int
    interval: int
    values: np.ndarray
    unit: Unit = Unit.GENERIC
    mask: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.interval <= 0:
            raise ValueError(f"interval must be positive, got {self.interval}")
        values = np.array(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        mask = None
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool)
            if mask.shape != values.shape:
                raise ValueError(
                    f"mask length {mask.size} does not match values length {values.size}"
                )
            values[mask] = 0.0
            if not mask.any():
                mask = None
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite; mark absent samples in the mask")
        if np.any(values < 0):
            raise ValueError("values must be non-negative")
        values.setflags(write=False)
        if mask is not None:
            mask.setflags(write=False)
        object.__setattr__(self, "start_epoch", int(self.start_epoch))
        object.__setattr__(self, "interval", int(self.interval))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.start_epoch == other.start_epoch
            and self.interval == other.interval
            and self.unit == other.unit
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.missing, other.missing)
        )

    @property
    def missing(self) -> np.ndarray:
        if self.mask is None:
            return np.zeros(self.values.size, dtype=bool)
        return self.mask

    @property
    def has_missing(self) -> bool:
        return self.mask is not None

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_epoch + self.interval * np.arange(self.values.size, dtype=np.int64)

    def replace(self, **changes) -> "TimeSeries":
        kwargs = dict(
            start_epoch=self.start_epoch,
            interval=self.interval,
            values=self.values,
            unit=self.unit,
            mask=self.mask,
        )
        kwargs.update(changes)
        return TimeSeries(**kwargs)


def resample(ts: TimeSeries, new_interval: int, method: Resample = Resample.SUM) -> TimeSeries:
    """Aggregate into left-aligned buckets of ``new_interval`` seconds.

    Only present samples contribute; a bucket with no present sample stays
    missing. The trailing bucket may be partial.
    """
    if new_interval <= 0 or new_interval % ts.interval:
        raise ValueError(
            f"new interval {new_interval}s is not a positive integer multiple "
            f"of the series interval {ts.interval}s"
        )
    factor = new_interval // ts.interval
    n = len(ts)
    n_out = math.ceil(n / factor)
    if factor == 1 or n == 0:
        return ts.replace(interval=new_interval)

    pad = n_out * factor - n
    present = np.concatenate([~ts.missing, np.zeros(pad, dtype=bool)]).reshape(n_out, factor)
    vals = np.concatenate([ts.values, np.zeros(pad)]).reshape(n_out, factor)
    counts = present.sum(axis=1)
    empty = counts == 0

    if method is Resample.SUM:
        out = np.where(present, vals, 0.0).sum(axis=1)
    elif method is Resample.MEAN:
        sums = np.where(present, vals, 0.0).sum(axis=1)
        out = np.divide(sums, counts, out=np.zeros(n_out), where=~empty)
    elif method is Resample.LAST:
        # index of the last present sample in each row
        last = factor - 1 - np.argmax(present[:, ::-1], axis=1)
        out = vals[np.arange(n_out), last]
        out[empty] = 0.0
    else:
        raise ValueError(f"unknown resample method {method!r}")

    return TimeSeries(ts.start_epoch, new_interval, out, ts.unit, empty if empty.any() else None)


def fill_missing(
    ts: TimeSeries, mask: np.ndarray | None = None, policy: FillPolicy = FillPolicy.ZERO
) -> TimeSeries:
    """Replace missing samples so that the result has no mask.

    ``mask`` overrides the series' own mask when given. ``LINEAR`` interpolates
    between the nearest present neighbours and extends edge values outward.
    """
    missing = ts.missing if mask is None else np.asarray(mask, dtype=bool)
    if missing.shape != ts.values.shape:
        raise ValueError(
            f"mask length {missing.size} does not match series length {len(ts)}"
        )
    if not missing.any():
        return ts.replace(mask=None)
    if missing.all():
        raise ValueError("cannot fill a series in which every sample is missing")

    values = np.array(ts.values, dtype=float)
    if policy is FillPolicy.ZERO:
        values[missing] = 0.0
    elif policy is FillPolicy.LINEAR:
        idx = np.arange(values.size)
        present = ~missing
        values[missing] = np.interp(idx[missing], idx[present], values[present])
    else:
        raise ValueError(f"unknown fill policy {policy!r}")
    return ts.replace(values=values, mask=None)
