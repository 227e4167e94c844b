"""Day-of-year climatology and standardised anomalies.

A :class:`ClimatologyTable` holds a smoothed mean and standard deviation for
each of 366 day-of-year slots.  Slots 1..365 follow the no-leap calendar
(1 March is always slot 60); slot 366 is 29 February and is defined as the
average of the 28 February and 1 March entries.
"""

import datetime
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError

__all__ = [
    "ClimatologyTable",
    "STD_FLOOR",
    "LEAP_SLOT",
    "doy_slot",
    "valid_doy",
    "circular_moving_average",
    "compute_climatology",
    "constant_climatology",
    "standardize",
    "destandardize",
]

STD_FLOOR = 1e-6
LEAP_SLOT = 366
_FEB28 = 59
_MAR01 = 60


def _as_date(d):
    if isinstance(d, datetime.datetime):
        return d.date()
    if isinstance(d, datetime.date):
        return d
    if isinstance(d, np.datetime64):
        return d.astype("datetime64[D]").item()
    return datetime.date.fromordinal(int(d))


def doy_slot(date):
    """Climatology slot (1..366) of a date, a ``datetime64`` or a proleptic ordinal."""
    d = _as_date(date)
    if d.month == 2 and d.day == 29:
        return LEAP_SLOT
    n = d.timetuple().tm_yday
    leap = d.year % 4 == 0 and (d.year % 100 != 0 or d.year % 400 == 0)
    if leap and d.month > 2:
        n -= 1
    return n


def valid_doy(init_date, lead_days, anchor="valid_day"):
    """Slot used to standardise a forecast initialised on ``init_date``.

    ``anchor="valid_day"`` (default) uses the verifying date
    ``init_date + lead_days``; ``anchor="init_day"`` uses the initialisation
    date.
    """
    d = _as_date(init_date)
    if anchor == "valid_day":
        return doy_slot(d + datetime.timedelta(days=int(lead_days)))
    if anchor == "init_day":
        return doy_slot(d)
    raise ValueError(f"unknown anchor {anchor!r}")


@dataclass(frozen=True, eq=False)
class ClimatologyTable:
    """Mean and standard deviation per (slot, q, p); arrays are ``[366, q, p]``.

    Row ``k`` of the arrays is slot ``k + 1``.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.shape[0] != LEAP_SLOT:
            raise ValueError("mean and std must both have shape (366, q, p)")

    @property
    def field_shape(self):
        return self.mean.shape[1:]

    def _rows(self, doy):
        doy = np.asarray(doy)
        if doy.dtype.kind == "f":
            if not np.all(doy == np.round(doy)):
                raise ValueError("day-of-year slots must be integers")
            doy = doy.astype(np.int64)
        if np.any(doy < 1) or np.any(doy > LEAP_SLOT):
            raise ValueError(f"day-of-year slot out of range 1..366: {doy}")
        return doy - 1

    def mean_for(self, doy):
        return self.mean[self._rows(doy)]

    def std_for(self, doy):
        return self.std[self._rows(doy)]


def circular_moving_average(series, window):
    """Centred moving average along axis 0 with periodic wrap-around."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"smoothing window must be a positive odd integer, got {window}")
    series = np.asarray(series, dtype=float)
    half = window // 2
    out = np.zeros_like(series)
    for shift in range(-half, half + 1):
        out += np.roll(series, shift, axis=0)
    return out / window


def compute_climatology(values, dates, window=15, std_floor=STD_FLOOR):
    """Smoothed day-of-year climatology of a daily series.

    Parameters
    ----------
    values : array_like, shape (n_days, q, p)
        One snapshot per day.
    dates : sequence
        Date of each snapshot (``datetime.date``, ``datetime64`` or ordinal).
    window : int
        Odd width of the centred smoothing window, in days.
    std_floor : float
        Lower bound applied to the standard deviation.

    Notes
    -----
    The raw per-slot mean is smoothed first; the standard deviation is then
    taken of the anomalies about the smoothed mean and smoothed the same way.
    29 February observations do not enter the estimate; their slot is filled
    from the neighbouring days.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"smoothing window must be a positive odd integer, got {window}")
    values = np.asarray(values, dtype=float)
    if values.ndim != 3 or len(values) != len(dates):
        raise ValueError("values must be (n_days, q, p) with one date per day")
    slots = np.array([doy_slot(d) for d in dates])
    keep = slots != LEAP_SLOT
    values, rows = values[keep], slots[keep] - 1

    counts = np.bincount(rows, minlength=365)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise InsufficientDataError(
            f"{missing.size} day-of-year slots have no data (first missing: {missing[0] + 1})"
        )
    shape = values.shape[1:]
    flat = values.reshape(len(values), -1)

    raw_mean = np.zeros((365, flat.shape[1]))
    np.add.at(raw_mean, rows, flat)
    raw_mean /= counts[:, None]
    mean = circular_moving_average(raw_mean, window)

    anom2 = (flat - mean[rows]) ** 2
    raw_var = np.zeros_like(raw_mean)
    np.add.at(raw_var, rows, anom2)
    raw_std = np.sqrt(raw_var / counts[:, None])
    std = np.maximum(circular_moving_average(raw_std, window), std_floor)

    mean = np.vstack([mean, 0.5 * (mean[_FEB28 - 1] + mean[_MAR01 - 1])])
    std = np.vstack([std, 0.5 * (std[_FEB28 - 1] + std[_MAR01 - 1])])
    return ClimatologyTable(mean.reshape((LEAP_SLOT,) + shape), std.reshape((LEAP_SLOT,) + shape))


def constant_climatology(mean, std):
    """Table whose mean/std fields are the same for every slot."""
    mean = np.asarray(mean, dtype=float)
    std = np.maximum(np.broadcast_to(np.asarray(std, dtype=float), mean.shape), STD_FLOOR)
    return ClimatologyTable(
        np.repeat(mean[None], LEAP_SLOT, axis=0), np.repeat(std[None], LEAP_SLOT, axis=0)
    )


def _check_shape(field, table):
    if field.shape[-2:] != table.field_shape:
        raise ValueError(
            f"field shape {field.shape[-2:]} does not match climatology {table.field_shape}"
        )


def _broadcast_slot(arr, field):
    # table rows are (..., q, p); insert member axes between leading days and (q, p)
    extra = field.ndim - arr.ndim
    if extra > 0 and arr.ndim > 2:
        arr = arr.reshape(arr.shape[:-2] + (1,) * extra + arr.shape[-2:])
    return arr


def standardize(field, table, doy):
    """``(field - mean[doy]) / std[doy]``.

    ``doy`` may be a scalar or an array matching the leading axis of
    ``field``; any axes between that and the trailing ``(q, p)`` (e.g.
    ensemble members) are broadcast.
    """
    field = np.asarray(field, dtype=float)
    _check_shape(field, table)
    mean = _broadcast_slot(table.mean_for(doy), field)
    std = _broadcast_slot(table.std_for(doy), field)
    return (field - mean) / std


def destandardize(anomaly, table, doy):
    """Inverse of :func:`standardize`."""
    anomaly = np.asarray(anomaly, dtype=float)
    _check_shape(anomaly, table)
    mean = _broadcast_slot(table.mean_for(doy), anomaly)
    std = _broadcast_slot(table.std_for(doy), anomaly)
    return anomaly * std + mean
