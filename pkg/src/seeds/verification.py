"""Ensemble verification metrics.

Array conventions: an ensemble is ``(..., M, q, p)`` with the member axis
third from last (typically ``(t, M, q, p)``); ensemble means, references and
climatology fields are ``(..., q, p)``.  Spatial reductions run over the last
axis and are unweighted unless ``weights`` (one value per grid point) is
given; :func:`latitude_weights` builds cos-latitude weights.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .climatology import ClimatologyTable
from .errors import InsufficientDataError, UndefinedCorrelationError

__all__ = [
    "LOG_LOSS_EPS",
    "MetricSummary",
    "MetricRow",
    "MetricReport",
    "BinaryEventSpec",
    "UnreliabilityReport",
    "ModelClimatologySpread",
    "latitude_weights",
    "climatology_fields",
    "ensemble_mean",
    "ensemble_spread",
    "summarize",
    "rmse",
    "spatial_correlation",
    "acc",
    "crps",
    "rank_histogram",
    "unreliability_delta",
    "event_probability",
    "brier",
    "log_loss",
    "spread_correlation",
    "model_climatology_spread",
]

LOG_LOSS_EPS = 1e-7


def latitude_weights(lat):
    """``cos(lat)`` normalised to unit mean."""
    w = np.cos(np.asarray(lat, dtype=float))
    return w / w.mean()


def climatology_fields(table, doys):
    """Mean and std fields ``(..., q, p)`` of ``table`` at ``doys``."""
    if not isinstance(table, ClimatologyTable):
        raise TypeError("expected a ClimatologyTable")
    return table.mean_for(doys), table.std_for(doys)


def _space_mean(x, weights=None):
    if weights is None:
        return x.mean(axis=-1)
    w = np.asarray(weights, dtype=float)
    if w.shape != x.shape[-1:]:
        raise ValueError(f"weights need shape {x.shape[-1:]}, got {w.shape}")
    return (x * w).sum(axis=-1) / w.sum()


def _members(v):
    v = np.asarray(v, dtype=float)
    if v.ndim < 3:
        raise ValueError("an ensemble needs at least the (M, q, p) axes")
    if v.shape[-3] < 1:
        raise InsufficientDataError("ensemble has no members")
    return v


def _check_ref(v, ref):
    ref = np.asarray(ref, dtype=float)
    expected = v.shape[:-3] + v.shape[-2:]
    if ref.shape != expected:
        raise ValueError(f"reference shape {ref.shape} does not match ensemble {v.shape}")
    return ref


def ensemble_mean(v):
    return _members(v).mean(axis=-3)


def ensemble_spread(v):
    """Pointwise sample standard deviation over members (``ddof=1``)."""
    v = _members(v)
    if v.shape[-3] < 2:
        raise InsufficientDataError(f"ensemble spread needs M >= 2 members, got M={v.shape[-3]}")
    return v.std(axis=-3, ddof=1)


@dataclass(frozen=True)
class MetricSummary:
    """Mean over days, sample variance (``ddof=1``) and day count."""

    value: np.ndarray
    variance: np.ndarray
    n: int

    @property
    def stderr(self):
        return np.sqrt(self.variance / self.n)


def summarize(per_day):
    """Summarise per-day values along axis 0."""
    x = np.asarray(per_day, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise InsufficientDataError("no evaluation days")
    var = x.var(axis=0, ddof=1) if n > 1 else np.full(x.shape[1:], np.nan)
    return MetricSummary(value=x.mean(axis=0), variance=var, n=n)


def rmse(mean_v, mean_w, weights=None):
    """Spatial RMSE per ``(..., q)``; pass the result to :func:`summarize`."""
    a = np.asarray(mean_v, dtype=float)
    b = np.asarray(mean_w, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return np.sqrt(_space_mean((a - b) ** 2, weights))


def spatial_correlation(a, b, weights=None):
    """Centred Pearson correlation over grid points, per ``(..., q)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    da = a - _space_mean(a, weights)[..., None]
    db = b - _space_mean(b, weights)[..., None]
    va = _space_mean(da * da, weights)
    vb = _space_mean(db * db, weights)
    bad = (va <= 0) | (vb <= 0)
    if np.any(bad):
        where = tuple(int(i) for i in np.argwhere(bad)[0])
        raise UndefinedCorrelationError(f"zero-variance field at index {where}; correlation undefined")
    return _space_mean(da * db, weights) / np.sqrt(va * vb)


def acc(mean_v, mean_w, clim_mean, weights=None):
    """Anomaly correlation: correlation of ``mean - clim_mean`` fields, per ``(..., q)``."""
    c = np.asarray(clim_mean, dtype=float)
    return spatial_correlation(np.asarray(mean_v) - c, np.asarray(mean_w) - c, weights)


def crps(v, ref):
    """Pointwise ensemble CRPS, shape ``(..., q, p)``.

    ``mean|v_m - ref| - sum_{m,m'} |v_m - v_m'| / (2 M^2)``; the double sum is
    evaluated from the sorted members in ``O(M log M)``.
    """
    v = _members(v)
    ref = _check_ref(v, ref)
    M = v.shape[-3]
    skill = np.abs(v - ref[..., None, :, :]).mean(axis=-3)
    if M == 1:
        return skill
    s = np.sort(v, axis=-3)
    coef = (2 * np.arange(M) - M + 1).astype(float)
    pair_sum = 2 * np.tensordot(coef, np.moveaxis(s, -3, 0), axes=(0, 0))
    return skill - pair_sum / (2 * M * M)


def rank_histogram(v, ref, rng=None):
    """Rank counts of ``ref`` among the members, per location.

    Returns an integer array ``(q, p, M + 1)`` aggregated over all leading
    (day) axes.  Ties are broken uniformly at random with ``rng`` (an int
    seed or a ``Generator``; default seed 0).
    """
    v = _members(v)
    ref = _check_ref(v, ref)
    rng = np.random.default_rng(0 if rng is None else rng)
    M, (q, p) = v.shape[-3], v.shape[-2:]
    r = ref[..., None, :, :]
    below = (v < r).sum(axis=-3)
    ties = (v == r).sum(axis=-3)
    ranks = below + rng.integers(0, ties + 1)
    ranks = ranks.reshape(-1, q * p)
    idx = np.arange(q * p) * (M + 1) + ranks
    counts = np.bincount(idx.ravel(), minlength=q * p * (M + 1))
    return counts.reshape(q, p, M + 1)


@dataclass(frozen=True)
class UnreliabilityReport:
    Delta: np.ndarray
    Delta0: float
    delta: np.ndarray
    n: int
    M: int

    @property
    def global_delta(self):
        """Average of ``delta`` over locations."""
        return float(np.mean(self.delta))


def unreliability_delta(histogram, n=None):
    """Squared distance of rank histograms ``(..., M + 1)`` to flatness.

    ``Delta = sum_i (s_i - n/(M+1))^2``, ``Delta0 = n M/(M+1)`` and
    ``delta = Delta / Delta0``, per location.
    """
    s = np.asarray(histogram, dtype=float)
    M = s.shape[-1] - 1
    if M < 1:
        raise ValueError("a rank histogram needs at least two bins")
    totals = s.sum(axis=-1)
    if n is None:
        n = int(round(float(totals.flat[0]))) if totals.size else 0
    if n < 1:
        raise InsufficientDataError("rank histogram is empty")
    if not np.all(totals == n):
        raise ValueError(f"histogram counts do not sum to n={n}")
    Delta = ((s - n / (M + 1)) ** 2).sum(axis=-1)
    Delta0 = n * M / (M + 1)
    return UnreliabilityReport(Delta=Delta, Delta0=Delta0, delta=Delta / Delta0, n=n, M=M)


@dataclass(frozen=True)
class BinaryEventSpec:
    """Event ``x >= mean + k std`` for ``k > 0`` or ``x <= mean + k std`` for ``k < 0``."""

    threshold: float

    def __post_init__(self):
        if not np.isfinite(self.threshold) or self.threshold == 0:
            raise ValueError("event threshold must be finite and nonzero")

    @property
    def direction(self):
        return ">=" if self.threshold > 0 else "<="

    @property
    def label(self):
        return f"{self.threshold:+g}sigma"

    def occurs(self, x, clim_mean, clim_std):
        level = np.asarray(clim_mean) + self.threshold * np.asarray(clim_std)
        return (x >= level) if self.threshold > 0 else (x <= level)


def event_probability(v, event, clim_mean, clim_std):
    """Fraction of members in which ``event`` occurs, ``(..., q, p)``."""
    v = _members(v)
    hits = event.occurs(v, np.expand_dims(clim_mean, -3), np.expand_dims(clim_std, -3))
    return hits.mean(axis=-3)


def _event_pair(v, ref, event, clim_mean, clim_std):
    v = _members(v)
    ref = _check_ref(v, ref)
    b_ref = event.occurs(ref, clim_mean, clim_std).astype(float)
    return event_probability(v, event, clim_mean, clim_std), b_ref


def brier(v, ref, event, clim_mean, clim_std, weights=None):
    """Brier score per ``(..., q)``."""
    b_v, b_ref = _event_pair(v, ref, event, clim_mean, clim_std)
    return _space_mean((b_ref - b_v) ** 2, weights)


def log_loss(v, ref, event, clim_mean, clim_std, eps=LOG_LOSS_EPS, conventional=False,
             weights=None):
    """Logarithmic loss of the event probability, per ``(..., q)``.

    By default the ensemble probability weights the logarithms of the
    reference outcome, ``-(b_v ln(b_ref + eps) + (1 - b_v) ln(1 - b_ref + eps))``.
    ``conventional=True`` swaps the roles to the usual cross-entropy
    ``-(b_ref ln(b_v + eps) + (1 - b_ref) ln(1 - b_v + eps))``.
    """
    b_v, b_ref = _event_pair(v, ref, event, clim_mean, clim_std)
    label, prob = (b_ref, b_v) if conventional else (b_v, b_ref)
    terms = label * np.log(prob + eps) + (1 - label) * np.log(1 - prob + eps)
    return -_space_mean(terms, weights)


def spread_correlation(v, w, weights=None):
    """Spatial correlation of the pointwise spreads of two ensembles, per ``(..., q)``."""
    return spatial_correlation(ensemble_spread(v), ensemble_spread(w), weights)


@dataclass(frozen=True)
class ModelClimatologySpread:
    """Day-of-year averaged ensemble spread; slots without data are NaN."""

    spread: np.ndarray  # [366, q, p], slot s at index s - 1
    count: np.ndarray  # [366] days averaged per slot

    def for_doy(self, doy):
        doy = np.asarray(doy)
        if np.any(self.count[doy - 1] == 0):
            raise InsufficientDataError("no training days for a requested day-of-year slot")
        return self.spread[doy - 1]


def model_climatology_spread(forecasts, doys):
    """Average the per-day pointwise spread of ``forecasts`` ``[day, M, q, p]`` per slot."""
    spread = ensemble_spread(forecasts)
    doys = np.asarray(doys, dtype=int)
    if doys.shape != spread.shape[:1]:
        raise ValueError("need one day-of-year slot per forecast day")
    if np.any((doys < 1) | (doys > 366)):
        raise ValueError("day-of-year slots must lie in 1..366")
    total = np.zeros((366,) + spread.shape[1:])
    np.add.at(total, doys - 1, spread)
    count = np.bincount(doys - 1, minlength=366)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / count[:, None, None]
    mean[count == 0] = np.nan
    return ModelClimatologySpread(spread=mean, count=count)


@dataclass(frozen=True)
class MetricRow:
    metric: str
    field: str
    lead: int
    value: float
    stderr: float
    n: int


@dataclass
class MetricReport:
    """Per ``(metric, field, lead)`` summaries; serialises to CSV."""

    rows: list = field(default_factory=list)

    COLUMNS = ("metric", "field", "lead", "value", "stderr", "n")

    def add(self, metric, field_names, lead, summary):
        for i, name in enumerate(field_names):
            se = summary.stderr[i] if summary.n > 1 else math.nan
            self.rows.append(MetricRow(metric, name, lead, float(summary.value[i]), float(se),
                                       summary.n))

    def add_value(self, metric, field_name, lead, value, n, stderr=math.nan):
        self.rows.append(MetricRow(metric, field_name, lead, float(value), float(stderr), int(n)))

    def metrics(self):
        return sorted({r.metric for r in self.rows})

    def to_csv(self):
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(f"{r.metric},{r.field},{r.lead},{r.value!r},{r.stderr!r},{r.n}")
        return "\n".join(lines) + "\n"
