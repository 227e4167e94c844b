"""Synthetic forecast/reanalysis ensembles with known population statistics.

Fields are smooth Gaussian random fields on the cubed sphere.  Forecast
members of every day are independent draws from

    mean_q(p) + mu * std_q + std_q * xi(p)

and reanalysis members from the same law with ``-mu``; ``xi`` is a unit-variance
field with great-circle squared-exponential correlation.  The mean pattern is
``amplitude_q * sin(lat)``.  The climatology written alongside the data is the
population midpoint ``mean_q(p)`` with standard deviation ``std_q``, so in
standardised-anomaly space the two populations sit at ``+mu`` and ``-mu`` with
unit spread.
"""

import datetime
import functools
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .climatology import constant_climatology
from .geo_grid import build_cubed_sphere, great_circle_distance

__all__ = [
    "SyntheticSpec",
    "SyntheticDataset",
    "smooth_noise",
    "gaussian_random_field",
    "make_dataset",
    "write_manifest",
    "read_manifest",
    "write_dataset",
    "read_dataset",
]


@dataclass(frozen=True)
class SyntheticSpec:
    C: int = 8
    n_fields: int = 2
    amplitude: tuple = (10.0, 5.0)
    std: tuple = (2.0, 1.0)
    corr_length: float = 0.5
    M: int = 5
    kprime: int = 3
    mu: float = 1.0
    seed: int = 0
    lead: int = 1
    start: str = "2000-01-01"

    def __post_init__(self):
        object.__setattr__(self, "amplitude", tuple(float(a) for a in self.amplitude))
        object.__setattr__(self, "std", tuple(float(s) for s in self.std))
        if len(self.amplitude) != self.n_fields or len(self.std) != self.n_fields:
            raise ValueError("amplitude and std need one entry per field")
        if self.corr_length <= 0:
            raise ValueError("correlation length must be positive")
        if min(self.std) <= 0:
            raise ValueError("field standard deviations must be positive")
        if self.M < 1 or self.kprime < 0:
            raise ValueError("M must be positive and kprime non-negative")

    @property
    def grid(self):
        return build_cubed_sphere(self.C)

    def mean_field(self):
        """Population midpoint, shape ``(q, p)``."""
        lat = self.grid.lat
        return np.array(self.amplitude)[:, None] * np.sin(lat)[None, :]

    def std_field(self):
        return np.repeat(np.array(self.std)[:, None], 6 * self.C**2, axis=1)

    def forecast_mean(self):
        return self.mean_field() + self.mu * self.std_field()

    def reanalysis_mean(self):
        return self.mean_field() - self.mu * self.std_field()


@functools.lru_cache(maxsize=8)
def _mixing_matrix(C, corr_length):
    grid = build_cubed_sphere(C)
    d = great_circle_distance(grid.xyz[:, None, :], grid.xyz[None, :, :])
    k = np.exp(-0.5 * (d / corr_length) ** 2)
    # unit marginal variance at every point
    k /= np.sqrt(np.sum(k**2, axis=1, keepdims=True))
    k.setflags(write=False)
    return k


def smooth_noise(C, corr_length, rng, size=()):
    """Unit-variance smooth Gaussian noise on the ``C`` cubed sphere, shape ``(*size, 6C^2)``."""
    k = _mixing_matrix(int(C), float(corr_length))
    size = (size,) if np.isscalar(size) else tuple(size)
    white = rng.standard_normal(size + (k.shape[0],))
    return white @ k.T


def gaussian_random_field(spec, rng, size=(), offset=0.0):
    """Draw fields ``mean + (offset + xi) * std`` of shape ``(*size, q, p)``."""
    size = (size,) if np.isscalar(size) else tuple(size)
    xi = smooth_noise(spec.C, spec.corr_length, rng, size + (spec.n_fields,))
    return spec.mean_field() + (offset + xi) * spec.std_field()


@dataclass(eq=False)
class SyntheticDataset:
    """Raw-unit ensembles; ``forecast`` is ``[day, M, q, p]``, ``reanalysis`` ``[day, K', q, p]``."""

    spec: SyntheticSpec
    mode: str
    forecast: np.ndarray
    reanalysis: np.ndarray
    init_dates: np.ndarray  # proleptic ordinals

    @property
    def n_days(self):
        return len(self.forecast)

    @property
    def climatology(self):
        return constant_climatology(self.spec.mean_field(), self.spec.std_field())

    def valid_doys(self):
        from .climatology import valid_doy

        return np.array([valid_doy(int(d), self.spec.lead) for d in self.init_dates])


def make_dataset(spec, n_days, mode="emulation"):
    """Generate ``n_days`` of synthetic ensembles.

    ``mode="emulation"`` produces forecasts only; ``mode="mixture"`` also
    draws ``spec.kprime`` reanalysis members per day.  Day ``t`` uses its own
    generator seeded with ``(spec.seed, t)``.
    """
    if n_days < 1:
        raise ValueError("n_days must be at least 1")
    if mode not in ("emulation", "mixture"):
        raise ValueError(f"unknown dataset mode {mode!r}")
    kprime = spec.kprime if mode == "mixture" else 0
    q, p = spec.n_fields, 6 * spec.C**2
    forecast = np.empty((n_days, spec.M, q, p))
    reanalysis = np.empty((n_days, kprime, q, p))
    for t in range(n_days):
        rng = np.random.default_rng([spec.seed, t])
        forecast[t] = gaussian_random_field(spec, rng, spec.M, offset=spec.mu)
        if kprime:
            reanalysis[t] = gaussian_random_field(spec, rng, kprime, offset=-spec.mu)
    start = datetime.date.fromisoformat(spec.start).toordinal()
    return SyntheticDataset(
        spec=spec,
        mode=mode,
        forecast=forecast,
        reanalysis=reanalysis,
        init_dates=np.arange(start, start + n_days),
    )


def _format_value(v):
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def write_manifest(path, spec, **extra):
    """Write the population parameters as ``key=value`` lines."""
    lines = ["# synthetic population parameters"]
    for f in fields(spec):
        lines.append(f"{f.name}={_format_value(getattr(spec, f.name))}")
    for k, v in extra.items():
        lines.append(f"{k}={_format_value(v)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path):
    """Parse a manifest into ``(SyntheticSpec, extra)``."""
    from .config import parse_key_values

    raw = parse_key_values(Path(path).read_text(encoding="utf-8"))
    kwargs, extra = {}, {}
    for f in fields(SyntheticSpec):
        if f.name not in raw:
            continue
        v = raw.pop(f.name)
        if f.type is tuple:
            kwargs[f.name] = tuple(float(x) for x in v.split(","))
        elif f.type is float:
            kwargs[f.name] = float(v)
        elif f.type is int:
            kwargs[f.name] = int(v)
        else:
            kwargs[f.name] = v
    extra.update(raw)
    return SyntheticSpec(**kwargs), extra


def write_dataset(dataset, directory):
    """Write ``data.stnsr``, ``climatology.stnsr`` and ``manifest.txt`` into ``directory``."""
    from .container import write_container

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_container(
        out / "data.stnsr",
        {
            "forecast": dataset.forecast,
            "reanalysis": dataset.reanalysis,
            "init_date": dataset.init_dates,
            "doy": dataset.valid_doys(),
        },
    )
    clim = dataset.climatology
    write_container(out / "climatology.stnsr", {"mean": clim.mean, "std": clim.std})
    write_manifest(out / "manifest.txt", dataset.spec, mode=dataset.mode, n_days=dataset.n_days)


def read_dataset(directory):
    """Load a dataset written by :func:`write_dataset` (values come back as float32)."""
    from .container import read_container

    directory = Path(directory)
    spec, extra = read_manifest(directory / "manifest.txt")
    data = read_container(directory / "data.stnsr")
    return SyntheticDataset(
        spec=spec,
        mode=extra.get("mode", "emulation"),
        forecast=data["forecast"].astype(float),
        reanalysis=data["reanalysis"].astype(float),
        init_dates=data["init_date"].astype(np.int64),
    )
