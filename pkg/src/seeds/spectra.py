"""Zonal energy spectra of global fields.

Fields on the cubed sphere are regridded to a latitude-longitude grid, each
latitude ring is Fourier transformed in longitude, and the per-wavenumber
power is averaged over rings with cos-latitude weights.  The power of ring
``x`` (``n`` samples) at wavenumber ``k`` is ``c_k |X_k|^2 / n^2`` with
``c_k = 2`` except at ``k = 0`` and the Nyquist bin, so the ring's powers sum
to ``mean(x)^2 + var(x)``.
"""

from dataclasses import dataclass

import numpy as np

from .geo_grid import LatLonGrid, apply_regrid, build_regrid_map, latlon_for_cubed_sphere

__all__ = [
    "SpectrumReport",
    "ring_power",
    "latlon_spectrum",
    "field_spectrum",
    "average_spectra",
]


@dataclass(frozen=True)
class SpectrumReport:
    """Power per zonal wavenumber.

    ``energy`` is ``(n_k,)`` or ``(members, n_k)`` when member identity is kept.
    """

    wavenumber: np.ndarray
    energy: np.ndarray
    count: int = 1

    def to_csv(self):
        lines = ["wavenumber,energy,member"]
        e = np.atleast_2d(self.energy)
        for m, row in enumerate(e):
            for k, val in zip(self.wavenumber, row):
                lines.append(f"{int(k)},{float(val)!r},{m}")
        return "\n".join(lines) + "\n"


def ring_power(rings):
    """One-sided power spectrum of each ring along the last axis."""
    x = np.asarray(rings, dtype=float)
    n = x.shape[-1]
    X = np.fft.rfft(x, axis=-1)
    power = np.abs(X) ** 2 / n**2
    power[..., 1:] *= 2
    if n % 2 == 0:
        power[..., -1] /= 2
    return power


def latlon_spectrum(values, grid):
    """Spectrum of fields on ``grid`` with shape ``(..., nlat * nlon)`` or ``(..., nlat, nlon)``.

    Leading axes are returned separately in ``energy``.
    """
    v = np.asarray(values, dtype=float)
    if v.shape[-2:] != (grid.nlat, grid.nlon):
        if v.shape[-1] != grid.nlat * grid.nlon:
            raise ValueError(f"field does not live on a {grid.nlat}x{grid.nlon} grid")
        v = v.reshape(v.shape[:-1] + (grid.nlat, grid.nlon))
    power = ring_power(v)
    w = np.cos(grid.lats)
    energy = np.tensordot(w / w.sum(), power, axes=(0, -2))
    return SpectrumReport(wavenumber=np.arange(power.shape[-1]), energy=energy)


def field_spectrum(values, cube, latlon=None, regrid_map=None, k=4, power=1.0):
    """Regrid cubed-sphere fields ``(..., 6 C^2)`` to lat-lon, then take the zonal spectrum.

    ``latlon`` defaults to the grid of matching angular resolution.  A
    precomputed ``regrid_map`` from ``cube`` to ``latlon`` may be supplied.
    """
    if latlon is None:
        latlon = latlon_for_cubed_sphere(cube.C)
    if not isinstance(latlon, LatLonGrid):
        raise TypeError("latlon must be a LatLonGrid")
    if regrid_map is None:
        regrid_map = build_regrid_map(cube.xyz, latlon.xyz, k=k, power=power)
    return latlon_spectrum(apply_regrid(regrid_map, values), latlon)


def average_spectra(reports, keep_members=False):
    """Mean of several reports; with ``keep_members`` the reports are stacked instead."""
    reports = list(reports)
    if not reports:
        raise ValueError("no spectra to average")
    k = reports[0].wavenumber
    for r in reports[1:]:
        if not np.array_equal(r.wavenumber, k):
            raise ValueError("spectra have different wavenumber axes")
    count = sum(r.count for r in reports)
    if keep_members:
        return SpectrumReport(k, np.stack([r.energy for r in reports]), count)
    return SpectrumReport(k, np.mean([r.energy for r in reports], axis=0), count)
