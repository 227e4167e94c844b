"""Cubed-sphere and latitude-longitude grids, and inverse-distance regridding.

The cubed sphere is the equiangular gnomonic construction of Ronchi et al.
(1996): each of the six cube faces is covered by a ``C x C`` array of cells
that are equally spaced in the central angles ``alpha, beta`` in
``(-pi/4, pi/4)``.  Grid points are the cell centres, flattened in
``(face, i, j)`` order, so that a field on the grid is a vector of length
``6 * C**2`` and ``field.reshape(6, C, C)`` recovers the face layout.

Angles are in radians throughout.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "CubedSphereGrid",
    "LatLonGrid",
    "RegridMap",
    "build_cubed_sphere",
    "latlon_grid",
    "latlon_for_cubed_sphere",
    "lonlat_to_xyz",
    "xyz_to_latlon",
    "great_circle_distance",
    "build_regrid_map",
    "apply_regrid",
]

COINCIDENCE_TOL = 1e-12


def lonlat_to_xyz(lat, lon):
    """Unit vectors for latitude/longitude arrays (radians)."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    clat = np.cos(lat)
    return np.stack([clat * np.cos(lon), clat * np.sin(lon), np.sin(lat)], axis=-1)


def xyz_to_latlon(xyz):
    """Latitude in ``[-pi/2, pi/2]`` and longitude in ``[0, 2 pi)``."""
    xyz = np.asarray(xyz, dtype=float)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    lat = np.arctan2(z, np.hypot(x, y))
    lon = np.mod(np.arctan2(y, x), 2 * np.pi)
    return lat, lon


def great_circle_distance(a, b):
    """Arc length between unit vectors ``a`` and ``b`` (broadcasting).

    Uses ``atan2(|a x b|, a . b)``, which is accurate for both tiny and
    near-antipodal separations and exactly symmetric in its arguments.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)


# (x, y, z) of a point on face f from gnomonic coordinates (a, b) = (tan alpha, tan beta)
_FACES = (
    lambda a, b: (np.ones_like(a), a, b),
    lambda a, b: (-a, np.ones_like(a), b),
    lambda a, b: (-np.ones_like(a), -a, b),
    lambda a, b: (a, -np.ones_like(a), b),
    lambda a, b: (-b, a, np.ones_like(a)),
    lambda a, b: (b, a, -np.ones_like(a)),
)


@dataclass(frozen=True, eq=False)
class CubedSphereGrid:
    """Equiangular cubed-sphere grid with ``6 * C**2`` cell-centre points.

    Attributes
    ----------
    C : int
        Points per face edge.
    face, i, j : ndarray of int
        Face number (0..5) and in-face indices of every point.
    lat, lon : ndarray
        Point positions in radians; longitude in ``[0, 2 pi)``.
    xyz : ndarray, shape (6 C^2, 3)
        Unit vectors of the points.
    """

    C: int
    face: np.ndarray
    i: np.ndarray
    j: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    xyz: np.ndarray

    @property
    def size(self):
        return 6 * self.C * self.C

    @property
    def spacing(self):
        """Nominal angular spacing ``(pi/2) / C`` along a face edge."""
        return 0.5 * np.pi / self.C

    def face_view(self, field):
        """Reshape ``(..., 6 C^2)`` to ``(..., 6, C, C)``."""
        field = np.asarray(field)
        return field.reshape(field.shape[:-1] + (6, self.C, self.C))


def build_cubed_sphere(C):
    """Build the equiangular cell-centre cubed sphere with ``C`` points per edge."""
    if int(C) != C or C < 2:
        raise ValueError(f"cubed sphere needs an integer C >= 2, got {C!r}")
    C = int(C)
    angles = -0.25 * np.pi + (np.arange(C) + 0.5) * (0.5 * np.pi / C)
    t = np.tan(angles)
    a, b = np.meshgrid(t, t, indexing="ij")

    xyz = []
    for make in _FACES:
        x, y, z = make(a, b)
        xyz.append(np.stack([x, y, z], axis=-1).reshape(-1, 3))
    xyz = np.concatenate(xyz)
    xyz /= np.linalg.norm(xyz, axis=1, keepdims=True)

    face, ii, jj = np.meshgrid(np.arange(6), np.arange(C), np.arange(C), indexing="ij")
    lat, lon = xyz_to_latlon(xyz)
    return CubedSphereGrid(
        C=C,
        face=face.ravel(),
        i=ii.ravel(),
        j=jj.ravel(),
        lat=lat,
        lon=lon,
        xyz=xyz,
    )


@dataclass(frozen=True, eq=False)
class LatLonGrid:
    """Regular latitude-longitude grid of cell centres.

    ``lats`` increase strictly inside ``(-pi/2, pi/2)``; ``lons`` are uniform
    on ``[0, 2 pi)``.  Fields on the grid are flattened ring by ring, i.e.
    ``values.reshape(nlat, nlon)`` gives ``[lat, lon]`` indexing.
    """

    nlat: int
    nlon: int
    lats: np.ndarray
    lons: np.ndarray

    @property
    def size(self):
        return self.nlat * self.nlon

    @property
    def xyz(self):
        lat, lon = np.meshgrid(self.lats, self.lons, indexing="ij")
        return lonlat_to_xyz(lat, lon).reshape(-1, 3)


def latlon_grid(nlat, nlon=None):
    """Cell-centre lat-lon grid; ``nlon`` defaults to ``2 * nlat``."""
    if nlon is None:
        nlon = 2 * nlat
    if nlat < 1 or nlon < 1:
        raise ValueError("nlat and nlon must be positive")
    dlat = np.pi / nlat
    lats = -0.5 * np.pi + (np.arange(nlat) + 0.5) * dlat
    lons = np.arange(nlon) * (2 * np.pi / nlon)
    return LatLonGrid(nlat=int(nlat), nlon=int(nlon), lats=lats, lons=lons)


def latlon_for_cubed_sphere(C):
    """Lat-lon grid with the same angular resolution as a ``C`` cubed sphere.

    A face spans 90 degrees, so the spacing is ``90/C`` degrees and the grid
    is ``2C x 4C``.
    """
    return latlon_grid(2 * C, 4 * C)


@dataclass(frozen=True, eq=False)
class RegridMap:
    """Sparse interpolation weights: ``k`` source indices and weights per target."""

    indices: np.ndarray
    weights: np.ndarray
    n_src: int

    @property
    def n_dst(self):
        return self.indices.shape[0]


def _as_unit_points(points, name):
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"{name} must be an (n, 3) array of unit vectors")
    if not np.all(np.abs(np.linalg.norm(pts, axis=1) - 1.0) < 1e-9):
        raise ValueError(f"{name} are not on the unit sphere")
    return pts


def build_regrid_map(src_points, dst_points, k=4, power=1.0):
    """Inverse-distance weights from the ``k`` nearest sources of each target.

    Distances are great-circle arcs; weights are proportional to
    ``d**-power`` and normalised to sum to one.  A target closer than
    ``1e-12`` rad to its nearest source takes that source's value exactly.

    Parameters
    ----------
    src_points, dst_points : array_like, shape (n, 3)
        Unit vectors, e.g. ``grid.xyz``.
    k : int
        Number of neighbours.
    power : float
        Inverse-distance exponent.
    """
    src = _as_unit_points(src_points, "src_points")
    dst = _as_unit_points(dst_points, "dst_points")
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(src) < k:
        raise ValueError(f"need at least k={k} source points, got {len(src)}")

    # chord length is monotone in arc length, so the kd-tree neighbour set is exact
    _, idx = cKDTree(src).query(dst, k=k)
    idx = np.asarray(idx).reshape(len(dst), k)
    dist = great_circle_distance(src[idx], dst[:, None, :])
    order = np.argsort(dist, axis=1, kind="stable")
    idx = np.take_along_axis(idx, order, axis=1)
    dist = np.take_along_axis(dist, order, axis=1)

    hit = dist[:, 0] < COINCIDENCE_TOL
    with np.errstate(divide="ignore"):
        w = np.where(hit[:, None], 0.0, dist ** (-float(power)))
    w[hit, 0] = 1.0
    w /= w.sum(axis=1, keepdims=True)
    return RegridMap(indices=idx.astype(np.int64), weights=w, n_src=len(src))


def apply_regrid(regrid_map, field):
    """Interpolate ``field[..., n_src]`` to ``[..., n_dst]``."""
    field = np.asarray(field)
    if field.shape[-1] != regrid_map.n_src:
        raise ValueError(
            f"field has {field.shape[-1]} points on its last axis, map expects {regrid_map.n_src}"
        )
    return np.sum(field[..., regrid_map.indices] * regrid_map.weights, axis=-1)
