"""
Cubed-sphere grids, regridding and climatologies
=================================================

Build the equiangular cubed sphere, move a field to a lat-lon grid with
inverse-distance weights, and standardise a synthetic daily series.
"""

import datetime

import numpy as np

from seeds.climatology import compute_climatology, doy_slot, standardize
from seeds.geo_grid import apply_regrid, build_cubed_sphere, build_regrid_map, latlon_for_cubed_sphere

# six faces of C x C points
cube = build_cubed_sphere(12)
print("points:", cube.size, "faces:", cube.face_view(np.arange(cube.size)).shape)

# a smooth test field, sampled on the cube and regridded to a 24 x 48 lat-lon grid
field = np.sin(cube.lat) + 0.5 * np.cos(3 * cube.lon) * np.cos(cube.lat)
ll = latlon_for_cubed_sphere(12)
rmap = build_regrid_map(cube.xyz, ll.xyz)
out = apply_regrid(rmap, field)
lat, lon = np.meshgrid(ll.lats, ll.lons, indexing="ij")
exact = (np.sin(lat) + 0.5 * np.cos(3 * lon) * np.cos(lat)).ravel()
print("weights sum to one:", np.allclose(rmap.weights.sum(axis=1), 1))
print("max regrid error: %.3f" % np.abs(out - exact).max())

# four years of a seasonal cycle plus noise at three points
d0 = datetime.date(2001, 1, 1).toordinal()
dates = np.arange(d0, d0 + 4 * 365 + 1)
slots = np.array([doy_slot(d) for d in dates])
rng = np.random.default_rng(0)
series = 15 + 10 * np.cos(2 * np.pi * (slots - 200) / 365)[:, None, None] + 2 * rng.standard_normal((len(dates), 1, 3))
table = compute_climatology(series, dates, window=15)

# the 29 Feb slot is the mean of its neighbours
print("leap slot rule:", np.allclose(table.mean[365], 0.5 * (table.mean[58] + table.mean[59])))

z = standardize(series, table, slots)
print("anomaly mean %.3f, std %.3f" % (z.mean(), z.std()))
