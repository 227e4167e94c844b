import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seeds.geo_grid import (
    apply_regrid,
    build_cubed_sphere,
    build_regrid_map,
    great_circle_distance,
    latlon_for_cubed_sphere,
    latlon_grid,
    lonlat_to_xyz,
)

from . import oracles


def random_unit(rng, n):
    x = rng.standard_normal((n, 3))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


@pytest.mark.parametrize("C, n", [(2, 24), (4, 96), (48, 13824)])
def test_point_count(C, n):
    assert build_cubed_sphere(C).size == n
    assert len(build_cubed_sphere(C).xyz) == n


def test_points_on_unit_sphere_and_distinct():
    g = build_cubed_sphere(6)
    assert np.all(np.abs(np.linalg.norm(g.xyz, axis=1) - 1) < 1e-12)
    d = great_circle_distance(g.xyz[:, None], g.xyz[None, :])
    np.fill_diagonal(d, np.inf)
    assert d.min() > 1e-3


def test_lat_lon_consistent_with_xyz():
    g = build_cubed_sphere(5)
    np.testing.assert_allclose(lonlat_to_xyz(g.lat, g.lon), g.xyz, atol=1e-14)
    assert np.all((g.lon >= 0) & (g.lon < 2 * np.pi))


def test_deterministic():
    a, b = build_cubed_sphere(7), build_cubed_sphere(7)
    assert np.array_equal(a.xyz, b.xyz)


@pytest.mark.parametrize("C", [0, 1, 2.5])
def test_invalid_C(C):
    with pytest.raises(ValueError):
        build_cubed_sphere(C)


def test_nearest_neighbour_spacing_symmetric_at_C4():
    # brute-force scan: interior points of every face share one nearest-neighbour distance
    g = build_cubed_sphere(4)
    d = great_circle_distance(g.xyz[:, None], g.xyz[None, :])
    np.fill_diagonal(d, np.inf)
    nn = d.min(axis=1)
    interior = (g.i > 0) & (g.i < 3) & (g.j > 0) & (g.j < 3)
    assert interior.sum() == 24
    np.testing.assert_allclose(nn[interior], nn[interior][0], rtol=0, atol=1e-12)
    # and the six faces are congruent overall
    per_face = np.sort(nn.reshape(6, 16), axis=1)
    np.testing.assert_allclose(per_face, np.tile(per_face[0], (6, 1)), atol=1e-12)


def test_face_view_roundtrip():
    g = build_cubed_sphere(3)
    f = np.arange(g.size)
    v = g.face_view(f)
    assert v.shape == (6, 3, 3)
    assert v[2, 1, 0] == f[(g.face == 2) & (g.i == 1) & (g.j == 0)][0]


def test_latlon_grid():
    ll = latlon_grid(4)
    assert (ll.nlat, ll.nlon) == (4, 8)
    assert np.all(np.diff(ll.lats) > 0)
    assert ll.lats[0] > -np.pi / 2 and ll.lats[-1] < np.pi / 2
    np.testing.assert_allclose(np.diff(ll.lons), 2 * np.pi / 8, atol=1e-12)
    np.testing.assert_allclose(np.diff(ll.lats), np.pi / 4, atol=1e-12)
    r = latlon_for_cubed_sphere(12)
    assert (r.nlat, r.nlon) == (24, 48)


def test_exact_hit_weight():
    g = build_cubed_sphere(3)
    m = build_regrid_map(g.xyz, g.xyz[[5, 17]])
    np.testing.assert_array_equal(m.weights, [[1, 0, 0, 0], [1, 0, 0, 0]])
    np.testing.assert_array_equal(m.indices[:, 0], [5, 17])


def test_equidistant_sources_get_equal_weights():
    src = np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0], [0, 0, -1.0]])
    m = build_regrid_map(src, np.array([[0, 0, 1.0]]))
    np.testing.assert_allclose(m.weights, 0.25, atol=1e-15)
    assert set(m.indices[0]) == {0, 1, 2, 3}


def test_matches_bruteforce_oracle():
    rng = np.random.default_rng(3)
    src, dst = random_unit(rng, 100), random_unit(rng, 10)
    m = build_regrid_map(src, dst)
    idx, w = oracles.regrid_weights(src, dst)
    np.testing.assert_array_equal(m.indices, idx)
    np.testing.assert_allclose(m.weights, w, rtol=0, atol=1e-12)


def test_power_parameter():
    rng = np.random.default_rng(4)
    src, dst = random_unit(rng, 50), random_unit(rng, 5)
    m = build_regrid_map(src, dst, k=3, power=2.0)
    idx, w = oracles.regrid_weights(src, dst, k=3, power=2.0)
    np.testing.assert_allclose(m.weights, w, atol=1e-12)


def test_too_few_sources():
    with pytest.raises(ValueError):
        build_regrid_map(np.eye(3), np.eye(3), k=4)


def test_points_off_sphere_rejected():
    with pytest.raises(ValueError):
        build_regrid_map(2 * np.eye(3), np.eye(3), k=2)


def test_map_deterministic():
    g = build_cubed_sphere(4)
    ll = latlon_for_cubed_sphere(4)
    a = build_regrid_map(g.xyz, ll.xyz)
    b = build_regrid_map(g.xyz, ll.xyz)
    assert np.array_equal(a.indices, b.indices) and np.array_equal(a.weights, b.weights)


def test_apply_constant_zero_and_length_check():
    g = build_cubed_sphere(4)
    ll = latlon_for_cubed_sphere(4)
    m = build_regrid_map(g.xyz, ll.xyz)
    assert np.all(m.weights >= 0)
    np.testing.assert_allclose(m.weights.sum(axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(apply_regrid(m, np.full(g.size, 3.7)), 3.7, atol=1e-12)
    assert np.all(apply_regrid(m, np.zeros(g.size)) == 0)
    with pytest.raises(ValueError):
        apply_regrid(m, np.zeros(g.size + 1))


def test_apply_batched():
    g = build_cubed_sphere(3)
    m = build_regrid_map(g.xyz, latlon_for_cubed_sphere(3).xyz)
    f = np.random.default_rng(0).standard_normal((2, 3, g.size))
    out = apply_regrid(m, f)
    assert out.shape == (2, 3, m.n_dst)
    np.testing.assert_allclose(out[1, 2], apply_regrid(m, f[1, 2]))


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31))
def test_apply_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    g = build_cubed_sphere(3)
    m = build_regrid_map(g.xyz, random_unit(rng, 20))
    u, v = rng.standard_normal((2, g.size))
    np.testing.assert_allclose(
        apply_regrid(m, a * u + b * v), a * apply_regrid(m, u) + b * apply_regrid(m, v), atol=1e-12
    )


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_distance_symmetric(seed):
    rng = np.random.default_rng(seed)
    a, b = random_unit(rng, 2)
    assert abs(great_circle_distance(a, b) - great_circle_distance(b, a)) <= 1e-15
