import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperminkowski.duality import (
    DualPair,
    beltrami,
    beltrami_chart,
    beltrami_convexity_check,
    dual_pair,
    duality_verify,
    gauss_map,
    interpolate_on_sphere,
    polar_gap,
    resample_to_graph,
    roundtrip_displacement,
)
from hyperminkowski.errors import (
    NormalNotFutureDirected,
    NotOnHyperboloid,
    NotStrictlyConvex,
    OutsideBall,
)
from hyperminkowski.geometry import Ambient, GraphHypersurface, graph_geometry, mink
from hyperminkowski.sphere_grid import build_grid

from conftest import orders, perturbed_sphere, sphere

unit = st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 0.1
).map(lambda v: np.array(v) / np.linalg.norm(v))


# --- Beltrami map ---

def test_beltrami_examples():
    np.testing.assert_allclose(beltrami(np.array([1.0, 0, 0, 0])), 0.0)
    xi = np.array([0.6, 0.0, 0.8])
    x = np.concatenate([[np.cosh(0.9)], np.sinh(0.9) * xi])
    np.testing.assert_allclose(beltrami(x), np.tanh(0.9) * xi, rtol=1e-14)
    y = np.array([0.3, -0.2, 0.1])
    r2 = y @ y
    np.testing.assert_allclose(
        beltrami(y, "inverse"), np.concatenate([[1.0], y]) / np.sqrt(1 - r2), rtol=1e-14
    )


@settings(max_examples=100, deadline=None)
@given(unit, st.floats(0.0, 5.0))
def test_beltrami_round_trip(xi, rho):
    x = np.concatenate([[np.cosh(rho)], np.sinh(rho) * xi])
    y = beltrami(x)
    assert np.linalg.norm(y) < 1
    np.testing.assert_allclose(beltrami(y, "inverse"), x, rtol=1e-12, atol=1e-12)
    chart = beltrami_chart(x[None])
    assert chart.r[0] == pytest.approx(np.tanh(rho), abs=1e-14)


def test_beltrami_errors():
    with pytest.raises(NotOnHyperboloid):
        beltrami(np.array([1.0, 1.0, 0, 0]))
    with pytest.raises(NotOnHyperboloid):
        beltrami(np.array([-1.0, 0, 0, 0]))
    with pytest.raises(OutsideBall):
        beltrami(np.array([1.0, 0.0, 0.0]), "inverse")


# --- Gauss maps ---

def test_sphere_maps_to_slice(grid32):
    cloud = gauss_map(sphere(grid32, 0.8), grid32)
    assert cloud.target is Ambient.DESITTER
    np.testing.assert_allclose(cloud.radial, 0.8, rtol=1e-13)
    np.testing.assert_allclose(cloud.direction, grid32.xi, atol=1e-13)
    assert np.all(cloud.points[:, 0] > 0)


def test_dual_curvatures_are_reciprocal(grid32):
    m = perturbed_sphere(grid32)
    s = graph_geometry(m, grid32)
    r = duality_verify(dual_pair(m, grid32))
    assert r.curvature < 1e-3
    assert r.dual_kappa_min == pytest.approx(1 / s.kappa.max(), rel=1e-3)


def test_gauss_map_preconditions(grid32):
    with pytest.raises(NotStrictlyConvex):
        u = 1.0 + 0.6 * (3 * np.cos(grid32.theta) ** 2 - 1)
        gauss_map(GraphHypersurface(Ambient.HYPERBOLIC, u), grid32)
    past = GraphHypersurface(Ambient.DESITTER, np.full(grid32.size, -0.5))
    with pytest.raises(NormalNotFutureDirected):
        gauss_map(past, grid32, direction="NtoH")
    with pytest.raises(ValueError):
        gauss_map(sphere(grid32), grid32, direction="NtoH")


def test_hyperbolic_duals_lie_in_future_half(ladder):
    for g in ladder:
        cloud = gauss_map(perturbed_sphere(g), g)
        assert np.all(cloud.points[:, 0] > 0)


# --- resampling ---

def test_resample_slice_is_identity(grid32):
    cloud = gauss_map(sphere(grid32, 0.7), grid32)
    dual, info = resample_to_graph(cloud, grid32, full_output=True)
    np.testing.assert_allclose(dual.u, cloud.radial, atol=1e-12)
    assert info.residual <= 1e-10


def test_resampled_dual_is_orthogonal(ladder):
    errs = []
    for g in ladder:
        m = perturbed_sphere(g)
        dual, info = resample_to_graph(gauss_map(m, g), g, full_output=True)
        x_dual = graph_geometry(dual, g).x
        # primal point at the source direction found by the Newton inversion
        rho = interpolate_on_sphere(g, m.u, info.params)[:, 0]
        x = np.column_stack([np.cosh(rho), np.sinh(rho)[:, None] * info.params])
        errs.append(np.abs(mink(x, x_dual)).max())
    assert errs[-1] < 1e-6
    assert np.all(orders(errs) >= 1.8)


def test_roundtrip_converges(ladder):
    errs = [roundtrip_displacement(perturbed_sphere(g), g) for g in ladder]
    assert np.all(orders(errs) >= 1.8)
    assert roundtrip_displacement(sphere(ladder[0]), ladder[0]) < 1e-8


def test_interpolation_is_fourth_order():
    errs = []
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(200, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    exact = np.exp(pts[:, 0]) * pts[:, 2]
    for nt in (16, 32, 64):
        g = build_grid(2, (nt, 2 * nt))
        val = np.exp(g.xi[:, 0]) * g.xi[:, 2]
        errs.append(np.abs(interpolate_on_sphere(g, val, pts)[:, 0] - exact).max())
    assert np.all(orders(errs) >= 3.0)


def test_resample_on_circle():
    g = build_grid(1, 64)
    m = GraphHypersurface(Ambient.HYPERBOLIC, 1.0 + 0.05 * np.cos(g.theta))
    dual, info = resample_to_graph(gauss_map(m, g), g, full_output=True)
    assert info.residual <= 1e-10
    assert dual.ambient is Ambient.DESITTER


# --- polar sets ---

def test_polar_gap_examples(grid32):
    rho = 1.0
    x = graph_geometry(sphere(grid32, rho), grid32).x
    xi = grid32.xi[100]
    y = np.concatenate([[np.sinh(rho)], np.cosh(rho) * xi])
    gap, idx = polar_gap(x, y, return_index=True)
    assert abs(gap) < 1e-12 and idx == 100
    # <(cosh r, sinh r xi), (sinh t, cosh t xi)> = sinh(r - t): negative for a larger sphere
    tau = 1.5
    y_big = np.concatenate([[np.sinh(tau)], np.cosh(tau) * xi])
    assert polar_gap(x, y_big) == pytest.approx(np.sinh(rho - tau), rel=1e-12)
    assert polar_gap(x, y_big) < 0
    y_small = np.concatenate([[np.sinh(0.5)], np.cosh(0.5) * xi])
    assert polar_gap(x, y_small) == pytest.approx(np.sinh(rho - 0.5), rel=1e-12)
    y_rev = np.concatenate([[np.sinh(tau)], -np.cosh(tau) * xi])
    brute = max(mink(p, y_rev) for p in x)
    assert polar_gap(x, y_rev) == pytest.approx(brute)


def test_polar_consistency(grid32):
    s = graph_geometry(perturbed_sphere(grid32), grid32)
    gaps, idx = polar_gap(s.x, s.nu, return_index=True)
    assert np.abs(gaps).max() < 1e-12
    np.testing.assert_array_equal(idx, np.arange(grid32.size))


# --- duality verification ---

def test_sphere_slice_pair_exact(grid32):
    r = duality_verify(dual_pair(sphere(grid32), grid32))
    assert max(r.inner, r.metric, r.second_form, r.curvature) < 1e-8


def test_perturbed_pair_converges(ladder):
    reports = [duality_verify(dual_pair(perturbed_sphere(g), g)) for g in ladder]
    for key in ("metric", "second_form", "curvature"):
        assert np.all(orders([getattr(r, key) for r in reports]) >= 1.8)
    assert max(r.inner for r in reports) < 1e-13
    assert reports[-1].curvature <= 1e-3


def test_mismatched_pair_detected(grid32):
    rho, tau = 1.0, 0.6
    good = dual_pair(sphere(grid32, rho), grid32)
    wrong = graph_geometry(GraphHypersurface(Ambient.DESITTER, np.full(grid32.size, tau)), grid32).x
    r = duality_verify(DualPair(grid=grid32, primal=good.primal, dual_points=wrong))
    assert r.inner == pytest.approx(abs(np.sinh(rho - tau)), rel=1e-12)


# --- Beltrami convexity transfer ---

def test_beltrami_sphere(grid32):
    r = beltrami_convexity_check(sphere(grid32, 0.9), grid32)
    assert r.relation < 1e-8 and r.relation_fd < 1e-8
    assert r.ordering
    assert r.critical_nodes == grid32.size and r.critical_deviation < 1e-8


def test_beltrami_perturbed(ladder):
    reports = [beltrami_convexity_check(perturbed_sphere(g), g) for g in ladder]
    assert all(r.relation < 1e-8 for r in reports)
    assert np.all(orders([r.relation_fd for r in reports]) >= 1.8)
    assert all(r.ordering and r.ordering_margin > 0 for r in reports)


def test_beltrami_critical_nodes():
    g = build_grid(2, (31, 64))  # odd n_theta puts a row on the equator
    m = GraphHypersurface(Ambient.HYPERBOLIC, 1.0 + 0.05 * np.cos(2 * g.theta))
    r = beltrami_convexity_check(m, g)
    assert r.critical_nodes == 64
    assert r.critical_deviation < 1e-8
