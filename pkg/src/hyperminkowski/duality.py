"""Beltrami map, the two Gauss maps between H^{n+1} and de Sitter space,
polar sets, and numerical checks of the duality relations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import (
    BeltramiPointNotInterior,
    NewtonDivergence,
    NormalNotFutureDirected,
    NotOnHyperboloid,
    NotStrictlyConvex,
    OutsideBall,
)
from .geometry import (
    Ambient,
    GraphHypersurface,
    covariant_embedding_hessian,
    graph_geometry,
    mink,
)
from .curvfunc import eigen_frames
from .sphere_grid import JetField, covariant_jet


# --- Beltrami map -----------------------------------------------------------


def beltrami(point, direction="forward", atol=1e-9):
    """Beltrami map ``x -> x_space / x0`` and its inverse.

    Works on single points or stacks along the leading axes.
    """
    p = np.asarray(point, dtype=float)
    if direction == "forward":
        q = mink(p, p)
        if np.any(np.abs(q + 1.0) > atol * np.maximum(1.0, p[..., 0] ** 2)) or np.any(
            p[..., 0] <= 0
        ):
            raise NotOnHyperboloid("point is not on the upper unit hyperboloid")
        return p[..., 1:] / p[..., :1]
    if direction == "inverse":
        r2 = np.sum(p * p, axis=-1)
        if np.any(r2 >= 1.0):
            raise OutsideBall("point is not inside the open unit ball")
        scale = 1.0 / np.sqrt(1.0 - r2)
        return np.concatenate([scale[..., None], p * scale[..., None]], axis=-1)
    raise ValueError(f"direction must be 'forward' or 'inverse', not {direction!r}")


@dataclass(frozen=True, eq=False)
class BeltramiChart:
    """Ball coordinates of hyperbolic points: ``r = tanh(rho)``, ``tau~ = log r``."""

    y: np.ndarray
    r: np.ndarray
    tau_tilde: np.ndarray
    psi_tilde: np.ndarray


def beltrami_chart(x):
    y = beltrami(x)
    r = np.linalg.norm(y, axis=-1)
    with np.errstate(divide="ignore"):  # the Beltrami point itself has tau~ = -inf
        log_r = np.log(r)
    return BeltramiChart(y=y, r=r, tau_tilde=log_r, psi_tilde=log_r.copy())


# --- Gauss maps -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DualCloud:
    """Gauss-map image, still parameterised by the source grid.

    ``radial`` is eigen time on de Sitter targets and geodesic radius on
    hyperbolic targets; ``direction`` is the unit spatial direction.
    """

    target: Ambient
    points: np.ndarray
    radial: np.ndarray
    direction: np.ndarray
    source_points: np.ndarray


def gauss_map(m, grid, shape=None, direction=None):
    """Send each node of a strictly convex graph to its unit normal.

    ``direction`` is ``"HtoN"`` or ``"NtoH"``; it defaults to the one matching
    the graph's ambient.
    """
    if shape is None:
        shape = graph_geometry(m, grid)
    if direction is None:
        direction = "HtoN" if m.ambient is Ambient.HYPERBOLIC else "NtoH"
    expected = Ambient.HYPERBOLIC if direction == "HtoN" else Ambient.DESITTER
    if m.ambient is not expected:
        raise ValueError(f"{direction} needs a {expected.value} graph")
    if not shape.kappa.min() > 0:
        raise NotStrictlyConvex(f"min kappa = {shape.kappa.min():.6g}")
    dual = shape.nu
    spatial = dual[:, 1:]
    dirs = spatial / np.linalg.norm(spatial, axis=1)[:, None]
    if direction == "HtoN":
        radial = np.arcsinh(dual[:, 0])
        target = Ambient.DESITTER
    else:
        if np.any(dual[:, 0] <= 0):
            raise NormalNotFutureDirected("normal has x0 <= 0; graph is not on the future side")
        radial = np.arccosh(np.maximum(dual[:, 0], 1.0))
        target = Ambient.HYPERBOLIC
    return DualCloud(
        target=target, points=dual, radial=radial, direction=dirs, source_points=shape.x
    )


# --- resampling -------------------------------------------------------------


class _SphereInterpolant:
    """Cubic spline interpolation of node data over the whole sphere."""

    PAD = 4

    def __init__(self, grid, values):
        self.grid = grid
        values = np.asarray(values, dtype=float)
        self.k = 1 if values.ndim == 1 else values.shape[1]
        vals = values.reshape(grid.size, self.k)
        p = self.PAD
        if grid.n == 1:
            m = grid.shape[0]
            t = np.concatenate([grid.theta, [2.0 * np.pi]])
            self.splines = [
                CubicSpline(t, np.concatenate([vals[:, c], vals[:1, c]]), bc_type="periodic")
                for c in range(self.k)
            ]
            return
        nt, nph = grid.shape
        t1 = grid.theta[::nph]
        p1 = grid.phi[:nph]
        ht, hp = grid.spacing
        t_ext = np.concatenate([-t1[:p][::-1], t1, 2.0 * np.pi - t1[-p:][::-1]])
        p_ext = np.concatenate([p1[-p:] - 2.0 * np.pi, p1, p1[:p] + 2.0 * np.pi])
        self.splines = []
        for c in range(self.k):
            a = vals[:, c].reshape(nt, nph)
            shifted = np.roll(a, -nph // 2, axis=1)  # value at phi + pi
            rows = np.concatenate([shifted[:p][::-1], a, shifted[-p:][::-1]], axis=0)
            full = np.concatenate([rows[:, -p:], rows, rows[:, :p]], axis=1)
            self.splines.append(RectBivariateSpline(t_ext, p_ext, full, kx=3, ky=3, s=0))

    def __call__(self, unit):
        """Evaluate at unit vectors of shape (K, n+1); returns (K, k)."""
        if self.grid.n == 1:
            ang = np.mod(np.arctan2(unit[:, 1], unit[:, 0]), 2.0 * np.pi)
            return np.stack([s(ang) for s in self.splines], axis=1)
        th = np.arccos(np.clip(unit[:, 2], -1.0, 1.0))
        ph = np.mod(np.arctan2(unit[:, 1], unit[:, 0]), 2.0 * np.pi)
        return np.stack([s.ev(th, ph) for s in self.splines], axis=1)


def _tangent_basis(eta):
    """Orthonormal tangent vectors at each unit vector, shape (K, n, n+1)."""
    if eta.shape[1] == 2:
        return np.stack([-eta[:, 1], eta[:, 0]], axis=1)[:, None, :]
    ref = np.where(np.abs(eta[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = ref - np.sum(ref * eta, axis=1)[:, None] * eta
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(eta, e1)
    return np.stack([e1, e2], axis=1)


@dataclass(frozen=True, eq=False)
class ResampleInfo:
    params: np.ndarray  # source-sphere unit vectors mapped onto each target node
    residual: float
    iterations: int


def resample_to_graph(cloud, grid, ambient=None, tol=1e-10, max_iter=60, full_output=False):
    """Re-parameterise a dual cloud as a graph over ``grid``.

    For each target node ``eta`` a damped Newton iteration on the sphere,
    seeded at ``eta``, finds the source direction ``xi`` with
    ``direction(xi) = eta``; the radial value is interpolated there.
    """
    ambient = cloud.target if ambient is None else Ambient.parse(ambient)
    interp = _SphereInterpolant(grid, np.column_stack([cloud.direction, cloud.radial]))
    n = grid.n
    eta = grid.xi
    basis = _tangent_basis(eta)

    def point(ab):
        p = eta + np.einsum("ki,kic->kc", ab, basis)
        return p / np.linalg.norm(p, axis=1)[:, None]

    def residual(ab):
        val = interp(point(ab))
        d = val[:, : n + 1]
        d = d / np.linalg.norm(d, axis=1)[:, None]
        return np.einsum("kic,kc->ki", basis, d), d

    ab = np.zeros((grid.size, n))
    res, d = residual(ab)
    eps = 1e-6
    it = 0
    for it in range(1, max_iter + 1):
        err = np.linalg.norm(d - eta, axis=1)
        if err.max() <= tol:
            break
        jac = np.empty((grid.size, n, n))
        for j in range(n):
            step = np.zeros(n)
            step[j] = eps
            jac[:, :, j] = (residual(ab + step)[0] - residual(ab - step)[0]) / (2 * eps)
        delta = -np.linalg.solve(jac, res[..., None])[..., 0]
        lam = np.ones(grid.size)
        norm0 = np.linalg.norm(res, axis=1)
        for _ in range(20):
            trial, dtrial = residual(ab + lam[:, None] * delta)
            worse = np.linalg.norm(trial, axis=1) > norm0 * (1 - 1e-4 * lam) + 1e-15
            if not worse.any():
                break
            lam = np.where(worse, 0.5 * lam, lam)
        ab = ab + lam[:, None] * delta
        res, d = residual(ab)
    err = float(np.linalg.norm(d - eta, axis=1).max())
    if not np.isfinite(err) or err > tol:
        raise NewtonDivergence(
            f"direction-map inversion residual {err:.3g} after {it} iterations"
        )
    params = point(ab)
    radial = interp(params)[:, n + 1]
    graph = GraphHypersurface(ambient=ambient, u=radial)
    if full_output:
        return graph, ResampleInfo(params=params, residual=err, iterations=it)
    return graph


def interpolate_on_sphere(grid, values, unit):
    """Spline-interpolate node data at arbitrary unit vectors."""
    return _SphereInterpolant(grid, values)(unit)


# --- polar sets ---------------------------------------------------------------


def polar_gap(points, y, return_index=False):
    """sup over the sampled hypersurface of <x, y>."""
    points = np.asarray(points, dtype=float)
    y = np.asarray(y, dtype=float)
    vals = mink(points[:, None, :], np.atleast_2d(y)[None, :, :])
    idx = np.argmax(vals, axis=0)
    gap = vals.max(axis=0)
    if np.ndim(y) == 1:
        gap, idx = float(gap[0]), int(idx[0])
    return (gap, idx) if return_index else gap


# --- duality checks -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DualPair:
    """Primal hyperbolic data and dual points sharing the grid's node index."""

    grid: object
    primal: object  # ShapeField of the hyperbolic graph
    dual_points: np.ndarray


def dual_pair(m, grid):
    shape = graph_geometry(m, grid)
    return DualPair(grid=grid, primal=shape, dual_points=shape.nu.copy())


def _gnorm(t, ginv):
    return np.sqrt(np.abs(np.einsum("nia,njb,nij,nab->n", ginv, ginv, t, t)))


@dataclass(frozen=True)
class DualityReport:
    spacing: float
    inner: float  # max |<x, x~>|
    metric: float  # max |g~ - h g^-1 h|_g
    second_form: float  # max |h~ - h|_g
    curvature: float  # max |kappa~_m kappa_{n+1-m} - 1|
    dual_kappa_min: float

    def as_dict(self):
        return dict(self.__dict__)


def duality_verify(pair):
    grid = pair.grid
    s = pair.primal
    if not s.kappa.min() > 0:
        raise NotStrictlyConvex(f"primal min kappa = {s.kappa.min():.6g}")
    x, xd = s.x, pair.dual_points
    inner = float(np.abs(mink(x, xd)).max())
    d, hess = covariant_embedding_hessian(xd, grid)
    gd = mink(d[:, :, None, :], d[:, None, :, :])
    hd = -mink(hess, x[:, None, None, :])
    hd = 0.5 * (hd + np.swapaxes(hd, 1, 2))
    ginv = np.linalg.inv(s.g)
    hh = s.h @ ginv @ s.h
    metric = float(_gnorm(gd - hh, ginv).max())
    second = float(_gnorm(hd - s.h, ginv).max())
    kd, _ = eigen_frames(gd, hd)
    if not kd.min() > 0:
        raise NotStrictlyConvex(f"dual min kappa = {kd.min():.6g}")
    curv = float(np.abs(kd[:, ::-1] * s.kappa - 1.0).max())
    return DualityReport(
        spacing=grid.h_min,
        inner=inner,
        metric=metric,
        second_form=second,
        curvature=curv,
        dual_kappa_min=float(kd.min()),
    )


# --- Beltrami convexity transfer ----------------------------------------------


@dataclass(frozen=True)
class BeltramiReport:
    relation: float  # max rel. deviation of h~ v~ = (1 - r^2) h v, chain-rule route
    relation_fd: float  # same with the image differentiated independently
    ordering: bool  # kappa~ >= kappa componentwise (ascending order)
    ordering_margin: float
    critical_nodes: int  # nodes with Du = 0
    critical_deviation: float  # max |kappa~ - kappa| there


def _euclid_shape(jet_t, r):
    """Second fundamental form and gradient factor of a graph tau~ = u~ in
    the Euclidean chart r^2 (dtau~^2 + sigma); here e^psi~ = r, psi~' = 1."""
    sig = jet_t["sigma"]
    grad = jet_t["grad"]
    vt = np.sqrt(1.0 + np.einsum("nij,ni,nj->n", jet_t["sigma_inv"], grad, grad))
    ghat = np.einsum("ni,nj->nij", grad, grad) + sig
    g = r[:, None, None] ** 2 * ghat
    h = (r / vt)[:, None, None] * (-jet_t["hess"] + ghat)
    return g, h, vt


def beltrami_convexity_check(m, grid, du_tol=1e-12):
    if m.ambient is not Ambient.HYPERBOLIC:
        raise ValueError("needs a hyperbolic graph")
    s = graph_geometry(m, grid)
    u = m.u
    if np.any(u <= 0) or not s.kappa.min() > 0:
        raise BeltramiPointNotInterior("graph must be strictly convex around the Beltrami point")
    jet = covariant_jet(u, grid)
    sh, ch = np.sinh(u), np.cosh(u)
    r = np.tanh(u)
    # conformal radial coordinate w (dw = drho / sinh rho) and its jet
    wg = jet.grad / sh[:, None]
    wh = (jet.hess - (ch / sh)[:, None, None] * np.einsum("ni,nj->nij", jet.grad, jet.grad)) / sh[
        :, None, None
    ]
    # u~ = phi(w): phi' = sqrt(1 - r^2), phi'' = -r^2
    p1, p2 = np.sqrt(1.0 - r**2), -(r**2)
    ug = p1[:, None] * wg
    uh = p1[:, None, None] * wh + p2[:, None, None] * np.einsum("ni,nj->nij", wg, wg)
    base = {"sigma": grid.sigma, "sigma_inv": grid.sigma_inv}
    g_e, h_e, vt = _euclid_shape(dict(base, grad=ug, hess=uh), r)
    jet_fd = covariant_jet(np.log(r), grid)
    _, h_fd, vt_fd = _euclid_shape(dict(base, grad=jet_fd.grad, hess=jet_fd.hess), r)

    ginv = np.linalg.inv(s.g)
    rhs = ((1.0 - r**2) * s.v)[:, None, None] * s.h
    scale = _gnorm(rhs, ginv)
    rel = _gnorm(vt[:, None, None] * h_e - rhs, ginv) / scale
    rel_fd = _gnorm(vt_fd[:, None, None] * h_fd - rhs, ginv) / scale

    k_e, _ = eigen_frames(g_e, h_e)
    diff = k_e - s.kappa
    grad_norm = np.sqrt(np.einsum("nij,ni,nj->n", grid.sigma_inv, jet.grad, jet.grad))
    crit = grad_norm <= du_tol
    return BeltramiReport(
        relation=float(rel.max()),
        relation_fd=float(rel_fd.max()),
        ordering=bool(np.all(diff >= -1e-12 * np.abs(s.kappa))),
        ordering_margin=float(diff.min()),
        critical_nodes=int(crit.sum()),
        critical_deviation=float(np.abs(diff[crit]).max()) if crit.any() else 0.0,
    )


def roundtrip_displacement(m, grid):
    """Apply HtoN then NtoH to a hyperbolic graph, both resampled on ``grid``.

    Returns the largest coordinate distance in R^{n+1,1} between the original
    and the returned point at each node.
    """
    if m.ambient is not Ambient.HYPERBOLIC:
        raise ValueError("needs a hyperbolic graph")
    dual = resample_to_graph(gauss_map(m, grid, direction="HtoN"), grid)
    back = resample_to_graph(gauss_map(dual, grid, direction="NtoH"), grid)
    x0 = graph_geometry(m, grid).x
    x1 = graph_geometry(back, grid).x
    return float(np.linalg.norm(x1 - x0, axis=1).max())
