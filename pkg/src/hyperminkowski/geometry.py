"""Graph hypersurfaces over S^n in hyperbolic space and de Sitter space.

Orientation ledger
------------------
This is the only place where normal and sign conventions are fixed; every
other module consumes these results and never re-derives a sign.

* Hyperbolic graphs ``rho = u(xi)`` (geodesic polar radius about the Beltrami
  point ``(1, 0, ..., 0)``): the second fundamental form is taken with respect
  to the exterior normal, so geodesic spheres have ``kappa = coth(rho)``.
* De Sitter graphs ``tau = u(xi)`` in eigen time, ``-dtau^2 + cosh^2(tau)
  sigma``: on the future side ``tau > 0`` the future-directed normal is used,
  on the past side its time reflection, so slices have ``kappa = tanh|tau|``.
  The side tag is the sign of the mean of ``u``.

With these choices the Gaussian formulas in R^{n+1,1} read
``x_ij = g_ij x - h_ij nu`` (hyperbolic) and ``x_ij = -g_ij x + h_ij nu``
(de Sitter), so ``h_ij = -<x_ij, nu>`` in both cases.

Gradient factors: ``v = sqrt(1 + |Dw|^2)`` for hyperbolic graphs, where ``w``
is the conformal radial coordinate ``dw = drho / sinh(rho)``, and
``vtilde = 1 / sqrt(1 - |Du|^2)`` (norm of the slice metric) for de Sitter
graphs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .curvfunc import eigen_frames
from .errors import NonpositiveRadius, SpacelikeViolation
from .sphere_grid import covariant_jet

# flipping this reverses every normal; only the mutation test touches it
ORIENTATION = {"hyperbolic": 1.0, "desitter": 1.0}


class Ambient(enum.Enum):
    HYPERBOLIC = "hyperbolic"
    DESITTER = "desitter"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True, eq=False)
class GraphHypersurface:
    ambient: Ambient
    u: np.ndarray

    @property
    def side(self):
        """+1 for the future half of de Sitter space (and always for H^{n+1})."""
        if self.ambient is Ambient.HYPERBOLIC:
            return 1.0
        return 1.0 if np.mean(self.u) >= 0 else -1.0


@dataclass(frozen=True, eq=False)
class ShapeField:
    ambient: Ambient
    g: np.ndarray
    h: np.ndarray
    shape_operator: np.ndarray  # h^i_j = g^{ik} h_kj, indexed [node, i, j]
    kappa: np.ndarray  # ascending
    frames: np.ndarray  # g-orthonormal eigenvectors, column m <-> kappa[:, m]
    x: np.ndarray
    nu: np.ndarray
    v: np.ndarray | None = None  # hyperbolic gradient factor
    vtilde: np.ndarray | None = None  # de Sitter gradient factor
    psi: np.ndarray | None = None  # conformal factor of the hyperbolic chart
    grad_norm: np.ndarray = field(default=None, repr=False)  # |Du| in the ambient slice metric


def mink(a, b):
    """Minkowski product <a, b> = -a0 b0 + sum a_i b_i over the last axis."""
    return -a[..., 0] * b[..., 0] + np.sum(a[..., 1:] * b[..., 1:], axis=-1)


def _shape(ambient, g, h, x, nu, **extra):
    h = 0.5 * (h + np.swapaxes(h, 1, 2))
    kappa, frames = eigen_frames(g, h)
    shape_op = np.linalg.solve(g, h)
    return ShapeField(
        ambient=ambient,
        g=g,
        h=h,
        shape_operator=shape_op,
        kappa=kappa,
        frames=frames,
        x=x,
        nu=nu,
        **extra,
    )


def _tangent_raise(jet, grid):
    """u^k xi_k as an R^{n+1} vector."""
    up = np.einsum("nkl,nl->nk", grid.sigma_inv, jet.grad)
    return np.einsum("nk,nkc->nc", up, grid.dxi)


def graph_geometry(m, grid, jet=None):
    """Fundamental forms, principal curvatures, point and normal per node."""
    ambient = Ambient.parse(m.ambient)
    if jet is None:
        jet = covariant_jet(m.u, grid)
    u = jet.value
    du = jet.grad
    uu = np.einsum("ni,nj->nij", du, du)
    grad_sq = np.einsum("nij,ni,nj->n", grid.sigma_inv, du, du)
    xi = grid.xi
    tang = _tangent_raise(jet, grid)

    if ambient is Ambient.HYPERBOLIC:
        if np.any(u <= 0):
            raise NonpositiveRadius(f"min radius {u.min():.3g} <= 0")
        s, c = np.sinh(u), np.cosh(u)
        # conformal chart: dw = drho/sinh(rho), e^psi = sinh(rho), psi' = cosh(rho)
        w_grad_sq = grad_sq / s**2
        v = np.sqrt(1.0 + w_grad_sq)
        w_uu = uu / s[:, None, None] ** 2
        w_hess = (jet.hess - (c / s)[:, None, None] * uu) / s[:, None, None]
        ghat = w_uu + grid.sigma
        g = s[:, None, None] ** 2 * ghat
        h = (s / v)[:, None, None] * (-w_hess + c[:, None, None] * ghat)
        x = np.concatenate([c[:, None], s[:, None] * xi], axis=1)
        radial = np.concatenate([s[:, None], c[:, None] * xi], axis=1)
        nu = radial - np.concatenate([np.zeros((u.size, 1)), tang / s[:, None]], axis=1)
        nu = nu / v[:, None]
        o = ORIENTATION["hyperbolic"]
        return _shape(
            ambient, g, o * h, x, o * nu, v=v, psi=np.log(s), grad_norm=np.sqrt(w_grad_sq)
        )

    s, c = np.sinh(u), np.cosh(u)
    q = grad_sq / c**2
    if np.any(q >= 1.0):
        raise SpacelikeViolation(f"max |Du| = {np.sqrt(q.max()):.6g} >= 1")
    vt = 1.0 / np.sqrt(1.0 - q)
    side = m.side * ORIENTATION["desitter"]
    g = -uu + c[:, None, None] ** 2 * grid.sigma
    h = vt[:, None, None] * (
        jet.hess - 2.0 * (s / c)[:, None, None] * uu + (s * c)[:, None, None] * grid.sigma
    )
    x = np.concatenate([s[:, None], c[:, None] * xi], axis=1)
    timelike = np.concatenate([c[:, None], s[:, None] * xi], axis=1)
    nu = timelike + np.concatenate([np.zeros((u.size, 1)), tang / c[:, None]], axis=1)
    nu = vt[:, None] * nu
    return _shape(ambient, g, side * h, x, side * nu, vtilde=vt, grad_norm=np.sqrt(q))


def embed(m, grid):
    """Embedded points and unit normals in R^{n+1,1}, shape (N, n+2) each."""
    s = graph_geometry(m, grid)
    return s.x, s.nu


def embedding_partials(V, grid):
    """Coordinate partials of an R^{n+1,1}-valued field over the grid.

    The spatial part is split as ``r xi + w`` with ``w`` tangent to the unit
    sphere; ``xi`` and its partials are differentiated analytically and only
    the scalar ``r``, the time component and ``w`` by finite differences.
    Fields of the form ``(a, b xi)`` with constant ``a, b`` come out exact.
    Returns ``(d, dd)`` of shapes (N, n, n+2) and (N, n, n, n+2).
    """
    V = np.asarray(V, dtype=float)
    xi, dxi, ddxi = grid.xi, grid.dxi, grid.ddxi
    t = V[:, 0]
    spatial = V[:, 1:]
    r = np.sum(spatial * xi, axis=1)
    w = spatial - r[:, None] * xi
    dt, ddt = grid.partials(t)
    dr, ddr = grid.partials(r)
    dw, ddw = grid.partials(w)
    d_sp = dr[:, :, None] * xi[:, None, :] + r[:, None, None] * dxi + dw
    dd_sp = (
        ddr[:, :, :, None] * xi[:, None, None, :]
        + dr[:, :, None, None] * dxi[:, None, :, :]
        + dr[:, None, :, None] * dxi[:, :, None, :]
        + r[:, None, None, None] * ddxi
        + ddw
    )
    d = np.concatenate([dt[:, :, None], d_sp], axis=2)
    dd = np.concatenate([ddt[:, :, :, None], dd_sp], axis=3)
    return d, dd


def covariant_embedding_hessian(V, grid):
    d, dd = embedding_partials(V, grid)
    return d, dd - np.einsum("nkij,nkc->nijc", grid.christoffel, d)


def extrinsic_second_form(x, nu, grid):
    """h_ij = -<x_;ij, nu> from finite differences of the embedding."""
    _, hess = covariant_embedding_hessian(x, grid)
    h = -mink(hess, nu[:, None, None, :])
    return 0.5 * (h + np.swapaxes(h, 1, 2))


def _tensor_partials(t, grid):
    """d_k t_ij, indexed [node, i, j, k].

    Components are differenced after dividing by the sigma-orthonormal scale
    factors ``(1, sin theta)``; the rescaled components are regular at the
    poles and all carry parity +1 under the half-shift rule.
    """
    n = grid.n
    out = np.zeros(t.shape + (n,))
    if n == 1:
        out[:, 0, 0, 0] = grid.diff(t[:, 0, 0], 0)
        return out
    sn, cs = np.sin(grid.theta), np.cos(grid.theta)
    scale = np.stack([np.ones_like(sn), sn], axis=1)
    dscale = np.stack([np.zeros_like(sn), cs], axis=1)  # d_theta of the scale
    for i in range(2):
        for j in range(i, 2):
            sij = scale[:, i] * scale[:, j]
            dsij = dscale[:, i] * scale[:, j] + scale[:, i] * dscale[:, j]
            rescaled = t[:, i, j] / sij
            out[:, i, j, 0] = sij * grid.diff(rescaled, 0) + dsij * rescaled
            out[:, i, j, 1] = sij * grid.diff(rescaled, 1)
            out[:, j, i, :] = out[:, i, j, :]
    return out


def codazzi_residual(s, grid):
    """Per-node g-norm of h_{ij;k} - h_{ik;j}.

    A constant multiple of ``g`` is subtracted from ``h`` first; this leaves
    the continuum residual unchanged and makes umbilic fixtures exact.

    On the two rows next to each pole the connection terms carry a factor
    ``cot theta``, which multiplies O(h^2) errors in the rescaled components
    into O(h) residuals; refinement studies should therefore use the
    quadrature L2 norm, where those rows carry O(h^2) area.
    """
    if grid.n == 1:
        return np.zeros(grid.size)
    g, h = s.g, s.h
    c = float(np.mean(np.trace(s.shape_operator, axis1=1, axis2=2)) / grid.n)
    t = h - c * g
    dg = _tensor_partials(g, grid)
    dt = _tensor_partials(t, grid)
    ginv = np.linalg.inv(g)
    # Gamma^l_ij = 1/2 g^lm (d_i g_mj + d_j g_mi - d_m g_ij)
    # dg[n, i, j, k] = d_k g_ij
    lower = 0.5 * (np.einsum("nmji->nmij", dg) + dg - np.einsum("nijm->nmij", dg))
    gam = np.einsum("nlm,nmij->nlij", ginv, lower)
    # nabla_k t_ij = d_k t_ij - Gamma^l_ki t_lj - Gamma^l_kj t_il
    cov = (
        dt
        - np.einsum("nlki,nlj->nijk", gam, t)
        - np.einsum("nlkj,nil->nijk", gam, t)
    )
    anti = cov - np.swapaxes(cov, 2, 3)
    norm2 = np.einsum("nia,njb,nkc,nijk,nabc->n", ginv, ginv, ginv, anti, anti)
    return np.sqrt(np.maximum(norm2, 0.0))


@dataclass(frozen=True)
class ConvexityReport:
    kappa_min: float
    kappa_max: float
    factor_min: float
    factor_max: float
    spacelike_margin: float | None
    strictly_convex: bool


def convexity_report(s):
    factor = s.v if s.ambient is Ambient.HYPERBOLIC else s.vtilde
    margin = None
    if s.ambient is Ambient.DESITTER:
        margin = float(1.0 - s.grad_norm.max())
    kmin = float(s.kappa.min())
    return ConvexityReport(
        kappa_min=kmin,
        kappa_max=float(s.kappa.max()),
        factor_min=float(factor.min()),
        factor_max=float(factor.max()),
        spacelike_margin=margin,
        strictly_convex=kmin > 0,
    )
