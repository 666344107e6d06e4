"""Latitude-longitude discretisation of S^1 and S^2.

Nodes for S^2 are pole-staggered, ``theta_j = (j + 1/2) pi / n_theta``, so no
node sits on a pole.  Finite differences across a pole use the half-shift ghost
rule: the ghost row above the pole at longitude ``phi`` takes the value of the
first interior row at ``phi + pi``.  Components that flip sign when the
colatitude direction reverses (``u_theta``, ``T_theta phi``) are differenced
with ``parity=-1``.

Fields are flat arrays with one entry per node, ordered row-major over
``(theta, phi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import GridError

# central stencils, offsets -p..p
_FIRST = {
    2: np.array([-0.5, 0.0, 0.5]),
    4: np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0,
}
_SECOND = {
    2: np.array([1.0, -2.0, 1.0]),
    4: np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0,
}


def fejer_weights(m):
    """Fejer's first rule on ``cos theta_j`` with staggered ``theta_j``.

    Integrates ``g(cos theta) sin theta`` over ``[0, pi]`` exactly for
    polynomials ``g`` of degree below ``m``.
    """
    theta = (np.arange(m) + 0.5) * np.pi / m
    k = np.arange(1, m // 2 + 1)
    s = np.cos(2.0 * np.outer(theta, k)) / (4.0 * k**2 - 1.0)
    return (2.0 / m) * (1.0 - 2.0 * s.sum(axis=1))


@dataclass(frozen=True, eq=False)
class JetField:
    """Value, sigma-covariant gradient and Hessian at every node."""

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


@dataclass(frozen=True, eq=False)
class SphereGrid:
    n: int
    shape: tuple
    order: int
    theta: np.ndarray
    phi: np.ndarray | None
    spacing: tuple
    sigma: np.ndarray = field(repr=False)
    sigma_inv: np.ndarray = field(repr=False)
    christoffel: np.ndarray = field(repr=False)  # [node, k, i, j] = Gamma^k_ij
    weights: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.theta.size

    @property
    def h_min(self):
        return min(self.spacing)

    # --- embedding of the unit sphere -------------------------------------

    @cached_property
    def xi(self):
        """Unit vectors in R^{n+1}, shape (N, n+1)."""
        t = self.theta
        if self.n == 1:
            return np.stack([np.cos(t), np.sin(t)], axis=-1)
        p = self.phi
        return np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1)

    @cached_property
    def dxi(self):
        """Coordinate partials of ``xi``, shape (N, n, n+1)."""
        t = self.theta
        if self.n == 1:
            return np.stack([-np.sin(t), np.cos(t)], axis=-1)[:, None, :]
        p = self.phi
        d_t = np.stack([np.cos(t) * np.cos(p), np.cos(t) * np.sin(p), -np.sin(t)], axis=-1)
        d_p = np.stack([-np.sin(t) * np.sin(p), np.sin(t) * np.cos(p), np.zeros_like(t)], axis=-1)
        return np.stack([d_t, d_p], axis=1)

    @cached_property
    def ddxi(self):
        """Second coordinate partials of ``xi``, shape (N, n, n, n+1)."""
        if self.n == 1:
            return -self.xi[:, None, None, :]
        t, p = self.theta, self.phi
        z = np.zeros_like(t)
        tt = -self.xi
        tp = np.stack([-np.cos(t) * np.sin(p), np.cos(t) * np.cos(p), z], axis=-1)
        pp = np.stack([-np.sin(t) * np.cos(p), -np.sin(t) * np.sin(p), z], axis=-1)
        return np.stack([np.stack([tt, tp], axis=1), np.stack([tp, pp], axis=1)], axis=1)

    # --- difference operators ---------------------------------------------

    @cached_property
    def _ops(self):
        return {}

    def _operator(self, kind, axis, parity):
        key = (kind, axis, parity)
        if key not in self._ops:
            stencil = (_FIRST if kind == 1 else _SECOND)[self.order] / self.spacing[axis] ** kind
            self._ops[key] = self._assemble(stencil, axis, parity)
        return self._ops[key]

    def _assemble(self, stencil, axis, parity):
        p = len(stencil) // 2
        offsets = np.arange(-p, p + 1)
        if self.n == 1:
            m = self.shape[0]
            j = np.arange(m)
            rows = np.repeat(j, len(offsets))
            cols = ((j[:, None] + offsets[None, :]) % m).ravel()
            vals = np.tile(stencil, m)
            return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
        nt, nph = self.shape
        jj, kk = np.meshgrid(np.arange(nt), np.arange(nph), indexing="ij")
        jj, kk = jj.ravel(), kk.ravel()
        rows, cols, vals = [], [], []
        for o, w in zip(offsets, stencil):
            if w == 0.0:
                continue
            if axis == 1:
                c = jj * nph + (kk + o) % nph
                rows.append(jj * nph + kk)
                cols.append(c)
                vals.append(np.full(jj.size, w))
                continue
            tj = jj + o
            sign = np.ones(jj.size)
            tk = kk.copy()
            low = tj < 0
            high = tj >= nt
            tj = np.where(low, -tj - 1, tj)
            tj = np.where(high, 2 * nt - 1 - tj, tj)
            across = low | high
            tk = np.where(across, (kk + nph // 2) % nph, kk)
            sign[across] = parity
            rows.append(jj * nph + kk)
            cols.append(tj * nph + tk)
            vals.append(w * sign)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        size = nt * nph
        return sp.csr_matrix((vals, (rows, cols)), shape=(size, size))

    def diff(self, u, axis, parity=1):
        """First partial derivative along coordinate ``axis``."""
        return self._operator(1, axis, parity) @ u

    def diff2(self, u, axis, parity=1):
        return self._operator(2, axis, parity) @ u

    def partials(self, u, parity=1):
        """Coordinate partials of a (N,) or (N, m) array.

        Returns ``(d, dd)`` with ``d[:, i]`` and ``dd[:, i, j]`` (extra trailing
        axes preserved).  ``parity`` applies to the field itself.
        """
        if self.n == 1:
            d = self.diff(u, 0, parity)
            dd = self.diff2(u, 0, parity)
            return d[:, None, ...], dd[:, None, None, ...]
        dt = self.diff(u, 0, parity)
        dp = self.diff(u, 1, parity)
        dtt = self.diff2(u, 0, parity)
        dpp = self.diff2(u, 1, parity)
        # phi-derivative keeps the field's parity across the pole
        dtp = self.diff(dp, 0, parity)
        d = np.stack([dt, dp], axis=1)
        dd = np.stack([np.stack([dtt, dtp], axis=1), np.stack([dtp, dpp], axis=1)], axis=1)
        return d, dd

    def stencil_matrices(self):
        """Sparse operators mapping values to (d_theta, d_phi, d_tt, d_tp, d_pp).

        Used to read off the sparsity of node-local nonlinear operators.
        """
        if self.n == 1:
            return [self._operator(1, 0, 1), self._operator(2, 0, 1)]
        dt = self._operator(1, 0, 1)
        dp = self._operator(1, 1, 1)
        return [dt, dp, self._operator(2, 0, 1), (dt @ dp).tocsr(), self._operator(2, 1, 1)]

    # --- misc ---------------------------------------------------------------

    def field(self, values):
        """Validate a scalar field against this grid."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.size,):
            raise GridError(f"field has shape {values.shape}, grid expects ({self.size},)")
        if not np.all(np.isfinite(values)):
            raise GridError("field has non-finite values")
        return values

    def reshape(self, u):
        return np.asarray(u).reshape(self.shape + np.shape(u)[1:])


def build_grid(n=2, resolution=(32, 64), stencil_order=2):
    """Build a lat-long grid on S^n.

    ``resolution`` is ``(n_theta, n_phi)`` for n=2 (``n_phi`` even) and an
    int or 1-tuple for n=1.
    """
    if n not in (1, 2):
        raise GridError(f"unsupported dimension n={n}")
    if stencil_order not in (2, 4):
        raise GridError(f"stencil order must be 2 or 4, got {stencil_order}")
    res = (resolution,) if np.isscalar(resolution) else tuple(int(r) for r in resolution)

    if n == 1:
        if len(res) != 1:
            raise GridError("n=1 takes a single node count")
        (m,) = res
        if m < 8:
            raise GridError(f"resolution {m} below minimum 8")
        h = 2.0 * np.pi / m
        theta = np.arange(m) * h
        sigma = np.ones((m, 1, 1))
        return SphereGrid(
            n=1,
            shape=(m,),
            order=stencil_order,
            theta=theta,
            phi=None,
            spacing=(h,),
            sigma=sigma,
            sigma_inv=sigma.copy(),
            christoffel=np.zeros((m, 1, 1, 1)),
            weights=np.full(m, h),
        )

    if len(res) != 2:
        raise GridError("n=2 takes (n_theta, n_phi)")
    nt, nph = res
    if nt < 4 or nph < 8:
        raise GridError(f"resolution {nt}x{nph} below minimum 4x8")
    if nph % 2:
        raise GridError("n_phi must be even for the pole half-shift rule")
    ht, hp = np.pi / nt, 2.0 * np.pi / nph
    t1 = (np.arange(nt) + 0.5) * ht
    p1 = np.arange(nph) * hp
    theta = np.repeat(t1, nph)
    phi = np.tile(p1, nt)
    s, c = np.sin(theta), np.cos(theta)
    size = theta.size
    sigma = np.zeros((size, 2, 2))
    sigma[:, 0, 0] = 1.0
    sigma[:, 1, 1] = s**2
    sigma_inv = np.zeros((size, 2, 2))
    sigma_inv[:, 0, 0] = 1.0
    sigma_inv[:, 1, 1] = 1.0 / s**2
    gam = np.zeros((size, 2, 2, 2))
    gam[:, 0, 1, 1] = -s * c
    gam[:, 1, 0, 1] = c / s
    gam[:, 1, 1, 0] = c / s
    weights = np.repeat(fejer_weights(nt), nph) * hp
    return SphereGrid(
        n=2,
        shape=(nt, nph),
        order=stencil_order,
        theta=theta,
        phi=phi,
        spacing=(ht, hp),
        sigma=sigma,
        sigma_inv=sigma_inv,
        christoffel=gam,
        weights=weights,
    )


def covariant_jet(u, grid):
    """Gradient and sigma-covariant Hessian of a scalar field."""
    u = grid.field(u)
    d, dd = grid.partials(u)
    hess = dd - np.einsum("nkij,nk->nij", grid.christoffel, d)
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
    return JetField(value=u, grad=d, hess=hess)


def laplacian(jet, grid):
    return np.einsum("nij,nij->n", grid.sigma_inv, jet.hess)


def sphere_integrate(u, grid):
    return float(np.dot(grid.field(u), grid.weights))
