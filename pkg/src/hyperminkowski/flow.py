"""Scalar curvature flow for the dual equation on the de Sitter side.

The unknown is a de Sitter graph ``tau = u(xi)`` on the expanding side
``tau > 0``, where slices are strictly convex with principal curvatures
``tanh(tau)``.  The flow is driven by the log-residual

    R(u) = log F~(kappa(u)) - log f^{-1}(x~),

starting from the upper slice barrier.

Two time discretisations are provided.

``scheme="implicit"`` (default) is the linearly implicit flow
``u <- u - dt * J^{-1} R`` with ``J = dR/du``.  In continuous time this gives
``dR/dt = -R``, so the residual keeps its sign and decays monotonically.
The reason for not stepping the plain equation is that, linearised at a slice,
``R`` behaves like ``a w + b Lap w`` with ``a, b > 0``: one sign of time is
backward-parabolic on every mode with degree >= 2, and the other pushes the
radial mode away from the stationary slice.

``scheme="explicit"`` is forward Euler on ``u_t = -v R`` with a parabolic
step bound.  It reproduces the radial ODE on exactly symmetric data and is
kept for single-step checks; it is not used for production runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .curvfunc import CurvatureFunctionSpec, f_eval, inverse_spec
from .errors import (
    DomainError,
    InvariantBreach,
    MinkowskiError,
    NoBarrier,
    NotConverged,
    SpacelikeViolation,
    StepCollapse,
)
from .geometry import Ambient, GraphHypersurface, graph_geometry
from .sphere_grid import JetField, build_grid

DT_FLOOR = 1e-10


# --- prescribed data ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PrescribedData:
    """Positive function ``f`` on de Sitter space.

    ``kind`` is ``"constant"`` (value ``c0``), ``"harmonic"``
    (``c0 * (1 + eps <xi, d>)``) or ``"table"`` (values over ``tau`` samples
    times the nodes of ``table_grid``, linearly interpolated in ``tau``,
    ``theta`` and ``phi``; ``tau`` is clamped to the sampled range).
    """

    kind: str
    c0: float = 1.0
    eps: float = 0.0
    direction: tuple = ()
    tau: np.ndarray | None = None
    values: np.ndarray | None = None  # (n_tau, grid.size)
    table_grid: object = None

    def __post_init__(self):
        if self.kind not in ("constant", "harmonic", "table"):
            raise ValueError(f"unknown prescribed-data kind {self.kind!r}")
        if self.kind in ("constant", "harmonic") and not self.c0 > 0:
            raise ValueError("c0 must be positive")
        if self.kind == "harmonic":
            if not abs(self.eps) < 1:
                raise ValueError("harmonic data needs |eps| < 1")
            d = np.asarray(self.direction, dtype=float)
            if d.ndim != 1 or not np.isclose(np.linalg.norm(d), 1.0):
                raise ValueError("harmonic data needs a unit direction")
        if self.kind == "table":
            vals = np.asarray(self.values, dtype=float)
            tau = np.asarray(self.tau, dtype=float)
            if self.table_grid is None or vals.shape != (tau.size, self.table_grid.size):
                raise ValueError("table values must have shape (n_tau, grid.size)")
            if tau.size < 2 or np.any(np.diff(tau) <= 0):
                raise ValueError("table tau samples must be increasing, at least two")
            if not np.all(vals > 0):
                raise ValueError("tabulated f must be positive")

    @classmethod
    def constant(cls, c):
        return cls(kind="constant", c0=float(c))

    @classmethod
    def harmonic(cls, c0, eps, direction):
        return cls(kind="harmonic", c0=float(c0), eps=float(eps), direction=tuple(direction))

    @classmethod
    def table(cls, tau, values, grid):
        return cls(
            kind="table",
            tau=np.asarray(tau, dtype=float),
            values=np.asarray(values, dtype=float),
            table_grid=grid,
        )

    def bounds(self):
        """(inf f, sup f)."""
        if self.kind == "constant":
            return self.c0, self.c0
        if self.kind == "harmonic":
            e = abs(self.eps)
            return self.c0 * (1 - e), self.c0 * (1 + e)
        return float(self.values.min()), float(self.values.max())

    def __call__(self, tau, xi):
        """Evaluate at de Sitter points given by eigen time and unit direction."""
        tau = np.asarray(tau, dtype=float)
        if self.kind == "constant":
            return np.full(tau.shape, self.c0)
        if self.kind == "harmonic":
            return self.c0 * (1.0 + self.eps * (xi @ np.asarray(self.direction)))
        return self._interp(tau, xi)

    def log(self, tau, xi):
        return np.log(self(tau, xi))

    def _interp(self, tau, xi):
        g = self.table_grid
        t = np.clip(tau, self.tau[0], self.tau[-1])
        if g.n == 1:
            ang = np.mod(np.arctan2(xi[:, 1], xi[:, 0]), 2 * np.pi)
            ext = np.concatenate([g.theta, [2 * np.pi]])
            vals = np.concatenate([self.values, self.values[:, :1]], axis=1)
            f = RegularGridInterpolator((self.tau, ext), vals)
            return f(np.column_stack([t, ang]))
        nt, nph = g.shape
        t1, p1 = g.theta[::nph], g.phi[:nph]
        v = self.values.reshape(-1, nt, nph)
        across = np.roll(v, -nph // 2, axis=2)
        # pad one ghost row through each pole and one periodic column
        v = np.concatenate([across[:, :1], v, across[:, -1:]], axis=1)
        v = np.concatenate([v, v[:, :, :1]], axis=2)
        th = np.concatenate([[-t1[0]], t1, [2 * np.pi - t1[-1]]])
        ph = np.concatenate([p1, [2 * np.pi]])
        f = RegularGridInterpolator((self.tau, th, ph), v)
        theta = np.arccos(np.clip(xi[:, 2], -1, 1))
        phi = np.mod(np.arctan2(xi[:, 1], xi[:, 0]), 2 * np.pi)
        return f(np.column_stack([t, theta, phi]))

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "c0": self.c0}
        if self.kind == "harmonic":
            return {
                "kind": "harmonic",
                "c0": self.c0,
                "eps": self.eps,
                "direction": list(self.direction),
            }
        g = self.table_grid
        return {
            "kind": "table",
            "tau": self.tau.tolist(),
            "values": self.values.tolist(),
            "resolution": list(g.shape),
        }

    @classmethod
    def from_dict(cls, d, n=2):
        d = dict(d)
        kind = d.pop("kind", None)
        allowed = {
            "constant": {"c0"},
            "harmonic": {"c0", "eps", "direction"},
            "table": {"tau", "values", "resolution"},
        }.get(kind)
        if allowed is None:
            raise ValueError(f"unknown prescribed-data kind {kind!r}")
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown prescribed-data keys {sorted(unknown)}")
        if kind == "constant":
            return cls.constant(d["c0"])
        if kind == "harmonic":
            return cls.harmonic(d["c0"], d["eps"], d["direction"])
        res = d["resolution"]
        grid = build_grid(n, res[0] if n == 1 else tuple(res))
        return cls.table(d["tau"], d["values"], grid)


# --- barriers ---------------------------------------------------------------------


@dataclass(frozen=True)
class BarrierPair:
    """Slice barriers ``tau1 < tau2`` on the expanding side (``side = +1``)."""

    tau1: float
    tau2: float
    side: int = 1

    def fields(self, grid):
        return np.full(grid.size, self.tau1), np.full(grid.size, self.tau2)


def slice_value(spec, tau, grid):
    """F of the slice at eigen time ``tau``, evaluated through the grid pipeline."""
    s = graph_geometry(GraphHypersurface(Ambient.DESITTER, np.full(grid.size, tau)), grid)
    return f_eval(spec, s.kappa).value


def auto_barriers(f, F, grid, margin=0.05):
    """Upper and lower slices for the dual problem ``F~ = 1/f``."""
    lo, hi = f.bounds()
    if not lo > 1.0:
        raise NoBarrier(f"inf f = {lo:.6g} <= 1; slices cannot serve as barriers")
    tau2 = np.arctanh(1.0 / lo) + margin
    tau1 = max(np.arctanh(1.0 / hi) - margin, 0.1 * margin)
    if not tau1 < tau2:
        raise NoBarrier("barrier margins collapse")
    ft = inverse_spec(F)
    xi = grid.xi
    upper = slice_value(ft, tau2, grid) >= 1.0 / f(np.full(grid.size, tau2), xi)
    lower = slice_value(ft, tau1, grid) <= 1.0 / f(np.full(grid.size, tau1), xi)
    if not (upper.all() and lower.all()):
        raise NoBarrier("slice barrier inequalities fail on the grid")
    return BarrierPair(tau1=float(tau1), tau2=float(tau2))


# --- residual and its Jacobian -----------------------------------------------------


def _geometry_from_partials(u, d, dd, grid):
    hess = dd - np.einsum("nkij,nk->nij", grid.christoffel, d)
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
    m = GraphHypersurface(Ambient.DESITTER, u)
    return graph_geometry(m, grid, JetField(value=u, grad=d, hess=hess))


def _residual_parts(u, d, dd, grid, ft, f):
    s = _geometry_from_partials(u, d, dd, grid)
    res = np.log(f_eval(ft, s.kappa).value) + f.log(u, grid.xi)
    return res, s


def dual_residual(u, ft, f, grid):
    """Node-wise ``log F~ - log f^{-1}`` for the de Sitter graph ``u``."""
    d, dd = grid.partials(u)
    return _residual_parts(u, d, dd, grid, ft, f)[0]


def _jet_slots(grid):
    if grid.n == 1:
        return [("v",), ("d", 0), ("dd", 0, 0)]
    return [("v",), ("d", 0), ("d", 1), ("dd", 0, 0), ("dd", 0, 1), ("dd", 1, 1)]


def _perturbed(u, d, dd, slot, e):
    u, d, dd = u.copy(), d.copy(), dd.copy()
    if slot[0] == "v":
        u += e
    elif slot[0] == "d":
        d[:, slot[1]] += e
    else:
        i, j = slot[1], slot[2]
        dd[:, i, j] += e
        if i != j:
            dd[:, j, i] += e
    return u, d, dd


def nodal_sensitivities(u, ft, f, grid, eps=1e-6):
    """Central-difference partials of the residual with respect to each jet slot."""
    d, dd = grid.partials(u)
    out = []
    for slot in _jet_slots(grid):
        rp = _residual_parts(*_perturbed(u, d, dd, slot, eps), grid, ft, f)[0]
        rm = _residual_parts(*_perturbed(u, d, dd, slot, -eps), grid, ft, f)[0]
        out.append((rp - rm) / (2 * eps))
    return out


def residual_jacobian(u, ft, f, grid, eps=1e-6):
    """Sparse ``dR/du``: node-wise sensitivities times the stencil operators."""
    sens = nodal_sensitivities(u, ft, f, grid, eps)
    ops = [sp.identity(grid.size, format="csr")] + grid.stencil_matrices()
    jac = sp.csr_matrix((grid.size, grid.size))
    for c, op in zip(sens, ops):
        jac = jac + sp.diags(c) @ op
    return jac.tocsc()


# --- flow ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowOptions:
    tol: float = 1e-6
    max_steps: int = 200
    cfl: float = 0.2  # explicit scheme only
    scheme: str = "implicit"
    dt_init: float = 0.5
    dt_max: float = 0.9
    max_rejections: int = 40
    step_slack: float = 1e-9  # allowed undershoot of the preserved inequality

    def __post_init__(self):
        if self.scheme not in ("implicit", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.tol > 0 and self.max_steps >= 1 and self.cfl > 0):
            raise ValueError("tol, cfl must be positive and max_steps >= 1")
        if not 0 < self.dt_init <= self.dt_max <= 1:
            raise ValueError("need 0 < dt_init <= dt_max <= 1")


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    u: np.ndarray
    residual: np.ndarray
    dt: float
    step: int


@dataclass(frozen=True)
class FlowDiagnostics:
    t: float
    dt: float
    res_sup: float
    res_inf: float
    kappa_min: float
    kappa_max: float
    vtilde_min: float
    vtilde_max: float
    chi_min: float
    chi_max: float
    barrier_lo_margin: float
    barrier_hi_margin: float
    u_increase_max: float

    JSON_KEYS = (
        "t",
        "dt",
        "res_sup",
        "res_inf",
        "kappa_min",
        "kappa_max",
        "vtilde_max",
        "chi_min",
        "chi_max",
        "barrier_lo_margin",
        "barrier_hi_margin",
        "u_increase_max",
    )

    def record(self):
        return {k: float(getattr(self, k)) for k in self.JSON_KEYS}


@dataclass(eq=False)
class FlowResult:
    converged: bool
    u: np.ndarray
    state: FlowState
    barriers: BarrierPair
    history: list = field(default_factory=list)
    message: str = ""
    final_residual: float = float("nan")


def _diagnostics(state, s, barriers, du_max):
    eta = 1.0 / np.cosh(state.u)
    chi = s.vtilde * eta
    return FlowDiagnostics(
        t=state.t,
        dt=state.dt,
        res_sup=float(state.residual.max()),
        res_inf=float(state.residual.min()),
        kappa_min=float(s.kappa.min()),
        kappa_max=float(s.kappa.max()),
        vtilde_min=float(s.vtilde.min()),
        vtilde_max=float(s.vtilde.max()),
        chi_min=float(chi.min()),
        chi_max=float(chi.max()),
        barrier_lo_margin=float((state.u - barriers.tau1).min()),
        barrier_hi_margin=float((barriers.tau2 - state.u).min()),
        u_increase_max=float(du_max),
    )


def explicit_dt(u, ft, f, grid, cfl):
    """``cfl * h_min^2 / max_node lambda_max`` for the second-order coefficients."""
    sens = nodal_sensitivities(u, ft, f, grid)
    n = grid.n
    coef = np.zeros((grid.size, n, n))
    k = 1 + n
    for i in range(n):
        for j in range(i, n):
            c = sens[k]
            k += 1
            if i == j:
                coef[:, i, i] = c
            else:
                coef[:, i, j] = coef[:, j, i] = 0.5 * c
    lam = np.abs(np.linalg.eigvalsh(coef)).max()
    return cfl * grid.h_min**2 / lam


def _trial(state, dt, direction, ft, f, grid, barriers, opts):
    """Attempt one step; return (new state, shape field) or a rejection reason."""
    u_new = state.u - dt * direction
    try:
        d, dd = grid.partials(u_new)
        res, s = _residual_parts(u_new, d, dd, grid, ft, f)
    except (SpacelikeViolation, DomainError) as exc:
        return None, f"{type(exc).__name__}: {exc}"
    if not np.all(np.isfinite(res)):
        return None, "non-finite residual"
    if u_new.min() < barriers.tau1 or u_new.max() > barriers.tau2:
        return None, "barrier containment"
    if res.min() < -opts.step_slack:
        return None, "preserved inequality"
    if opts.scheme == "implicit" and res.max() > state.residual.max() + opts.step_slack:
        return None, "residual increase"
    new = FlowState(t=state.t + dt, u=u_new, residual=res, dt=dt, step=state.step + 1)
    return (new, s), None


def flow_step(state, ft, f, grid, barriers, options=None):
    """Advance one accepted step, halving ``dt`` on rejection.

    Returns ``(state, shape_field, u_increase_max)``.
    """
    opts = options or FlowOptions()
    if opts.scheme == "explicit":
        s = graph_geometry(GraphHypersurface(Ambient.DESITTER, state.u), grid)
        v = 1.0 / s.vtilde
        direction = v * state.residual
        dt = explicit_dt(state.u, ft, f, grid, opts.cfl)
    else:
        jac = residual_jacobian(state.u, ft, f, grid)
        direction = spla.spsolve(jac, state.residual)
        dt = state.dt
    if not np.any(direction):
        return replace(state, step=state.step + 1), None, 0.0
    reason = "no attempt"
    for _ in range(opts.max_rejections):
        if dt < DT_FLOOR:
            raise StepCollapse(f"dt fell below {DT_FLOOR:g} ({reason})")
        out, reason = _trial(state, dt, direction, ft, f, grid, barriers, opts)
        if out is not None:
            new, s = out
            return new, s, float((new.u - state.u).max())
        dt *= 0.5
    raise InvariantBreach(f"step rejected {opts.max_rejections} times ({reason})")


def run_flow(F, f, grid, options=None, barriers=None, callback=None, raise_on_failure=True):
    """Flow the dual problem ``F~ = 1/f`` from the upper barrier to stationarity."""
    opts = options or FlowOptions()
    if barriers is None:
        barriers = auto_barriers(f, F, grid)
    ft = inverse_spec(F)
    u0 = np.full(grid.size, barriers.tau2)
    res0 = dual_residual(u0, ft, f, grid)
    state = FlowState(t=0.0, u=u0, residual=res0, dt=opts.dt_init, step=0)
    result = FlowResult(converged=False, u=u0, state=state, barriers=barriers)
    message = ""
    try:
        while True:
            sup = float(np.abs(state.residual).max())
            if sup < opts.tol:
                result.converged = True
                break
            if state.step >= opts.max_steps:
                message = f"max_steps={opts.max_steps} reached, residual {sup:.3g}"
                break
            new, s, du = flow_step(state, ft, f, grid, barriers, opts)
            if s is None:
                s = graph_geometry(GraphHypersurface(Ambient.DESITTER, new.u), grid)
            diag = _diagnostics(new, s, barriers, du)
            result.history.append(diag)
            if callback is not None:
                callback(diag)
            grow = min(opts.dt_max, 2.0 * new.dt) if opts.scheme == "implicit" else new.dt
            state = replace(new, dt=grow)
    except MinkowskiError as exc:
        message = f"{type(exc).__name__}: {exc}"
    result.u = state.u
    result.state = state
    result.final_residual = float(np.abs(state.residual).max())
    if result.converged:
        # the stationary equation, evaluated afresh on the final surface
        check = np.abs(dual_residual(state.u, ft, f, grid)).max()
        if not check < opts.tol:
            result.converged = False
            message = f"final verification residual {check:.3g}"
    result.message = message
    if not result.converged and raise_on_failure:
        raise NotConverged(message or "flow did not converge", result=result)
    return result


def slice_oracle(F, c):
    """Closed-form radial answers for constant ``f = c``.

    The dual slice sits at ``|tau*| = artanh(1/c)`` and the primal sphere at
    ``rho* = arcoth(c)``; the two coincide.  Returns a dict.
    """
    if not c > 1:
        raise NoBarrier(f"f = {c} <= 1 has no slice solution")
    tau = float(np.arctanh(1.0 / c))
    label = F.label() if isinstance(F, CurvatureFunctionSpec) else str(F)
    return {
        "F": label,
        "f": float(c),
        "tau_star": tau,
        "rho_star": tau,
        "dual_curvature": 1.0 / c,
        "primal_curvature": float(c),
    }
