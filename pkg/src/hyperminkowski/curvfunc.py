"""Curvature functions on the positive cone and their inverses.

Every family is handled through a *raw* representative ``R`` of known degree
``d`` (``H_k / C(n, k)``, ``prod kappa``, ...).  The function actually used by
the solver is the degree-1 normalisation ``F = R**(1/d)``, which satisfies
``F(1, ..., 1) = 1``.  The inverse ``F~(k) = 1 / F(1/k)`` is formed at the raw
level, so ``F~`` of a degree-``d`` raw function is again degree ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import comb

import numpy as np

from .errors import DomainError

FAMILIES = ("Hk", "GaussK", "HkKa", "Power")


@dataclass(frozen=True)
class CurvatureFunctionSpec:
    """Symbolic curvature function.

    ``family`` is one of ``Hk`` (uses ``k``), ``GaussK``, ``HkKa`` (uses ``k``
    and ``a``) or ``Power`` (uses ``base`` and ``p``).  ``inverse`` marks the
    spec as ``F~`` of the described function.
    """

    family: str
    k: int = 1
    a: float = 0.0
    p: float = 1.0
    base: "CurvatureFunctionSpec | None" = None
    inverse: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown curvature family {self.family!r}")
        if self.family in ("Hk", "HkKa") and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.family == "HkKa" and not self.a > 0:
            raise ValueError("HkKa needs a > 0")
        if self.family == "Power":
            if self.base is None:
                raise ValueError("Power needs a base spec")
            if not self.p > 0:
                raise ValueError("Power needs p > 0")

    def to_dict(self):
        d = {"family": self.family}
        if self.family in ("Hk", "HkKa"):
            d["k"] = self.k
        if self.family == "HkKa":
            d["a"] = self.a
        if self.family == "Power":
            d["base"] = self.base.to_dict()
            d["p"] = self.p
        if self.inverse:
            d["inverse"] = True
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "base" in d and d["base"] is not None:
            d["base"] = cls.from_dict(d["base"])
        unknown = set(d) - {"family", "k", "a", "p", "base", "inverse"}
        if unknown:
            raise ValueError(f"unknown curvature-function keys {sorted(unknown)}")
        return cls(**d)

    def label(self):
        if self.family == "Hk":
            s = f"H{self.k}"
        elif self.family == "GaussK":
            s = "K"
        elif self.family == "HkKa":
            s = f"H{self.k}K^{self.a:g}"
        else:
            s = f"({self.base.label()})^{self.p:g}"
        return f"inv[{s}]" if self.inverse else s


@dataclass(frozen=True, eq=False)
class CurvatureEval:
    value: np.ndarray
    grad: np.ndarray  # dF/dkappa_i, same trailing shape as kappa


def elementary_symmetric(kappa, k):
    """E_k of the last axis and its gradient."""
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.shape[-1]
    if k == 0:
        return np.ones(kappa.shape[:-1]), np.zeros_like(kappa)
    # e[j] = E_j of all entries, built by the usual recurrence
    e = [np.ones(kappa.shape[:-1])] + [np.zeros(kappa.shape[:-1]) for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, 0, -1):
            e[j] = e[j] + kappa[..., i] * e[j - 1]
    # dE_k/dkappa_i = E_{k-1} of the others = sum_j (-kappa_i)^j E_{k-1-j}
    grad = np.zeros_like(kappa)
    for j in range(k):
        grad += ((-kappa) ** j) * e[k - 1 - j][..., None]
    return e[k], grad


def _raw(spec, kappa):
    """Raw representative ``R``, its gradient, and its degree."""
    n = kappa.shape[-1]
    if spec.inverse:
        base = replace(spec, inverse=False)
        r, g, d = _raw(base, 1.0 / kappa)
        val = 1.0 / r
        grad = g / (r[..., None] ** 2 * kappa**2)
        return val, grad, d
    fam = spec.family
    if fam == "Hk":
        if spec.k > n:
            raise ValueError(f"H_{spec.k} undefined for n={n}")
        e, g = elementary_symmetric(kappa, spec.k)
        c = comb(n, spec.k)
        return e / c, g / c, float(spec.k)
    if fam == "GaussK":
        prod = np.prod(kappa, axis=-1)
        return prod, prod[..., None] / kappa, float(n)
    if fam == "HkKa":
        if spec.k > n:
            raise ValueError(f"H_{spec.k} undefined for n={n}")
        e, g = elementary_symmetric(kappa, spec.k)
        c = comb(n, spec.k)
        prod = np.prod(kappa, axis=-1)
        ka = prod**spec.a
        val = (e / c) * ka
        grad = (g / c) * ka[..., None] + val[..., None] * spec.a / kappa
        return val, grad, spec.k + spec.a * n
    # Power: raw of base raised to p
    r, g, d = _raw(spec.base, kappa)
    val = r**spec.p
    grad = spec.p * r[..., None] ** (spec.p - 1.0) * g
    return val, grad, d * spec.p


def _check_cone(kappa):
    kappa = np.asarray(kappa, dtype=float)
    if kappa.ndim == 0:
        kappa = kappa[None]
    if np.any(~(kappa > 0)):
        raise DomainError("curvature function evaluated outside the positive cone")
    return kappa


def raw_eval(spec, kappa):
    """Raw (un-normalised) representative, used by the (K*) diagnostic."""
    kappa = _check_cone(kappa)
    r, g, _ = _raw(spec, kappa)
    return CurvatureEval(value=r, grad=g)


def degree(spec, n):
    return _raw(spec, np.ones(n))[2]


def f_eval(spec, kappa):
    """Degree-1 normalised F and its exact eigen-derivatives."""
    kappa = _check_cone(kappa)
    r, g, d = _raw(spec, kappa)
    val = r ** (1.0 / d)
    grad = (val / (d * r))[..., None] * g
    return CurvatureEval(value=val, grad=grad)


def inverse_spec(spec):
    """F~ with F~(k) = 1/F(1/k); closed on GaussK and involutive."""
    if spec.family == "GaussK":
        return replace(spec, inverse=False)
    if spec.family == "Power":
        return replace(spec, base=inverse_spec(spec.base))
    return replace(spec, inverse=not spec.inverse)


def assemble_tensor(grad, frames):
    """F^{ij} = sum_m dF/dkappa_m e_m^i e_m^j for g-orthonormal eigenvectors.

    ``frames[..., :, m]`` is the m-th eigenvector.
    """
    return np.einsum("...m,...im,...jm->...ij", grad, frames, frames)


def eigen_frames(g, h):
    """Ascending principal curvatures and g-orthonormal eigenvectors of g^-1 h."""
    chol = np.linalg.cholesky(g)
    linv = np.linalg.inv(chol)
    a = linv @ h @ np.swapaxes(linv, -1, -2)
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    lam, q = np.linalg.eigh(a)
    return lam, np.swapaxes(linv, -1, -2) @ q


@dataclass(frozen=True)
class KStarReport:
    infimum: float
    samples: int
    worst_kappa: tuple
    estimate: bool = True  # sampling bound, not a proof


def _random_spd(rng, n, size):
    a = rng.normal(size=(size, n, n))
    return a @ np.swapaxes(a, -1, -2) + 1e-3 * np.eye(n)


def kstar_ratio(spec, g, h):
    """F^{ij} h_ik h^k_j / (F H) for the raw representative of ``spec``."""
    kappa, frames = eigen_frames(g, h)
    ev = raw_eval(spec, kappa)
    fij = assemble_tensor(ev.grad, frames)
    ginv = np.linalg.inv(g)
    mixed = ginv @ h  # h^k_j
    num = np.einsum("...ij,...ik,...kj->...", fij, h, mixed)
    big_h = np.einsum("...ij,...ij->...", ginv, h)
    return num / (ev.value * big_h), kappa


def kstar_check(spec, n, samples=1000, seed=0):
    """Sampled infimum of the (K*) ratio over random SPD pairs (g, h).

    Half the samples are random pairs; the rest are ``g = id`` with
    ``h = diag(1, M)`` (log-uniform M), which contains the extremal family of
    the mean-curvature case.
    """
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    n_rand = (samples + 1) // 2
    g = _random_spd(rng, n, n_rand)
    h = _random_spd(rng, n, n_rand)
    n_diag = samples - n_rand
    if n_diag:
        m = 10.0 ** rng.uniform(-4, 4, size=n_diag)
        gd = np.broadcast_to(np.eye(n), (n_diag, n, n)).copy()
        hd = np.zeros((n_diag, n, n))
        hd[:, 0, 0] = 1.0
        hd[:, -1, -1] = m if n > 1 else 1.0
        g = np.concatenate([g, gd])
        h = np.concatenate([h, hd])
    ratio, kappa = kstar_ratio(spec, g, h)
    i = int(np.argmin(ratio))
    return KStarReport(infimum=float(ratio[i]), samples=samples, worst_kappa=tuple(kappa[i]))
