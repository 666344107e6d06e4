import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperminkowski.curvfunc import (
    CurvatureFunctionSpec as Spec,
    assemble_tensor,
    eigen_frames,
    elementary_symmetric,
    f_eval,
    inverse_spec,
    kstar_check,
    kstar_ratio,
)
from hyperminkowski.errors import DomainError

FAMILIES = [
    Spec("Hk", k=1),
    Spec("Hk", k=2),
    Spec("GaussK"),
    Spec("HkKa", k=1, a=0.5),
    Spec("Power", base=Spec("Hk", k=1), p=2.0),
    inverse_spec(Spec("Hk", k=1)),
]

kappas = st.lists(st.floats(0.1, 10.0), min_size=2, max_size=2).map(np.array)


def test_examples():
    assert f_eval(Spec("Hk", k=1), np.array([1.0, 1.0])).value == pytest.approx(1.0)
    assert f_eval(Spec("GaussK"), np.array([2.0, 3.0])).value == pytest.approx(np.sqrt(6))
    ft = inverse_spec(Spec("Hk", k=1))
    assert f_eval(ft, np.array([2.0, 3.0])).value == pytest.approx(12 / 5, rel=1e-14)


def test_inverse_of_gauss_curvature_is_itself():
    assert inverse_spec(Spec("GaussK")) == Spec("GaussK")


@pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: s.label())
def test_normalisation_and_homogeneity(spec):
    assert f_eval(spec, np.ones(2)).value == pytest.approx(1.0, abs=1e-14)
    rng = np.random.default_rng(1)
    k = rng.uniform(0.1, 10, size=(50, 2))
    lam = rng.uniform(0.1, 10, size=50)
    lhs = f_eval(spec, lam[:, None] * k).value
    np.testing.assert_allclose(lhs, lam * f_eval(spec, k).value, rtol=1e-12)


@pytest.mark.parametrize("spec", FAMILIES, ids=lambda s: s.label())
def test_gradient_matches_central_differences(spec):
    rng = np.random.default_rng(7)
    k = rng.uniform(0.1, 10, size=(100, 2))
    ev = f_eval(spec, k)
    assert np.all(ev.grad > 0)
    for i in range(2):
        e = np.zeros(2)
        e[i] = 1e-6 * k[:, i].mean()
        fd = (f_eval(spec, k + e).value - f_eval(spec, k - e).value) / (2 * e[i])
        np.testing.assert_allclose(ev.grad[:, i], fd, rtol=1e-6)


@settings(max_examples=50, deadline=None)
@given(kappas)
def test_euler_relation(k):
    for spec in FAMILIES:
        ev = f_eval(spec, k)
        assert np.dot(k, ev.grad) == pytest.approx(ev.value, rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(kappas)
def test_double_inversion(k):
    for spec in FAMILIES:
        twice = inverse_spec(inverse_spec(spec))
        assert f_eval(twice, k).value == pytest.approx(f_eval(spec, k).value, rel=1e-12)


def test_elementary_symmetric():
    k = np.array([2.0, 3.0, 5.0])
    assert elementary_symmetric(k, 2)[0] == pytest.approx(31.0)
    np.testing.assert_allclose(elementary_symmetric(k, 2)[1], [8.0, 7.0, 5.0])


@pytest.mark.parametrize("spec", [Spec("GaussK"), Spec("HkKa", k=1, a=1.0)], ids=str)
def test_boundary_vanishing(spec):
    a = f_eval(spec, np.array([1e-4, 1.0])).value
    b = f_eval(spec, np.array([1e-6, 1.0])).value
    d = 2.0 if spec.family == "GaussK" else 3.0
    assert b / a == pytest.approx(1e-2 ** (1 / d), rel=1e-3)


def test_outside_cone_raises():
    with pytest.raises(DomainError):
        f_eval(Spec("GaussK"), np.array([1.0, -1.0]))


def test_frame_consistency():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(200, 2, 2))
    b = rng.normal(size=(200, 2, 2))
    g = a @ a.transpose(0, 2, 1) + 0.1 * np.eye(2)
    h = b @ b.transpose(0, 2, 1) + 0.1 * np.eye(2)
    kappa, frames = eigen_frames(g, h)
    # eigenvectors are g-orthonormal and solve (h - kappa g) e = 0
    gram = frames.transpose(0, 2, 1) @ g @ frames
    np.testing.assert_allclose(gram, np.broadcast_to(np.eye(2), gram.shape), atol=1e-10)
    mixed = np.linalg.solve(g, h)
    for m in range(2):
        det = np.linalg.det(mixed - kappa[:, m, None, None] * np.eye(2))
        assert np.abs(det).max() < 1e-10 * np.abs(kappa).max() ** 2
    for spec in FAMILIES:
        ev = f_eval(spec, kappa)
        fij = assemble_tensor(ev.grad, frames)
        np.testing.assert_allclose(np.einsum("nij,nij->n", fij, h), ev.value, rtol=1e-10)


def test_kstar_gauss_identity():
    r = kstar_check(Spec("GaussK"), 2, samples=1000, seed=0)
    assert abs(r.infimum - 1) < 1e-10
    assert r.estimate
    assert abs(kstar_check(Spec("GaussK"), 1, samples=200).infimum - 1) < 1e-12


def test_kstar_mean_curvature_family():
    m = np.array([0.5, 2.0, 10.0])
    g = np.broadcast_to(np.eye(2), (3, 2, 2))
    h = np.zeros((3, 2, 2))
    h[:, 0, 0] = 1.0
    h[:, 1, 1] = m
    ratio, _ = kstar_ratio(Spec("Hk", k=1), g, h)
    np.testing.assert_allclose(ratio, (1 + m**2) / (1 + m) ** 2, rtol=1e-12)
    assert abs(kstar_check(Spec("Hk", k=1), 2, samples=2000).infimum - 0.5) < 1e-3


def test_spec_round_trip():
    for spec in FAMILIES:
        assert Spec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        Spec.from_dict({"family": "GaussK", "bogus": 1})
    with pytest.raises(ValueError):
        Spec("Hk", k=0)
