import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nodal_nehari import (Functional, PowerNonlinearity, ProblemSpec, WeightField, build_domain,
                          norm_equivalence_constants)
from nodal_nehari.domain import random_smooth_field
from nodal_nehari.errors import DomainMismatchError, HypothesisViolation, InvalidConfigError


def make(p=2.0, lam=-1.0, q=None, geometry="radial", n=120):
    q = q if q is not None else (p + 0.5 * (3 * p / (3 - p) - p) if geometry == "radial" else 3.0)
    if geometry == "radial":
        d = build_domain("radial", N=3, R=5.0, n=n)
        spec = ProblemSpec(p=p, N=3, lam=lam, A=WeightField("gaussian", 1.0, 1.0),
                           nonlinearity=PowerNonlinearity(q, WeightField("gaussian", 1.0, 1.5)))
    else:
        d = build_domain("cartesian2d", L=3.0, nx=20, ny=18)
        spec = ProblemSpec(p=p, N=2, lam=lam, A=WeightField("gaussian", 1.0, 1.0),
                           nonlinearity=PowerNonlinearity(q, WeightField("gaussian")), strict=False)
    return Functional(spec, d)


FUNCTIONALS = {(g, p): make(p=p, geometry=g)
               for g in ("radial", "cartesian2d") for p in (1.5, 2.0, 2.5)}
cases = st.sampled_from(sorted(FUNCTIONALS))


@given(key=cases, seed=st.integers(0, 10_000))
def test_pairing_with_u_is_J(key, seed):
    F = FUNCTIONALS[key]
    u = random_smooth_field(F.domain, np.random.default_rng(seed))
    u = F.domain.zero_boundary(u)
    J = float(F.J(u))
    assert float(F.pairing(F.gradient(u), u)) == pytest.approx(J, rel=1e-10, abs=1e-12)
    jp, jm = F.part_pairings(u)
    assert jp + jm == pytest.approx(J, rel=1e-10, abs=1e-12)


@given(key=cases, seed=st.integers(0, 10_000), t=st.floats(0.1, 10.0))
def test_homogeneity(key, seed, t):
    F = FUNCTIONALS[key]
    u = random_smooth_field(F.domain, np.random.default_rng(seed))
    assert F.gradient_term(t * u) == pytest.approx(t ** F.p * F.gradient_term(u), rel=1e-10)
    assert F.mass_term(t * u) == pytest.approx(t ** F.p * F.mass_term(u), rel=1e-10)
    assert F.bq_mass(t * u) == pytest.approx(t ** F.nl.q * F.bq_mass(u), rel=1e-10)


@given(key=cases, seed=st.integers(0, 10_000))
def test_energy_decomposition(key, seed):
    F = FUNCTIONALS[key]
    u = random_smooth_field(F.domain, np.random.default_rng(seed))
    e = F.energy(u)
    S = e.gradient_term / F.p - F.lam * e.mass_term / F.p - e.potential
    assert e.S == pytest.approx(S, rel=1e-12) and float(F.S(u)) == pytest.approx(S, rel=1e-12)
    # power nonlinearity: G = g s / q
    assert e.potential == pytest.approx(e.nonlinear_mass / F.nl.q, rel=1e-12)


def test_quadratic_closed_form():
    # p = 2, lam = 0, no nonlinearity at the scale of the check: S(eps u) ~ eps^2 |grad u|^2 / 2
    F = make(p=2.0, lam=0.0)
    u = F.domain.zero_boundary(np.cos(np.pi * F.domain.radius / 10))
    eps = 1e-6
    assert float(F.S(eps * u)) == pytest.approx(eps ** 2 * F.gradient_term(u) / 2, rel=1e-9)


@pytest.mark.parametrize("key", sorted(FUNCTIONALS))
def test_gradient_matches_central_differences(key):
    F = FUNCTIONALS[key]
    rng = np.random.default_rng(1)
    u = random_smooth_field(F.domain, rng)
    g = F.gradient(u)
    for _ in range(3):
        v = F.domain.zero_boundary(random_smooth_field(F.domain, rng))
        h = 1e-6
        fd = (float(F.S(u + h * v)) - float(F.S(u - h * v))) / (2 * h)
        assert float(F.pairing(g, v)) == pytest.approx(fd, rel=1e-5, abs=1e-8)


@pytest.mark.parametrize("key", [("radial", 2.0), ("radial", 2.5), ("cartesian2d", 1.5)])
def test_hessian_matches_differenced_gradient(key):
    F = FUNCTIONALS[key]
    rng = np.random.default_rng(2)
    # a tilt keeps every cell gradient away from 0, where the p < 2 flux is not smooth
    u = random_smooth_field(F.domain, rng) + 0.3 * F.domain.coords @ np.arange(1.0, F.domain.coords.shape[1] + 1)
    v = F.domain.zero_boundary(random_smooth_field(F.domain, rng))
    H = F.hessian(u)
    h = 1e-6
    fd = (F.gradient_vector(u + h * v) - F.gradient_vector(u - h * v)) / (2 * h)
    free = F.free
    assert np.allclose((H @ v)[free], fd[free], rtol=1e-4, atol=1e-6 * np.abs(fd).max())


def test_hessian_is_symmetric():
    F = FUNCTIONALS[("cartesian2d", 2.5)]
    u = random_smooth_field(F.domain, np.random.default_rng(4))
    H = F.hessian(u)
    assert abs(H - H.T).max() <= 1e-12 * abs(H).max()


def test_sandwich_constants_example():
    c1, c2, eps = norm_equivalence_constants(2.0, -3.0, 10.0)
    assert c2 == pytest.approx(np.sqrt(3.0))
    assert 0 < c1 <= 1 and 0 < eps <= 1
    assert norm_equivalence_constants(2.0, 0.5, 10.0)[1] == 1.0


def test_sandwich_needs_lambda_below_lambda_A():
    with pytest.raises(HypothesisViolation):
        norm_equivalence_constants(2.0, 10.0, 10.0)


@given(lam=st.floats(-20.0, 9.9), lam_A=st.just(10.0), p=st.floats(1.2, 4.0))
def test_sandwich_constants_ordered(lam, lam_A, p):
    c1, c2, _ = norm_equivalence_constants(p, lam, lam_A)
    assert 0 < c1 <= c2


def test_norms_agree_at_lambda_zero():
    F = make(p=2.0, lam=0.0)
    u = random_smooth_field(F.domain, np.random.default_rng(5))
    assert float(F.norm_lambda(u)) == pytest.approx(F.gradient_term(u) ** 0.5)


@pytest.mark.parametrize("kwargs", [
    dict(p=1.0), dict(p=3.0, N=3), dict(p=2.0, N=3, nonlinearity=PowerNonlinearity(6.0)),
    dict(p=2.0, N=3, nonlinearity=PowerNonlinearity(2.0)), dict(eps_reg=-1.0),
    dict(A=WeightField("compact_bump", 1.0, 1.0)),
])
def test_invalid_problem(kwargs):
    with pytest.raises(InvalidConfigError):
        ProblemSpec(**kwargs)


def test_dimension_must_match_domain():
    d = build_domain("cartesian2d", L=1.0, nx=5, ny=5)
    with pytest.raises(DomainMismatchError):
        Functional(ProblemSpec(), d)
