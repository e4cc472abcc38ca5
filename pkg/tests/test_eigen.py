import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import jn_zeros

from nodal_nehari import (Functional, ProblemSpec, WeightField, build_domain, check_Alambda,
                          minimize_rayleigh, shooting_eigenvalue)
from nodal_nehari.eigen import rayleigh
from nodal_nehari.domain import random_smooth_field
from nodal_nehari.errors import DegenerateFieldError


def unit_ball(n=300, R=1.0, A=None, N=3):
    spec = ProblemSpec(p=2.0, N=N, A=A or WeightField("constant", 1.0), strict=N > 2)
    return Functional(spec, build_domain("radial", N=N, R=R, n=n))


def test_dirichlet_ball():
    eig = minimize_rayleigh(unit_ball())
    assert eig.converged
    assert eig.lam_A == pytest.approx(math.pi ** 2, rel=1e-3)
    # history decreases monotonically
    assert all(b <= a for a, b in zip(eig.history, eig.history[1:]))


def test_eigenvalue_error_shrinks_with_resolution():
    errs = [abs(minimize_rayleigh(unit_ball(n)).lam_A - math.pi ** 2) for n in (50, 100, 200)]
    assert errs[0] > errs[1] > errs[2]


def test_shooting_oracles():
    assert shooting_eigenvalue(3, 1.0) == pytest.approx(math.pi ** 2, rel=1e-10)
    assert shooting_eigenvalue(2, 1.0) == pytest.approx(jn_zeros(0, 1)[0] ** 2, rel=1e-10)
    assert shooting_eigenvalue(3, 2.0, weight=4.0) == pytest.approx(math.pi ** 2 / 16, rel=1e-10)


def test_two_dimensional_disc():
    eig = minimize_rayleigh(unit_ball(N=2))
    assert eig.lam_A == pytest.approx(jn_zeros(0, 1)[0] ** 2, rel=2e-3)


def test_larger_truncation_lowers_estimate():
    vals = [minimize_rayleigh(unit_ball(n=int(60 * R), R=R)).lam_A for R in (1.0, 2.0, 4.0)]
    assert vals[0] > vals[1] > vals[2]


def test_restart_from_minimiser():
    F = unit_ball(n=200)
    eig = minimize_rayleigh(F)
    again = minimize_rayleigh(F, init=eig.u)
    assert again.iterations <= 2
    assert again.lam_A == pytest.approx(eig.lam_A, rel=1e-8)


@given(seed=st.integers(0, 1000), c=st.floats(1e-3, 1e3))
def test_rayleigh_scale_invariant_and_bounded_below(seed, c):
    F = unit_ball(n=100)
    u = F.domain.zero_boundary(random_smooth_field(F.domain, np.random.default_rng(seed)))
    r = float(rayleigh(F, u))
    assert float(rayleigh(F, c * u)) == pytest.approx(r, rel=1e-10)
    assert r >= minimize_rayleigh(F).lam_A * (1 - 1e-9)


def test_zero_field_is_degenerate():
    F = unit_ball(n=50)
    with pytest.raises(DegenerateFieldError):
        rayleigh(F, np.zeros(F.domain.n_nodes))
    with pytest.raises(DegenerateFieldError):
        minimize_rayleigh(F, init=np.zeros(F.domain.n_nodes))


def test_check_Alambda():
    eig = minimize_rayleigh(unit_ball(n=100))
    assert check_Alambda(-5.0, eig)[0]
    assert check_Alambda(0.0, eig)[0]
    assert check_Alambda(0.5 * eig.lam_A, eig)[0]
    ok, margin = check_Alambda(eig.lam_A + 1.0, eig)
    assert not ok and margin < 0
    # too close to the estimate to be trusted
    assert not check_Alambda(0.9999 * eig.lam_A, eig)[0]


def test_weight_scales_eigenvalue():
    e1 = minimize_rayleigh(unit_ball(n=150)).lam_A
    e2 = minimize_rayleigh(unit_ball(n=150, A=WeightField("constant", 2.0))).lam_A
    assert e2 == pytest.approx(e1 / 2, rel=1e-6)


def test_p_not_two():
    spec = ProblemSpec(p=2.5, N=3, A=WeightField("gaussian", 1.0, 1.0))
    F = Functional(spec, build_domain("radial", N=3, R=6.0, n=200))
    eig = minimize_rayleigh(F)
    assert eig.converged and eig.lam_A > 0
    assert np.all(eig.u[F.free] * np.sign(eig.u[0]) >= 0)
