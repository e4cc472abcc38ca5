import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nodal_nehari import (Functional, PowerNonlinearity, ProblemSpec, WeightField, brute_force_oracle,
                          build_domain, membership, project, project_nodal)
from nodal_nehari.domain import random_smooth_field
from nodal_nehari.errors import NotSignChangingError, ProjectionFailure, ZeroFieldError
from nodal_nehari.nehari import delta_lambda_estimate, fiber_phi

D = build_domain("radial", N=3, R=5.0, n=150)


def functional(p=2.0, q=4.0, lam=-1.0, B=None, d=D):
    B = B or WeightField("gaussian", 1.0, 1.5)
    return Functional(ProblemSpec(p=p, N=3, lam=lam, A=WeightField("gaussian"),
                                  nonlinearity=PowerNonlinearity(q, B)), d)


F2 = functional()
F18 = functional(p=1.8, q=3.5)


@given(seed=st.integers(0, 10_000), c=st.floats(0.05, 20.0))
def test_projection_closed_form_and_scale_invariance(seed, c):
    u = random_smooth_field(D, np.random.default_rng(seed))
    a, b = float(F2.norm_lambda_p(u)), float(F2.bq_mass(u))
    t = project(F2, u, tol=1e-13).t
    assert t == pytest.approx((a / b) ** 0.5, rel=1e-10)
    assert project(F2, c * u, tol=1e-13).t == pytest.approx(t / c, rel=1e-9)


@given(seed=st.integers(0, 10_000))
def test_location_rule(seed):
    u = random_smooth_field(D, np.random.default_rng(seed))
    proj = project(F18, u, tol=1e-12)
    J = float(F18.J(u))
    assert (proj.t > 1) == (J > 0)
    assert abs(float(F18.J(proj.w))) <= 1e-10 * float(F18.norm_lambda_p(proj.w))


def test_fiber_maximum_value_closed_form():
    # S(tu) = a t^p / p - b t^q / q peaks at (1/p - 1/q) a (a/b)^{p/(q-p)}
    u = random_smooth_field(D, np.random.default_rng(0))
    a, b = float(F2.norm_lambda_p(u)), float(F2.bq_mass(u))
    w = project(F2, u, tol=1e-13).w
    assert float(F2.S(w)) == pytest.approx(0.25 * a * a / b, rel=1e-10)
    ts = np.linspace(0.1, 3.0, 30) * (a / b) ** 0.5
    assert np.all(F2.S(ts[:, None] * u) <= float(F2.S(w)) * (1 + 1e-12))
    # J(tu) / t^p changes sign exactly at the projection scale
    phi = fiber_phi(F2, u, ts)
    assert np.all(np.sign(phi) == np.sign((a / b) ** 0.5 - ts))


def test_batch_projection_matches_single():
    rng = np.random.default_rng(1)
    U = np.array([random_smooth_field(D, rng) for _ in range(5)])
    t, res = project(F18, U, tol=1e-12)
    assert np.all(res <= 1e-12)
    assert np.allclose(t, [project(F18, u, tol=1e-12).t for u in U], rtol=1e-11)


def test_zero_field_is_rejected():
    with pytest.raises(ZeroFieldError):
        project(F2, np.zeros(D.n_nodes))
    assert not any(membership(F2, np.zeros(D.n_nodes)).values())


def test_projection_fails_where_B_vanishes():
    F = functional(B=WeightField("compact_bump", 1.0, 1.0))
    u = D.zero_boundary(np.exp(-(D.radius - 4.0) ** 2 / 0.05) * (D.radius > 2.0))
    with pytest.raises(ProjectionFailure):
        project(F, u)


def dipole(d=D):
    r = d.radius
    return d.zero_boundary(np.exp(-r ** 2) - 0.7 * np.exp(-(r - 2.0) ** 2))


@pytest.mark.parametrize("F", [F2, F18], ids=["p2", "p1.8"])
def test_nodal_projection(F):
    proj = project_nodal(F, dipole(), tol=1e-12)
    assert proj.residual <= 1e-12
    flags = membership(F, proj.w)
    assert flags["M"] and flags["N"] and not flags["N_plus"] and not flags["N_minus"]
    jp, jm = F.part_pairings(proj.w)
    norm = float(F.norm_lambda_p(proj.w))
    assert abs(jp) <= 1e-10 * norm and abs(jm) <= 1e-10 * norm


def test_decoupled_variant_projects_parts_separately():
    proj = project_nodal(F18, dipole(), tol=1e-12, coupled=False)
    for part in (np.maximum(proj.w, 0), np.minimum(proj.w, 0)):
        assert abs(float(F18.J(part))) <= 1e-10 * float(F18.norm_lambda_p(part))


def test_one_signed_field_is_not_nodal():
    with pytest.raises(NotSignChangingError):
        project_nodal(F2, D.zero_boundary(np.exp(-D.radius ** 2)))


def test_membership_of_projections():
    u = D.zero_boundary(np.exp(-D.radius ** 2))
    assert membership(F2, project(F2, u).w)["N_plus"]
    assert membership(F2, project(F2, -u).w)["N_minus"]
    assert not membership(F2, 2 * project(F2, u).w)["N"]


def test_nehari_radius_bounds_projected_norms():
    rng = np.random.default_rng(3)
    probes = np.array([random_smooth_field(D, rng, positive=True) for _ in range(50)])
    delta = delta_lambda_estimate(F2, probes)
    for u in probes:
        assert float(F2.norm_lambda(project(F2, u).w)) >= delta * (1 - 1e-12)


def test_single_free_node_oracle_closed_form():
    d = build_domain("radial", N=3, R=2.0, n=2)
    F = functional(d=d)
    e0 = np.array([1.0, 0.0])
    a, b = float(F.norm_lambda_p(e0)), float(F.bq_mass(e0))
    expected = (1 / 2 - 1 / 4) * a * (a / b) ** (2 / (4 - 2))
    assert float(F.S(project(F, e0).w)) == pytest.approx(expected, rel=1e-12)
    assert float(F.S(project(F, -e0).w)) == pytest.approx(expected, rel=1e-12)


def test_symmetric_two_node_oracle():
    # interior nodes (-1/3, 0) and (1/3, 0); the "/" split is point symmetric
    d = build_domain("cartesian2d", L=1.0, nx=4, ny=3)
    spec = ProblemSpec(p=1.5, N=2, lam=0.0, A=WeightField("constant", 1.0),
                       nonlinearity=PowerNonlinearity(3.0, WeightField("constant", 1.0)))
    F = Functional(spec, d)
    oracle = brute_force_oracle(F, directions=2000)
    w = oracle.argmin["nodal"][F.free]
    assert w[0] == pytest.approx(-w[1], rel=1e-6)
    assert oracle.plus == pytest.approx(oracle.minus, rel=1e-12)
    # both parts sit on their own fiber maximum, so the nodal level is the two-part sum
    assert oracle.nodal == pytest.approx(float(F.S(oracle.argmin["nodal"])), rel=1e-9)
