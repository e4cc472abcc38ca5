"""Executable certificates: derivative checks, fiber properties, the Miranda
boundary test, invariant checks on computed solutions and independent oracles."""

from __future__ import annotations

import itertools
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.stats import norm, qmc

from .domain import count_nodal_domains, negative_part, positive_part, random_smooth_field
from .eigen import EigenResult, check_Alambda
from .errors import HypothesisViolation, NehariError
from .functional import Functional, norm_equivalence_constants
from .nehari import delta_lambda_estimate, membership, project, project_nodal

log = logging.getLogger(__name__)


@dataclass
class Check:
    name: str
    anchor: str
    passed: bool
    value: float | None = None
    tolerance: float | None = None
    detail: str = ""


@dataclass
class CheckReport:
    checks: list = field(default_factory=list)

    def add(self, name, anchor, passed, value=None, tolerance=None, detail=""):
        self.checks.append(Check(name, anchor, bool(passed),
                                 None if value is None else float(value),
                                 None if tolerance is None else float(tolerance), detail))

    def extend(self, other: "CheckReport"):
        self.checks.extend(other.checks)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def as_dict(self):
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def table(self):
        lines = []
        for c in self.checks:
            val = "" if c.value is None else f"{c.value:.3e}"
            tol = "" if c.tolerance is None else f"{c.tolerance:.1e}"
            lines.append(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<40} {val:>11} {tol:>9}  "
                         f"[{c.anchor}] {c.detail}".rstrip())
        return "\n".join(lines)


# -- derivative ---------------------------------------------------------------

def fd_gradient_check(F: Functional, trials=20, step=1e-6, seed=0, tol=None):
    """Compare the assembled derivative with central differences of the energy."""
    if not step > 0:
        raise ValueError("step must be positive")
    if tol is None:
        tol = 1e-5 if F.p >= 2 else 1e-4
    rng = np.random.default_rng(seed)
    rep = CheckReport()
    d = F.domain
    for k in range(trials):
        u = random_smooth_field(d, rng)
        v = random_smooth_field(d, rng)
        analytic = F.pairing(F.gradient(u), v)
        fd = (F.S(u + step * v) - F.S(u - step * v)) / (2 * step)
        err = abs(analytic - fd) / abs(fd)
        rep.add(f"fd_gradient[{k}]", "energy is C1, derivative formula", err < tol, err, tol)
    u = random_smooth_field(d, rng)
    fd = (F.S((1 + step) * u) - F.S((1 - step) * u)) / (2 * step)
    J = float(F.J(u))
    err = abs(fd - J) / abs(J)
    rep.add("fiber_derivative", "d/dt S(tu) at t=1 equals J(u)", err < max(tol, 1e-6), err,
            max(tol, 1e-6))
    return rep


# -- fiber --------------------------------------------------------------------

def fiber_property_check(F: Functional, u, t_grid=None, rtol=1e-12):
    """Fiber map monotone, ``S(t u)`` maximal at ``t*``, location rule for ``t*``."""
    proj = project(F, u, tol=1e-13)
    ts = proj.t
    if t_grid is None:
        t_grid = np.geomspace(ts / 10, ts * 10, 64)
    t_grid = np.unique(np.append(np.asarray(t_grid, dtype=float), ts))
    rep = CheckReport()
    phi = F.norm_lambda_p(u) - (F.nl.g(t_grid[:, None] * u, F.B) * u) @ F.w / t_grid ** (F.p - 1)
    rep.add("fiber_map_decreasing", "phi_u strictly decreasing", np.all(np.diff(phi) < 0),
            float(np.max(np.diff(phi))))
    S = F.S(t_grid[:, None] * u)
    Smax = float(F.S(proj.w))
    gap = float(np.max(S) - Smax)
    rep.add("fiber_maximum", "S(t* u) = max_t S(t u)", gap <= rtol * abs(Smax), gap,
            rtol * abs(Smax))
    before = t_grid <= ts
    after = t_grid >= ts
    slack = rtol * abs(Smax)
    inc = np.all(np.diff(S[before]) > -slack)
    dec = np.all(np.diff(S[after]) < slack)
    rep.add("fiber_unimodal", "S(tu) increasing before t*, decreasing after", inc and dec)
    J = float(F.J(u))
    loc = (ts < 1) if J < 0 else (ts > 1) if J > 0 else abs(ts - 1) < 1e-10
    rep.add("location_rule", "t* < 1 iff J(u) < 0", loc, ts - 1.0, detail=f"J(u)={J:.3e}")
    return rep


# -- Miranda ------------------------------------------------------------------

def miranda_field(F: Functional, u3, s, t):
    """``(<S'(w), s u3^->, <S'(w), t u3^+>)`` with ``w = t u3^+ + s u3^-``."""
    up, um = positive_part(u3), negative_part(u3)
    W = np.asarray(t)[..., None] * up + np.asarray(s)[..., None] * um
    R = F.gradient_vector(W)
    return (R @ um) * s, (R @ up) * t


def miranda_check(F: Functional, u3, eps=0.1, samples=16):
    """Inward-pointing boundary test on ``[1-eps, 1+eps]^2``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    rep = CheckReport()
    side = np.linspace(1 - eps, 1 + eps, samples)
    lo, hi = np.full(samples, 1 - eps), np.full(samples, 1 + eps)
    scale = float(F.norm_lambda_p(u3))
    f1_lo, _ = miranda_field(F, u3, lo, side)
    f1_hi, _ = miranda_field(F, u3, hi, side)
    _, f2_lo = miranda_field(F, u3, side, lo)
    _, f2_hi = miranda_field(F, u3, side, hi)
    anchor = "inward-pointing field on the square boundary"
    rep.add("miranda_F1_left", anchor, np.all(f1_lo > 0), f1_lo.min() / scale)
    rep.add("miranda_F1_right", anchor, np.all(f1_hi < 0), f1_hi.max() / scale)
    rep.add("miranda_F2_bottom", anchor, np.all(f2_lo > 0), f2_lo.min() / scale)
    rep.add("miranda_F2_top", anchor, np.all(f2_hi < 0), f2_hi.max() / scale)
    c1, c2 = miranda_field(F, u3, np.array([1.0]), np.array([1.0]))
    centre = (abs(c1[0]) + abs(c2[0])) / scale
    rep.add("miranda_centre_zero", "u3^+- on the Nehari manifold", centre <= 1e-8, centre, 1e-8)
    return rep


# -- eigenvalue oracle --------------------------------------------------------

def shooting_eigenvalue(N, R, weight=1.0, lam_max=None):
    """First Dirichlet eigenvalue of ``-u'' - (N-1)/r u' = lam * weight * u`` on ``(0, R)``.

    Shoots from a series start near ``r = 0`` and brackets the first sign
    change of ``u(R; lam)``.
    """
    def end_value(lam):
        k = lam * weight
        r0 = 1e-6 * R
        u0 = 1 - k * r0 ** 2 / (2 * N)
        du0 = -k * r0 / N
        sol = solve_ivp(lambda r, y: [y[1], -(N - 1) / r * y[1] - k * y[0]], (r0, R),
                        [u0, du0], method="DOP853", rtol=1e-12, atol=1e-14)
        return sol.y[0, -1]

    # the first zero of the ball eigenfunction exceeds (pi/(2R))^2 (N = 1 value)
    lo = (np.pi / (2 * R)) ** 2 / weight
    hi = lo
    lam_max = lam_max or 1e4 * lo
    while end_value(hi) > 0:
        lo, hi = hi, hi * 1.25
        if hi > lam_max:
            raise RuntimeError("no eigenvalue found below lam_max")
    return brentq(end_value, lo, hi, xtol=1e-14, rtol=1e-13)


# -- brute-force oracle -------------------------------------------------------

def sphere_lattice(k, count):
    """Low-discrepancy directions on the positive orthant of the unit sphere in R^k."""
    if k == 1:
        return np.ones((1, 1))
    pts = qmc.Halton(d=k, scramble=False).random(count + 1)[1:]
    # half-normal quantiles: a bijection onto the orthant, so no two points fold together
    z = norm.ppf(0.5 + 0.5 * np.clip(pts, 1e-12, 1 - 1e-12))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@dataclass
class OracleResult:
    plus: float
    minus: float
    nodal: float
    bounds: dict
    argmin: dict
    directions: int


def _embed(F, X):
    U = np.zeros((X.shape[0], F.domain.n_nodes))
    U[:, F.free] = X
    return U


def _oracle_values(F, X, nodal, tol=1e-11):
    """Energy on the constraint set of every direction row (nan where undefined)."""
    U = _embed(F, X)
    out = np.full(X.shape[0], np.nan)
    if nodal:
        ok = np.any(U > 0, axis=1) & np.any(U < 0, axis=1)
        if ok.any():
            t, s, res = project_nodal(F, U[ok], tol=tol)
            W = t[:, None] * positive_part(U[ok]) + s[:, None] * negative_part(U[ok])
            vals = F.S(W)
            out[np.flatnonzero(ok)] = np.where(res <= tol, vals, np.nan)
    else:
        ok = np.any(U != 0, axis=1)
        if ok.any():
            t, res = project(F, U[ok], tol=tol)
            vals = F.S(t[:, None] * U[ok])
            out[np.flatnonzero(ok)] = np.where(res <= tol, vals, np.nan)
    return out


def _refine(F, x, signs, nodal, h0=0.1, h_min=1e-9):
    """Compass refinement of the best lattice point on a shrinking lattice."""
    k = x.size
    stencil = np.array(list(itertools.product((-1.0, 0.0, 1.0), repeat=k)))
    stencil = stencil[np.any(stencil != 0, axis=1)]
    best = _oracle_values(F, x[None], nodal)[0]
    h = h0
    spread = np.inf
    while h >= h_min:
        cand = x[None] + h * stencil
        cand = np.maximum(cand * signs, 0.0) * signs
        vals = _oracle_values(F, cand, nodal)
        j = np.nanargmin(vals) if np.any(np.isfinite(vals)) else None
        if j is not None and vals[j] < best:
            x, best = cand[j] / np.linalg.norm(cand[j]), vals[j]
        else:
            spread = float(np.nanmax(np.abs(vals - best))) if np.any(np.isfinite(vals)) else spread
            h *= 0.5
    return x, best, spread


def brute_force_oracle(F: Functional, directions=10_000, refine=True, max_free=6):
    """Minima of the energy over ``N+``, ``N-`` and the nodal set by enumeration.

    Every sign pattern of the free nodal values is enumerated with a
    low-discrepancy lattice of directions in its orthant; each direction is
    projected onto the constraint set and the energy evaluated.  With
    ``refine``, the best lattice points are then improved on successively finer
    local lattices.  ``bounds`` records, per set, the energy spread over the
    finest local lattice.
    """
    k = int(F.free.sum())
    if k > max_free:
        raise ValueError(f"brute-force oracle is limited to {max_free} free nodes, got {k}")
    if directions < 1000:
        warnings.warn("oracle lattice has fewer than 1e3 directions", RuntimeWarning)
    base = sphere_lattice(k, directions)
    minima, bounds, argmin = {}, {}, {}
    for name, sign in (("plus", 1.0), ("minus", -1.0)):
        X = sign * base
        vals = _oracle_values(F, X, nodal=False)
        j = int(np.nanargmin(vals))
        x, best, spread = X[j], vals[j], np.nan
        if refine:
            x, best, spread = _refine(F, x, np.full(k, sign), nodal=False)
        minima[name], bounds[name], argmin[name] = float(best), spread, _embed(F, x[None])[0]
    patterns = [np.array(s) for s in itertools.product((1.0, -1.0), repeat=k)
                if 0 < sum(v > 0 for v in s) < k]
    cands = []
    for sig in patterns:
        X = sig * base
        vals = _oracle_values(F, X, nodal=True)
        if np.any(np.isfinite(vals)):
            j = int(np.nanargmin(vals))
            cands.append((vals[j], X[j], sig))
    if not cands:
        raise NehariError("no sign pattern admits a nodal projection")
    cands.sort(key=lambda c: c[0])
    best = (np.inf, None, np.nan)
    for val, x, sig in cands[: 3 if refine else 1]:
        spread = np.nan
        if refine:
            x, val, spread = _refine(F, x, sig, nodal=True)
        if val < best[0]:
            best = (val, x, spread)
    minima["nodal"], bounds["nodal"] = float(best[0]), best[2]
    argmin["nodal"] = _embed(F, best[1][None])[0]
    # report the constrained minimisers themselves, not the directions
    for name in ("plus", "minus"):
        argmin[name] = project(F, argmin[name], tol=1e-13).w
    argmin["nodal"] = project_nodal(F, argmin["nodal"], tol=1e-12).w
    return OracleResult(minima["plus"], minima["minus"], minima["nodal"], bounds, argmin,
                        directions)


# -- invariants on computed solutions -----------------------------------------

def invariant_suite(F: Functional, u1, u2, u3, eig: EigenResult | None = None,
                    probes=200, seed=0, tol_res=1e-8, tol_nehari=1e-8, iterates=()):
    """One check per structural property of the three computed solutions.

    ``u1, u2, u3`` are fields or :class:`~nodal_nehari.optimize.Solution` objects.
    """
    if F.lam > 0:
        if eig is None:
            raise HypothesisViolation("(A,lambda)", "lambda > 0 needs a lambda_A estimate")
        ok, margin = check_Alambda(F.lam, eig)
        if not ok:
            raise HypothesisViolation(
                "(A,lambda)", f"lambda={F.lam} vs lambda_A estimate {eig.lam_A} (margin {margin})")
    sols = {}
    residuals = {}
    for name, s in (("u1", u1), ("u2", u2), ("u3", u3)):
        if hasattr(s, "u"):
            residuals[name] = s.residual
            iterates = list(iterates) + list(getattr(s, "iterates", []))
            s = s.u
        sols[name] = F.domain.check(s)
    rep = CheckReport()
    free = F.free

    rep.add("u1_positive", "u1 > 0", np.all(sols["u1"][free] > 0), float(sols["u1"][free].min()))
    rep.add("u2_negative", "u2 < 0", np.all(sols["u2"][free] < 0), float(sols["u2"][free].max()))
    nd = count_nodal_domains(F.domain, sols["u3"])
    rep.add("u3_two_nodal_domains", "exactly two nodal domains", nd == 2, nd, 2)

    for name, u in sols.items():
        if name in residuals:
            rep.add(f"{name}_residual", "S'(u) = 0", residuals[name] <= tol_res,
                    residuals[name], tol_res)
        h_int = float(F.nl.h(u, F.B, F.p) @ F.w)
        S = float(F.S(u))
        rep.add(f"{name}_energy_positive", "S = integral of h > 0 on the Nehari manifold",
                S > 0 and h_int > 0, S)
        flags = membership(F, u, tol=tol_nehari)
        key = {"u1": "N_plus", "u2": "N_minus", "u3": "M"}[name]
        rep.add(f"{name}_in_{key}", "membership of the constraint set", flags[key],
                detail=str(flags))

    rng = np.random.default_rng(seed)
    bank = [random_smooth_field(F.domain, rng, positive=True) for _ in range(probes)]
    bank += [np.asarray(v) for v in iterates]
    bank += [u for u in sols.values() if np.any(u)]
    delta = delta_lambda_estimate(F, np.array(bank))
    for name, u in sols.items():
        nl = float(F.norm_lambda(u))
        rep.add(f"{name}_nehari_radius", "||u||_lam >= delta_lam (probe-relative)",
                nl >= delta * (1 - 1e-12), nl, delta)

    S1, S2, S3 = (float(F.S(sols[k])) for k in ("u1", "u2", "u3"))
    slack = 1e-6 * abs(S3)
    rep.add("nodal_energy_above_sum", "S(u3) >= S(u1) + S(u2)", S3 >= S1 + S2 - slack,
            S3 - S1 - S2, slack)
    rep.add("nodal_level_above_ground", "inf over M >= inf over N", S3 >= min(S1, S2) - slack,
            S3 - min(S1, S2))

    if eig is not None:
        lam_A = 0.99 * eig.lam_A
        if F.lam < lam_A:
            c1, c2, _ = norm_equivalence_constants(F.p, F.lam, lam_A)
            fields = np.array(bank[:probes] + [u for u in sols.values() if np.any(u)])
            nl = F.norm_lambda(fields)
            nw = F.norm_WA(fields)
            lower = float(np.min(nl - c1 * nw) / np.max(nw))
            upper = float(np.max(nl - c2 * nw) / np.max(nw))
            rep.add("norm_sandwich", "c1 ||u||_WA <= ||u||_lam <= c2 ||u||_WA",
                    lower >= -1e-12 and upper <= 1e-12, min(lower, -upper),
                    detail=f"c1={c1:.6g}, c2={c2:.6g}")
    return rep
