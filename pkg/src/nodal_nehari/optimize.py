"""Constrained descent for the one-signed and the sign-changing solutions.

Each iterate lies on the constraint set (``N+``, ``N-`` or the nodal set ``M``).
A step moves along the preconditioned negative gradient, the trial point is
re-projected onto the set (the retraction), and an Armijo test is applied to
the retracted energy.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .domain import count_nodal_domains, negative_part, positive_part
from .errors import InvalidConfigError, NehariError, NotSignChangingError
from .functional import EnergyBreakdown, Functional
from .nehari import interface_share, membership, project, project_nodal
from .precond import Preconditioner, frozen_coefficient

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class SolverConfig:
    c_armijo: float = 1e-4
    backtrack: float = 0.5
    initial_step: float = 1.0
    tol_res: float = 1e-8
    max_iter: int = 5000
    tol_proj: float = 1e-12
    stall_tol: float = 1e-12
    stall_window: int = 3
    seed_budget: int = 5
    init: str = "bump"            # "bump" or "eigen"
    width: float | None = None    # seed bump width; default from the weight B
    offset: float | None = None   # dipole separation; default 2 * width
    seed: int = 0
    polish_every: int = 50        # Newton polish attempts; 0 disables
    dipole_angle: float = 0.0     # planar dipole axis in degrees from the x axis

    def __post_init__(self):
        if not 0 < self.c_armijo < 1:
            raise InvalidConfigError("c_armijo must lie in (0, 1)")
        if not 0 < self.backtrack < 1:
            raise InvalidConfigError("backtrack must lie in (0, 1)")
        if not self.tol_res > 0:
            raise InvalidConfigError("tol_res must be positive")
        if self.max_iter < 1 or self.seed_budget < 1:
            raise InvalidConfigError("max_iter and seed_budget must be positive")
        if self.init not in ("bump", "eigen"):
            raise InvalidConfigError(f"unknown initial-guess recipe {self.init!r}")
        if any(v is not None and not v > 0 for v in (self.width, self.offset)):
            raise InvalidConfigError("seed width and offset must be positive")
        if self.polish_every < 0:
            raise InvalidConfigError("polish_every must be non-negative")


@dataclass
class Solution:
    kind: str                         # "plus", "minus" or "nodal"
    u: np.ndarray
    energy: EnergyBreakdown
    residual: float
    flags: dict
    nodal_domains: int
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)
    iterates: list = field(default_factory=list, repr=False)
    seeds_used: int = 1
    coupling: float = 0.0
    coupling_bound: float = 0.0
    message: str = ""

    @property
    def S(self):
        return self.energy.S

    def as_dict(self):
        return {"kind": self.kind, "energy": self.energy.as_dict(), "residual": self.residual,
                "flags": self.flags, "nodal_domains": self.nodal_domains,
                "iterations": self.iterations, "converged": self.converged,
                "seeds_used": self.seeds_used, "coupling": self.coupling,
                "coupling_bound": self.coupling_bound, "message": self.message}


def residual_dual_norm(F: Functional, u, precond: Preconditioner | None = None):
    """``sqrt(r . P^{-1} r)`` for the raw derivative ``r`` of the energy."""
    P = precond if precond is not None else Preconditioner(F)
    return P.dual_norm(F.gradient_vector(u))


def _length_scale(F):
    B = F.nl.B
    if B.profile in ("gaussian", "compact_bump"):
        return min(B.width, 0.25 * F.domain.size)
    return 0.25 * F.domain.size


def _bump(F, centre, width):
    d = F.domain
    if d.geometry == "radial":
        dist2 = (d.radius - centre[0]) ** 2
    else:
        dist2 = np.sum((d.coords - np.asarray(centre)) ** 2, axis=1)
    return d.zero_boundary(np.exp(-dist2 / (2.0 * width ** 2)))


def one_sign_seed(F, cfg: SolverConfig, attempt=0, eigen_u=None):
    if cfg.init == "eigen" and eigen_u is not None and attempt == 0:
        u = np.abs(eigen_u)
        return F.domain.zero_boundary(u)
    width = cfg.width or _length_scale(F)
    centre = [0.0, 0.0]
    if attempt:
        rng = np.random.default_rng([cfg.seed, attempt])
        width *= rng.uniform(0.6, 1.6)
        if F.domain.geometry != "radial":
            centre = list(rng.uniform(-0.5, 0.5, size=2) * width)
    return _bump(F, centre, width)


def dipole_seed(F, cfg: SolverConfig, attempt=0):
    """Bump minus a shifted bump along the dipole axis (a shell when radial)."""
    width = cfg.width or _length_scale(F)
    offset = cfg.offset or 2.0 * width
    if attempt:
        rng = np.random.default_rng([cfg.seed, 1000 + attempt])
        width *= rng.uniform(0.7, 1.4)
        offset *= rng.uniform(0.7, 1.5)
    if F.domain.geometry == "radial":
        return _bump(F, [0.0], width) - _bump(F, [offset], width)
    a = np.deg2rad(cfg.dipole_angle)
    half = 0.5 * offset * np.array([np.cos(a), np.sin(a)])
    return _bump(F, -half, width) - _bump(F, half, width)


def _relax_nodes(F: Functional, u, r, count=16):
    """Solve ``S'(u)_i = 0`` node by node for the ``count`` largest residuals.

    Near cells with vanishing gradient the ``p < 2`` flux is only Holder
    continuous, so Newton's linear model misses there; a scalar root per node
    does not care.
    """
    u = u.copy()
    for i in np.argsort(-np.abs(np.where(F.free, r, 0.0)))[:count]:
        if r[i] == 0:
            break

        def f(x, i=i):
            v = u.copy()
            v[i] = x
            return F.gradient_vector(v)[i]

        h = 1e-3 * max(float(np.max(np.abs(u))), 1e-300)
        lo, hi = u[i] - h, u[i] + h
        flo, fhi = f(lo), f(hi)
        for _ in range(30):
            if flo * fhi <= 0:
                break
            h *= 2
            lo, hi = u[i] - h, u[i] + h
            flo, fhi = f(lo), f(hi)
        else:
            continue
        u[i] = brentq(f, lo, hi, xtol=1e-300, rtol=4 * EPS)
    return u


def newton_polish(F: Functional, u, P, tol, max_iter=30):
    """Damped Newton on ``S'(u) = 0`` started from a constrained near-minimiser.

    Steps are accepted only if they lower the preconditioned residual.  When a
    Newton step stalls the worst nodes are relaxed one at a time.
    Returns ``(u, residual, steps)``.
    """
    free = F.free
    r = F.gradient_vector(u)
    res = P.dual_norm(r)
    k = 0
    for k in range(1, max_iter + 1):
        if res <= 1e-2 * tol:
            k -= 1
            break
        H = F.hessian(u)[free][:, free].tocsc()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MatrixRankWarning)
            step = spsolve(H, -r[free])
        moved = fast = False
        if np.all(np.isfinite(step)):
            alpha = 1.0
            while alpha > 1e-4:
                trial = u.copy()
                trial[free] += alpha * step
                r_new = F.gradient_vector(trial)
                res_new = P.dual_norm(r_new)
                if res_new < res:
                    moved, fast = True, res_new < 0.5 * res
                    u, r, res = trial, r_new, res_new
                    break
                alpha *= 0.5
        if not fast:
            trial = _relax_nodes(F, u, r)
            r_new = F.gradient_vector(trial)
            res_new = P.dual_norm(r_new)
            if res_new < res:
                moved = True
                u, r, res = trial, r_new, res_new
        if not moved:
            break
    return u, res, k


def _descend(F, P, u, retract, cfg: SolverConfig, valid=None):
    """Armijo descent on the retracted energy; ``u`` already lies on the set.

    Every ``cfg.polish_every`` iterations, and when the descent stops short of
    the tolerance, a Newton polish is attempted; it is kept if it reaches the
    tolerance without raising the energy and ``valid`` accepts the result.
    """
    S = float(F.S(u))
    r = F.gradient_vector(u)
    history = [S]
    iterates = [u]
    deltas = []
    converged = False
    it = 0

    def polish(u, S):
        if not cfg.polish_every:
            return None
        v, res_v, steps = newton_polish(F, u, P, cfg.tol_res)
        if res_v <= cfg.tol_res and float(F.S(v)) <= S + 1e-6 * abs(S) and \
                (valid is None or valid(v)):
            return v, res_v, steps
        return None

    for it in range(1, cfg.max_iter + 1):
        res = P.dual_norm(r)
        stalled = len(deltas) >= cfg.stall_window and \
            max(deltas[-cfg.stall_window:]) <= cfg.stall_tol * abs(S)
        if res <= cfg.tol_res and (stalled or res <= cfg.tol_res * 1e-2):
            converged = True
            break
        if cfg.polish_every and it % cfg.polish_every == 0:
            out = polish(u, S)
            if out is not None:
                u, res, _ = out
                history.append(float(F.S(u)))
                return u, res, history, iterates, True, it
        # p != 2: descend in the metric linearised at the current iterate
        d = P.apply(r) if F.p == 2 else frozen_coefficient(F, u).apply(r)
        slope = float(r @ d)
        alpha = cfg.initial_step
        accepted = None
        for _ in range(60):
            try:
                trial = retract(u - alpha * d)
            except NehariError:
                trial = None
            if trial is not None:
                S_new = float(F.S(trial))
                if S_new <= S - cfg.c_armijo * alpha * slope + 10 * EPS * abs(S):
                    accepted = trial
                    break
            alpha *= cfg.backtrack
        if accepted is None:
            converged = res <= cfg.tol_res
            break
        deltas.append(abs(S - S_new))
        u, S = accepted, S_new
        r = F.gradient_vector(u)
        history.append(S)
        if len(iterates) < 2000:
            iterates.append(u)
    res = P.dual_norm(r)
    if res > cfg.tol_res:
        out = polish(u, S)
        if out is not None:
            u, res, _ = out
            history.append(float(F.S(u)))
    return u, res, history, iterates, res <= cfg.tol_res, it


def _finish(F, kind, u, res, history, iterates, converged, it, seeds, message=""):
    flags = membership(F, u, tol=1e-8)
    sol = Solution(kind=kind, u=u, energy=F.energy(u), residual=res, flags=flags,
                   nodal_domains=count_nodal_domains(F.domain, u), iterations=it,
                   converged=converged, history=history, iterates=iterates,
                   seeds_used=seeds, message=message)
    if kind == "nodal":
        Sw = float(F.S(u))
        sol.coupling = (Sw - float(F.S(positive_part(u))) - float(F.S(negative_part(u)))) / abs(Sw)
        sol.coupling_bound = interface_share(F, u)
    return sol


def _one_signed(F, v, sign):
    return not np.any(sign * v[F.free] < -1e-8 * np.max(np.abs(v)))


def solve_constant_sign(F: Functional, cfg: SolverConfig | None = None, sign=1,
                        precond=None, eigen_u=None):
    """Minimise the energy over ``N+`` (``sign=+1``) or ``N-`` (``sign=-1``)."""
    cfg = cfg or SolverConfig()
    sign = 1 if sign > 0 else -1
    P = precond or Preconditioner(F)
    kind = "plus" if sign > 0 else "minus"

    def retract(v):
        v = np.maximum(sign * v, 0.0) * sign
        return project(F, v, tol=cfg.tol_proj).w

    best = None
    for attempt in range(cfg.seed_budget):
        seed = sign * one_sign_seed(F, cfg, attempt, eigen_u)
        try:
            u0 = retract(seed)
        except NehariError as exc:
            log.info("seed %d rejected: %s", attempt, exc)
            continue
        u, res, hist, its, ok, it = _descend(F, P, u0, retract, cfg,
                                             valid=lambda v: _one_signed(F, v, sign))
        amax = np.max(np.abs(u))
        wrong = np.any(sign * u[F.free] < -1e-8 * amax)
        sol = _finish(F, kind, u, res, hist, its, ok and not wrong, it, attempt + 1)
        if wrong:
            sol.message = "sign violation"
        if sol.converged:
            return sol
        if best is None or sol.residual < best.residual:
            best = sol
    if best is None:
        raise NehariError(f"no admissible seed for the {kind} solution")
    best.message = best.message or "did not converge"
    return best


def solve_nodal(F: Functional, cfg: SolverConfig | None = None, precond=None):
    """Minimise the energy over the nodal set, seeded with a dipole."""
    cfg = cfg or SolverConfig()
    P = precond or Preconditioner(F)

    def retract(v):
        return project_nodal(F, v, tol=cfg.tol_proj).w

    best = None
    for attempt in range(cfg.seed_budget):
        try:
            u0 = retract(dipole_seed(F, cfg, attempt))
        except NehariError as exc:
            log.info("dipole seed %d rejected: %s", attempt, exc)
            continue
        u, res, hist, its, ok, it = _descend(
            F, P, u0, retract, cfg, valid=lambda v: count_nodal_domains(F.domain, v) == 2)
        sol = _finish(F, "nodal", u, res, hist, its, ok, it, attempt + 1)
        if sol.nodal_domains > 2:
            sol.converged = False
            sol.message = (f"{sol.nodal_domains} nodal domains; merging two components of "
                           "opposite sign gives a nodal competitor of lower energy")
        if sol.converged:
            return sol
        if best is None or sol.residual < best.residual:
            best = sol
    if best is None:
        raise NotSignChangingError("every dipole seed collapsed to one sign")
    best.message = best.message or "did not converge"
    return best


def solve_all(F: Functional, cfg: SolverConfig | None = None, eigen_u=None):
    """``(u1, u2, u3)`` sharing one preconditioner factorisation."""
    cfg = cfg or SolverConfig()
    P = Preconditioner(F)
    u1 = solve_constant_sign(F, cfg, +1, P, eigen_u)
    u2 = solve_constant_sign(F, cfg, -1, P, eigen_u)
    u3 = solve_nodal(F, cfg, P)
    return u1, u2, u3
