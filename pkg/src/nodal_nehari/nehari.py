"""Fiber maps and projections onto the Nehari manifold and the nodal Nehari set.

Discrete nodal set.  On a grid the positive and negative parts of ``u`` share
the cells that straddle the zero set, so ``S(w) != S(w^+) + S(w^-)`` exactly.
The projection used by default (``coupled=True``) scales the two parts to a
zero of ``(<S'(w), w^+>, <S'(w), w^->)`` with ``w = t u^+ + s u^-``, i.e. to the
critical point of ``(t, s) -> S(t u^+ + s u^-)``.  That set contains every
discrete sign-changing critical point.  ``coupled=False`` projects each part
with its own discrete energy.  Both agree up to the interface coupling, which
vanishes under refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import negative_part, positive_part
from .errors import (HypothesisViolation, NotSignChangingError, ProjectionFailure,
                     ZeroFieldError)
from .functional import Functional

LOG_T_MAX = np.log(1e12)


@dataclass
class NehariProjection:
    w: np.ndarray
    t: float
    residual: float           # |J(w)| (nodal: |J+| + |J-|) relative to ||w||_lam^p
    iterations: int
    t_minus: float | None = None
    coupling: float = 0.0     # S(w) - S(w+) - S(w-), relative to S(w)
    coupling_bound: float = 0.0  # interface-cell share of the gradient energy

    @property
    def t_plus(self):
        return self.t


def fiber_phi(F: Functional, u, t):
    """``J(t u) / t^p = ||u||_lam^p - sum w g(x, t u) u / t^{p-1}``."""
    u = F.domain.check(u)
    if not np.any(u):
        raise ZeroFieldError("fiber map of the zero field")
    a = F.norm_lambda_p(u)
    t = np.asarray(t, dtype=float)
    tt = t[..., None]
    return a - (F.nl.g(tt * u, F.B) * u) @ F.w / t ** (F.p - 1)


def _phi_and_slope(F, U, a, x):
    """``phi`` and ``d phi / d log t`` for every row of ``U``."""
    t = np.exp(x)[:, None]
    tu = t * U
    g = F.nl.g(tu, F.B)
    with np.errstate(invalid="ignore", divide="ignore"):
        gsu = np.where(U != 0, F.nl.g_s(tu, F.B) * U * U, 0.0)
    tp1 = t[:, 0] ** (F.p - 1)
    psi = (g * U) @ F.w / tp1
    dpsi = (gsu @ F.w) * t[:, 0] ** (2 - F.p) - (F.p - 1) * psi
    return a - psi, -dpsi


def _fiber_roots(F, U, a, tol, maxiter=200):
    """Zero of the (strictly decreasing) fiber map, bracketed then Newton in log t."""
    m = U.shape[0]
    x = np.zeros(m)
    f, df = _phi_and_slope(F, U, a, x)
    lo = np.full(m, -np.inf)
    hi = np.full(m, np.inf)
    lo[f > 0] = 0.0
    hi[f <= 0] = 0.0
    step = 1.0
    while True:
        need_hi = ~np.isfinite(hi)
        need_lo = ~np.isfinite(lo)
        if not (need_hi.any() or need_lo.any()):
            break
        if step > LOG_T_MAX:
            raise ProjectionFailure(
                "fiber map has no sign change in [1e-12, 1e12]; the nonlinearity "
                "vanishes on the support of the field (b = 0)")
        trial = np.where(need_hi, step, np.where(need_lo, -step, 0.0))
        ft, _ = _phi_and_slope(F, U, a, trial)
        upd_hi = need_hi & (ft <= 0)
        hi[upd_hi] = trial[upd_hi]
        lo[need_hi & (ft > 0)] = trial[need_hi & (ft > 0)]
        upd_lo = need_lo & (ft > 0)
        lo[upd_lo] = trial[upd_lo]
        hi[need_lo & (ft <= 0)] = trial[need_lo & (ft <= 0)]
        step *= 2.0
    x = np.where(f == 0, 0.0, 0.5 * (lo + hi))
    done = np.zeros(m, dtype=bool)
    prev = np.full(m, np.inf)
    it = 0
    for it in range(1, maxiter + 1):
        f, df = _phi_and_slope(F, U, a, x)
        hi = np.where(f <= 0, np.minimum(hi, x), hi)
        lo = np.where(f > 0, np.maximum(lo, x), lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - f / df
        ok = (df < 0) & (newton >= lo) & (newton <= hi)
        x_new = np.where(ok, newton, 0.5 * (lo + hi))
        small = np.abs(f) <= tol * a
        # the Newton update is kept even on the final step
        stop = (small & ok & ((np.abs(x_new - x) <= 4e-16 * (1 + np.abs(x)))
                         | (np.abs(f) >= prev))) \
            | (hi - lo <= 4e-16 * (1 + np.abs(x)))
        prev = np.abs(f)
        x = np.where(done, x, x_new)
        done = done | stop
        if done.all():
            break
    f, _ = _phi_and_slope(F, U, a, x)
    return np.exp(x), np.abs(f) / a, it


def _as_batch(F, u):
    u = F.domain.check(u)
    return u.reshape(-1, u.shape[-1]), u.shape[:-1]


def project(F: Functional, u, tol=1e-10):
    """Scale ``u`` onto the Nehari manifold: the unique ``t > 0`` with ``J(t u) = 0``."""
    U, shape = _as_batch(F, u)
    if not np.all(np.any(U != 0, axis=-1)):
        raise ZeroFieldError("cannot project the zero field")
    a = F.norm_lambda_p(U)
    if np.any(a <= 0):
        raise HypothesisViolation("(A,lambda)", "||u||_lambda^p <= 0 along the fiber")
    t, res, it = _fiber_roots(F, U, a, tol)
    if shape == ():
        return NehariProjection(w=t[0] * U[0], t=float(t[0]), residual=float(res[0]),
                                iterations=it)
    return t.reshape(shape), res.reshape(shape)


def _nodal_system(F, Gp, Gm, mp, mm, Up, Um, t, s):
    """Partials of ``psi(t, s) = S(t u+ + s u-)`` and their Jacobian, batched."""
    p = F.p
    T = t[:, None, None]
    Sv = s[:, None, None]
    Gw = T * Gp + Sv * Gm
    sq0 = np.sum(Gw * Gw, axis=1)
    # the flux is exact; eps_reg only tames the Jacobian for p < 2
    sq = sq0 + F.spec.eps_reg if p < 2 else sq0
    with np.errstate(divide="ignore", invalid="ignore"):
        f0 = np.where(sq0 > 0, sq0 ** ((p - 2) / 2), 0.0)
        f1 = np.where(sq > 0, sq ** ((p - 2) / 2), 0.0)
        f2 = np.where(sq > 0, (p - 2) * sq ** ((p - 4) / 2), 0.0) if p != 2 else 0.0
    wp = np.sum(Gw * Gp, axis=1)
    wm = np.sum(Gw * Gm, axis=1)
    pp = np.sum(Gp * Gp, axis=1)
    mmx = np.sum(Gm * Gm, axis=1)
    pm = np.sum(Gp * Gm, axis=1)
    vol = F.vol
    tu = t[:, None] * Up
    su = s[:, None] * Um
    gp_, gm_ = F.nl.g(tu, F.B), F.nl.g(su, F.B)
    with np.errstate(invalid="ignore"):
        gsp = np.where(Up != 0, F.nl.g_s(tu, F.B) * Up * Up, 0.0)
        gsm = np.where(Um != 0, F.nl.g_s(su, F.B) * Um * Um, 0.0)
    lam = F.lam
    Fp = (f0 * wp) @ vol - lam * t ** (p - 1) * mp - (gp_ * Up) @ F.w
    Fm = (f0 * wm) @ vol - lam * s ** (p - 1) * mm - (gm_ * Um) @ F.w
    Jpp = (f1 * pp + f2 * wp * wp) @ vol - lam * (p - 1) * t ** (p - 2) * mp - gsp @ F.w
    Jmm = (f1 * mmx + f2 * wm * wm) @ vol - lam * (p - 1) * s ** (p - 2) * mm - gsm @ F.w
    Jpm = (f1 * pm + f2 * wp * wm) @ vol
    return Fp, Fm, Jpp, Jmm, Jpm


def _coupled_scales(F, Up, Um, t0, s0, tol, maxiter=100):
    """Newton on the 2x2 system in log-scales with backtracking on the residual."""
    Gp = F.cell_gradients(Up)
    Gm = F.cell_gradients(Um)
    mp = F.mass_term(Up)
    mm = F.mass_term(Um)
    t, s = t0.copy(), s0.copy()

    def scaled(t, s):
        Fp, Fm, Jpp, Jmm, Jpm = _nodal_system(F, Gp, Gm, mp, mm, Up, Um, t, s)
        W = t[:, None] * Up + s[:, None] * Um
        norm = np.abs(F.norm_lambda_p(W))
        res = (np.abs(t * Fp) + np.abs(s * Fm)) / norm
        return Fp, Fm, Jpp, Jmm, Jpm, res

    Fp, Fm, Jpp, Jmm, Jpm, res = scaled(t, s)
    done = res <= 1e-3 * tol
    it = 0
    for it in range(1, maxiter + 1):
        if done.all():
            break
        # d/dlog t of Fp is t * Jpp, etc.
        a11, a12, a21, a22 = t * Jpp, s * Jpm, t * Jpm, s * Jmm
        det = a11 * a22 - a12 * a21
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = -(a22 * Fp - a12 * Fm) / det
            dy = -(-a21 * Fp + a11 * Fm) / det
        bad = ~np.isfinite(dx) | ~np.isfinite(dy)
        dx = np.where(bad, 0.0, np.clip(dx, -2.0, 2.0))
        dy = np.where(bad, 0.0, np.clip(dy, -2.0, 2.0))
        alpha = np.ones_like(t)
        new_t, new_s, new_res = t, s, res
        pending = ~done
        for _ in range(30):
            tt = np.where(pending, t * np.exp(alpha * dx), t)
            ss = np.where(pending, s * np.exp(alpha * dy), s)
            out = scaled(tt, ss)
            better = pending & (out[-1] < res)
            new_t = np.where(better, tt, new_t)
            new_s = np.where(better, ss, new_s)
            new_res = np.where(better, out[-1], new_res)
            pending = pending & ~better
            if not pending.any():
                break
            alpha = np.where(pending, 0.5 * alpha, alpha)
        stalled = ~done & (new_res >= res)
        t, s = new_t, new_s
        Fp, Fm, Jpp, Jmm, Jpm, res = scaled(t, s)
        # a stalled row is final: accepted if within tol, reported as failed otherwise
        done = done | (res <= 1e-3 * tol) | stalled
    return t, s, res, it


def project_nodal(F: Functional, u, tol=1e-10, coupled=True):
    """Scale ``u^+`` and ``u^-`` independently so that ``w`` lies on the nodal set.

    For a single field returns a :class:`NehariProjection`.  For a batch
    (2-D input) returns arrays ``(t, s, residual)``; rows whose residual exceeds
    ``tol`` did not converge and are left for the caller to discard.
    """
    U, shape = _as_batch(F, u)
    Up, Um = positive_part(U), negative_part(U)
    if not (np.all(np.any(Up != 0, axis=-1)) and np.all(np.any(Um != 0, axis=-1))):
        raise NotSignChangingError("nodal projection needs u+ and u- both non-zero")
    ap, am = F.norm_lambda_p(Up), F.norm_lambda_p(Um)
    if np.any(ap <= 0) or np.any(am <= 0):
        raise HypothesisViolation("(A,lambda)", "||u^+-||_lambda^p <= 0")
    t, res_p, it_p = _fiber_roots(F, Up, ap, tol)
    s, res_m, it_m = _fiber_roots(F, Um, am, tol)
    iterations = it_p + it_m
    if coupled:
        t, s, res, it_c = _coupled_scales(F, Up, Um, t, s, tol)
        if shape == () and res[0] > tol:
            raise ProjectionFailure(
                f"coupled nodal projection did not converge (residual {res.max():.3e})")
        iterations += it_c
    W = t[:, None] * Up + s[:, None] * Um
    if not coupled:
        norm = F.norm_lambda_p(W)
        res = (np.abs(F.J(t[:, None] * Up)) + np.abs(F.J(s[:, None] * Um))) / norm
    if shape != ():
        return t.reshape(shape), s.reshape(shape), res.reshape(shape)
    w = W[0]
    Sw = float(F.S(w))
    cross = Sw - float(F.S(positive_part(w))) - float(F.S(negative_part(w)))
    return NehariProjection(w=w, t=float(t[0]), t_minus=float(s[0]), residual=float(res[0]),
                            iterations=iterations, coupling=cross / abs(Sw),
                            coupling_bound=interface_share(F, w))


def interface_share(F: Functional, w):
    """Share of the gradient energy of ``w`` carried by cells where both parts vary."""
    gp = F.cell_gradients(positive_part(w))
    gm = F.cell_gradients(negative_part(w))
    mixed = (np.abs(gp).sum(axis=-2) > 0) & (np.abs(gm).sum(axis=-2) > 0)
    dens = np.sum(F.cell_gradients(w) ** 2, axis=-2) ** (F.p / 2) * F.vol
    total = dens.sum()
    return float(dens[mixed].sum() / total) if total > 0 else 0.0


def delta_lambda_estimate(F: Functional, probes):
    """Probe-relative Nehari radius ``C^{-1/(q-p)}``, ``C = max sum w B|u|^q / ||u||^q``."""
    P = np.atleast_2d(F.domain.check(probes))
    if P.shape[0] == 0:
        raise ValueError("probe set must be non-empty")
    q, p = F.nl.q, F.p
    ratios = F.bq_mass(P) / F.norm_lambda(P) ** q
    C = float(np.max(ratios))
    return C ** (-1.0 / (q - p))


def membership(F: Functional, u, tol=1e-8, zero_tol=None):
    """Flags for ``N``, ``N+``, ``N-`` and the nodal set ``M`` (coupled pairing)."""
    u = F.domain.check(u)
    flags = {"N": False, "N_plus": False, "N_minus": False, "M": False}
    amax = float(np.max(np.abs(u), initial=0.0))
    if amax == 0:
        return flags
    if zero_tol is None:
        zero_tol = 1e-8 * amax
    norm = float(F.norm_lambda_p(u))
    if norm <= 0:
        return flags
    jp, jm = F.part_pairings(u)
    has_pos = bool(np.any(u > zero_tol))
    has_neg = bool(np.any(u < -zero_tol))
    flags["N"] = abs(jp + jm) <= tol * norm
    flags["N_plus"] = flags["N"] and not has_neg
    flags["N_minus"] = flags["N"] and not has_pos
    flags["M"] = has_pos and has_neg and abs(jp) <= tol * norm and abs(jm) <= tol * norm
    return flags
