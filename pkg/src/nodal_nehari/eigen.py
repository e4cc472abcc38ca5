"""Principal weighted eigenvalue ``lambda_A`` via Rayleigh quotient descent."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFieldError
from .functional import Functional
from .precond import Preconditioner

log = logging.getLogger(__name__)

SAFETY = 0.99


@dataclass
class EigenResult:
    lam_A: float
    u: np.ndarray
    history: list = field(default_factory=list)
    R_trunc: float = float("nan")
    converged: bool = True
    iterations: int = 0

    def as_dict(self):
        return {"lambda_A_estimate": self.lam_A, "R_trunc": self.R_trunc,
                "converged": self.converged, "iterations": self.iterations,
                "final_rayleigh": self.history[-1] if self.history else None}


def rayleigh(F: Functional, u):
    u = F.domain.check(u)
    den = F.mass_term(u)
    num = F.gradient_term(u)
    if np.any(den <= 1e-300 + 1e-14 * np.abs(num)):
        raise DegenerateFieldError("weighted mass of the field vanishes")
    return num / den


def default_init(F: Functional):
    """A-weighted Gaussian bump centred at the node where A is largest."""
    d = F.domain
    centre = d.coords[np.argmax(np.where(d.interior, F.A, -np.inf))]
    dist2 = np.sum((d.coords - centre) ** 2, axis=1)
    u = F.A * np.exp(-dist2 / (2.0 * (0.25 * d.size) ** 2))
    return d.zero_boundary(u)


def _normalise(F, u):
    return u / F.mass_term(u) ** (1.0 / F.p)


def minimize_rayleigh(F: Functional, init=None, tol=1e-8, max_iter=10_000,
                      c_armijo=1e-4, backtrack=0.5):
    """Minimise ``sum vol |grad u|^p`` on ``sum w A |u|^p = 1``.

    Preconditioned gradient steps (stiffness metric) with Armijo backtracking,
    renormalising after each step.  Stops when consecutive Rayleigh values
    differ by less than ``tol`` relative.
    """
    d = F.domain
    u = d.zero_boundary(default_init(F) if init is None else init)
    if not np.any(u):
        raise DegenerateFieldError("initial field is zero")
    u = _normalise(F, u)
    P = Preconditioner(F, shift=0.0)
    rho = float(rayleigh(F, u))
    history = [rho]
    converged = False
    k = 0
    for k in range(1, max_iter + 1):
        # mass is 1 on the constraint, so grad rho = dE_grad - rho dE_mass
        g = F.gradient_term_derivative(u) - rho * F.mass_term_derivative(u)
        g[~F.free] = 0.0
        direction = P.apply(g)
        slope = float(g @ direction)
        if slope <= 0:
            converged = True
            break
        # 1/p is exactly an inverse-iteration step when p = 2
        alpha = 1.0 / F.p
        accepted = False
        for _ in range(60):
            trial = _normalise(F, u - alpha * direction)
            r_new = float(rayleigh(F, trial))
            if r_new <= rho - c_armijo * alpha * slope:
                accepted = True
                break
            alpha *= backtrack
        if not accepted or r_new > rho:
            converged = True
            break
        change = (rho - r_new) / abs(rho)
        u, rho = trial, r_new
        history.append(rho)
        if change < tol:
            converged = True
            break
    if not converged:
        log.warning("Rayleigh descent stopped after %d iterations without converging", k)
    return EigenResult(lam_A=rho, u=u, history=history, R_trunc=d.size,
                       converged=converged, iterations=k)


def check_Alambda(lam, result: EigenResult, safety=SAFETY):
    """``(passed, margin)``: passes iff ``lam <= safety * lambda_A_estimate``."""
    margin = safety * result.lam_A - lam
    return bool(lam < 0 or margin >= 0 and lam < result.lam_A), float(margin)
