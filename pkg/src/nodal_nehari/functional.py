"""Discrete energy, its derivative, the Nehari functional and the two norms.

The discrete functional on a :class:`~nodal_nehari.domain.Domain` is

    S(u) = 1/p * sum_cells vol |grad u|^p
           - lam/p * sum_nodes w A |u|^p
           - sum_nodes w G(x, u)

and the duality pairing is the quadrature-weighted nodal sum, so that
``pairing(gradient(u), v)`` is exactly the directional derivative of ``S``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .domain import Domain, negative_part, positive_part
from .errors import DomainMismatchError, HypothesisViolation, InvalidConfigError
from .fields import Nonlinearity, PowerNonlinearity, WeightField, check_A_weight


@dataclass(frozen=True)
class ProblemSpec:
    """``-Delta_p u = lam A |u|^{p-2} u + g(x, u)``.

    With ``strict=False`` the exponent window ``1 < p < N``, ``p < q < p*`` is
    not enforced; the discrete functional is still well defined, which is what
    derivative checks on arbitrary ``p`` need.
    """

    p: float = 2.0
    N: int = 3
    lam: float = 0.0
    A: WeightField = field(default_factory=WeightField)
    nonlinearity: Nonlinearity = field(default_factory=PowerNonlinearity)
    eps_reg: float = 1e-12
    strict: bool = True

    def __post_init__(self):
        if not self.p > 1:
            raise InvalidConfigError(f"p must exceed 1, got {self.p}")
        if self.eps_reg < 0:
            raise InvalidConfigError("eps_reg must be non-negative")
        check_A_weight(self.A)
        if self.strict:
            if not self.p < self.N:
                raise InvalidConfigError(f"need 1 < p < N, got p={self.p}, N={self.N}")
            q = self.nonlinearity.q
            if not self.p < q < self.p_star:
                raise InvalidConfigError(
                    f"exponent window violated: need p < q < p* = {self.p_star:g}, got q={q}")

    @property
    def p_star(self):
        return np.inf if self.p >= self.N else self.N * self.p / (self.N - self.p)

    @property
    def q(self):
        return self.nonlinearity.q

    def with_lambda(self, lam):
        return ProblemSpec(self.p, self.N, lam, self.A, self.nonlinearity, self.eps_reg,
                           self.strict)

    def as_dict(self):
        return {"p": self.p, "N": self.N, "lambda": self.lam, "A": self.A.as_dict(),
                "nonlinearity": self.nonlinearity.as_dict(), "eps_reg": self.eps_reg}


@dataclass(frozen=True)
class EnergyBreakdown:
    p: float
    lam: float
    gradient_term: float     # sum vol |grad u|^p
    mass_term: float         # sum w A |u|^p
    potential: float         # sum w G(x, u)
    nonlinear_mass: float    # sum w g(x, u) u

    @property
    def norm_lambda_p(self):
        return self.gradient_term - self.lam * self.mass_term

    @property
    def S(self):
        return self.norm_lambda_p / self.p - self.potential

    @property
    def J(self):
        return self.norm_lambda_p - self.nonlinear_mass

    def as_dict(self):
        return {"gradient_term": self.gradient_term, "mass_term": self.mass_term,
                "potential": self.potential, "nonlinear_mass": self.nonlinear_mass,
                "norm_lambda_p": self.norm_lambda_p, "S": self.S, "J": self.J}


class Functional:
    """A :class:`ProblemSpec` bound to a :class:`Domain` (weights sampled once)."""

    def __init__(self, spec: ProblemSpec, domain: Domain):
        if spec.N != domain.dim:
            raise DomainMismatchError(
                f"problem dimension N={spec.N} but domain has dim {domain.dim}")
        self.spec = spec
        self.domain = domain
        self.p = spec.p
        self.lam = spec.lam
        self.nl = spec.nonlinearity
        self.A = spec.A.sample(domain)
        self.B = self.nl.B.sample(domain)
        self.w = domain.weights
        self.vol = domain.cell_volumes
        self.free = domain.interior

    # -- cell and nodal building blocks (batched over leading axes) --------

    def cell_gradients(self, u):
        d = self.domain
        flat = u.reshape(-1, d.n_nodes)
        comps = np.stack([(D @ flat.T).T for D in d.grad_ops], axis=-2)
        return comps.reshape(u.shape[:-1] + comps.shape[-2:])

    def gradient_term(self, u):
        g = self.cell_gradients(u)
        return (np.sum(g * g, axis=-2) ** (self.p / 2)) @ self.vol

    def mass_term(self, u):
        return (np.abs(u) ** self.p) @ (self.w * self.A)

    def potential(self, u):
        return self.nl.G(u, self.B) @ self.w

    def nonlinear_mass(self, u):
        return (self.nl.g(u, self.B) * u) @ self.w

    def bq_mass(self, u):
        """``sum w B |u|^q``."""
        return (np.abs(u) ** self.nl.q) @ (self.w * self.B)

    def norm_lambda_p(self, u):
        return self.gradient_term(u) - self.lam * self.mass_term(u)

    # -- spec-level quantities ---------------------------------------------

    def energy(self, u) -> EnergyBreakdown:
        u = self.domain.check(u)
        gt = float(self.gradient_term(u))
        mt = float(self.mass_term(u))
        if gt - self.lam * mt < -1e-12 * max(gt, 1e-300):
            raise HypothesisViolation("(A,lambda)", "negative radicand in ||u||_lambda^p")
        return EnergyBreakdown(self.p, self.lam, gt, mt, float(self.potential(u)),
                               float(self.nonlinear_mass(u)))

    def S(self, u):
        u = self.domain.check(u)
        return self.norm_lambda_p(u) / self.p - self.potential(u)

    def J(self, u):
        u = self.domain.check(u)
        return self.norm_lambda_p(u) - self.nonlinear_mass(u)

    def norm_WA(self, u):
        u = self.domain.check(u)
        return (self.gradient_term(u) + self.mass_term(u)) ** (1.0 / self.p)

    def norm_lambda(self, u):
        u = self.domain.check(u)
        val = self.norm_lambda_p(u)
        scale = self.gradient_term(u) + abs(self.lam) * self.mass_term(u)
        if np.any(val < -1e-12 * scale):
            raise HypothesisViolation("(A,lambda)", "||u||_lambda^p is negative")
        return np.maximum(val, 0.0) ** (1.0 / self.p)

    def _flux(self, g):
        """``|grad u|^{p-2} grad u`` per cell.

        The flux itself is continuous (it behaves like ``|grad u|^{p-1}``), so it
        is evaluated exactly, with value 0 where the gradient vanishes; ``eps_reg``
        only enters the linearisation (:meth:`hessian`) for p < 2.
        """
        sq = np.sum(g * g, axis=-2, keepdims=True)
        if self.p == 2:
            return g
        with np.errstate(divide="ignore", invalid="ignore"):
            fac = np.where(sq > 0, sq ** ((self.p - 2) / 2), 0.0)
        return fac * g

    def gradient_term_derivative(self, u):
        """Derivative of ``sum vol |grad u|^p`` w.r.t. nodal values."""
        d = self.domain
        flux = self._flux(self.cell_gradients(u)) * self.vol
        flat = flux.reshape((-1,) + flux.shape[-2:])
        r = sum((D.T @ flat[:, k, :].T).T for k, D in enumerate(d.grad_ops))
        return self.p * r.reshape(u.shape)

    def mass_term_derivative(self, u):
        return self.p * self.w * self.A * np.abs(u) ** (self.p - 1) * np.sign(u)

    def gradient_vector(self, u):
        """Raw derivative ``dS/du_i`` (zero at Dirichlet nodes)."""
        u = self.domain.check(u)
        r = (self.gradient_term_derivative(u) - self.lam * self.mass_term_derivative(u)) / self.p
        r = r - self.w * self.nl.g(u, self.B)
        r[..., ~self.free] = 0.0
        return r

    def hessian(self, u, floor=0.0):
        """Sparse Jacobian of :meth:`gradient_vector` at a single field ``u``.

        Rows and columns of Dirichlet nodes are left empty.  For ``p < 2`` a
        positive ``floor`` adds ``(floor * max |grad u|)^2`` to ``|grad u|^2``,
        which bounds the weights on nearly flat cells.
        """
        u = self.domain.check(u)
        d = self.domain
        p = self.p
        G = self.cell_gradients(u)                         # (ncomp, ncells)
        sq = np.sum(G * G, axis=0)
        if p < 2:
            sq = sq + self.spec.eps_reg + floor ** 2 * float(np.max(sq, initial=0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            f1 = np.where(sq > 0, sq ** ((p - 2) / 2), 0.0)
            f2 = np.where(sq > 0, (p - 2) * sq ** ((p - 4) / 2), 0.0)
        H = None
        for k, Dk in enumerate(d.grad_ops):
            for m, Dm in enumerate(d.grad_ops):
                coef = f2 * G[k] * G[m] + (f1 if k == m else 0.0)
                block = Dk.T @ sp.diags(self.vol * coef) @ Dm
                H = block if H is None else H + block
        with np.errstate(divide="ignore"):
            au = np.abs(u)
            mass = np.where(au > 0, (p - 1) * au ** (p - 2), 0.0) if p != 2 else np.ones_like(u)
        diag = -self.lam * self.w * self.A * mass - self.w * self.nl.g_s(u, self.B)
        H = (H + sp.diags(diag)).tocsr()
        mask = sp.diags(self.free.astype(float))
        return (mask @ H @ mask).tocsr()

    def gradient(self, u):
        """Nodal representative of ``S'(u)`` w.r.t. the quadrature pairing."""
        r = self.gradient_vector(u)
        return r / self.w

    def pairing(self, f, v):
        return (np.asarray(f) * np.asarray(v)) @ self.w

    def part_pairings(self, u):
        """``(<S'(u), u^+>, <S'(u), u^->)``; they sum to ``<S'(u), u>``."""
        r = self.gradient_vector(u)
        return float(r @ positive_part(u)), float(r @ negative_part(u))


def energy(spec, d, u):
    return Functional(spec, d).energy(u)


def norm_WA(spec, d, u):
    return float(Functional(spec, d).norm_WA(u))


def norm_lambda(spec, d, u):
    return float(Functional(spec, d).norm_lambda(u))


def gradient(spec, d, u):
    return Functional(spec, d).gradient(u)


def norm_equivalence_constants(p, lam, lam_A):
    """Constants ``c1, c2`` with ``c1 ||u||_{W_A} <= ||u||_lam <= c2 ||u||_{W_A}``.

    ``c2 = max(1, |lam|)^{1/p}``.  ``c1^p = min(eps, (1-eps)(lam_A-lam) - eps*lam)``
    maximised over ``eps`` in ``(0, 1]``; the two branches balance at
    ``eps = (lam_A - lam) / (1 + lam_A)``.  Returns ``(c1, c2, eps)``.
    """
    if not lam < lam_A:
        raise HypothesisViolation("(A,lambda)", f"lambda={lam} is not below lambda_A={lam_A}")
    c2 = max(1.0, abs(lam)) ** (1.0 / p)
    eps = min(1.0, (lam_A - lam) / (1.0 + lam_A))
    c1p = min(eps, (1.0 - eps) * (lam_A - lam) - eps * lam)
    return c1p ** (1.0 / p), c2, eps
