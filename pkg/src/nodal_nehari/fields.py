"""Coefficient weights ``A``, ``B`` and the nonlinearity ``g`` with its derived
quantities, plus sampling-based checks of the structural hypotheses."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .domain import Domain, integrate
from .errors import InvalidConfigError

PROFILES = ("gaussian", "compact_bump", "constant", "tabulated")


@dataclass(frozen=True)
class WeightField:
    """A non-negative weight profile, radially symmetric about the origin.

    ``gaussian``: ``a * exp(-|x|^2 / (2 width^2))``;
    ``compact_bump``: ``a * exp(1 - 1/(1 - (|x|/radius)^2))`` inside the ball;
    ``constant``: ``a``; ``tabulated``: nodal values in domain order.
    """

    profile: str = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    values: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise InvalidConfigError(f"unknown weight profile {self.profile!r}")
        if self.profile == "tabulated":
            if self.values is None:
                raise InvalidConfigError("tabulated weight needs values")
            vals = np.asarray(self.values, dtype=float)
            if not np.all(np.isfinite(vals)) or np.any(vals < 0):
                raise InvalidConfigError("tabulated weight must be finite and non-negative")
            return
        if not (np.isfinite(self.amplitude) and self.amplitude >= 0):
            raise InvalidConfigError(f"amplitude must be finite and >= 0, got {self.amplitude}")
        if self.profile != "constant" and not self.width > 0:
            raise InvalidConfigError(f"width must be positive, got {self.width}")

    @classmethod
    def from_csv(cls, path, column=None):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        j = len(header) - 1 if column is None else header.index(column)
        return cls(profile="tabulated", values=tuple(float(r[j]) for r in rows[1:]))

    def sample(self, d: Domain):
        r = d.radius
        a = self.amplitude
        if self.profile == "gaussian":
            out = a * np.exp(-0.5 * (r / self.width) ** 2)
        elif self.profile == "compact_bump":
            s = np.clip(r / self.width, 0.0, 1.0)
            with np.errstate(divide="ignore", over="ignore"):
                out = np.where(s < 1.0, a * np.exp(1.0 - 1.0 / (1.0 - s ** 2)), 0.0)
        elif self.profile == "constant":
            out = np.full(d.n_nodes, float(a))
        else:
            out = d.check(np.asarray(self.values, dtype=float))
        return out

    def vanishes_somewhere(self):
        """True if the profile is zero on a set of positive measure (of R^N)."""
        if self.profile == "compact_bump":
            return True
        if self.profile == "tabulated":
            return bool(np.any(np.asarray(self.values) == 0))
        return self.amplitude == 0

    def as_dict(self):
        d = {"profile": self.profile}
        if self.profile == "tabulated":
            d["n_values"] = len(self.values)
        else:
            d["amplitude"] = self.amplitude
            if self.profile != "constant":
                d["width"] = self.width
        return d


def check_A_weight(A: WeightField):
    """Construction-time gate for the linear coefficient: ``A > 0`` a.e."""
    if A.vanishes_somewhere():
        raise InvalidConfigError(
            f"weight A must be positive a.e.; profile {A.profile!r} vanishes on a set of "
            "positive measure")
    return A


class Nonlinearity:
    """Base class for ``g(x, s)``.

    Subclasses implement :meth:`g`, :meth:`g_s` and :meth:`G` as vectorised
    functions of the nodal weight ``b = B(x)`` and the value ``s``.  ``q`` is
    the growth exponent and ``bound_constant() * B`` the weight of the
    derivative bound ``|g_s| <= C B |s|^{q-2}``.
    """

    q: float
    B: WeightField

    def g(self, s, b):
        raise NotImplementedError

    def g_s(self, s, b):
        raise NotImplementedError

    def G(self, s, b):
        raise NotImplementedError

    def h(self, s, b, p):
        return self.g(s, b) * s / p - self.G(s, b)

    def theta(self):
        """Analytic Ambrosetti-Rabinowitz exponent, if known."""
        return None

    def bound_constant(self):
        return 1.0

    def as_dict(self):
        return {"form": type(self).__name__, "q": self.q, "B": self.B.as_dict()}


@dataclass(frozen=True)
class PowerNonlinearity(Nonlinearity):
    """``g(x, s) = B(x) |s|^{q-2} s``."""

    q: float = 4.0
    B: WeightField = field(default_factory=WeightField)

    def __post_init__(self):
        if not self.q > 1:
            raise InvalidConfigError(f"exponent q must exceed 1, got {self.q}")

    def g(self, s, b):
        return b * _signed_pow(np.asarray(s, dtype=float), self.q - 1)

    def g_s(self, s, b):
        a = np.abs(np.asarray(s, dtype=float))
        with np.errstate(divide="ignore"):
            return (self.q - 1) * b * a ** (self.q - 2)

    def G(self, s, b):
        return b * np.abs(np.asarray(s, dtype=float)) ** self.q / self.q

    def h(self, s, b, p):
        return (1.0 / p - 1.0 / self.q) * b * np.abs(np.asarray(s, dtype=float)) ** self.q

    def theta(self):
        return self.q

    def bound_constant(self):
        # g_s = (q-1) B |s|^{q-2}: the derivative bound holds with weight (q-1) B
        return self.q - 1.0


def _signed_pow(s, e):
    return np.sign(s) * np.abs(s) ** e


def eval_g(nl: Nonlinearity, b, s):
    return nl.g(s, b)


def eval_gs(nl: Nonlinearity, b, s):
    return nl.g_s(s, b)


def eval_G(nl: Nonlinearity, b, s):
    return nl.G(s, b)


def eval_h(nl: Nonlinearity, b, s, p):
    return nl.h(s, b, p)


def default_s_grid(points=64, lo=1e-6, hi=1e3):
    """Log-spaced sample of ``|s|`` mirrored to both signs."""
    mag = np.geomspace(lo, hi, points)
    return np.concatenate([-mag[::-1], mag])


@dataclass
class HypothesisReport:
    results: dict
    details: dict

    @property
    def passed(self):
        return all(self.results.values())

    def failing(self):
        return [k for k, v in self.results.items() if not v]

    def as_dict(self):
        return {"passed": self.passed, "results": dict(self.results), "details": self.details}


def check_hypotheses(spec, d: Domain, nodes=None, s_grid=None, n_balls=8):
    """Sampling certificate for (A1), (A2), (g1), (g2), (g3).

    ``nodes`` selects the sampled nodes (default: every interior node);
    ``s_grid`` the sampled values of ``s`` (default: :func:`default_s_grid`).
    These are numerical checks on finite samples, not proofs.
    """
    if nodes is None:
        nodes = np.flatnonzero(d.interior)
    nodes = np.asarray(nodes, dtype=int)
    s = default_s_grid() if s_grid is None else np.asarray(s_grid, dtype=float)
    if nodes.size == 0 or s.size == 0:
        raise InvalidConfigError("hypothesis check needs a non-empty node sample and s-grid")
    p, N = spec.p, spec.N
    nl = spec.nonlinearity
    A = spec.A.sample(d)
    B = nl.B.sample(d)
    results, details = {}, {}

    # (A1): A > 0, bounded, A^{-1/(p-1)} integrable on a family of balls
    Ain = A[nodes]
    balls = np.linspace(d.size / n_balls, d.size, n_balls)
    loc = []
    with np.errstate(divide="ignore"):
        inv = np.where(A > 0, A ** (-1.0 / (p - 1.0)), np.inf)
    for rad in balls:
        inside = d.interior & (d.radius <= rad)
        loc.append(float(integrate(d, np.where(inside, inv, 0.0))))
    a1 = bool(np.all(Ain > 0) and np.all(np.isfinite(Ain)) and np.all(np.isfinite(loc)))
    results["A1"] = a1
    details["A1"] = {"min_A": float(Ain.min()), "max_A": float(Ain.max()),
                     "local_integrals": loc}

    # (A2): A in L^{N/p}; on the truncated domain, ask the mass to sit inside R/2
    powA = A ** (N / p)
    total = float(integrate(d, powA))
    inner = float(integrate(d, np.where(d.radius <= 0.5 * d.size, powA, 0.0)))
    tail = 1.0 - inner / total if total > 0 else 1.0
    results["A2"] = bool(np.isfinite(total) and tail <= 0.1)
    details["A2"] = {"integral": total, "tail_fraction": tail}

    bb = B[nodes][:, None]
    ss = s[None, :]
    gs = nl.g_s(ss, bb)
    bound = nl.bound_constant() * bb * np.abs(ss) ** (nl.q - 2)
    g1_ok = bool(np.all(np.abs(gs) <= bound * (1 + 1e-12) + 1e-300))
    window = p < nl.q < spec.p_star
    results["g1"] = bool(g1_ok and window and np.all(B >= 0) and np.any(B > 0))
    details["g1"] = {"derivative_bound": g1_ok, "exponent_window": bool(window),
                     "B_positive_everywhere": bool(np.all(B[nodes] > 0))}

    # (g2): g s >= theta G > 0 for |s| >= R with some theta > p
    theta = nl.theta()
    gsv = nl.g(ss, bb) * ss
    Gv = nl.G(ss, bb)
    pos = (bb > 0).ravel()
    if theta is not None:
        ok = bool(theta > p and np.all(gsv[pos] >= theta * Gv[pos] * (1 - 1e-12)))
        results["g2"] = ok
        details["g2"] = {"theta": float(theta), "R": float(np.abs(s).min()), "analytic": True}
    else:
        results["g2"], details["g2"] = _search_g2(gsv[pos], Gv[pos], s, p)

    # (g3): s -> g(x,s)/|s|^{p-1} strictly increasing on each sampled sign branch
    ratio = nl.g(ss, bb) / np.abs(ss) ** (p - 1)
    order = np.argsort(s)
    diffs = np.diff(ratio[:, order], axis=1)
    nonzero_s = np.diff(np.sign(s[order])) == 0
    inc = bool(np.all(diffs[pos][:, nonzero_s] > 0))
    small = np.abs(s) == np.abs(s).min()
    results["g3"] = inc
    details["g3"] = {"strictly_increasing": inc,
                     "ratio_at_smallest_s": float(np.abs(ratio[:, small]).max())}
    return HypothesisReport(results, details)


def _search_g2(gsv, Gv, s, p):
    """Smallest sampled threshold R and the theta it supports (not claimed minimal)."""
    mags = np.unique(np.abs(s))
    for R in mags:
        sel = np.abs(s) >= R
        G = Gv[:, sel]
        if np.any(G <= 0):
            continue
        theta = float(np.min(gsv[:, sel] / G))
        if theta > p:
            return True, {"theta": theta, "R": float(R), "analytic": False}
    return False, {"theta": None, "R": None, "analytic": False}
