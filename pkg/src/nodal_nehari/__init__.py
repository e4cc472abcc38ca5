"""Positive, negative and two-nodal-domain solutions of

    -Delta_p u = lam A(x) |u|^{p-2} u + g(x, u)

on truncated domains, computed by constrained minimisation on the Nehari
manifold and its sign-changing subset.
"""

from .domain import Domain, build_domain, count_nodal_domains, integrate
from .eigen import EigenResult, check_Alambda, minimize_rayleigh
from .errors import (DegenerateFieldError, DomainMismatchError, HypothesisViolation,
                     InvalidConfigError, NehariError, NotSignChangingError, ProjectionFailure,
                     ZeroFieldError)
from .fields import PowerNonlinearity, WeightField, check_hypotheses
from .functional import Functional, ProblemSpec, norm_equivalence_constants
from .nehari import membership, project, project_nodal
from .optimize import Solution, SolverConfig, solve_all, solve_constant_sign, solve_nodal
from .verify import (CheckReport, brute_force_oracle, fd_gradient_check, fiber_property_check,
                     invariant_suite, miranda_check, shooting_eigenvalue)

__all__ = [
    "Domain", "build_domain", "count_nodal_domains", "integrate",
    "EigenResult", "check_Alambda", "minimize_rayleigh",
    "DegenerateFieldError", "DomainMismatchError", "HypothesisViolation", "InvalidConfigError",
    "NehariError", "NotSignChangingError", "ProjectionFailure", "ZeroFieldError",
    "PowerNonlinearity", "WeightField", "check_hypotheses",
    "Functional", "ProblemSpec", "norm_equivalence_constants",
    "membership", "project", "project_nodal",
    "Solution", "SolverConfig", "solve_all", "solve_constant_sign", "solve_nodal",
    "CheckReport", "brute_force_oracle", "fd_gradient_check", "fiber_property_check",
    "invariant_suite", "miranda_check", "shooting_eigenvalue",
]
