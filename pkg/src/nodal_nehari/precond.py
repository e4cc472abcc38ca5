"""Fixed sparse SPD metric used as the descent preconditioner."""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .domain import stiffness_matrix
from .errors import SetupError


class Preconditioner:
    """``K + shift * diag(w A)`` restricted to free nodes, factorised once.

    ``K`` is the p = 2 stiffness matrix of the domain; with ``shift = 1`` this is
    the discrete ``-Delta + A`` operator.
    """

    def __init__(self, F, shift=1.0, K=None):
        d = F.domain
        self.free = np.flatnonzero(d.interior)
        K = stiffness_matrix(d) if K is None else K
        P = K + sp.diags(shift * F.w * F.A)
        P = P.tocsc()[self.free][:, self.free]
        try:
            self._lu = splu(P.tocsc())
        except RuntimeError as exc:
            raise SetupError(f"preconditioner factorisation failed: {exc}") from exc
        self.n = d.n_nodes

    def apply(self, r):
        """Solve ``P d = r`` on free nodes; Dirichlet entries of ``d`` are zero."""
        out = np.zeros(self.n)
        out[self.free] = self._lu.solve(np.ascontiguousarray(r[self.free]))
        return out

    def dual_norm(self, r):
        d = self.apply(r)
        return float(np.sqrt(max(r @ d, 0.0)))


def frozen_coefficient(F, u, shift=1.0, floor=1e-3):
    """Metric of the p-Laplacian linearised at ``u`` (coefficient frozen per cell).

    Cell weights are ``(p-1) |grad u|^{p-2}`` with ``|grad u|`` floored at
    ``floor * max |grad u|``; for ``p = 2`` this is the plain stiffness metric.
    """
    d = F.domain
    if F.p == 2:
        return Preconditioner(F, shift)
    sq = np.sum(F.cell_gradients(u) ** 2, axis=-2)
    top = float(sq.max())
    if top == 0:
        return Preconditioner(F, shift)
    coef = (F.p - 1) * np.maximum(sq, floor ** 2 * top) ** ((F.p - 2) / 2)
    V = sp.diags(d.cell_volumes * coef)
    K = sum(D.T @ V @ D for D in d.grad_ops)
    return Preconditioner(F, shift, K=K)
