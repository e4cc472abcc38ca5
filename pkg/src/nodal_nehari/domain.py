"""Truncated computational domains: nodes, quadrature, gradients, nodal domains.

Two geometries are supported:

* ``radial``: radially symmetric functions on the ball of radius ``R`` in
  dimension ``N``, sampled on ``n`` equispaced radii ``0 = r_0 < ... < r_{n-1} = R``.
* ``cartesian2d``: functions on the box ``[-L, L]^2`` sampled on an
  ``nx x ny`` grid, discretised with P1 triangles (each square cell is split
  along its ``/`` diagonal).

Fields are plain ``numpy`` arrays of nodal values; the last axis runs over
nodes so that batches of fields can be evaluated at once.  Boundary nodes
carry homogeneous Dirichlet data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .errors import DomainMismatchError, InvalidConfigError


def sphere_area(N):
    """Surface measure of the unit sphere in R^N."""
    return 2.0 * pi ** (N / 2.0) / gamma(N / 2.0)


@dataclass(frozen=True, eq=False)
class Domain:
    geometry: str
    dim: int
    size: float                     # R_trunc (radial) or half-width L (cartesian)
    shape: tuple                    # (n,) or (nx, ny)
    coords: np.ndarray              # (n_nodes, 1) radii or (n_nodes, 2) points
    weights: np.ndarray             # nodal (lumped) quadrature weights
    boundary: np.ndarray            # bool mask of Dirichlet nodes
    grad_ops: tuple                 # sparse (n_cells, n_nodes), one per component
    cell_volumes: np.ndarray
    cell_centers: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self):
        return self.weights.shape[0]

    @property
    def n_cells(self):
        return self.cell_volumes.shape[0]

    @property
    def interior(self):
        return ~self.boundary

    @property
    def radius(self):
        """Distance of every node from the origin."""
        if self.geometry == "radial":
            return self.coords[:, 0]
        return np.hypot(self.coords[:, 0], self.coords[:, 1])

    @property
    def mesh_size(self):
        if self.geometry == "radial":
            return self.size / (self.shape[0] - 1)
        return 2.0 * self.size / (min(self.shape) - 1)

    @property
    def measure(self):
        """Closed-form measure of the truncated region."""
        if self.geometry == "radial":
            return sphere_area(self.dim) * self.size ** self.dim / self.dim
        return (2.0 * self.size) ** 2

    @property
    def truncation_radius(self):
        return self.size

    def check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.n_nodes:
            raise DomainMismatchError(
                f"field has {u.shape[-1]} nodal values, domain has {self.n_nodes} nodes")
        return u

    def zero_boundary(self, u):
        u = np.array(self.check(u), dtype=float, copy=True)
        u[..., self.boundary] = 0.0
        return u

    def metadata(self):
        meta = {
            "geometry": self.geometry,
            "dim": self.dim,
            "n_nodes": self.n_nodes,
            "n_cells": self.n_cells,
            "shape": list(self.shape),
            "measure": self.measure,
        }
        if self.geometry == "radial":
            meta["R_trunc"] = self.size
        else:
            meta["L"] = self.size
        return meta


def build_domain(geometry="radial", *, N=3, R=None, n=None, L=None, nx=None, ny=None):
    """Build a :class:`Domain`.

    ``build_domain("radial", N=3, R=1.0, n=1000)`` or
    ``build_domain("cartesian2d", L=1.0, nx=64, ny=64)``.
    """
    if geometry == "radial":
        return _radial(N, R, n)
    if geometry in ("cartesian2d", "cartesian"):
        return _cartesian(L, nx, ny if ny is not None else nx)
    raise InvalidConfigError(f"unknown geometry {geometry!r}")


def _radial(N, R, n):
    if N is None or int(N) != N or N < 2:
        raise InvalidConfigError(f"radial geometry needs integer N >= 2, got {N}")
    if R is None or not R > 0:
        raise InvalidConfigError(f"truncation radius must be positive, got {R}")
    if n is None or int(n) != n or n < 2:
        raise InvalidConfigError(f"node count must be an integer >= 2, got {n}")
    N, n = int(N), int(n)
    R = float(R)
    r = np.linspace(0.0, R, n)
    h = R / (n - 1)
    omega = sphere_area(N)
    a, b = r[:-1], r[1:]
    # exact moments of the hat functions against r^{N-1}
    m0 = (b ** N - a ** N) / N
    m1 = (b ** (N + 1) - a ** (N + 1)) / (N + 1)
    rising = (m1 - a * m0) / h
    falling = (b * m0 - m1) / h
    weights = np.zeros(n)
    weights[1:] += rising
    weights[:-1] += falling
    weights *= omega

    cells = n - 1
    rows = np.repeat(np.arange(cells), 2)
    cols = np.column_stack([np.arange(cells), np.arange(1, n)]).ravel()
    vals = np.tile([-1.0 / h, 1.0 / h], cells)
    D = sp.csr_matrix((vals, (rows, cols)), shape=(cells, n))

    boundary = np.zeros(n, dtype=bool)
    boundary[-1] = True
    return Domain(
        geometry="radial", dim=N, size=R, shape=(n,),
        coords=r[:, None], weights=weights, boundary=boundary,
        grad_ops=(D,), cell_volumes=omega * m0, cell_centers=0.5 * (a + b)[:, None],
    )


def _cartesian(L, nx, ny):
    if L is None or not L > 0:
        raise InvalidConfigError(f"half-width must be positive, got {L}")
    for m in (nx, ny):
        if m is None or int(m) != m or m < 3:
            raise InvalidConfigError(f"grid sizes must be integers >= 3, got {nx}x{ny}")
    nx, ny, L = int(nx), int(ny), float(L)
    x = np.linspace(-L, L, nx)
    y = np.linspace(-L, L, ny)
    hx, hy = x[1] - x[0], y[1] - y[0]
    X, Y = np.meshgrid(x, y, indexing="ij")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange(nx * ny).reshape(nx, ny)

    i00 = idx[:-1, :-1].ravel()
    i10 = idx[1:, :-1].ravel()
    i01 = idx[:-1, 1:].ravel()
    i11 = idx[1:, 1:].ravel()
    nc = i00.size
    # lower triangle (00, 10, 11) then upper triangle (00, 11, 01)
    ones = np.ones(nc)
    rows_lo = np.arange(nc)
    rows_up = nc + np.arange(nc)
    Dx = sp.csr_matrix(
        (np.concatenate([-ones, ones, -ones, ones]) / hx,
         (np.concatenate([rows_lo, rows_lo, rows_up, rows_up]),
          np.concatenate([i00, i10, i01, i11]))),
        shape=(2 * nc, nx * ny))
    Dy = sp.csr_matrix(
        (np.concatenate([-ones, ones, -ones, ones]) / hy,
         (np.concatenate([rows_lo, rows_lo, rows_up, rows_up]),
          np.concatenate([i10, i11, i00, i01]))),
        shape=(2 * nc, nx * ny))

    area = 0.5 * hx * hy
    weights = np.zeros(nx * ny)
    for tri in ((i00, i10, i11), (i00, i11, i01)):
        for v in tri:
            np.add.at(weights, v, area / 3.0)
    centers = np.concatenate([
        (coords[i00] + coords[i10] + coords[i11]) / 3.0,
        (coords[i00] + coords[i11] + coords[i01]) / 3.0,
    ])
    boundary = np.zeros((nx, ny), dtype=bool)
    boundary[0, :] = boundary[-1, :] = boundary[:, 0] = boundary[:, -1] = True
    return Domain(
        geometry="cartesian2d", dim=2, size=L, shape=(nx, ny),
        coords=coords, weights=weights, boundary=boundary.ravel(),
        grad_ops=(Dx, Dy), cell_volumes=np.full(2 * nc, area), cell_centers=centers,
    )


def random_smooth_field(d: Domain, rng, n_bumps=3, positive=False):
    """Sum of Gaussian bumps with random centres, widths and amplitudes."""
    u = np.zeros(d.n_nodes)
    for _ in range(n_bumps):
        width = d.size * rng.uniform(0.1, 0.35)
        amp = rng.uniform(0.5, 1.5) * (1.0 if positive else rng.choice([-1.0, 1.0]))
        if d.geometry == "radial":
            centre = rng.uniform(0.0, 0.5) * d.size
            dist2 = (d.radius - centre) ** 2
        else:
            centre = rng.uniform(-0.5, 0.5, size=2) * d.size
            dist2 = np.sum((d.coords - centre) ** 2, axis=1)
        u += amp * np.exp(-dist2 / (2 * width ** 2))
    return d.zero_boundary(u)


def integrate(d: Domain, f):
    """Quadrature sum of nodal values (batched over leading axes)."""
    f = d.check(f)
    return f @ d.weights


def positive_part(u):
    return np.maximum(u, 0.0)


def negative_part(u):
    """``u^-`` with the convention ``u = u^+ + u^-``, so ``u^- <= 0``."""
    return np.minimum(u, 0.0)


def gradient_field(d: Domain, u):
    """Per-cell gradient, shape ``(..., dim_grad, n_cells)``.

    Radial domains return ``du/dr`` per radial cell (one component); Cartesian
    domains return ``(du/dx, du/dy)`` per triangle.
    """
    u = d.check(u)
    flat = u.reshape(-1, d.n_nodes)
    comps = [(D @ flat.T).T for D in d.grad_ops]
    out = np.stack(comps, axis=-2)
    return out.reshape(u.shape[:-1] + out.shape[-2:])


def stiffness_matrix(d: Domain):
    """Sparse matrix of the quadratic form ``sum_cells vol |grad u|^2``."""
    if "stiffness" not in d._cache:
        V = sp.diags(d.cell_volumes)
        d._cache["stiffness"] = sum(D.T @ V @ D for D in d.grad_ops).tocsr()
    return d._cache["stiffness"]


def count_nodal_domains(d: Domain, u, zero_tol=None):
    """Number of connected sign-constant components of ``{|u| > zero_tol}``.

    The default tolerance is ``1e-8 * max|u|``.
    """
    u = d.check(u)
    if zero_tol is None:
        zero_tol = 1e-8 * float(np.max(np.abs(u), initial=0.0))
    if zero_tol < 0:
        raise InvalidConfigError("zero_tol must be non-negative")
    pos = u > zero_tol
    neg = u < -zero_tol
    if d.geometry == "radial":
        count = 0
        for mask in (pos, neg):
            starts = mask & ~np.concatenate([[False], mask[:-1]])
            count += int(starts.sum())
        return count
    four = ndimage.generate_binary_structure(2, 1)
    return sum(ndimage.label(m.reshape(d.shape), structure=four)[1] for m in (pos, neg))


def tail_mass(d: Domain, values):
    """Fraction of ``integral(values)`` carried by ``|x| > R_trunc / 2``."""
    values = d.check(values)
    total = integrate(d, values)
    if total == 0:
        return 0.0
    outer = d.radius > 0.5 * d.size
    return float(integrate(d, np.where(outer, values, 0.0)) / total)


def interface_cells(d: Domain, u):
    """Cells on which both ``u^+`` and ``u^-`` have a non-zero gradient."""
    gp = gradient_field(d, positive_part(u))
    gm = gradient_field(d, negative_part(u))
    return (np.abs(gp).sum(axis=-2) > 0) & (np.abs(gm).sum(axis=-2) > 0)


def write_field_csv(path, d: Domain, columns: dict):
    """One row per node: coordinates followed by the named value columns."""
    names = ["r"] if d.geometry == "radial" else ["x", "y"]
    cols = [d.check(v) for v in columns.values()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + list(columns))
        for k in range(d.n_nodes):
            w.writerow([repr(float(c)) for c in d.coords[k]] + [repr(float(v[k])) for v in cols])


def read_field_csv(path, d: Domain, column=None):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    j = len(header) - 1 if column is None else header.index(column)
    values = np.array([float(r[j]) for r in body])
    return d.check(values)


def write_domain_json(path, d: Domain):
    with open(path, "w") as fh:
        json.dump(d.metadata(), fh, indent=2, sort_keys=True)
        fh.write("\n")
