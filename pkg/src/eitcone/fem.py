"""P1 finite elements for ``div(gamma grad u) = 0`` with piecewise-constant conductivity.

Gradient fields are stored as flat arrays of length ``2 * n_triangles`` with the
x- and y-components of element ``t`` at positions ``2t`` and ``2t + 1``.  The
matching weight ``W`` repeats each element area twice, so ``a @ (W * b)`` is the
L2 inner product of two piecewise-constant vector fields.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import EllipticityError, InvalidArgumentError, SolverError
from .mesh import Mesh

__all__ = [
    "Conductivity",
    "DiscreteOperators",
    "DirichletSolver",
    "discrete_operators",
    "assemble_stiffness",
    "solve_dirichlet",
    "element_gradients",
    "gradient_norm",
    "as_gradient_weights",
]

# dense Cholesky below this many interior nodes, sparse LU above
_DENSE_LIMIT = 2500
RESIDUAL_TARGET = 1e-12


@dataclass(frozen=True, eq=False)
class Conductivity:
    """Per-element positive conductivity with ellipticity bounds.

    ``np.asarray(conductivity)`` returns the values, so a ``Conductivity`` can be
    passed anywhere a per-element array is expected.
    """

    values: np.ndarray
    lower_bound: float = 0.5
    upper_bound: float = 2.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if not 0.0 < self.lower_bound <= self.upper_bound:
            raise EllipticityError(
                f"need 0 < lower_bound <= upper_bound, got ({self.lower_bound}, {self.upper_bound})"
            )
        if not np.all(np.isfinite(values)):
            raise EllipticityError("conductivity has non-finite entries")
        lo, hi = values.min(initial=np.inf), values.max(initial=-np.inf)
        if lo < self.lower_bound or hi > self.upper_bound:
            raise EllipticityError(
                f"conductivity range [{lo:.6g}, {hi:.6g}] leaves the bounds "
                f"[{self.lower_bound}, {self.upper_bound}]"
            )

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.values.size

    @classmethod
    def constant(cls, n_elements: int, value: float = 1.0, lower_bound=0.5, upper_bound=2.0):
        return cls(np.full(n_elements, float(value)), lower_bound, upper_bound)

    @classmethod
    def tight(cls, values) -> "Conductivity":
        """Bounds set to the min and max of ``values``."""
        values = np.asarray(values, dtype=float)
        return cls(values, float(values.min()), float(values.max()))


def check_conductivity(gamma, n_elements: int) -> np.ndarray:
    """Return ``gamma`` as a float array, raising ``EllipticityError`` unless positive and finite."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim == 0:
        gamma = np.full(n_elements, float(gamma))
    gamma = gamma.ravel()
    if gamma.size != n_elements:
        raise InvalidArgumentError(
            f"conductivity has {gamma.size} entries, mesh has {n_elements} elements"
        )
    if not np.all(np.isfinite(gamma)) or np.any(gamma <= 0.0):
        raise EllipticityError("conductivity must be finite and strictly positive on every element")
    return gamma


def as_gradient_weights(values) -> np.ndarray:
    """Repeat a per-element function once per gradient component."""
    return np.repeat(np.asarray(values, dtype=float), 2)


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    """Gradient map ``G`` (all nodes), its interior and boundary column blocks, and weights ``W``."""

    G: sp.csr_matrix
    G_int: sp.csr_matrix
    G_bnd: sp.csr_matrix
    W: np.ndarray
    interior: np.ndarray
    boundary: np.ndarray

    def stiffness(self, gamma, block="full"):
        """``G^T W H_gamma G`` restricted to a column block (``full``, ``int`` or ``int-bnd``)."""
        hw = sp.diags(self.W * as_gradient_weights(gamma))
        if block == "full":
            return (self.G.T @ hw @ self.G).tocsr()
        if block == "int":
            return (self.G_int.T @ hw @ self.G_int).tocsr()
        if block == "int-bnd":
            return (self.G_int.T @ hw @ self.G_bnd).tocsr()
        raise InvalidArgumentError(f"unknown block {block!r}")


def _gradient_matrix(mesh: Mesh) -> sp.csr_matrix:
    p = mesh.nodes[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    two_area = 2.0 * mesh.element_areas
    # gradients of the three barycentric coordinates of every triangle
    gx = np.column_stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]]) / two_area[:, None]
    gy = np.column_stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]]) / two_area[:, None]
    t = np.arange(mesh.n_triangles)
    rows = np.concatenate([np.repeat(2 * t, 3), np.repeat(2 * t + 1, 3)])
    cols = np.concatenate([mesh.triangles.ravel(), mesh.triangles.ravel()])
    vals = np.concatenate([gx.ravel(), gy.ravel()])
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * mesh.n_triangles, mesh.n_nodes))


_OPERATOR_CACHE: dict[int, tuple[Mesh, DiscreteOperators]] = {}


def discrete_operators(mesh: Mesh) -> DiscreteOperators:
    """Build (and memoize per mesh object) the gradient and weight operators."""
    hit = _OPERATOR_CACHE.get(id(mesh))
    if hit is not None and hit[0] is mesh:
        return hit[1]
    G = _gradient_matrix(mesh)
    interior = mesh.interior_nodes
    boundary = mesh.boundary_nodes
    G = G.tocsc()
    ops = DiscreteOperators(
        G=G.tocsr(),
        G_int=G[:, interior].tocsr(),
        G_bnd=G[:, boundary].tocsr(),
        W=as_gradient_weights(mesh.element_areas),
        interior=interior,
        boundary=boundary,
    )
    if len(_OPERATOR_CACHE) > 32:
        _OPERATOR_CACHE.clear()
    _OPERATOR_CACHE[id(mesh)] = (mesh, ops)
    return ops


def assemble_stiffness(mesh: Mesh, gamma) -> sp.csr_matrix:
    """Global stiffness matrix ``G^T W H_gamma G`` over all nodes."""
    gamma = check_conductivity(gamma, mesh.n_triangles)
    return discrete_operators(mesh).stiffness(gamma)


class DirichletSolver:
    """One factorization of the interior stiffness block ``A(gamma)``, reused for many solves.

    The factorization is read-only after construction, so concurrent calls to
    :meth:`solve` and :meth:`solve_interior` are safe.
    """

    def __init__(self, mesh: Mesh, gamma):
        self.mesh = mesh
        self.gamma = check_conductivity(gamma, mesh.n_triangles)
        self.ops = discrete_operators(mesh)
        self.A = self.ops.stiffness(self.gamma, "int")
        self.A_ib = self.ops.stiffness(self.gamma, "int-bnd")
        n_int = self.ops.interior.size
        if n_int == 0:
            self._solve = lambda rhs: np.zeros_like(rhs)
        elif n_int <= _DENSE_LIMIT:
            try:
                factor = scipy.linalg.cho_factor(self.A.toarray(), lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"interior stiffness matrix is not positive definite: {exc}") from exc
            self._solve = lambda rhs: scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        else:
            lu = spla.splu(self.A.tocsc())
            self._solve = lu.solve

    def solve_interior(self, rhs: np.ndarray) -> np.ndarray:
        """Apply ``A(gamma)^{-1}`` to interior right-hand sides (vector or matrix)."""
        rhs = np.asarray(rhs, dtype=float)
        sol = self._solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SolverError("non-finite values in interior solve")
        return sol

    def solve(self, boundary_values: np.ndarray, check: bool = True) -> np.ndarray:
        """Nodal solution(s) with the given boundary data (one column per data set)."""
        bv = np.asarray(boundary_values, dtype=float)
        squeeze = bv.ndim == 1
        bv = bv.reshape(self.ops.boundary.size, -1)
        rhs = -(self.A_ib @ bv)
        u_int = self.solve_interior(rhs)
        if check and u_int.size:
            resid = self.A @ u_int - rhs
            scale = np.abs(self.A).sum(axis=1).max() * np.abs(u_int).max() + np.abs(rhs).max()
            if scale > 0 and np.abs(resid).max() > 1e3 * RESIDUAL_TARGET * scale:
                raise SolverError(
                    f"relative residual {np.abs(resid).max() / scale:.3e} above target"
                )
        u = np.empty((self.mesh.n_nodes, bv.shape[1]))
        u[self.ops.interior] = u_int
        u[self.ops.boundary] = bv
        return u[:, 0] if squeeze else u


def solve_dirichlet(mesh: Mesh, gamma, boundary_values) -> np.ndarray:
    """Solve ``div(gamma grad u) = 0`` with ``u = boundary_values`` on the boundary nodes."""
    return DirichletSolver(mesh, gamma).solve(boundary_values)


def element_gradients(mesh: Mesh, u: np.ndarray) -> np.ndarray:
    """Per-element gradient of the P1 interpolant of nodal values ``u`` (flat or one column per field)."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != mesh.n_nodes:
        raise InvalidArgumentError(f"expected {mesh.n_nodes} nodal values, got {u.shape[0]}")
    return discrete_operators(mesh).G @ u


def gradient_norm(mesh: Mesh, field: np.ndarray) -> float:
    """W-weighted L2 norm of a gradient field."""
    W = discrete_operators(mesh).W
    return float(np.sqrt(field @ (W * field)))
