"""Forward map, derivative, adjoint and projector algebra on the data space V_D.

All data-space objects are K x K symmetric matrices written in a boundary basis
that is orthonormal for the energy inner product of the gamma = 1 lifts, so the
Riesz map is the identity and Hilbert-Schmidt norms are Frobenius norms.
"""
from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import (
    BasisRankError,
    ConsistencyError,
    InvalidArgumentError,
    PreconditionError,
)
from .fem import DirichletSolver, as_gradient_weights, check_conductivity, discrete_operators
from .mesh import Mesh, boundary_arclength

__all__ = [
    "BoundaryBasis",
    "OperatorOnVD",
    "build_boundary_basis",
    "lift_gradients",
    "dtn_form",
    "forward_F",
    "forward_difference_cross",
    "derivative_form",
    "derivative_adjoint",
    "taylor_remainder",
    "taylor_remainder_projector",
    "second_derivative_form",
    "projector_R",
    "projector_residuals",
    "solution_operator_K",
    "resolvent_identity_check",
    "contraction",
    "hs_norm",
    "hs_inner",
    "spectral_norm",
    "symmetrize",
]

FAMILIES = ("trigonometric", "boundary-hat")
DEFFF_RTOL = 1e-11


def symmetrize(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


@dataclass(frozen=True, eq=False)
class OperatorOnVD:
    """Symmetric K x K matrix of a quadratic form on V_D, tagged with what it represents."""

    entries: np.ndarray
    label: str = ""

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidArgumentError(f"expected a square matrix, got shape {entries.shape}")
        entries = symmetrize(entries)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    def _coerce(self, other):
        return other.entries if isinstance(other, OperatorOnVD) else np.asarray(other, dtype=float)

    def __add__(self, other):
        return OperatorOnVD(self.entries + self._coerce(other), self.label)

    def __sub__(self, other):
        return OperatorOnVD(self.entries - self._coerce(other), self.label)

    def __neg__(self):
        return OperatorOnVD(-self.entries, self.label)

    def __mul__(self, scalar):
        return OperatorOnVD(float(scalar) * self.entries, self.label)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return OperatorOnVD(self.entries / float(scalar), self.label)

    def relabel(self, label: str) -> "OperatorOnVD":
        return OperatorOnVD(self.entries, label)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.entries)


def _entries(S) -> np.ndarray:
    return S.entries if isinstance(S, OperatorOnVD) else np.asarray(S, dtype=float)


def hs_norm(S) -> float:
    """Hilbert-Schmidt (Frobenius) norm in the orthonormal basis."""
    return float(np.linalg.norm(_entries(S)))


def hs_inner(S, T) -> float:
    return float(np.sum(_entries(S) * _entries(T)))


def spectral_norm(S) -> float:
    a = _entries(S)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(symmetrize(a)))))


@dataclass(frozen=True, eq=False)
class BoundaryBasis:
    """Boundary data spanning V_D, orthonormal in the lifted-energy inner product.

    Attributes
    ----------
    mesh : Mesh
    family : str
    raw_traces : ndarray of shape (n_boundary, K)
    gram : ndarray of shape (K, K)
        Energy Gram matrix of the raw traces' gamma = 1 lifts.
    ortho_transform : ndarray of shape (K, K)
        ``traces = raw_traces @ ortho_transform``.
    traces : ndarray of shape (n_boundary, K)
        Orthonormal traces.
    harmonic_lift_gradients : ndarray of shape (2 * n_triangles, K)
        Gradients of the gamma = 1 lifts of ``traces``.
    """

    mesh: Mesh
    family: str
    raw_traces: np.ndarray
    gram: np.ndarray
    ortho_transform: np.ndarray
    traces: np.ndarray
    harmonic_lift_gradients: np.ndarray
    _cache: OrderedDict = field(default_factory=OrderedDict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def K(self) -> int:
        return self.traces.shape[1]

    def ortho_gram(self) -> np.ndarray:
        W = discrete_operators(self.mesh).W
        g = self.harmonic_lift_gradients
        return g.T @ (W[:, None] * g)


def _raw_traces(mesh: Mesh, K: int, family: str) -> np.ndarray:
    s = boundary_arclength(mesh)
    if family == "trigonometric":
        cols = []
        for k in range(1, math.ceil(K / 2) + 1):
            cols.append(np.sin(2.0 * np.pi * k * s / 4.0))
            cols.append(np.cos(2.0 * np.pi * k * s / 4.0))
        return np.column_stack(cols[:K])
    if family == "boundary-hat":
        nb = s.size
        picks = np.floor(np.arange(K) * nb / K).astype(int)
        traces = np.zeros((nb, K))
        traces[picks, np.arange(K)] = 1.0
        return traces
    raise InvalidArgumentError(f"unknown basis family {family!r}; expected one of {FAMILIES}")


def build_boundary_basis(mesh: Mesh, K: int, family: str = "trigonometric") -> BoundaryBasis:
    """Boundary data orthonormalized by a Cholesky factor of their energy Gram matrix."""
    n_bnd = mesh.boundary_nodes.size
    if isinstance(K, bool) or not isinstance(K, (int, np.integer)) or K < 1:
        raise InvalidArgumentError(f"K must be a positive integer, got {K!r}")
    if K > n_bnd - 1:
        raise BasisRankError(f"K={K} exceeds the {n_bnd - 1} non-constant boundary modes of n={mesh.n}")
    raw = _raw_traces(mesh, int(K), family)
    if np.any(np.ptp(raw, axis=0) == 0.0):
        raise BasisRankError("a basis trace is constant on the boundary")

    ops = discrete_operators(mesh)
    lifts = DirichletSolver(mesh, np.ones(mesh.n_triangles)).solve(raw)
    grads = ops.G @ lifts
    gram = symmetrize(grads.T @ (ops.W[:, None] * grads))
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 1e-12 * max(eig[-1], 1e-300):
        raise BasisRankError(
            f"boundary Gram matrix is rank deficient (condition {eig[-1] / max(eig[0], 1e-300):.3e})"
        )
    chol = np.linalg.cholesky(gram)
    transform = scipy.linalg.solve_triangular(chol, np.eye(K), lower=True).T
    raw.setflags(write=False)
    return BoundaryBasis(
        mesh=mesh,
        family=family,
        raw_traces=raw,
        gram=gram,
        ortho_transform=transform,
        traces=raw @ transform,
        harmonic_lift_gradients=grads @ transform,
    )


@dataclass(frozen=True, eq=False)
class _State:
    solver: DirichletSolver
    gradients: np.ndarray  # (2T, K), gradients of u_{gamma, f_i} for the orthonormal traces


def _state(mesh: Mesh, gamma, basis: BoundaryBasis) -> _State:
    if basis.mesh is not mesh:
        raise InvalidArgumentError("basis was built on a different mesh")
    gamma = check_conductivity(gamma, mesh.n_triangles)
    key = gamma.tobytes()
    with basis._lock:
        hit = basis._cache.get(key)
        if hit is not None:
            basis._cache.move_to_end(key)
            return hit
    solver = DirichletSolver(mesh, gamma)
    grads = solver.ops.G @ solver.solve(basis.traces)
    grads.setflags(write=False)
    st = _State(solver, grads)
    with basis._lock:
        basis._cache[key] = st
        while len(basis._cache) > 64:
            basis._cache.popitem(last=False)
    return st


def lift_gradients(mesh: Mesh, gamma, basis: BoundaryBasis) -> np.ndarray:
    """Gradients of ``u_{gamma, f_i}`` for the orthonormal traces, shape (2 * n_triangles, K)."""
    return _state(mesh, gamma, basis).gradients


def _weighted_form(mesh, weight, grads_a, grads_b=None) -> np.ndarray:
    W = discrete_operators(mesh).W * as_gradient_weights(weight)
    grads_b = grads_a if grads_b is None else grads_b
    return grads_a.T @ (W[:, None] * grads_b)


def dtn_form(mesh: Mesh, gamma, basis: BoundaryBasis) -> OperatorOnVD:
    """Energy form of the Dirichlet-to-Neumann map, ``sum_T gamma_T |T| grad u_i . grad u_j``."""
    gamma = check_conductivity(gamma, mesh.n_triangles)
    grads = lift_gradients(mesh, gamma, basis)
    return OperatorOnVD(_weighted_form(mesh, gamma, grads), "Lambda_gamma")


def forward_difference_cross(mesh: Mesh, gamma1, gamma2, basis: BoundaryBasis) -> np.ndarray:
    """``Lambda_1 - Lambda_2`` from the mixed-solution integral of ``(gamma1 - gamma2)``.

    Returned unsymmetrized so callers can inspect the round-off asymmetry.
    """
    g1 = check_conductivity(gamma1, mesh.n_triangles)
    g2 = check_conductivity(gamma2, mesh.n_triangles)
    return _weighted_form(mesh, g1 - g2, lift_gradients(mesh, g1, basis), lift_gradients(mesh, g2, basis))


def forward_F(mesh: Mesh, gamma, basis: BoundaryBasis, check: bool = True) -> OperatorOnVD:
    """``F(gamma) = Lambda_gamma - Lambda_1``, cross-checked against the mixed-solution formula.

    Raises
    ------
    ConsistencyError
        If the two computations differ by more than ``DEFFF_RTOL`` relative to
        the larger of ``||F(gamma)||`` and the forms being subtracted.
    """
    gamma = check_conductivity(gamma, mesh.n_triangles)
    ones = np.ones(mesh.n_triangles)
    lam = dtn_form(mesh, gamma, basis)
    lam1 = dtn_form(mesh, ones, basis)
    F = OperatorOnVD(lam.entries - lam1.entries, "F(gamma)")
    if check:
        cross = forward_difference_cross(mesh, gamma, ones, basis)
        err = float(np.linalg.norm(F.entries - cross))
        scale = max(hs_norm(F), 1e-3 * max(hs_norm(lam), hs_norm(lam1)))
        if err > DEFFF_RTOL * scale:
            raise ConsistencyError(f"energy and cross-formula F(gamma) differ by {err / scale:.3e} relative")
    return F


def _element_field(mesh: Mesh, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        w = np.full(mesh.n_triangles, float(w))
    w = w.ravel()
    if w.size != mesh.n_triangles or not np.all(np.isfinite(w)):
        raise InvalidArgumentError("perturbation must be finite with one value per element")
    return w


def derivative_form(mesh: Mesh, gamma, w, basis: BoundaryBasis) -> OperatorOnVD:
    """``F'[gamma] w``: the form ``sum_T w_T |T| grad u_i . grad u_j`` at conductivity gamma."""
    w = _element_field(mesh, w)
    grads = lift_gradients(mesh, gamma, basis)
    return OperatorOnVD(_weighted_form(mesh, w, grads), "F'[gamma]w")


def derivative_adjoint(mesh: Mesh, gamma, S, basis: BoundaryBasis) -> np.ndarray:
    """Adjoint of ``F'[gamma]`` for the area-weighted element inner product.

    Returns the per-element function ``sum_ij S_ij (grad u_i . grad u_j)|_T`` so that
    ``<F'[gamma] w, S>_HS == sum_T |T| w_T adj_T``.
    """
    S = _entries(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidArgumentError(f"S must be square, got shape {S.shape}")
    scale = max(np.abs(S).max(initial=0.0), 1e-300)
    if np.abs(S - S.T).max(initial=0.0) > 1e-12 * scale:
        raise InvalidArgumentError("S must be symmetric")
    grads = lift_gradients(mesh, gamma, basis)
    if S.shape[0] != grads.shape[1]:
        raise InvalidArgumentError(f"S is {S.shape[0]}x{S.shape[0]}, basis has K={grads.shape[1]}")
    per_component = np.einsum("rk,kl,rl->r", grads, S, grads)
    return per_component[0::2] + per_component[1::2]


def taylor_remainder(mesh: Mesh, gamma, gamma_dagger, basis: BoundaryBasis) -> OperatorOnVD:
    """``B = F(gamma) - F(gamma_dagger) - F'[gamma](gamma - gamma_dagger)``."""
    g = check_conductivity(gamma, mesh.n_triangles)
    gd = check_conductivity(gamma_dagger, mesh.n_triangles)
    B = (
        dtn_form(mesh, g, basis).entries
        - dtn_form(mesh, gd, basis).entries
        - derivative_form(mesh, g, g - gd, basis).entries
    )
    return OperatorOnVD(B, "B(gamma,gamma_dagger)")


def solution_operator_K(mesh: Mesh, gamma, field_: np.ndarray) -> np.ndarray:
    """Apply ``K_gamma = G_int A(gamma)^{-1} G_int^T W`` to gradient field(s)."""
    gamma = check_conductivity(gamma, mesh.n_triangles)
    solver = DirichletSolver(mesh, gamma)
    return _apply_K(solver, field_)


def _apply_K(solver: DirichletSolver, field_):
    ops = solver.ops
    f = np.asarray(field_, dtype=float)
    rhs = ops.G_int.T @ (ops.W[:, None] * f if f.ndim == 2 else ops.W * f)
    return ops.G_int @ solver.solve_interior(rhs)


def taylor_remainder_projector(mesh: Mesh, gamma, gamma_dagger, basis: BoundaryBasis) -> OperatorOnVD:
    """``B`` via the projector factorization ``(H_d grad u_gamma, R_dagger H_d grad u_gamma)``.

    ``d = (gamma - gamma_dagger) / sqrt(gamma_dagger)``.  Independent of the
    energy-difference route used by :func:`taylor_remainder`.
    """
    g = check_conductivity(gamma, mesh.n_triangles)
    gd = check_conductivity(gamma_dagger, mesh.n_triangles)
    st = _state(mesh, gd, basis)
    grads = lift_gradients(mesh, g, basis)
    v = as_gradient_weights(g - gd)[:, None] * grads  # H_{gamma - gamma_dagger} grad u
    kv = _apply_K(st.solver, v)
    W = st.solver.ops.W
    return OperatorOnVD(v.T @ (W[:, None] * kv), "B(gamma,gamma_dagger) via R")


def second_derivative_form(mesh: Mesh, gamma, w, basis: BoundaryBasis) -> OperatorOnVD:
    """Exact discrete ``F''[gamma](w, w) = -2 (H_w grad u_i, K_gamma H_w grad u_j)_W``."""
    gamma = check_conductivity(gamma, mesh.n_triangles)
    w = _element_field(mesh, w)
    st = _state(mesh, gamma, basis)
    ops = st.solver.ops
    v = as_gradient_weights(w)[:, None] * st.gradients
    P = ops.G_int.T @ (ops.W[:, None] * v)
    return OperatorOnVD(-2.0 * P.T @ st.solver.solve_interior(P), "F''[gamma](w,w)")


def projector_R(mesh: Mesh, gamma) -> np.ndarray:
    """Dense ``R_gamma = H_sqrt(gamma) G_int A(gamma)^{-1} G_int^T W H_sqrt(gamma)``.

    ``R`` is idempotent and self-adjoint in the W inner product.
    """
    gamma = check_conductivity(gamma, mesh.n_triangles)
    solver = DirichletSolver(mesh, gamma)
    ops = solver.ops
    root = as_gradient_weights(np.sqrt(gamma))
    right = ops.G_int.T.multiply(ops.W * root).toarray()  # G_int^T W H_sqrt
    left = root[:, None] * (ops.G_int @ solver.solve_interior(right))
    return left


def projector_residuals(mesh: Mesh, gamma, n_fields: int = 20, seed: int = 0) -> dict:
    """Idempotence, W-self-adjointness and kernel residuals of ``R_gamma``.

    The kernel test fields are random combinations of a basis of
    ``{v : G_int^T W H_sqrt(gamma) v = 0}`` (fields whose ``sqrt(gamma)``-weighted
    divergence vanishes weakly), computed by an SVD independent of the solver.
    All residuals are relative.
    """
    gamma = check_conductivity(gamma, mesh.n_triangles)
    R = projector_R(mesh, gamma)
    ops = discrete_operators(mesh)
    Wd = ops.W
    # R in W-orthonormal coordinates: W^{1/2} R W^{-1/2}
    s = np.sqrt(Wd)
    Rs = s[:, None] * R / s[None, :]
    norm = max(np.linalg.norm(Rs, 2), 1.0)
    idem = np.linalg.norm(Rs @ Rs - Rs, 2) / norm
    selfadj = np.linalg.norm(Rs - Rs.T, 2) / norm
    constraint = ops.G_int.T.multiply(Wd * as_gradient_weights(np.sqrt(gamma))).toarray()
    null = scipy.linalg.null_space(constraint)
    rng = np.random.default_rng(seed)
    fields = null @ rng.standard_normal((null.shape[1], n_fields))
    kern = max(
        float(np.sqrt((R @ v) @ (Wd * (R @ v)) / (v @ (Wd * v)))) for v in fields.T
    ) if n_fields else 0.0
    return {"idempotence": float(idem), "self_adjointness": float(selfadj), "kernel": kern,
            "kernel_dimension": int(null.shape[1])}


def contraction(gamma1, gamma2) -> float:
    """``||(gamma1 - gamma2) / gamma2||_inf``."""
    g1 = np.asarray(gamma1, dtype=float)
    g2 = np.asarray(gamma2, dtype=float)
    return float(np.max(np.abs((g1 - g2) / g2)))


def resolvent_identity_check(mesh: Mesh, gamma1, gamma2, f, max_xi: float = 0.95) -> float:
    """Relative W-norm error of ``grad u_2 = (I - K_2 H_{gamma2 - gamma1}) grad u_1``.

    Both solutions come from separate factorizations, so a small error confirms
    the exact Galerkin form of the identity.

    Raises
    ------
    PreconditionError
        If ``||(gamma1 - gamma2)/gamma2||_inf`` is not below 1 and ``max_xi``.
    """
    g1 = check_conductivity(gamma1, mesh.n_triangles)
    g2 = check_conductivity(gamma2, mesh.n_triangles)
    xi = contraction(g1, g2)
    if not xi < 1.0 or xi > max_xi:
        raise PreconditionError(f"contraction {xi:.4f} must be < 1 and <= {max_xi}")
    s1 = DirichletSolver(mesh, g1)
    s2 = DirichletSolver(mesh, g2)
    ops = s1.ops
    f = np.asarray(f, dtype=float)
    du1 = ops.G @ s1.solve(f)
    du2 = ops.G @ s2.solve(f)
    rhs = du1 - _apply_K(s2, as_gradient_weights(g2 - g1) * du1)
    num = np.sqrt((du2 - rhs) @ (ops.W * (du2 - rhs)))
    den = np.sqrt(du2 @ (ops.W * du2))
    return float(num / den) if den > 0 else float(num)
