"""Eigenvalue certificates for Loewner-order inequalities between forms on V_D."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import BasisRankError, InvalidArgumentError, PreconditionError
from .fem import check_conductivity
from .mesh import Mesh
from .operator import (
    BoundaryBasis,
    OperatorOnVD,
    contraction,
    derivative_form,
    dtn_form,
    forward_F,
    hs_norm,
    second_derivative_form,
    spectral_norm,
    symmetrize,
    taylor_remainder,
)

__all__ = [
    "LoewnerCertificate",
    "loewner_leq",
    "certify_main1",
    "certify_util",
    "certify_util_sharpness",
    "certify_conmo",
    "certify_babel0",
    "NormBoundReport",
    "certify_norm_bound",
    "SecondDerivativeReport",
    "second_derivative_sign",
    "DEFAULT_TOL",
    "SCALE_FLOOR",
]

DEFAULT_TOL = 1e-8
SCALE_FLOOR = 1e-14


@dataclass(frozen=True)
class LoewnerCertificate:
    """Outcome of checking ``lhs <= rhs`` in the Loewner order.

    ``passed`` holds iff ``lambda_min_gap >= -tolerance * max(scale, SCALE_FLOOR)``,
    where ``lambda_min_gap`` is the smallest eigenvalue of ``rhs - lhs`` and
    ``scale`` the larger spectral norm of the two sides.
    """

    lhs_label: str
    rhs_label: str
    lambda_min_gap: float
    scale: float
    tolerance: float
    passed: bool
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def inequality(self) -> str:
        return f"{self.lhs_label} <= {self.rhs_label}"

    def to_row(self, **provenance) -> dict:
        row = {
            "inequality": self.inequality,
            "lambda_min_gap": self.lambda_min_gap,
            "scale": self.scale,
            "tol": self.tolerance,
            "pass": self.passed,
        }
        row.update({k: self.metadata.get(k) for k in ("seed", "mesh_n", "K") if k in self.metadata})
        row.update(provenance)
        return row

    def to_json(self, **provenance) -> str:
        return json.dumps(self.to_row(**provenance))

    def with_metadata(self, **metadata) -> "LoewnerCertificate":
        merged = {**self.metadata, **metadata}
        return LoewnerCertificate(**{**asdict(self), "metadata": merged})


def _as_matrix(A) -> tuple[np.ndarray, str]:
    if isinstance(A, OperatorOnVD):
        return A.entries, A.label
    a = np.asarray(A, dtype=float)
    return a, ""


def loewner_leq(A, B, tol: float = DEFAULT_TOL, lhs_label=None, rhs_label=None,
                **metadata) -> LoewnerCertificate:
    """Certify ``A <= B`` from the smallest eigenvalue of ``B - A``."""
    a, la = _as_matrix(A)
    b, lb = _as_matrix(B)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if tol < 0:
        raise InvalidArgumentError("tolerance must be nonnegative")
    gap = float(np.linalg.eigvalsh(symmetrize(b - a))[0]) if a.size else 0.0
    scale = max(spectral_norm(a), spectral_norm(b))
    passed = gap >= -tol * max(scale, SCALE_FLOOR)
    return LoewnerCertificate(
        lhs_label or la or "A",
        rhs_label or lb or "B",
        gap,
        scale,
        float(tol),
        bool(passed),
        dict(metadata),
    )


def _pair(mesh, gamma, gamma_dagger, strict=True):
    g = check_conductivity(gamma, mesh.n_triangles)
    gd = check_conductivity(gamma_dagger, mesh.n_triangles)
    xi_d = contraction(g, gd)
    if strict and not xi_d < 1.0:
        raise PreconditionError(f"||(gamma - gamma_dagger)/gamma_dagger||_inf = {xi_d:.6g} must be < 1")
    return g, gd, xi_d


def _meta(mesh, basis, seed):
    meta = {"mesh_n": mesh.n, "K": basis.K}
    if seed is not None:
        meta["seed"] = seed
    return meta


def certify_main1(mesh: Mesh, gamma, gamma_dagger, basis: BoundaryBasis,
                  tol: float = DEFAULT_TOL, seed=None):
    """``0 <= B(gamma, gamma_dagger) <= F'[gamma]((gamma - gamma_dagger)^2 / gamma_dagger)``."""
    g, gd, _ = _pair(mesh, gamma, gamma_dagger)
    B = taylor_remainder(mesh, g, gd, basis)
    upper = derivative_form(mesh, g, (g - gd) ** 2 / gd, basis)
    zero = np.zeros_like(B.entries)
    meta = _meta(mesh, basis, seed)
    return (
        loewner_leq(zero, B, tol, "0", "B", **meta),
        loewner_leq(B, upper, tol, "B", "D(dg^2/gd)", **meta),
    )


def _spd_sandwich(outer: np.ndarray, middle: np.ndarray, name: str) -> np.ndarray:
    """``outer @ middle^{-1} @ outer`` through a Cholesky solve of the SPD ``middle``."""
    middle = symmetrize(middle)
    try:
        factor = scipy.linalg.cho_factor(middle, lower=True)
    except np.linalg.LinAlgError as exc:
        eig = np.linalg.eigvalsh(middle)
        raise BasisRankError(
            f"{name} is not positive definite on V_D (eigenvalues in [{eig[0]:.3e}, {eig[-1]:.3e}])"
        ) from exc
    return symmetrize(outer @ scipy.linalg.cho_solve(factor, outer))


def _util_sides(mesh, g, gd, basis):
    D = lambda w: derivative_form(mesh, g, w, basis).entries  # noqa: E731
    upper = D((g - gd) ** 2 / gd)
    lam_d = dtn_form(mesh, gd, basis).entries
    delta = dtn_form(mesh, g, basis).entries - lam_d
    util1 = upper - _spd_sandwich(delta, lam_d, "Lambda_gamma_dagger")
    mixed = D((g - gd) * g / gd)
    util2 = upper - _spd_sandwich(mixed, D(g**2 / gd), "F'[gamma](gamma^2/gamma_dagger)")
    return upper, util1, util2


def certify_util(mesh: Mesh, gamma, gamma_dagger, basis: BoundaryBasis,
                 tol: float = DEFAULT_TOL, seed=None):
    """Sharpened upper bounds on ``B``.

    ``B <= D(dg^2) - dL Lambda_dagger^{-1} dL`` and
    ``B <= D(dg^2) - D(dg g/gd) D(g^2/gd)^{-1} D(dg g/gd)``, with ``D = F'[gamma]``,
    ``dg = gamma - gamma_dagger`` and ``dL = Lambda_gamma - Lambda_dagger``.
    """
    g, gd, _ = _pair(mesh, gamma, gamma_dagger)
    B = taylor_remainder(mesh, g, gd, basis)
    _, util1, util2 = _util_sides(mesh, g, gd, basis)
    meta = _meta(mesh, basis, seed)
    return (
        loewner_leq(B, util1, tol, "B", "util1_rhs", **meta),
        loewner_leq(B, util2, tol, "B", "util2_rhs", **meta),
    )


def certify_util_sharpness(mesh: Mesh, gamma, gamma_dagger, basis: BoundaryBasis,
                           tol: float = DEFAULT_TOL, seed=None):
    """Both sharpened bounds sit below the plain bound ``D(dg^2)``."""
    g, gd, _ = _pair(mesh, gamma, gamma_dagger)
    upper, util1, util2 = _util_sides(mesh, g, gd, basis)
    meta = _meta(mesh, basis, seed)
    return (
        loewner_leq(util1, upper, tol, "util1_rhs", "D(dg^2/gd)", **meta),
        loewner_leq(util2, upper, tol, "util2_rhs", "D(dg^2/gd)", **meta),
    )


def certify_conmo(mesh: Mesh, gamma, gamma_dagger, basis: BoundaryBasis,
                  tol: float = DEFAULT_TOL, seed=None):
    """Two-sided brackets of ``Lambda_gamma - Lambda_dagger`` by derivative forms."""
    g, gd, _ = _pair(mesh, gamma, gamma_dagger)
    dg = g - gd
    delta = dtn_form(mesh, g, basis).entries - dtn_form(mesh, gd, basis).entries
    Dg = lambda w: derivative_form(mesh, g, w, basis).entries  # noqa: E731
    Dd = lambda w: derivative_form(mesh, gd, w, basis).entries  # noqa: E731
    meta = _meta(mesh, basis, seed)
    return (
        loewner_leq(Dg(dg), delta, tol, "F'[g](dg)", "dLambda", **meta),
        loewner_leq(delta, Dd(dg), tol, "dLambda", "F'[gd](dg)", **meta),
        loewner_leq(Dd(gd / g * dg), delta, tol, "F'[gd](gd/g dg)", "dLambda", **meta),
        loewner_leq(delta, Dg(g / gd * dg), tol, "dLambda", "F'[g](g/gd dg)", **meta),
    )


def certify_babel0(mesh: Mesh, gamma, gamma_dagger, basis: BoundaryBasis,
                   tol: float = DEFAULT_TOL, seed=None):
    """``0 <= F'[gd](dg) - F'[g](dg) <= (2 + xi_dagger) F'[g](dg^2/gd)``.

    Returns ``(lower_certificate, upper_certificate, xi_dagger)``.
    """
    g, gd, xi_d = _pair(mesh, gamma, gamma_dagger)
    dg = g - gd
    A = derivative_form(mesh, gd, dg, basis).entries - derivative_form(mesh, g, dg, basis).entries
    upper = (2.0 + xi_d) * derivative_form(mesh, g, dg**2 / gd, basis).entries
    meta = _meta(mesh, basis, seed)
    return (
        loewner_leq(np.zeros_like(A), A, tol, "0", "F'[gd](dg)-F'[g](dg)", **meta),
        loewner_leq(A, upper, tol, "F'[gd](dg)-F'[g](dg)", "(2+xi)D(dg^2/gd)", **meta),
        xi_d,
    )


@dataclass(frozen=True)
class NormBoundReport:
    """Norm consequences of the convexity bounds for one pair.

    ``ratio_x1`` and ``ratio_x2`` are ``||F(g)-F(gd)||^2 / trace`` and
    ``||F'[g](dg g/gd)||^2 / trace`` with ``trace = tr F'[g](dg^2/gd)``; they are
    empirical lower bounds for the unknown constant.
    """

    mainest1_pass: bool
    remainder_norm: float
    bound_norm: float
    mainest1_spectral_pass: bool
    remainder_spectral: float
    bound_spectral: float
    trace: float
    ratio_x1: float
    ratio_x2: float
    tolerance: float

    def to_row(self, **provenance) -> dict:
        return {**asdict(self), **provenance}


def certify_norm_bound(mesh: Mesh, gamma, gamma_dagger, basis: BoundaryBasis,
                     tol: float = DEFAULT_TOL) -> NormBoundReport:
    g, gd, _ = _pair(mesh, gamma, gamma_dagger)
    dg = g - gd
    B = taylor_remainder(mesh, g, gd, basis)
    bound = derivative_form(mesh, g, dg**2 / gd, basis)
    delta = dtn_form(mesh, g, basis) - dtn_form(mesh, gd, basis)
    mixed = derivative_form(mesh, g, dg * g / gd, basis)
    trace = float(np.trace(bound.entries))
    lhs, rhs = hs_norm(B), hs_norm(bound)
    lhs_s, rhs_s = spectral_norm(B), spectral_norm(bound)
    slack = tol * max(rhs, SCALE_FLOOR)
    slack_s = tol * max(rhs_s, SCALE_FLOOR)
    if trace > 0:
        r1 = hs_norm(delta) ** 2 / trace
        r2 = hs_norm(mixed) ** 2 / trace
    else:
        r1 = r2 = 0.0
    return NormBoundReport(
        mainest1_pass=bool(lhs <= rhs + slack),
        remainder_norm=lhs,
        bound_norm=rhs,
        mainest1_spectral_pass=bool(lhs_s <= rhs_s + slack_s),
        remainder_spectral=lhs_s,
        bound_spectral=rhs_s,
        trace=trace,
        ratio_x1=r1,
        ratio_x2=r2,
        tolerance=tol,
    )


@dataclass(frozen=True)
class SecondDerivativeReport:
    """Sign certificates for finite-difference approximations of ``-F''[gd](w, w)``.

    For each step ``eps`` the approximation is checked against ``0`` and against
    ``2 F'[gd](w^2/gd)`` with tolerance ``max(tol, slack * eps)``; ``deviation``
    is ``||approx - F''_exact||_HS / ||F''_exact||_HS`` and ``slope`` its log-log
    slope in ``eps``.
    """

    eps: tuple
    stencil: str
    lower: tuple
    upper: tuple
    deviation: tuple
    slope: float
    exact_lower: LoewnerCertificate
    exact_upper: LoewnerCertificate

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.lower + self.upper) and self.exact_lower.passed \
            and self.exact_upper.passed


def _fit_slope(x, y) -> float:
    x, y = np.log(np.asarray(x)), np.log(np.asarray(y))
    ok = np.isfinite(y)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(x[ok], y[ok], 1)[0])


def second_derivative_sign(mesh: Mesh, gamma_dagger, w, basis: BoundaryBasis,
                           eps=(1e-1, 1e-2, 1e-3), stencil: str = "taylor",
                           tol: float = DEFAULT_TOL, slack: float = 1e-2) -> SecondDerivativeReport:
    """Certify ``0 <= -F''[gd](w, w) <= 2 F'[gd](w^2/gd)`` along a step sweep.

    ``stencil="taylor"`` uses ``-F'' ~ 2 B(gd + eps w, gd) / eps^2`` (first-order
    accurate); ``"central"`` uses the symmetric second difference of ``F``
    (second-order accurate).  The exact discrete ``F''`` is certified as well.

    Raises
    ------
    PreconditionError
        If some ``gd +- eps w`` is not positive, or ``eps * |w| / gd`` reaches 1.
    """
    gd = check_conductivity(gamma_dagger, mesh.n_triangles)
    w = np.broadcast_to(np.asarray(w, dtype=float), gd.shape)
    if stencil not in ("taylor", "central"):
        raise InvalidArgumentError(f"unknown stencil {stencil!r}")
    eps = tuple(float(e) for e in eps)
    exact = second_derivative_form(mesh, gd, w, basis).entries
    bound = 2.0 * derivative_form(mesh, gd, w**2 / gd, basis).entries
    exact_norm = np.linalg.norm(exact)
    meta = _meta(mesh, basis, None)
    lowers, uppers, devs = [], [], []
    for e in eps:
        if np.max(np.abs(e * w / gd)) >= 1.0:
            raise PreconditionError(f"step eps={e} breaks ellipticity")
        if stencil == "taylor":
            neg_f2 = 2.0 * taylor_remainder(mesh, gd + e * w, gd, basis).entries / e**2
        else:
            plus = dtn_form(mesh, gd + e * w, basis).entries
            minus = dtn_form(mesh, gd - e * w, basis).entries
            mid = dtn_form(mesh, gd, basis).entries
            neg_f2 = -((plus - mid) + (minus - mid)) / e**2
        t = max(tol, slack * e)
        lowers.append(loewner_leq(np.zeros_like(neg_f2), neg_f2, t, "0", "-F''", eps=e, **meta))
        uppers.append(loewner_leq(neg_f2, bound, t, "-F''", "2F'[gd](w^2/gd)", eps=e, **meta))
        devs.append(float(np.linalg.norm(-neg_f2 - exact) / exact_norm) if exact_norm > 0 else 0.0)
    return SecondDerivativeReport(
        eps=eps,
        stencil=stencil,
        lower=tuple(lowers),
        upper=tuple(uppers),
        deviation=tuple(devs),
        slope=_fit_slope(eps, devs) if exact_norm > 0 else math.nan,
        exact_lower=loewner_leq(np.zeros_like(exact), -exact, tol, "0", "-F''_exact", **meta),
        exact_upper=loewner_leq(-exact, bound, tol, "-F''_exact", "2F'[gd](w^2/gd)", **meta),
    )
