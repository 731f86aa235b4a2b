"""Tangential cone quantities and the sufficient conditions that guarantee them."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DegeneratePairError, InvalidArgumentError, PreconditionError
from .fem import check_conductivity, discrete_operators
from .mesh import Mesh
from .operator import (
    BoundaryBasis,
    contraction,
    derivative_form,
    dtn_form,
    hs_inner,
    hs_norm,
    lift_gradients,
)

__all__ = [
    "TccReport",
    "tcc_measure",
    "ZetaResult",
    "sufficient_zeta",
    "theta_eta",
    "MjmiResult",
    "check_mjmi",
    "monotone_radius",
    "split_parts",
    "UnbalancedReport",
    "check_unbalanced",
    "estimate_linf_norm",
    "kappa",
    "derivative_matrix",
    "source_condition_element",
    "holder_stability",
    "finite_dim_constant",
    "star_seminorm",
    "GUARANTEE_SLACK",
]

GUARANTEE_SLACK = 1e-8
# relative slack on gate comparisons; equality cases (e.g. indicator patterns) sit on the boundary
GATE_RTOL = 1e-12
DEGENERATE_RTOL = 1e-13


def _lower_bound(gamma, gamma_dagger, alpha_lower):
    if alpha_lower is not None:
        return float(alpha_lower)
    bound = getattr(gamma, "lower_bound", None)
    if bound is not None:
        return float(bound)
    return float(np.min(np.asarray(gamma, dtype=float)))


@dataclass(frozen=True)
class TccReport:
    """Cone ratios for one pair ``(gamma, gamma_dagger)``.

    ``eta_stc`` is the strong-cone ratio at ``linearization_point``; both
    variants are stored.  ``eta_wtc`` is ``(residual, dF)_Y / ||dF||^2`` and
    ``qcon_value`` is ``(F'[x] h, dF)_Y`` with ``h = gamma - gamma_dagger``.
    ``para_residual`` is the relative defect of the parallelogram identity
    ``||res||^2 = (2 eta_wtc - 1) ||dF||^2 + ||F'[x] h||^2``.
    """

    linearization_point: str
    eta_stc: float
    eta_stc_at_gamma: float
    eta_stc_at_gamma_dagger: float
    eta_wtc: float
    qcon_value: float
    zeta: float
    xi_dagger: float
    xi: float
    para_residual: float
    norm_delta_F: float
    norm_residual: float
    norm_linearized: float
    norm_remainder_bound: float
    scale: float
    theta_eta: float | None = None
    metadata: dict = field(default_factory=dict, compare=False)

    def to_row(self, **provenance) -> dict:
        row = asdict(self)
        row.pop("metadata")
        row.update(self.metadata)
        row.update(provenance)
        return row


def tcc_measure(mesh: Mesh, gamma, gamma_dagger, basis: BoundaryBasis,
                linearization_point: str = "gamma_dagger", eta=None, alpha_lower=None) -> TccReport:
    """Strong/weak cone ratios and the sign quantity for one pair.

    Raises
    ------
    DegeneratePairError
        If ``||F(gamma) - F(gamma_dagger)|| < 1e-13 ||Lambda_dagger||``.
    """
    if linearization_point not in ("gamma", "gamma_dagger"):
        raise InvalidArgumentError("linearization_point must be 'gamma' or 'gamma_dagger'")
    g = check_conductivity(gamma, mesh.n_triangles)
    gd = check_conductivity(gamma_dagger, mesh.n_triangles)
    h = g - gd
    lam_g = dtn_form(mesh, g, basis).entries
    lam_d = dtn_form(mesh, gd, basis).entries
    dF = lam_g - lam_d
    scale = hs_norm(lam_d)
    n_dF = hs_norm(dF)
    if n_dF < DEGENERATE_RTOL * scale:
        raise DegeneratePairError("F(gamma) and F(gamma_dagger) coincide to round-off")
    lin_d = derivative_form(mesh, gd, h, basis).entries
    lin_g = derivative_form(mesh, g, h, basis).entries
    res_d = dF - lin_d
    res_g = dF - lin_g  # equals B(gamma, gamma_dagger)
    eta_d = hs_norm(res_d) / n_dF
    eta_g = hs_norm(res_g) / n_dF
    res, lin = (res_d, lin_d) if linearization_point == "gamma_dagger" else (res_g, lin_g)
    eta_wtc = hs_inner(res, dF) / n_dF**2
    bound = derivative_form(mesh, g, h**2 / gd, basis).entries
    n_lin_g = hs_norm(lin_g)
    lhs = hs_norm(res) ** 2
    rhs = (2 * eta_wtc - 1) * n_dF**2 + hs_norm(lin) ** 2
    alpha = _lower_bound(gamma, gamma_dagger, alpha_lower)
    return TccReport(
        linearization_point=linearization_point,
        eta_stc=eta_d if linearization_point == "gamma_dagger" else eta_g,
        eta_stc_at_gamma=eta_g,
        eta_stc_at_gamma_dagger=eta_d,
        eta_wtc=eta_wtc,
        qcon_value=hs_inner(lin, dF),
        zeta=hs_norm(bound) / n_lin_g if n_lin_g > 0 else math.inf,
        xi_dagger=contraction(g, gd),
        xi=float(np.max(np.abs(h / g))),
        para_residual=abs(lhs - rhs) / max(lhs, abs(rhs), n_dF**2),
        norm_delta_F=n_dF,
        norm_residual=hs_norm(res),
        norm_linearized=hs_norm(lin),
        norm_remainder_bound=hs_norm(bound),
        scale=scale,
        theta_eta=theta_eta(eta, alpha) if eta is not None else None,
    )


@dataclass(frozen=True)
class ZetaResult:
    zeta: float
    predicted_eta: float
    measured_eta: float
    fired: bool
    holds: bool
    wtc_fired: bool
    wtc_holds: bool


def sufficient_zeta(mesh: Mesh, gamma, gamma_dagger, basis: BoundaryBasis) -> ZetaResult:
    """First sufficient condition: ``zeta = ||F'[g](h^2/gd)|| / ||F'[g] h||``.

    If ``zeta < 1`` the strong cone condition linearized at ``gamma`` holds with
    ``eta = zeta / (1 - zeta)``; if ``zeta <= 1`` the weak ratio is at most 1/2.
    ``holds`` is ``True`` when the gate fired and the measurement respects it.
    """
    g = check_conductivity(gamma, mesh.n_triangles)
    gd = check_conductivity(gamma_dagger, mesh.n_triangles)
    xi_d = contraction(g, gd)
    if not xi_d < 1.0:
        raise PreconditionError(f"xi_dagger = {xi_d:.6g} must be < 1")
    rep = tcc_measure(mesh, g, gd, basis, linearization_point="gamma")
    zeta = rep.zeta
    if not math.isfinite(zeta):
        raise DegeneratePairError("F'[gamma](gamma - gamma_dagger) vanishes")
    fired = zeta < 1.0
    predicted = zeta / (1.0 - zeta) if fired else math.inf
    measured = rep.eta_stc_at_gamma
    wtc_fired = zeta <= 1.0
    return ZetaResult(
        zeta=zeta,
        predicted_eta=predicted,
        measured_eta=measured,
        fired=fired,
        holds=bool(fired and measured <= predicted + GUARANTEE_SLACK),
        wtc_fired=wtc_fired,
        wtc_holds=bool(wtc_fired and rep.eta_wtc <= 0.5 + GUARANTEE_SLACK),
    )


def theta_eta(eta: float, alpha_lower: float) -> float:
    """Admissible radius ``alpha_lower * eta / (4 + eta)`` for a cone constant ``eta`` in (0, 1]."""
    if not 0.0 < eta <= 1.0:
        raise InvalidArgumentError(f"eta must lie in (0, 1], got {eta}")
    if not alpha_lower > 0.0:
        raise InvalidArgumentError(f"alpha_lower must be positive, got {alpha_lower}")
    return alpha_lower * eta / (4.0 + eta)


def split_parts(delta) -> tuple[np.ndarray, np.ndarray]:
    """Positive and negative parts: ``delta = p - n`` with ``p, n >= 0`` and ``p * n = 0``."""
    delta = np.asarray(delta, dtype=float)
    return np.maximum(delta, 0.0), np.maximum(-delta, 0.0)


def star_seminorm(mesh: Mesh, gamma_dagger, w, basis: BoundaryBasis) -> float:
    """``||F'[gd](|w|)||_Y``."""
    return hs_norm(derivative_form(mesh, gamma_dagger, np.abs(np.asarray(w, dtype=float)), basis))


@dataclass(frozen=True)
class MjmiResult:
    """Localized sufficient condition evaluated for one pair and one ``eta``.

    ``guarantee_valid`` is ``None`` when no gate fired, otherwise whether the
    measured ratio (linearized at ``gamma``) respects ``eta``.
    """

    eta: float
    theta: float
    mjmi_lhs: float
    mjmi_rhs: float
    mjmi_holds: bool
    measured_eta: float
    measured_eta_at_gamma_dagger: float
    guarantee_valid: bool | None
    proof_gate: bool
    mjmi1_constant: float
    linf: float
    mjmi1_gate: bool
    mjmi1_gate_literal: bool
    xi_dagger: float
    xi: float


def check_mjmi(mesh: Mesh, gamma, gamma_dagger, eta: float, basis: BoundaryBasis,
               alpha_lower=None) -> MjmiResult:
    """Evaluate ``||F'[gd](h^2)|| <= theta_eta ||F'[gd] h||`` and the guarantee it implies.

    The companion gate uses the measured constant ``C = ||F'[gd]|h||| / ||F'[gd] h||``
    and fires when ``||h||_inf <= theta_eta / C``; the literal ``C * theta_eta``
    reading is reported in ``mjmi1_gate_literal`` but never used to assert.
    """
    g = check_conductivity(gamma, mesh.n_triangles)
    gd = check_conductivity(gamma_dagger, mesh.n_triangles)
    h = g - gd
    xi_d = contraction(g, gd)
    xi = float(np.max(np.abs(h / g)))
    if not (xi_d < 1.0 and xi < 1.0):
        raise PreconditionError(f"contractions xi_dagger={xi_d:.4g}, xi={xi:.4g} must both be < 1")
    alpha = _lower_bound(gamma, gamma_dagger, alpha_lower)
    if alpha > float(g.min()):
        raise PreconditionError(f"alpha_lower={alpha} exceeds min(gamma)={g.min():.6g}")
    theta = theta_eta(eta, alpha)
    rep = tcc_measure(mesh, g, gd, basis, linearization_point="gamma")
    lin = hs_norm(derivative_form(mesh, gd, h, basis))
    lhs = hs_norm(derivative_form(mesh, gd, h**2, basis))
    rhs = theta * lin
    holds = lhs <= rhs * (1.0 + GATE_RTOL)
    C = star_seminorm(mesh, gd, h, basis) / lin if lin > 0 else math.inf
    linf = float(np.max(np.abs(h)))
    gate = linf <= theta / C * (1.0 + GATE_RTOL)
    fired = holds or gate
    return MjmiResult(
        eta=eta,
        theta=theta,
        mjmi_lhs=lhs,
        mjmi_rhs=rhs,
        mjmi_holds=bool(holds),
        measured_eta=rep.eta_stc_at_gamma,
        measured_eta_at_gamma_dagger=rep.eta_stc_at_gamma_dagger,
        guarantee_valid=(rep.eta_stc_at_gamma <= eta + GUARANTEE_SLACK) if fired else None,
        proof_gate=bool(theta / alpha <= eta / (3.0 + xi + eta)),
        mjmi1_constant=C,
        linf=linf,
        mjmi1_gate=bool(gate),
        mjmi1_gate_literal=bool(linf <= C * theta * (1.0 + GATE_RTOL)),
        xi_dagger=xi_d,
        xi=xi,
    )


def monotone_radius(direction, eta: float, alpha_lower: float) -> float:
    """Largest amplitude ``a`` with ``||a * direction||_inf <= min(theta_eta, alpha_lower)``.

    Raises
    ------
    InvalidArgumentError
        If ``direction`` changes sign or vanishes.
    """
    d = np.asarray(direction, dtype=float)
    if np.any(d > 0) and np.any(d < 0):
        raise InvalidArgumentError("direction must not change sign")
    peak = float(np.max(np.abs(d)))
    if peak == 0.0:
        raise InvalidArgumentError("direction is identically zero")
    return min(theta_eta(eta, alpha_lower), alpha_lower) / peak


def estimate_linf_norm(mesh: Mesh, gamma_dagger, basis: BoundaryBasis, restarts: int = 4,
                       rounds: int = 6, seed: int = 0) -> tuple[float, float]:
    """Bracket ``L = sup_{|w| <= 1} ||F'[gd] w||_Y``.

    The lower end comes from greedy single-element sign flips started at the
    all-ones vector and at random sign vectors; the upper end is
    ``sum_T ||F'[gd] e_T||_Y``.
    """
    J = derivative_matrix(mesh, gamma_dagger, basis)
    upper = float(np.linalg.norm(J, axis=0).sum())
    rng = np.random.default_rng(seed)
    starts = [np.ones(J.shape[1])] + [rng.choice([-1.0, 1.0], J.shape[1]) for _ in range(restarts)]
    best = 0.0
    for s in starts:
        v = J @ s
        val = v @ v
        for _ in range(rounds):
            improved = False
            for t in range(s.size):
                cand = v - 2.0 * s[t] * J[:, t]
                cv = cand @ cand
                if cv > val * (1 + 1e-15):
                    v, val = cand, cv
                    s[t] = -s[t]
                    improved = True
            if not improved:
                break
        best = max(best, math.sqrt(val))
    return best, upper


def derivative_matrix(mesh: Mesh, gamma_dagger, basis: BoundaryBasis) -> np.ndarray:
    """Matrix of ``w -> vec(F'[gd] w)``, shape ``(K*K, n_triangles)``."""
    grads = lift_gradients(mesh, gamma_dagger, basis)
    W = discrete_operators(mesh).W
    gx, gy = grads[0::2], grads[1::2]
    area = W[0::2]
    # column t: |T| (gx_i gx_j + gy_i gy_j)
    prod = np.einsum("ti,tj->ijt", gx, gx) + np.einsum("ti,tj->ijt", gy, gy)
    K = grads.shape[1]
    return (prod * area).reshape(K * K, -1)


def kappa(mesh: Mesh, gamma_dagger, m: float, basis: BoundaryBasis, J=None) -> float:
    """``min over centroid centers x0 with B_m(x0) inside the square of ||F'[gd] chi_B||_Y``.

    Returns ``inf`` when no ball of radius ``m`` fits.
    """
    J = derivative_matrix(mesh, gamma_dagger, basis) if J is None else J
    cent = mesh.centroids
    ok = np.all((cent - m >= -1e-12) & (cent + m <= 1 + 1e-12), axis=1)
    best = math.inf
    for x0 in cent[ok]:
        chi = (np.sum((cent - x0) ** 2, axis=1) <= m * m).astype(float)
        best = min(best, float(np.linalg.norm(J @ chi)))
    return best


@dataclass(frozen=True)
class UnbalancedReport:
    """Gates for perturbations whose positive or negative part dominates.

    ``fir_constant`` is ``min(||F'p||, ||F'n||) / ||F'h||`` and ``nu`` the ratio of
    the smaller to the larger of ``||F'p||, ||F'n||``.  ``fir_gate`` fires when
    ``||h||_inf <= theta / (2 C + 1)``, ``fir1_gate`` when
    ``||h||_inf <= theta (1 - nu) / 3``.  ``guarantee_valid`` is ``None`` when
    no gate fired.
    """

    eta: float
    theta: float
    linf: float
    norm_pos: float
    norm_neg: float
    norm_total: float
    dominant: str
    fir_constant: float
    nu: float
    fir_gate: bool
    fir1_gate: bool
    mjmi_holds: bool
    measured_eta: float
    guarantee_valid: bool | None
    applicable: bool
    lipschitz_lower: float
    lipschitz_upper: float
    psi: float | None
    psi_nu: float | None
    kappa_value: float | None
    twotwo_holds: bool | None


def check_unbalanced(mesh: Mesh, gamma, gamma_dagger, eta: float, basis: BoundaryBasis,
                     alpha_lower=None, c2_bound=None, seed: int = 0) -> UnbalancedReport:
    """Evaluate the positive/negative-part gates and the ``psi`` construction.

    ``c2_bound`` stands in for the C^2 bound of the perturbation; when given,
    ``psi(M) = M kappa(M / c2_bound) nu' / (2 L)`` is evaluated with
    ``nu' = 1 - 3 ||h||_inf / theta`` and ``L`` the lower end of the
    :func:`estimate_linf_norm` bracket.
    """
    g = check_conductivity(gamma, mesh.n_triangles)
    gd = check_conductivity(gamma_dagger, mesh.n_triangles)
    h = g - gd
    if not (contraction(g, gd) < 1.0 and np.max(np.abs(h / g)) < 1.0):
        raise PreconditionError("both contraction parameters must be < 1")
    alpha = _lower_bound(gamma, gamma_dagger, alpha_lower)
    theta = theta_eta(eta, alpha)
    p, n = split_parts(h)
    norm_p = hs_norm(derivative_form(mesh, gd, p, basis))
    norm_n = hs_norm(derivative_form(mesh, gd, n, basis))
    norm_h = hs_norm(derivative_form(mesh, gd, h, basis))
    if norm_h == 0.0:
        raise DegeneratePairError("F'[gamma_dagger](gamma - gamma_dagger) vanishes")
    linf = float(np.max(np.abs(h)))
    C = min(norm_p, norm_n) / norm_h
    big, small = max(norm_p, norm_n), min(norm_p, norm_n)
    nu = small / big
    fir_gate = linf <= theta / (2.0 * C + 1.0) * (1.0 + GATE_RTOL)
    fir1_gate = nu < 1.0 and linf <= theta * (1.0 - nu) / 3.0 * (1.0 + GATE_RTOL)
    mjmi_lhs = hs_norm(derivative_form(mesh, gd, h**2, basis))
    mjmi_holds = mjmi_lhs <= theta * norm_h * (1.0 + GATE_RTOL)
    rep = tcc_measure(mesh, g, gd, basis, linearization_point="gamma")
    fired = fir_gate or fir1_gate
    pmax, nmax = float(p.max()), float(n.max())
    applicable = pmax != nmax
    L_lo, L_hi = estimate_linf_norm(mesh, gd, basis, seed=seed)
    psi = psi_nu = kap = twotwo = None
    if applicable and c2_bound is not None:
        psi_nu = 1.0 - 3.0 * linf / theta
        if 0.0 < psi_nu < 1.0:
            kap = kappa(mesh, gd, linf / c2_bound, basis)
            psi = linf * kap * psi_nu / (2.0 * L_lo) if math.isfinite(kap) else None
            minor = nmax if pmax > nmax else pmax
            twotwo = (minor <= psi) if psi is not None else None
    return UnbalancedReport(
        eta=eta,
        theta=theta,
        linf=linf,
        norm_pos=norm_p,
        norm_neg=norm_n,
        norm_total=norm_h,
        dominant="positive" if norm_p >= norm_n else "negative",
        fir_constant=C,
        nu=nu,
        fir_gate=bool(fir_gate),
        fir1_gate=bool(fir1_gate),
        mjmi_holds=bool(mjmi_holds),
        measured_eta=rep.eta_stc_at_gamma,
        guarantee_valid=(rep.eta_stc_at_gamma <= eta + GUARANTEE_SLACK) if fired else None,
        applicable=applicable,
        lipschitz_lower=L_lo,
        lipschitz_upper=L_hi,
        psi=psi,
        psi_nu=psi_nu,
        kappa_value=kap,
        twotwo_holds=twotwo,
    )


def _normal_operator(mesh: Mesh, gamma_dagger, basis: BoundaryBasis):
    """Symmetric form ``M^{-1/2} J^T J M^{-1/2}`` of ``F'^* F'`` in the area-weighted product."""
    J = derivative_matrix(mesh, gamma_dagger, basis)
    root = np.sqrt(mesh.element_areas)
    Js = J / root[None, :]
    S = Js.T @ Js
    evals, evecs = np.linalg.eigh(0.5 * (S + S.T))
    return np.clip(evals, 0.0, None), evecs, root


def source_condition_element(mesh: Mesh, gamma_dagger, mu: float, omega, scale: float,
                             basis: BoundaryBasis, lower_bound: float | None = None,
                             upper_bound: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Perturbation ``(F'^* F')^mu omega`` rescaled to ``||.||_inf = scale``.

    Returns ``(delta, omega_scaled)`` with ``delta = (F'^* F')^mu omega_scaled``.

    Raises
    ------
    PreconditionError
        If ``gamma_dagger + delta`` leaves ``[lower_bound, upper_bound]`` (defaults:
        positivity only).
    """
    if mu < 0:
        raise InvalidArgumentError("mu must be nonnegative")
    gd = check_conductivity(gamma_dagger, mesh.n_triangles)
    omega = np.asarray(omega, dtype=float)
    evals, evecs, root = _normal_operator(mesh, gd, basis)
    if mu == 0:
        raw = omega.copy()
    else:
        coeff = evecs.T @ (root * omega)
        raw = (evecs @ (evals**mu * coeff)) / root
    peak = np.max(np.abs(raw))
    if peak == 0.0:
        raise InvalidArgumentError("source element vanishes; omega lies in the kernel")
    factor = scale / peak
    delta = factor * raw
    lo = 0.0 if lower_bound is None else lower_bound
    g = gd + delta
    if np.any(g <= lo) or (upper_bound is not None and np.any(g > upper_bound)):
        raise PreconditionError("scaled source element pushes gamma outside the ellipticity bounds")
    return delta, factor * omega


def holder_stability(mesh: Mesh, gamma_dagger, mu: float, delta, omega,
                     basis: BoundaryBasis) -> tuple[float, float]:
    """Both sides of ``||delta||_X <= ||omega||_X^{1/(1+2mu)} ||F' delta||_Y^{2mu/(2mu+1)}``.

    ``X`` is the area-weighted element L2 norm.
    """
    areas = mesh.element_areas
    delta = np.asarray(delta, dtype=float)
    omega = np.asarray(omega, dtype=float)
    lhs = math.sqrt(float(np.sum(areas * delta**2)))
    n_omega = math.sqrt(float(np.sum(areas * omega**2)))
    n_fd = hs_norm(derivative_form(mesh, gamma_dagger, delta, basis))
    rhs = n_omega ** (1.0 / (1.0 + 2.0 * mu)) * n_fd ** (2.0 * mu / (2.0 * mu + 1.0))
    return lhs, rhs


def finite_dim_constant(mesh: Mesh, gamma_dagger, subspace, samples: int, basis: BoundaryBasis,
                        seed: int = 0) -> float:
    """Sampled lower bound on ``sup_w ||F'[gd]|w||| / ||F'[gd] w||`` over a span of patterns.

    Samples random Gaussian coefficient vectors plus sign vertices (all of
    them when there are at most 12 patterns).

    Raises
    ------
    PreconditionError
        If ``F'[gd]`` is not injective on the span (smallest singular value
        <= 1e-10 relative to the largest).
    """
    P = np.column_stack([np.asarray(p, dtype=float) for p in subspace])
    J = derivative_matrix(mesh, gamma_dagger, basis)
    sv = np.linalg.svd(J @ P, compute_uv=False)
    if sv[-1] <= 1e-10 * max(sv[0], 1e-300):
        raise PreconditionError(f"F'[gamma_dagger] is not injective on the subspace (sigma_min={sv[-1]:.3e})")
    rng = np.random.default_rng(seed)
    m = P.shape[1]
    coeffs = [c for c in rng.standard_normal((samples, m))]
    if m <= 12:
        grid = np.array(np.meshgrid(*[[-1.0, 1.0]] * m)).reshape(m, -1).T
        coeffs.extend(grid)
    else:
        coeffs.extend(rng.choice([-1.0, 1.0], (samples, m)))
    coeffs.extend(np.eye(m))
    best = 0.0
    for c in coeffs:
        w = P @ c
        den = np.linalg.norm(J @ w)
        if den == 0.0:
            continue
        best = max(best, float(np.linalg.norm(J @ np.abs(w)) / den))
    return best

