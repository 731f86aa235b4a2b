"""Nonlinear Landweber iteration for the discretized EIT problem."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegeneratePairError, EstimationError, InvalidArgumentError
from .fem import check_conductivity
from .mesh import Mesh
from .operator import BoundaryBasis, derivative_adjoint, derivative_form, forward_F, hs_norm
from .tcc import tcc_measure

__all__ = ["LandweberTrace", "estimate_lipschitz", "make_noise", "landweber_run"]

log = logging.getLogger(__name__)


def _x_norm(mesh: Mesh, v: np.ndarray) -> float:
    return math.sqrt(float(np.sum(mesh.element_areas * v * v)))


def estimate_lipschitz(mesh: Mesh, gamma, basis: BoundaryBasis, rtol: float = 1e-6,
                       max_iter: int = 500, seed: int = 0) -> float:
    """Norm of ``F'[gamma]`` from the area-weighted element space to HS, by power iteration.

    Raises
    ------
    EstimationError
        If the Rayleigh quotient has not settled to ``rtol`` after ``max_iter`` steps.
    """
    gamma = check_conductivity(gamma, mesh.n_triangles)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(mesh.n_triangles)
    v /= _x_norm(mesh, v)
    lam_old = 0.0
    for _ in range(max_iter):
        Fv = derivative_form(mesh, gamma, v, basis)
        u = derivative_adjoint(mesh, gamma, Fv, basis)
        lam = hs_norm(Fv) ** 2
        nu = _x_norm(mesh, u)
        if nu == 0.0:
            return 0.0
        v = u / nu
        if abs(lam - lam_old) <= rtol * lam:
            return math.sqrt(lam)
        lam_old = lam
    raise EstimationError(f"power iteration did not converge in {max_iter} steps")


def make_noise(K: int, delta: float, seed: int) -> np.ndarray:
    """Symmetric Gaussian K x K matrix rescaled to Hilbert-Schmidt norm ``delta``."""
    if delta < 0:
        raise InvalidArgumentError("noise level must be nonnegative")
    if delta == 0:
        return np.zeros((K, K))
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((K, K))
    a = 0.5 * (a + a.T)
    return a * (delta / np.linalg.norm(a))


@dataclass
class LandweberTrace:
    """Per-iteration record of a Landweber run.

    ``residual_norms[k]`` is ``||F(gamma_k) - y_delta||_HS`` for
    ``k = 0..stop_index``; ``iterates`` holds every ``thin``-th iterate plus the
    last one, keyed by iteration index.
    """

    residual_norms: list = field(default_factory=list)
    error_norms: list = field(default_factory=list)
    eta_track: list = field(default_factory=list)
    iterates: dict = field(default_factory=dict)
    step_size: float = 0.0
    lipschitz: float = 0.0
    stop_index: int = 0
    noise_level: float = 0.0
    tau: float = 0.0
    seed: int = 0
    stop_reason: str = ""
    diverged: bool = False
    clamp_events: int = 0
    first_step_descent: bool | None = None

    @property
    def final(self) -> np.ndarray:
        return self.iterates[max(self.iterates)]

    def rows(self) -> list[dict]:
        return [
            {
                "iteration": k,
                "residual": self.residual_norms[k],
                "error": self.error_norms[k],
                "eta_stc": self.eta_track[k] if k < len(self.eta_track) else "",
            }
            for k in range(len(self.residual_norms))
        ]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["iteration", "residual", "error", "eta_stc"],
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows())
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "stop_index": self.stop_index,
            "stop_reason": self.stop_reason,
            "initial_residual": self.residual_norms[0],
            "final_residual": self.residual_norms[-1],
            "initial_error": self.error_norms[0],
            "final_error": self.error_norms[-1],
            "step_size": self.step_size,
            "lipschitz": self.lipschitz,
            "noise_level": self.noise_level,
            "tau": self.tau,
            "seed": self.seed,
            "diverged": self.diverged,
            "clamp_events": self.clamp_events,
            "first_step_descent": self.first_step_descent,
            "max_eta_stc": max((e for e in self.eta_track if e == e), default=None),
        }

    def to_json(self) -> str:
        return json.dumps(self.summary())


def landweber_run(mesh: Mesh, gamma0, gamma_dagger, basis: BoundaryBasis, noise: float = 0.0,
                  tau: float = 1.5, max_iter: int = 1000, track_eta: bool = False,
                  step_margin: float = 0.9, rtol: float = 1e-8, bounds=(0.5, 2.0),
                  seed: int = 0, thin: int = 10, data=None) -> LandweberTrace:
    """Run ``gamma <- clip(gamma + omega F'[gamma]^*(y - F(gamma)))`` with ``omega = margin / L^2``.

    ``y = F(gamma_dagger) + noise`` where the noise matrix has HS norm ``noise``
    (or ``data`` if given, in which case ``gamma_dagger`` may be ``None`` and the
    error norms are recorded as NaN).  ``L`` is estimated at ``gamma0``.  The loop stops at
    the first ``k`` with ``residual <= max(tau * noise, rtol * residual_0)``, or
    after ``max_iter`` steps.  Non-finite iterates end the run with
    ``diverged = True`` instead of raising.
    """
    if not 0 < step_margin <= 1:
        raise InvalidArgumentError("step_margin must lie in (0, 1]")
    if thin < 1:
        raise InvalidArgumentError("thin must be >= 1")
    lo, hi = bounds
    g = check_conductivity(gamma0, mesh.n_triangles).copy()
    if data is None:
        if gamma_dagger is None:
            raise InvalidArgumentError("either gamma_dagger or data is required")
        gd = check_conductivity(gamma_dagger, mesh.n_triangles)
        y = forward_F(mesh, gd, basis).entries + make_noise(basis.K, noise, seed)
    else:
        gd = None if gamma_dagger is None else check_conductivity(gamma_dagger, mesh.n_triangles)
        y = np.asarray(data, dtype=float)
        if y.shape != (basis.K, basis.K):
            raise InvalidArgumentError(f"data must be {basis.K} x {basis.K}, got {y.shape}")
    L = estimate_lipschitz(mesh, g, basis, seed=seed)
    omega = step_margin / L**2
    trace = LandweberTrace(step_size=omega, lipschitz=L, noise_level=noise, tau=tau, seed=seed)

    def record(k, gamma, resid):
        trace.residual_norms.append(hs_norm(resid))
        trace.error_norms.append(math.nan if gd is None else _x_norm(mesh, gamma - gd))
        if track_eta and gd is not None:
            try:
                rep = tcc_measure(mesh, gamma, gd, basis, linearization_point="gamma")
                trace.eta_track.append(rep.eta_stc_at_gamma)
            except DegeneratePairError:
                trace.eta_track.append(math.nan)
        if k % thin == 0:
            trace.iterates[k] = gamma.copy()

    resid = y - forward_F(mesh, g, basis, check=False).entries
    record(0, g, resid)
    target = max(tau * noise, rtol * trace.residual_norms[0])
    k = 0
    trace.stop_reason = "max_iter"
    while True:
        if trace.residual_norms[k] <= target:
            trace.stop_reason = "discrepancy"
            break
        if k >= max_iter:
            break
        step = derivative_adjoint(mesh, g, resid, basis)
        g_new = g + omega * step
        if not np.all(np.isfinite(g_new)):
            trace.diverged = True
            trace.stop_reason = "non-finite iterate"
            log.warning("Landweber iterate became non-finite at step %d", k + 1)
            break
        clipped = np.clip(g_new, lo, hi)
        if np.any(clipped != g_new):
            trace.clamp_events += 1
            log.info("clamp active at step %d on %d elements", k + 1, int(np.sum(clipped != g_new)))
        g = clipped
        k += 1
        resid = y - forward_F(mesh, g, basis, check=False).entries
        record(k, g, resid)
        if k == 1:
            trace.first_step_descent = trace.residual_norms[1] <= trace.residual_norms[0] + 1e-12
        if not math.isfinite(trace.residual_norms[k]):
            trace.diverged = True
            trace.stop_reason = "non-finite residual"
            break
    trace.stop_index = k
    trace.iterates[k] = g.copy()
    return trace
