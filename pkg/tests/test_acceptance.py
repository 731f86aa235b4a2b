"""Acceptance criteria at desk scale (mesh n = 8 and 16, K = 4 to 8).

Each test records a single PASS/FAIL line (shown in the terminal summary) and
then asserts it.  Independent oracles are used where one exists: dense Schur
complements are not needed here because the identities compare two separate
computational routes, the projector kernel comes from an SVD null space, and
derivative checks use finite differences.
"""

import math

import numpy as np
import pytest
import scipy.linalg

from eitcone.fem import as_gradient_weights, discrete_operators
from eitcone.landweber import landweber_run
from eitcone.loewner import (
    certify_babel0,
    certify_conmo,
    certify_main1,
    certify_norm_bound,
    certify_util,
    certify_util_sharpness,
    second_derivative_sign,
)
from eitcone.mesh import build_structured_mesh
from eitcone.operator import (
    build_boundary_basis,
    derivative_adjoint,
    derivative_form,
    dtn_form,
    forward_difference_cross,
    hs_inner,
    projector_R,
    resolvent_identity_check,
)
from eitcone.scenarios import checkerboard, inclusion, random_pair
from eitcone.tcc import (
    GUARANTEE_SLACK,
    check_mjmi,
    check_unbalanced,
    monotone_radius,
    star_seminorm,
    theta_eta,
)

TOL = 1e-8


@pytest.fixture(scope="module")
def mesh():
    return build_structured_mesh(8)


@pytest.fixture(scope="module")
def basis(mesh):
    return build_boundary_basis(mesh, 8)


def _pairs(mesh, count, xi_max, start=0):
    return [random_pair(mesh, start + s, xi_max) for s in range(count)]


def _prolong(coarse, fine):
    """Map each fine element to the coarse element containing its centroid."""
    c = fine.centroids * coarse.n
    col = np.minimum(np.floor(c[:, 0]).astype(int), coarse.n - 1)
    row = np.minimum(np.floor(c[:, 1]).astype(int), coarse.n - 1)
    upper = (c[:, 1] - row) > (c[:, 0] - col)  # above the square's diagonal
    return 2 * (row * coarse.n + col) + upper


class TestAcceptance:
    def test_01_galerkin_identity(self, mesh, basis, acceptance_log):
        worst = 0.0
        for p in _pairs(mesh, 100, 0.9):
            g, gd = np.asarray(p.gamma), np.asarray(p.gamma_dagger)
            diff = dtn_form(mesh, g, basis).entries - dtn_form(mesh, gd, basis).entries
            cross = forward_difference_cross(mesh, g, gd, basis)
            worst = max(worst, np.linalg.norm(diff - cross) / np.linalg.norm(diff))
        ok = worst <= 1e-11
        acceptance_log(1, ok, f"energy-difference vs cross formula: max rel err {worst:.2e} (<= 1e-11, 100 scenarios)")
        assert ok

    def test_02_projector(self, mesh, acceptance_log):
        ops = discrete_operators(mesh)
        s = np.sqrt(ops.W)
        worst = {"idem": 0.0, "adj": 0.0, "kernel": 0.0}
        rng = np.random.default_rng(2)
        for k in range(20):
            g = rng.uniform(0.5, 2.0, mesh.n_triangles)
            R = projector_R(mesh, g)
            Rs = s[:, None] * R / s[None, :]  # W-orthonormal coordinates
            nrm = np.linalg.norm(Rs, 2)
            worst["idem"] = max(worst["idem"], np.linalg.norm(Rs @ Rs - Rs, 2) / nrm)
            worst["adj"] = max(worst["adj"], np.linalg.norm(Rs - Rs.T, 2) / nrm)
            # fields with vanishing weak sqrt(gamma)-weighted divergence, from an SVD null space
            constraint = (ops.G_int.T @ np.diag(ops.W * as_gradient_weights(np.sqrt(g))))
            null = scipy.linalg.null_space(np.asarray(constraint))
            fields = null @ rng.standard_normal((null.shape[1], 20))
            for v in fields.T:
                worst["kernel"] = max(worst["kernel"], math.sqrt((R @ v) @ (ops.W * (R @ v)) / (v @ (ops.W * v))))
        ok = all(v <= 1e-10 for v in worst.values())
        acceptance_log(2, ok, "projector: idempotence {idem:.1e}, W-self-adjointness {adj:.1e}, "
                              "kernel {kernel:.1e} (<= 1e-10, 20 conductivities x 20 fields)".format(**worst))
        assert ok

    def test_03_resolvent(self, mesh, acceptance_log):
        rng = np.random.default_rng(3)
        worst = 0.0
        for p in _pairs(mesh, 50, 0.9, start=1000):
            f = rng.standard_normal(mesh.boundary_nodes.size)
            worst = max(worst, resolvent_identity_check(mesh, p.gamma, p.gamma_dagger, f))
        ok = worst <= 1e-9
        acceptance_log(3, ok, f"resolvent identity: max rel err {worst:.2e} (<= 1e-9, 50 pairs, xi <= 0.9)")
        assert ok

    def test_04_upper_convexity(self, mesh, basis, acceptance_log):
        pairs = _pairs(mesh, 190, 0.9, start=2000)
        pairs += [random_pair(mesh, 3000 + s, 0.99, saturate=True) for s in range(10)]
        certs = [c for p in pairs for c in certify_main1(mesh, p.gamma, p.gamma_dagger, basis, TOL, p.seed)]
        worst = min(c.lambda_min_gap / max(c.scale, 1e-14) for c in certs)
        ok = all(c.passed for c in certs) and len(certs) == 400
        acceptance_log(4, ok, f"0 <= B <= D(dg^2/gd): {sum(c.passed for c in certs)}/400 certificates, "
                              f"worst relative gap {worst:.2e} (200 pairs incl. 10 at xi = 0.99)")
        assert ok

    def test_05_sharpened_bounds(self, mesh, basis, acceptance_log):
        n_ok = n_sharp = 0
        for p in _pairs(mesh, 100, 0.8, start=4000):
            n_ok += sum(c.passed for c in certify_util(mesh, p.gamma, p.gamma_dagger, basis, TOL))
            n_sharp += certify_util_sharpness(mesh, p.gamma, p.gamma_dagger, basis, TOL)[0].passed
        ok = n_ok == 200 and n_sharp == 100
        acceptance_log(5, ok, f"sharpened upper bounds: {n_ok}/200 certificates; first sharpened bound "
                              f"below the plain bound on {n_sharp}/100 pairs (xi <= 0.8)")
        assert ok

    def test_06_brackets(self, mesh, basis, acceptance_log):
        n_conmo = n_babel = 0
        for p in _pairs(mesh, 100, 0.9, start=5000):
            n_conmo += sum(c.passed for c in certify_conmo(mesh, p.gamma, p.gamma_dagger, basis, TOL))
        for p in _pairs(mesh, 100, 0.9, start=6000):
            lo, hi, _ = certify_babel0(mesh, p.gamma, p.gamma_dagger, basis, TOL)
            n_babel += lo.passed + hi.passed
        ok = n_conmo == 400 and n_babel == 200
        acceptance_log(6, ok, f"difference brackets: {n_conmo}/400; derivative-difference bounds: "
                              f"{n_babel}/200 (100 pairs each)")
        assert ok

    def test_07_norm_bound_and_ratios(self, mesh, basis, acceptance_log):
        reports = [certify_norm_bound(mesh, p.gamma, p.gamma_dagger, basis, TOL) for p in _pairs(mesh, 200, 0.9, 7000)]
        n_pass = sum(r.mainest1_pass for r in reports)
        fine = build_structured_mesh(16)
        fine_basis = build_boundary_basis(fine, 8)
        idx = _prolong(mesh, fine)
        coarse_max = np.zeros(2)
        fine_max = np.zeros(2)
        for p in _pairs(mesh, 40, 0.9, 7000):
            g, gd = np.asarray(p.gamma), np.asarray(p.gamma_dagger)
            rc = certify_norm_bound(mesh, g, gd, basis, TOL)
            rf = certify_norm_bound(fine, g[idx], gd[idx], fine_basis, TOL)
            n_pass += rf.mainest1_pass
            coarse_max = np.maximum(coarse_max, [rc.ratio_x1, rc.ratio_x2])
            fine_max = np.maximum(fine_max, [rf.ratio_x1, rf.ratio_x2])
        growth = fine_max / coarse_max
        const = max(coarse_max.max(), fine_max.max())
        ok = n_pass == 240 and np.all(growth <= 10.0)
        acceptance_log(7, ok, f"norm bound: {n_pass}/240 pairs; ratio constants x1 {coarse_max[0]:.3f}->"
                              f"{fine_max[0]:.3f}, x2 {coarse_max[1]:.3f}->{fine_max[1]:.3f} (n 8->16, "
                              f"growth {growth.max():.2f} <= 10, logged constant {const:.3f})")
        assert ok

    def test_08_derivative(self, mesh, basis, acceptance_log):
        rng = np.random.default_rng(8)
        g = rng.uniform(0.75, 1.5, mesh.n_triangles)
        w = rng.uniform(-1.0, 1.0, mesh.n_triangles)
        exact = derivative_form(mesh, g, w, basis).entries
        hs = np.array([1e-1, 1e-2, 1e-3])
        errs = []
        for h in hs:
            fd = (dtn_form(mesh, g + h * w, basis).entries - dtn_form(mesh, g - h * w, basis).entries) / (2 * h)
            errs.append(np.linalg.norm(fd - exact) / np.linalg.norm(exact))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        worst_dual = 0.0
        for _ in range(10):
            w2 = rng.standard_normal(mesh.n_triangles)
            S = rng.standard_normal((8, 8))
            S = S + S.T
            lhs = hs_inner(derivative_form(mesh, g, w2, basis), S)
            rhs = float(np.sum(mesh.element_areas * w2 * derivative_adjoint(mesh, g, S, basis)))
            worst_dual = max(worst_dual, abs(lhs - rhs) / max(abs(lhs), 1e-300))
        ok = abs(slope - 2.0) <= 0.2 and worst_dual <= 1e-10
        acceptance_log(8, ok, f"central-difference slope {slope:.3f} (2.0 +- 0.2, errors "
                              f"{', '.join(f'{e:.1e}' for e in errs)}); adjoint duality {worst_dual:.1e} (<= 1e-10)")
        assert ok

    def test_09_second_derivative(self, mesh, basis, acceptance_log):
        rng = np.random.default_rng(9)
        slopes, passed = [], True
        for _ in range(5):
            gd = rng.uniform(0.75, 1.5, mesh.n_triangles)
            w = rng.uniform(-1.0, 1.0, mesh.n_triangles)
            rep = second_derivative_sign(mesh, gd, w, basis, eps=(1e-1, 1e-2, 1e-3), stencil="taylor", tol=TOL)
            slopes.append(rep.slope)
            passed &= rep.passed
        ok = passed and all(abs(s - 1.0) <= 0.3 for s in slopes)
        acceptance_log(9, ok, f"-F'' sign certificates {'all pass' if passed else 'FAILED'}; deviation slopes "
                              f"{min(slopes):.3f}..{max(slopes):.3f} (1.0 +- 0.3, 5 directions)")
        assert ok

    def test_10_cone_guarantees(self, mesh, basis, acceptance_log):
        theta_ref = theta_eta(1.0, 0.5)
        alpha = 0.5
        gd = np.ones(mesh.n_triangles)
        directions = [inclusion(mesh, c, r, 1.0) for c, r in [((0.5, 0.5), 0.25), ((0.25, 0.7), 0.2),
                                                                ((0.8, 0.2), 0.15)]]
        worst_margin = -math.inf
        monotone_cases = 0
        violations = 0
        for eta in (0.25, 0.5, 1.0):
            for d in directions:
                for sign in (1.0, -1.0):
                    radius = monotone_radius(sign * d, eta, alpha)
                    for frac in (0.25, 0.5, 1.0):
                        res = check_mjmi(mesh, gd + frac * radius * sign * d, gd, eta, basis, alpha_lower=alpha)
                        monotone_cases += 1
                        worst_margin = max(worst_margin, res.measured_eta - eta)
                        violations += res.measured_eta > eta + GUARANTEE_SLACK
        fired = unbalanced_viol = 0
        eta = 0.5
        theta = theta_eta(eta, alpha)
        # dominant inclusion minus a weaker one elsewhere, from one-signed to nearly balanced
        mixes = [(0, 0.0), (0, 0.2), (1, 0.5), (2, 0.9)]
        for major, minor in mixes:
            pattern = directions[major] - minor * directions[(major + 1) % 3]
            pattern = pattern / np.abs(pattern).max()
            for frac in (0.1, 0.2, 0.3, 0.5, 1.0):
                rep = check_unbalanced(mesh, gd + frac * theta * pattern, gd, eta, basis, alpha_lower=alpha)
                if rep.guarantee_valid is not None:
                    fired += 1
                    unbalanced_viol += not rep.guarantee_valid
        cb = check_unbalanced(mesh, gd + theta * checkerboard(mesh, 1, 1.0), gd, eta, basis, alpha_lower=alpha)
        ok = theta_ref == 0.1 and violations == 0 and unbalanced_viol == 0 and fired > 0
        acceptance_log(10, ok, f"theta(1, 0.5) = {theta_ref!r}; monotone: {monotone_cases - violations}/"
                               f"{monotone_cases} within eta + 1e-8 (max eta_measured - eta = {worst_margin:.3f}); "
                               f"unbalanced gates: {fired - unbalanced_viol}/{fired} fired gates honored "
                               f"(checkerboard fired: {cb.guarantee_valid is not None})")
        assert ok

    def test_11_seminorm(self, mesh, basis, acceptance_log):
        rng = np.random.default_rng(11)
        worst = -math.inf
        for p in _pairs(mesh, 100, 0.9, start=11000):
            gd = np.asarray(p.gamma_dagger)
            u, v = rng.standard_normal((2, mesh.n_triangles))
            su, sv = star_seminorm(mesh, gd, u, basis), star_seminorm(mesh, gd, v, basis)
            worst = max(worst, (star_seminorm(mesh, gd, u + v, basis) - su - sv) / (su + sv))
        ok = worst <= 1e-10
        acceptance_log(11, ok, f"seminorm triangle inequality: max relative excess {worst:.2e} (<= 1e-10, 100 pairs)")
        assert ok

    def test_12_landweber(self, mesh, acceptance_log):
        basis4 = build_boundary_basis(mesh, 4)
        g0 = np.ones(mesh.n_triangles)
        truth = g0 + inclusion(mesh, (0.5, 0.5), 0.25, 0.05)
        run = lambda: landweber_run(mesh, g0, truth, basis4, max_iter=2000, rtol=1e-8, seed=0)  # noqa: E731
        a, b = run(), run()
        r = np.asarray(a.residual_norms)
        decreasing = bool(np.all(np.diff(r) < 0))
        reached = r[-1] < 1e-8 * r[0]
        repro = a.residual_norms == b.residual_norms and a.final.tobytes() == b.final.tobytes()
        osc = landweber_run(mesh, g0 + checkerboard(mesh, 2, 0.05), truth, basis4, max_iter=2000,
                            rtol=1e-8, track_eta=True, seed=0)
        logged = len(osc.eta_track) == len(osc.residual_norms)
        ok = decreasing and reached and repro and logged
        acceptance_log(12, ok, f"Landweber (n=8, K=4): monotone start {a.stop_index} iterations, final/initial "
                               f"{r[-1] / r[0]:.2e}, strictly decreasing {decreasing}, bit-reproducible {repro}; "
                               f"oscillatory start {osc.stop_index} iterations ({osc.stop_reason}), "
                               f"eta_stc logged per iteration, max {max(osc.eta_track):.3f}")
        assert ok
