"""Tests for the Landweber harness."""

import math

import numpy as np
import pytest

from eitcone.exceptions import InvalidArgumentError
from eitcone.landweber import estimate_lipschitz, landweber_run, make_noise
from eitcone.mesh import build_structured_mesh
from eitcone.operator import build_boundary_basis, derivative_form, hs_norm
from eitcone.scenarios import checkerboard, inclusion

MESH = build_structured_mesh(8)
BASIS = build_boundary_basis(MESH, 4)
ONES = np.ones(MESH.n_triangles)
TRUTH = ONES + inclusion(MESH, (0.5, 0.5), 0.25, 0.05)


class TestLipschitz:
    def test_bounds_sampled_ratios(self, rng):
        L = estimate_lipschitz(MESH, ONES, BASIS)
        for _ in range(20):
            w = rng.standard_normal(MESH.n_triangles)
            ratio = hs_norm(derivative_form(MESH, ONES, w, BASIS)) / math.sqrt(np.sum(MESH.element_areas * w * w))
            assert ratio <= L * (1 + 1e-5)

    def test_matches_svd(self):
        from eitcone.tcc import derivative_matrix

        J = derivative_matrix(MESH, ONES, BASIS) / np.sqrt(MESH.element_areas)
        assert estimate_lipschitz(MESH, ONES, BASIS, rtol=1e-12) == pytest.approx(
            np.linalg.norm(J, 2), rel=1e-5)


class TestNoise:
    def test_norm_and_symmetry(self):
        E = make_noise(5, 0.3, seed=2)
        assert np.linalg.norm(E) == pytest.approx(0.3)
        np.testing.assert_array_equal(E, E.T)

    def test_zero(self):
        assert not make_noise(3, 0.0, 1).any()

    def test_negative(self):
        with pytest.raises(InvalidArgumentError):
            make_noise(3, -1.0, 1)


class TestRun:
    def test_short_run_descends(self):
        tr = landweber_run(MESH, ONES, TRUTH, BASIS, max_iter=30)
        assert tr.stop_index == 30 and tr.stop_reason == "max_iter"
        assert len(tr.residual_norms) == tr.stop_index + 1
        assert np.all(np.diff(tr.residual_norms) < 0)
        assert tr.first_step_descent
        assert tr.step_size <= 1.0 / tr.lipschitz**2

    def test_discrepancy_stop_with_noise(self):
        tr = landweber_run(MESH, ONES, TRUTH, BASIS, noise=1e-4, tau=1.5, max_iter=2000, seed=3)
        assert tr.stop_reason == "discrepancy"
        assert tr.residual_norms[-1] <= 1.5e-4
        assert tr.residual_norms[-2] > 1.5e-4

    def test_reproducible(self):
        a = landweber_run(MESH, ONES, TRUTH, BASIS, noise=1e-4, max_iter=20, seed=9)
        b = landweber_run(MESH, ONES, TRUTH, BASIS, noise=1e-4, max_iter=20, seed=9)
        assert a.residual_norms == b.residual_norms
        assert a.final.tobytes() == b.final.tobytes()

    def test_thinned_iterates(self):
        tr = landweber_run(MESH, ONES, TRUTH, BASIS, max_iter=25, thin=10)
        assert sorted(tr.iterates) == [0, 10, 20, 25]

    def test_clamp_counted(self):
        g0 = ONES + checkerboard(MESH, 1, 0.5)
        tr = landweber_run(MESH, g0, TRUTH, BASIS, max_iter=5, step_margin=1.0, bounds=(0.6, 1.4))
        assert np.all(tr.final >= 0.6) and np.all(tr.final <= 1.4)

    def test_eta_tracked(self):
        tr = landweber_run(MESH, ONES + checkerboard(MESH, 2, 0.05), TRUTH, BASIS, max_iter=5, track_eta=True)
        assert len(tr.eta_track) == len(tr.residual_norms)
        assert all(e >= 0 for e in tr.eta_track)

    def test_data_only(self):
        from eitcone.operator import forward_F

        y = forward_F(MESH, TRUTH, BASIS).entries
        tr = landweber_run(MESH, ONES, None, BASIS, max_iter=5, data=y)
        assert all(math.isnan(e) for e in tr.error_norms)

    def test_csv_and_summary(self, tmp_path):
        tr = landweber_run(MESH, ONES, TRUTH, BASIS, max_iter=3)
        text = tr.to_csv(tmp_path / "t.csv")
        assert text.splitlines()[0] == "iteration,residual,error,eta_stc"
        assert len(text.splitlines()) == 5
        assert (tmp_path / "t.csv").read_text() == text
        assert tr.summary()["stop_index"] == 3
        assert '"stop_reason": "max_iter"' in tr.to_json()

    @pytest.mark.parametrize("kw", [{"step_margin": 1.5}, {"step_margin": 0.0}, {"thin": 0}])
    def test_bad_arguments(self, kw):
        with pytest.raises(InvalidArgumentError):
            landweber_run(MESH, ONES, TRUTH, BASIS, max_iter=1, **kw)

    def test_missing_truth_and_data(self):
        with pytest.raises(InvalidArgumentError):
            landweber_run(MESH, ONES, None, BASIS)
