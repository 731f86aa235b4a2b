"""Tests for scenario generation and serialization."""

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eitcone.exceptions import EllipticityError, InvalidArgumentError
from eitcone.mesh import build_structured_mesh
from eitcone.scenarios import Scenario, checkerboard, inclusion, perturbation_pair, random_pair

MESH = build_structured_mesh(8)


class TestInclusion:
    def test_centroid_rule(self):
        d = inclusion(MESH, (0.5, 0.5), 0.25, 0.1)
        inside = np.sum((MESH.centroids - 0.5) ** 2, axis=1) <= 0.0625
        np.testing.assert_array_equal(d, 0.1 * inside)
        assert set(np.unique(d)) == {0.0, 0.1}

    def test_empty_warns(self):
        with pytest.warns(UserWarning):
            d = inclusion(MESH, (0.0, 0.0), 0.01, 1.0)
        assert not d.any()

    def test_zero_radius_silent(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert not inclusion(MESH, (0.5, 0.5), 0.0, 1.0).any()

    def test_negative_radius(self):
        with pytest.raises(InvalidArgumentError):
            inclusion(MESH, (0.5, 0.5), -0.1, 1.0)


class TestCheckerboard:
    def test_balanced(self):
        d = checkerboard(MESH, 1, 0.2)
        assert np.abs(d).max() == 0.2
        assert d.sum() == pytest.approx(0.0)
        # both triangles of a grid square share a sign
        np.testing.assert_array_equal(d[0::2], d[1::2])

    def test_block_two(self):
        d = checkerboard(MESH, 2, 1.0).reshape(8, 8, 2)[:, :, 0]
        assert d[0, 0] == d[0, 1] == d[1, 0] == d[1, 1] == 1.0
        assert d[0, 2] == -1.0

    @pytest.mark.parametrize("bad", [0, 9])
    def test_block_range(self, bad):
        with pytest.raises(InvalidArgumentError):
            checkerboard(MESH, bad, 1.0)


class TestRandomPair:
    @given(st.integers(0, 10**6), st.floats(0.0, 0.99))
    @settings(max_examples=30, deadline=None)
    def test_contraction_bound(self, seed, xi_max):
        s = random_pair(MESH, seed, xi_max)
        # (gd (1 + u) - gd) / gd carries about one ulp of absolute round-off
        assert s.xi_dagger <= xi_max * (1 + 1e-12) + 4 * np.finfo(float).eps
        assert np.all(np.asarray(s.gamma) > 0)

    def test_saturated(self):
        s = random_pair(MESH, 4, 0.99, saturate=True)
        assert s.xi_dagger == pytest.approx(0.99, rel=1e-12)

    def test_deterministic(self):
        a, b = random_pair(MESH, 11, 0.5), random_pair(MESH, 11, 0.5)
        np.testing.assert_array_equal(np.asarray(a.gamma), np.asarray(b.gamma))

    def test_range(self):
        with pytest.raises(InvalidArgumentError):
            random_pair(MESH, 0, 1.0)


class TestScenario:
    def test_json_roundtrip_bitwise(self):
        s = random_pair(MESH, 5, 0.7)
        t = Scenario.from_json(s.to_json())
        assert np.asarray(s.gamma).tobytes() == np.asarray(t.gamma).tobytes()
        assert np.asarray(s.gamma_dagger).tobytes() == np.asarray(t.gamma_dagger).tobytes()
        assert t.recipe == s.recipe and t.seed == 5

    def test_sign_classes(self):
        gd = np.ones(MESH.n_triangles)
        d = inclusion(MESH, (0.5, 0.5), 0.25, 0.1)
        assert perturbation_pair("p", gd, d).sign_class == "monotone+"
        assert perturbation_pair("n", gd, -d).sign_class == "monotone-"
        assert perturbation_pair("m", gd, checkerboard(MESH, 1, 0.1)).sign_class == "mixed"
        assert perturbation_pair("z", gd, 0 * d).sign_class == "identical"

    def test_bounds_enforced(self):
        with pytest.raises(EllipticityError):
            perturbation_pair("bad", np.ones(MESH.n_triangles), -0.7)

    def test_alpha_lower(self):
        s = perturbation_pair("p", np.ones(MESH.n_triangles), 0.1, lower=0.4, upper=3.0)
        assert s.alpha_lower == 0.4
        np.testing.assert_allclose(s.delta, 0.1)
