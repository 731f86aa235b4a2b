"""Tests for the structured unit-square triangulation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eitcone.exceptions import InvalidArgumentError
from eitcone.mesh import Mesh, boundary_arclength, build_structured_mesh


class TestStructuredMesh:
    def test_counts_n1(self):
        m = build_structured_mesh(1)
        assert m.n_nodes == 4
        assert m.n_triangles == 2
        assert m.interior_nodes.size == 0

    def test_n1_layout(self):
        m = build_structured_mesh(1)
        np.testing.assert_array_equal(m.nodes, [[0, 0], [1, 0], [0, 1], [1, 1]])
        np.testing.assert_array_equal(m.triangles, [[0, 1, 3], [0, 3, 2]])
        np.testing.assert_array_equal(m.boundary_nodes, [0, 1, 3, 2])

    @pytest.mark.parametrize("n", [2, 5, 8])
    def test_counts(self, n):
        m = build_structured_mesh(n)
        assert m.n_nodes == (n + 1) ** 2
        assert m.n_triangles == 2 * n * n
        assert m.boundary_nodes.size == 4 * n
        assert m.interior_nodes.size == (n - 1) ** 2

    @given(st.integers(min_value=1, max_value=12))
    @settings(max_examples=12, deadline=None)
    def test_areas_positive_and_sum_to_one(self, n):
        m = build_structured_mesh(n)
        assert np.all(m.signed_areas() > 0)
        assert m.element_areas.sum() == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(m.element_areas, 0.5 / n**2, rtol=1e-13)

    def test_boundary_nodes_on_boundary(self):
        m = build_structured_mesh(6)
        x, y = m.nodes[m.boundary_nodes].T
        on_edge = (x == 0) | (x == 1) | (y == 0) | (y == 1)
        assert on_edge.all()
        assert np.unique(m.boundary_nodes).size == m.boundary_nodes.size

    def test_boundary_counterclockwise(self):
        m = build_structured_mesh(4)
        p = m.nodes[m.boundary_nodes]
        q = np.roll(p, -1, axis=0)
        shoelace = 0.5 * np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1])
        assert shoelace == pytest.approx(1.0)

    def test_arrays_read_only(self):
        m = build_structured_mesh(2)
        with pytest.raises(ValueError):
            m.nodes[0, 0] = 3.0

    @pytest.mark.parametrize("bad", [0, -1, 2.5, True, "4"])
    def test_invalid_n(self, bad):
        with pytest.raises(InvalidArgumentError):
            build_structured_mesh(bad)

    def test_json_roundtrip(self):
        m = build_structured_mesh(3)
        m2 = Mesh.from_json(m.to_json())
        np.testing.assert_array_equal(m.nodes, m2.nodes)
        np.testing.assert_array_equal(m.triangles, m2.triangles)
        np.testing.assert_array_equal(m.element_areas, m2.element_areas)
        assert m2.n == 3


class TestArclength:
    def test_monotone_from_origin(self):
        m = build_structured_mesh(5)
        s = boundary_arclength(m)
        assert s[0] == 0.0
        assert np.all(np.diff(s) > 0)
        assert s[-1] < 4.0

    def test_corners(self):
        m = build_structured_mesh(2)
        s = boundary_arclength(m)
        corners = {tuple(p): v for p, v in zip(m.nodes[m.boundary_nodes], s)}
        assert corners[(1.0, 0.0)] == 1.0
        assert corners[(1.0, 1.0)] == 2.0
        assert corners[(0.0, 1.0)] == 3.0

    def test_uniform_spacing(self):
        m = build_structured_mesh(7)
        np.testing.assert_allclose(np.diff(boundary_arclength(m)), 1 / 7, rtol=1e-12)
