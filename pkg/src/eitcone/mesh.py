"""Structured triangulation of the unit square."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError

__all__ = ["Mesh", "build_structured_mesh", "boundary_arclength"]


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation of ``[0, 1]^2`` with a counterclockwise boundary.

    Attributes
    ----------
    nodes : ndarray of shape (n_nodes, 2)
    triangles : ndarray of shape (n_triangles, 3)
        Node indices, counterclockwise.
    boundary_nodes : ndarray of shape (n_boundary,)
        Boundary node indices ordered by arclength, starting at (0, 0).
    element_areas : ndarray of shape (n_triangles,)
    n : int
        Subdivisions per side.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    element_areas: np.ndarray
    n: int

    def __post_init__(self):
        for name in ("nodes", "triangles", "boundary_nodes", "element_areas"):
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def interior_nodes(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.triangles].mean(axis=1)

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def to_json(self) -> str:
        return json.dumps(
            {
                "n": self.n,
                "nodes": self.nodes.tolist(),
                "triangles": self.triangles.tolist(),
                "boundary_nodes": self.boundary_nodes.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Mesh":
        data = json.loads(text)
        nodes = np.asarray(data["nodes"], dtype=float)
        triangles = np.asarray(data["triangles"], dtype=np.intp)
        areas = _areas(nodes, triangles)
        return cls(nodes, triangles, np.asarray(data["boundary_nodes"], dtype=np.intp),
                   areas, int(data["n"]))


def _areas(nodes, triangles):
    p = nodes[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_structured_mesh(n: int) -> Mesh:
    """Split each of the ``n x n`` grid squares along its lower-left to upper-right diagonal.

    Node ``(i, j)`` sits at ``(i/n, j/n)`` with index ``j*(n+1) + i``.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    ticks = np.arange(n + 1) / n
    xx, yy = np.meshgrid(ticks, ticks)
    nodes = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    a = j * (n + 1) + i
    b = a + 1
    c = a + n + 2
    d = a + n + 1
    # lower-right then upper-left triangle of each square, interleaved per square
    triangles = np.empty((2 * n * n, 3), dtype=np.intp)
    triangles[0::2] = np.column_stack([a, b, c])
    triangles[1::2] = np.column_stack([a, c, d])

    idx = lambda ii, jj: jj * (n + 1) + ii  # noqa: E731
    bottom = [idx(k, 0) for k in range(n + 1)]
    right = [idx(n, k) for k in range(1, n + 1)]
    top = [idx(k, n) for k in range(n - 1, -1, -1)]
    left = [idx(0, k) for k in range(n - 1, 0, -1)]
    boundary = np.array(bottom + right + top + left, dtype=np.intp)

    return Mesh(nodes, triangles, boundary, _areas(nodes, triangles), n)


def boundary_arclength(mesh: Mesh) -> np.ndarray:
    """Arclength parameter ``s`` in ``[0, 4)`` of each boundary node, in boundary order."""
    x, y = mesh.nodes[mesh.boundary_nodes].T
    s = np.where(y == 0.0, x, 0.0)
    s = np.where((x == 1.0) & (y > 0.0), 1.0 + y, s)
    s = np.where((y == 1.0) & (x < 1.0), 3.0 - x, s)
    s = np.where((x == 0.0) & (y > 0.0) & (y < 1.0), 4.0 - y, s)
    return s
