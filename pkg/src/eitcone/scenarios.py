"""Deterministic conductivity pairs and perturbation patterns."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError
from .fem import Conductivity
from .mesh import Mesh
from .operator import contraction

__all__ = [
    "Scenario",
    "inclusion",
    "checkerboard",
    "random_pair",
    "perturbation_pair",
    "SIGN_CLASSES",
]

SIGN_CLASSES = ("monotone+", "monotone-", "mixed", "checkerboard", "source-condition", "identical")
DEFAULT_LOWER = 0.5
DEFAULT_UPPER = 2.0


def _sign_class(delta) -> str:
    delta = np.asarray(delta)
    if not np.any(delta):
        return "identical"
    if np.all(delta >= 0):
        return "monotone+"
    if np.all(delta <= 0):
        return "monotone-"
    return "mixed"


@dataclass(frozen=True, eq=False)
class Scenario:
    """A named ``(gamma, gamma_dagger)`` pair with its provenance.

    ``recipe`` records how the pair was generated; round-tripping through
    :meth:`to_json` / :meth:`from_json` reproduces values bit for bit.
    """

    name: str
    gamma_dagger: Conductivity
    gamma: Conductivity
    seed: int | None = None
    sign_class: str = "mixed"
    recipe: dict = field(default_factory=dict)

    @property
    def xi_dagger(self) -> float:
        return contraction(self.gamma, self.gamma_dagger)

    @property
    def xi(self) -> float:
        return contraction(self.gamma_dagger, self.gamma)

    @property
    def alpha_lower(self) -> float:
        return min(self.gamma.lower_bound, self.gamma_dagger.lower_bound)

    @property
    def delta(self) -> np.ndarray:
        return np.asarray(self.gamma) - np.asarray(self.gamma_dagger)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "sign_class": self.sign_class,
            "recipe": self.recipe,
            "xi_dagger": self.xi_dagger,
            "xi": self.xi,
            "bounds": [self.gamma.lower_bound, self.gamma.upper_bound],
            # repr of floats round-trips exactly through json
            "gamma_dagger": self.gamma_dagger.values.tolist(),
            "gamma": self.gamma.values.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        lo, hi = data.get("bounds", (DEFAULT_LOWER, DEFAULT_UPPER))
        return cls(
            name=data["name"],
            gamma_dagger=Conductivity(np.asarray(data["gamma_dagger"], float), lo, hi),
            gamma=Conductivity(np.asarray(data["gamma"], float), lo, hi),
            seed=data.get("seed"),
            sign_class=data.get("sign_class", "mixed"),
            recipe=dict(data.get("recipe", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def inclusion(mesh: Mesh, center, radius: float, contrast: float) -> np.ndarray:
    """``contrast`` times the indicator of elements whose centroid lies in the disk."""
    if radius < 0:
        raise InvalidArgumentError("radius must be nonnegative")
    c = np.asarray(center, dtype=float)
    inside = np.sum((mesh.centroids - c) ** 2, axis=1) <= radius**2
    if radius > 0 and not inside.any():
        warnings.warn(f"inclusion at {tuple(c)} with radius {radius} contains no element centroid",
                      stacklevel=2)
    return contrast * inside.astype(float)


def checkerboard(mesh: Mesh, block_size: int, amplitude: float) -> np.ndarray:
    """``+-amplitude`` alternating over ``block_size x block_size`` groups of grid squares."""
    if block_size < 1 or block_size > mesh.n:
        raise InvalidArgumentError(f"block_size must lie in [1, {mesh.n}], got {block_size}")
    square = np.arange(mesh.n_triangles) // 2
    col, row = square % mesh.n, square // mesh.n
    sign = np.where(((col // block_size) + (row // block_size)) % 2 == 0, 1.0, -1.0)
    return amplitude * sign


def perturbation_pair(name: str, gamma_dagger, delta, lower=DEFAULT_LOWER, upper=DEFAULT_UPPER,
                      seed=None, recipe=None, sign_class=None) -> Scenario:
    """Scenario ``gamma = gamma_dagger + delta`` with shared bounds."""
    gd = np.asarray(gamma_dagger, dtype=float)
    g = gd + np.asarray(delta, dtype=float)
    return Scenario(
        name=name,
        gamma_dagger=Conductivity(gd, lower, upper),
        gamma=Conductivity(g, lower, upper),
        seed=seed,
        sign_class=sign_class or _sign_class(g - gd),
        recipe=dict(recipe or {}),
    )


def random_pair(mesh: Mesh, seed: int, xi_max: float, dagger_range=(0.75, 1.5),
                saturate: bool = False) -> Scenario:
    """``gamma_dagger ~ U(dagger_range)``, ``gamma = gamma_dagger (1 + u)`` with ``u ~ U(-xi_max, xi_max)``.

    With ``saturate`` the largest ``|u|`` is pushed to exactly ``xi_max``.  The
    bounds of both conductivities are the tight range of the pair.
    """
    if not 0.0 <= xi_max < 1.0:
        raise InvalidArgumentError(f"xi_max must lie in [0, 1), got {xi_max}")
    rng = np.random.default_rng(seed)
    gd = rng.uniform(*dagger_range, mesh.n_triangles)
    u = rng.uniform(-xi_max, xi_max, mesh.n_triangles)
    if saturate and xi_max > 0:
        k = int(np.argmax(np.abs(u)))
        u[k] = np.copysign(xi_max, u[k])
    g = gd * (1.0 + u)
    lo = float(min(g.min(), gd.min()))
    hi = float(max(g.max(), gd.max()))
    return Scenario(
        name=f"random-{seed}",
        gamma_dagger=Conductivity(gd, lo, hi),
        gamma=Conductivity(g, lo, hi),
        seed=seed,
        sign_class=_sign_class(g - gd),
        recipe={"kind": "random", "xi_max": xi_max, "dagger_range": list(dagger_range),
                "saturate": saturate},
    )
