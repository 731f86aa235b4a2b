"""scikit-learn style wrappers around the forward map and Landweber reconstruction.

``EITForwardModel.transform`` maps rows of per-element conductivities to rows of
vectorized ``F(gamma)`` matrices; ``LandweberEIT.predict`` maps such data rows
back to conductivities.  Both follow the estimator conventions (constructor
stores hyper-parameters only, fitted state ends in ``_``), so they work with
``clone``, ``get_params`` and pipelines.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .landweber import landweber_run
from .mesh import build_structured_mesh
from .operator import build_boundary_basis, forward_F
from .validation import check_conductivity_rows, check_data_rows

__all__ = ["EITForwardModel", "LandweberEIT"]


class _MeshBasisMixin:
    def _build(self):
        self.mesh_ = build_structured_mesh(self.mesh_n)
        self.basis_ = build_boundary_basis(self.mesh_, self.n_basis, self.basis_family)
        self.n_features_in_ = self.mesh_.n_triangles
        return self


class EITForwardModel(_MeshBasisMixin, TransformerMixin, BaseEstimator):
    """Forward map ``gamma -> Lambda_gamma - Lambda_1`` on a structured mesh.

    Parameters
    ----------
    mesh_n : int, default=8
        Grid subdivisions per side.
    n_basis : int, default=8
        Number of boundary data K.
    basis_family : {"trigonometric", "boundary-hat"}, default="trigonometric"
    """

    def __init__(self, mesh_n=8, n_basis=8, basis_family="trigonometric"):
        self.mesh_n = mesh_n
        self.n_basis = n_basis
        self.basis_family = basis_family

    def fit(self, X=None, y=None):
        """Build mesh and boundary basis; ``X`` is only checked for shape."""
        self._build()
        if X is not None:
            check_conductivity_rows(X, self.n_features_in_)
        return self

    def transform(self, X):
        """Return ``F(gamma)`` for each row of ``X`` as a flat ``K*K`` vector."""
        check_is_fitted(self, "basis_")
        X = check_conductivity_rows(X, self.n_features_in_)
        return np.vstack([
            forward_F(self.mesh_, row, self.basis_).entries.ravel() for row in X
        ])

    def get_feature_names_out(self, input_features=None):
        K = self.n_basis
        return np.array([f"F_{i}_{j}" for i in range(K) for j in range(K)], dtype=object)


class LandweberEIT(_MeshBasisMixin, BaseEstimator):
    """Landweber reconstruction of per-element conductivity from ``F(gamma)`` data.

    Parameters
    ----------
    mesh_n, n_basis, basis_family
        As for :class:`EITForwardModel`; must match the data.
    gamma0 : float or array-like, default=1.0
        Initial guess.
    noise_level : float, default=0.0
        HS norm of the data error, used by the discrepancy stop.
    tau : float, default=1.5
    max_iter : int, default=2000
    step_margin : float, default=0.9
        Step size is ``step_margin / L^2``.
    rtol : float, default=1e-8
        Relative residual target used when ``noise_level`` is zero.
    bounds : tuple, default=(0.5, 2.0)
        Clamp interval for the iterates.
    """

    def __init__(self, mesh_n=8, n_basis=4, basis_family="trigonometric", gamma0=1.0,
                 noise_level=0.0, tau=1.5, max_iter=2000, step_margin=0.9, rtol=1e-8,
                 bounds=(0.5, 2.0)):
        self.mesh_n = mesh_n
        self.n_basis = n_basis
        self.basis_family = basis_family
        self.gamma0 = gamma0
        self.noise_level = noise_level
        self.tau = tau
        self.max_iter = max_iter
        self.step_margin = step_margin
        self.rtol = rtol
        self.bounds = bounds

    def fit(self, X=None, y=None):
        """Build mesh and basis.  Reconstruction happens in :meth:`predict`."""
        return self._build()

    def predict(self, X):
        """Reconstruct one conductivity per row of data ``X`` (shape ``(n, K*K)``).

        The traces of the runs are kept in ``traces_``.
        """
        check_is_fitted(self, "basis_")
        X = check_data_rows(X, self.n_basis)
        g0 = np.broadcast_to(np.asarray(self.gamma0, float), (self.n_features_in_,))
        out, self.traces_ = [], []
        for row in X:
            data = row.reshape(self.n_basis, self.n_basis)
            trace = landweber_run(
                self.mesh_, g0, None, self.basis_,
                noise=self.noise_level, tau=self.tau, max_iter=self.max_iter,
                step_margin=self.step_margin, rtol=self.rtol, bounds=self.bounds,
                data=0.5 * (data + data.T),
            )
            self.traces_.append(trace)
            out.append(trace.final)
        return np.vstack(out)
