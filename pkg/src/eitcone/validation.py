"""Input checks shared by the estimator wrappers and the CLI."""
from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import EllipticityError, InvalidArgumentError
from .fem import check_conductivity

__all__ = ["check_conductivity", "check_conductivity_rows", "check_data_rows", "check_symmetric"]


def check_conductivity_rows(X, n_elements: int) -> np.ndarray:
    """2-D float array of per-element conductivities, one sample per row."""
    X = check_array(X, dtype=float, ensure_all_finite=False)
    if X.shape[1] != n_elements:
        raise InvalidArgumentError(f"expected {n_elements} features (elements), got {X.shape[1]}")
    if not np.all(np.isfinite(X)) or np.any(X <= 0.0):
        raise EllipticityError("every conductivity row must be finite and strictly positive")
    return X


def check_data_rows(X, K: int) -> np.ndarray:
    """2-D array whose rows are flattened ``K x K`` data matrices."""
    X = check_array(X, dtype=float)
    if X.shape[1] != K * K:
        raise InvalidArgumentError(f"expected {K * K} features (K*K), got {X.shape[1]}")
    return X


def check_symmetric(S, atol: float = 1e-10) -> np.ndarray:
    """Square float matrix whose asymmetry is below ``atol`` relative to its norm."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {S.shape}")
    if np.linalg.norm(S - S.T) > atol * max(np.linalg.norm(S), 1.0):
        raise InvalidArgumentError("matrix is not symmetric")
    return S
