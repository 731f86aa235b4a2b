"""Finite-element laboratory for the EIT parameter-to-data map.

Discrete Dirichlet-to-Neumann forms on a structured P1 mesh of the unit
square, Loewner-order certificates for the convexity bounds of the forward
map, tangential cone diagnostics and a Landweber harness.
"""
from types import ModuleType as _ModuleType

from .exceptions import (
    BasisRankError,
    ConfigError,
    ConsistencyError,
    DegeneratePairError,
    EITError,
    EllipticityError,
    EstimationError,
    InvalidArgumentError,
    PreconditionError,
    SolverError,
)
from .fem import Conductivity, DirichletSolver, assemble_stiffness, solve_dirichlet
from .landweber import LandweberTrace, estimate_lipschitz, landweber_run
from .loewner import (
    LoewnerCertificate,
    certify_babel0,
    certify_conmo,
    certify_main1,
    certify_norm_bound,
    certify_util,
    loewner_leq,
)
from .mesh import Mesh, build_structured_mesh
from .operator import (
    BoundaryBasis,
    OperatorOnVD,
    build_boundary_basis,
    derivative_adjoint,
    derivative_form,
    dtn_form,
    forward_F,
    hs_norm,
    taylor_remainder,
)
from .scenarios import Scenario, checkerboard, inclusion, random_pair
from .tcc import TccReport, check_mjmi, check_unbalanced, tcc_measure, theta_eta

__version__ = "0.1.0"

# the estimator wrappers pull in scikit-learn; load them on first access only
_LAZY = {"EITForwardModel": "estimators", "LandweberEIT": "estimators"}

__all__ = sorted(
    [name for name, obj in globals().items()
     if not name.startswith("_") and not isinstance(obj, _ModuleType)] + list(_LAZY)
)


def __getattr__(name):
    if name in _LAZY:
        from importlib import import_module

        return getattr(import_module(f".{_LAZY[name]}", __name__), name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
