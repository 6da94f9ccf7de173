"""Riemannian SGD for convolution kernels on sphere, oblique, Stiefel and SO(n)."""

from .errors import (
    ConfigError,
    ConstraintError,
    InputError,
    MksgdError,
    NumericError,
    SingularStepError,
    StateError,
    StructuralError,
    UnsupportedMapError,
)
from .manifolds import (
    Family,
    KernelPoint,
    ManifoldSpec,
    TangentVector,
    exp_map,
    geodesic_distance,
    project_tangent,
    random_point,
    retract,
    validate_point,
)
from .optim import (
    Hyperparams,
    OptimizerState,
    ScheduleKind,
    ScheduleSpec,
    learning_rate,
    momentum_update,
    riemannian_grad_norm,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConstraintError",
    "InputError",
    "MksgdError",
    "NumericError",
    "SingularStepError",
    "StateError",
    "StructuralError",
    "UnsupportedMapError",
    "Family",
    "KernelPoint",
    "ManifoldSpec",
    "TangentVector",
    "exp_map",
    "geodesic_distance",
    "project_tangent",
    "random_point",
    "retract",
    "validate_point",
    "Hyperparams",
    "OptimizerState",
    "ScheduleKind",
    "ScheduleSpec",
    "learning_rate",
    "momentum_update",
    "riemannian_grad_norm",
    "step",
]
