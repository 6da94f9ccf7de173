"""Riemannian SGD with ambient momentum for kernels on matrix submanifolds.

One update of a constrained kernel ``W`` with Euclidean gradient ``G``::

    mu    <- theta_mu * mu - theta_E * clip(G)      # ambient buffer
    v     <- alpha_t * P_W(mu)                      # tangent step
    W_new <- R_W(v)                                 # retraction or exp map

``mu`` already carries the descent sign, so the tangent step is ``+alpha_t``
times the projected buffer. ``t`` counts sweeps over all kernels, so every
layer sees the same learning rate within a sweep.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ConstraintError, NumericError, SingularStepError, StructuralError
from .manifolds import (
    KernelPoint,
    exp_array,
    normalize_array,
    project_array,
    violation_array,
)

MAX_STEP_RETRIES = 5


class ScheduleKind(str, enum.Enum):
    INVERSE_TIME = "inverse_time"
    STEP_DECAY = "step_decay"
    CONSTANT = "constant"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().lower().replace("-", "_"))
        except ValueError:
            raise ConfigError(f"unknown schedule kind {name!r}", key="schedule.kind") from None


@dataclass(frozen=True)
class ScheduleSpec:
    kind: ScheduleKind = ScheduleKind.INVERSE_TIME
    alpha0: float = 0.1
    lam: float = 0.01
    drop_every: int = 100
    drop_factor: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind.parse(self.kind))
        # alpha0 == 0 is allowed: it freezes every iterate, a useful control run
        if not (self.alpha0 >= 0 and math.isfinite(self.alpha0)):
            raise ConfigError("alpha0 must be finite and >= 0", key="schedule.alpha0")
        if not self.lam >= 0:
            raise ConfigError("lambda must be >= 0", key="schedule.lambda")
        if int(self.drop_every) != self.drop_every or self.drop_every < 1:
            raise ConfigError("drop_every must be a positive integer", key="schedule.drop_every")
        if not 0 < self.drop_factor < 1:
            raise ConfigError("drop_factor must lie in (0, 1)", key="schedule.drop_factor")

    def rate(self, t):
        if t < 0:
            raise ValueError("t must be non-negative")
        if self.kind is ScheduleKind.INVERSE_TIME:
            return self.alpha0 / (1.0 + self.alpha0 * self.lam * t)
        if self.kind is ScheduleKind.STEP_DECAY:
            return self.alpha0 * self.drop_factor ** (t // self.drop_every)
        return self.alpha0

    @property
    def satisfies_robbins_monro(self):
        """Whether sum(alpha_t) diverges while sum(alpha_t**2) converges.

        Only the inverse-time decay with ``lam > 0`` does: a constant rate has a
        divergent square sum and a step decay is geometric, so its plain sum is
        finite.
        """
        return (self.kind is ScheduleKind.INVERSE_TIME
                and self.lam > 0 and self.alpha0 > 0)


def learning_rate(schedule: ScheduleSpec, t: int) -> float:
    return schedule.rate(t)


@dataclass(frozen=True)
class Hyperparams:
    theta_mu: float = 0.9
    theta_E: float = 0.1
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    grad_clip: float | None = None
    use_exp_map: bool = False

    def __post_init__(self):
        if not 0 <= self.theta_mu < 1:
            raise ConfigError("theta_mu must lie in [0, 1)", key="optimizer.theta_mu")
        if not self.theta_E > 0:
            raise ConfigError("theta_E must be positive", key="optimizer.theta_e")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigError("clip must be positive when set", key="optimizer.clip")


@dataclass
class OptimizerState:
    """Momentum buffers keyed by kernel id, plus the shared sweep counter."""

    hyper: Hyperparams
    t: int = 0
    momentum: dict = field(default_factory=dict)
    det_corrections: int = 0
    retries: int = 0

    def advance(self):
        self.t += 1

    @property
    def alpha(self):
        return self.hyper.schedule.rate(self.t)


def clip_gradient(grad, bound):
    """Rescale each matrix of the stack so its Frobenius norm is at most ``bound``."""
    if bound is None:
        return grad
    norms = np.sqrt(np.sum(grad * grad, axis=(-2, -1), keepdims=True))
    scale = np.minimum(1.0, bound / np.maximum(norms, np.finfo(float).tiny))
    return grad * scale


def momentum_update(state: OptimizerState, kernel_id, grad_E) -> np.ndarray:
    grad = np.asarray(grad_E, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise NumericError(f"non-finite gradient for kernel {kernel_id!r}")
    mu = state.momentum.get(kernel_id)
    if mu is None:
        mu = np.zeros_like(grad)
    elif mu.shape != grad.shape:
        raise StructuralError(
            f"gradient shape {grad.shape} != momentum shape {mu.shape} for {kernel_id!r}")
    if grad.ndim >= 2:
        grad = clip_gradient(grad, state.hyper.grad_clip)
    mu = state.hyper.theta_mu * mu - state.hyper.theta_E * grad
    state.momentum[kernel_id] = mu
    return mu


def _move(spec, X, V, use_exp):
    if use_exp and spec.family.has_closed_form_geodesics:
        Y = exp_array(spec, X, V)
        return Y, np.zeros(Y.shape[:-2], bool), np.zeros(Y.shape[:-2], bool)
    return normalize_array(spec, X + V)


def step_array(state: OptimizerState, kernel_id, spec, X, grad_E) -> np.ndarray:
    """Update a stack of kernels sharing ``spec``; returns the new stack.

    Matrices whose retraction is singular get their tangent step halved, up to
    ``MAX_STEP_RETRIES`` times. Slices with an exactly zero step are returned
    untouched.
    """
    X = np.asarray(X, dtype=float)
    viol = violation_array(spec, X)
    if np.any(viol > spec.tolerance):
        raise ConstraintError(
            f"kernel {kernel_id!r} is off its manifold (violation {np.max(viol):.3e})")
    mu = momentum_update(state, kernel_id, grad_E)
    if mu.shape != X.shape:
        raise StructuralError(f"gradient shape {mu.shape} != kernel shape {X.shape}")
    V = state.alpha * project_array(spec, X, mu)

    Y, singular, fixed = _move(spec, X, V, state.hyper.use_exp_map)
    tries = 0
    while np.any(singular):
        if tries == MAX_STEP_RETRIES:
            raise SingularStepError(
                f"kernel {kernel_id!r}: retraction still singular after "
                f"{MAX_STEP_RETRIES} step halvings")
        tries += 1
        state.retries += 1
        V = np.where(singular[..., None, None], 0.5 * V, V)
        Y2, s2, f2 = _move(spec, X[singular], V[singular], state.hyper.use_exp_map)
        Y[singular], fixed[singular] = Y2, f2
        singular = _scatter(singular, s2)
    state.det_corrections += int(np.sum(fixed))

    still = np.all(V == 0, axis=(-2, -1))
    if np.any(still):
        Y[still] = X[still]
    return Y


def _scatter(mask, values):
    out = np.zeros_like(mask)
    out[mask] = values
    return out


def euclidean_step_array(state: OptimizerState, param_id, W, grad) -> np.ndarray:
    """Plain momentum SGD for unconstrained parameters (biases, free kernels)."""
    mu = momentum_update(state, param_id, grad)
    return np.asarray(W, dtype=float) + state.alpha * mu


def step(state: OptimizerState, kernel_id, kernel: KernelPoint, grad_E) -> KernelPoint:
    """One update of a single kernel; does not advance ``state.t``."""
    grad = np.asarray(grad_E, dtype=float)
    if grad.shape != kernel.spec.shape:
        raise StructuralError(f"gradient shape {grad.shape} != kernel shape {kernel.spec.shape}")
    return KernelPoint(kernel.spec, step_array(state, kernel_id, kernel.spec, kernel.value, grad))


def riemannian_grad_norm(kernel: KernelPoint, grad_E) -> float:
    grad = np.asarray(grad_E, dtype=float)
    return float(np.linalg.norm(project_array(kernel.spec, kernel.value, grad)))
