"""Matrix submanifolds for convolution kernels.

A kernel is an ``A x B`` real matrix constrained to one of four families:

* ``SPHERE``              ``||W||_F = r``
* ``OBLIQUE``             every column has unit norm, ``ddiag(W^T W) = I``
* ``STIEFEL``             orthonormal columns, ``W^T W = I`` (``A >= B``)
* ``SPECIAL_ORTHOGONAL``  square orthogonal with ``det W = +1``

Two layers of API live here. The ``*_array`` functions work on stacks of
matrices with shape ``(..., A, B)`` and are what the optimizer and the network
use. ``KernelPoint``/``TangentVector`` wrap a single matrix and carry its
``ManifoldSpec``; the point-level functions (``validate_point``,
``project_tangent``, ``retract`` ...) are thin checked wrappers over the array
layer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    ConfigError,
    ConstraintError,
    SingularStepError,
    StructuralError,
    UnsupportedMapError,
)

# |R_ii| or a column norm below this fraction of the matrix scale is singular
SINGULAR_RTOL = 1e-12


class Family(str, enum.Enum):
    SPHERE = "sphere"
    OBLIQUE = "oblique"
    STIEFEL = "stiefel"
    SPECIAL_ORTHOGONAL = "so"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        aliases = {"sp": "sphere", "ob": "oblique", "st": "stiefel",
                   "special_orthogonal": "so", "rotation": "so"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown manifold family {name!r}") from None

    @property
    def has_closed_form_geodesics(self):
        return self in (Family.SPHERE, Family.OBLIQUE)


@dataclass(frozen=True)
class ManifoldSpec:
    """Which submanifold a kernel lives on."""

    family: Family
    rows: int
    cols: int
    radius: float = 1.0
    tolerance: float = 1e-8
    tangent_tolerance: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if int(self.rows) != self.rows or int(self.cols) != self.cols:
            raise ConfigError("rows and cols must be integers", key="shape")
        object.__setattr__(self, "rows", int(self.rows))
        object.__setattr__(self, "cols", int(self.cols))
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"shape must be positive, got {self.shape}", key="shape")
        if not self.radius > 0:
            raise ConfigError("radius must be positive", key="radius")
        if self.family is not Family.SPHERE and self.radius != 1.0:
            raise ConfigError("only the sphere has a radius", key="radius")
        if self.tolerance < 0 or self.tangent_tolerance < 0:
            raise ConfigError("tolerances must be non-negative", key="tolerance")
        if self.family is Family.STIEFEL and self.rows < self.cols:
            raise ConfigError(
                f"stiefel needs rows >= cols, got {self.rows}x{self.cols}", key="shape")
        if self.family is Family.SPECIAL_ORTHOGONAL and self.rows != self.cols:
            raise ConfigError(
                f"special orthogonal needs a square shape, got {self.rows}x{self.cols}",
                key="shape")
        if self.intrinsic_dimension < 1:
            raise ConfigError(
                f"{self.family.value}{self.shape} has dimension {self.intrinsic_dimension}",
                key="shape")

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def intrinsic_dimension(self):
        a, b = self.rows, self.cols
        if self.family is Family.SPHERE:
            return a * b - 1
        if self.family is Family.OBLIQUE:
            return b * (a - 1)
        if self.family is Family.STIEFEL:
            return a * b - b * (b + 1) // 2
        return a * (a - 1) // 2

    def constraint(self, value):
        """Residual of the defining equations; zero exactly on the manifold."""
        value = np.asarray(value, dtype=float)
        if self.family is Family.SPHERE:
            return np.sum(value * value, axis=(-2, -1)) - self.radius ** 2
        gram = np.swapaxes(value, -1, -2) @ value
        if self.family is Family.OBLIQUE:
            return np.diagonal(gram, axis1=-2, axis2=-1) - 1.0
        return gram - np.eye(self.cols)


def _check_shape(spec, value):
    if value.shape[-2:] != spec.shape:
        raise StructuralError(
            f"expected trailing shape {spec.shape}, got {value.shape}")


def _frob(x):
    return np.sqrt(np.sum(x * x, axis=(-2, -1)))


def _sym(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


# --------------------------------------------------------------------------
# array layer, shapes (..., A, B)


def violation_array(spec, X):
    """Constraint violation per matrix in the stack."""
    X = np.asarray(X, dtype=float)
    _check_shape(spec, X)
    if spec.family is Family.SPHERE:
        return np.abs(_frob(X) - spec.radius)
    gram = np.swapaxes(X, -1, -2) @ X
    if spec.family is Family.OBLIQUE:
        return np.linalg.norm(np.diagonal(gram, axis1=-2, axis2=-1) - 1.0, axis=-1)
    out = _frob(gram - np.eye(spec.cols))
    if spec.family is Family.SPECIAL_ORTHOGONAL:
        out = np.maximum(out, np.abs(np.linalg.det(X) - 1.0))
    return out


def project_array(spec, X, G):
    """Orthogonal projection of ambient ``G`` onto the tangent space at ``X``."""
    X = np.asarray(X, dtype=float)
    G = np.asarray(G, dtype=float)
    _check_shape(spec, X)
    if G.shape != X.shape:
        raise StructuralError(f"ambient shape {G.shape} != point shape {X.shape}")
    if spec.family is Family.SPHERE:
        coef = np.sum(X * G, axis=(-2, -1), keepdims=True) / spec.radius ** 2
        return G - coef * X
    if spec.family is Family.OBLIQUE:
        return G - X * np.sum(X * G, axis=-2, keepdims=True)
    return G - X @ _sym(np.swapaxes(X, -1, -2) @ G)


def tangent_residual_array(spec, X, V):
    """Normal component of ``V`` at ``X`` (0 for an exactly tangent vector).

    Sphere and Stiefel report ``|normal| / ||V||``; oblique reports the worst
    column ratio. A zero vector has residual 0.
    """
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    if spec.family is Family.SPHERE:
        num = np.abs(np.sum(X * V, axis=(-2, -1)))
        den = _frob(V)
    elif spec.family is Family.OBLIQUE:
        num = np.abs(np.sum(X * V, axis=-2))
        den = np.linalg.norm(V, axis=-2)
    else:
        num = _frob(_sym(np.swapaxes(X, -1, -2) @ V))
        den = _frob(V)
    ratio = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    if spec.family is Family.OBLIQUE:
        ratio = np.max(ratio, axis=-1)
    return ratio


def normalize_array(spec, Y):
    """Map ambient matrices onto the manifold (the retraction at ``X + V``).

    Returns ``(points, singular, det_fixed)`` where ``singular`` flags matrices
    for which the normalization is ill-posed (their output rows are garbage and
    must not be used) and ``det_fixed`` flags special-orthogonal outputs whose
    last column was negated to restore ``det = +1``.
    """
    Y = np.array(Y, dtype=float)
    _check_shape(spec, Y)
    batch = Y.shape[:-2]
    det_fixed = np.zeros(batch, dtype=bool)
    if spec.family is Family.SPHERE:
        norms = _frob(Y)
        singular = norms <= SINGULAR_RTOL * spec.radius
        safe = np.where(singular, 1.0, norms)
        return spec.radius * Y / safe[..., None, None], singular, det_fixed
    if spec.family is Family.OBLIQUE:
        norms = np.linalg.norm(Y, axis=-2, keepdims=True)
        bad = norms <= SINGULAR_RTOL
        singular = np.any(bad, axis=(-2, -1))
        return Y / np.where(bad, 1.0, norms), singular, det_fixed
    Q, R = np.linalg.qr(Y)
    diag = np.diagonal(R, axis1=-2, axis2=-1)
    scale = np.maximum(_frob(Y), np.finfo(float).tiny)
    singular = np.any(np.abs(diag) <= SINGULAR_RTOL * scale[..., None], axis=-1)
    signs = np.where(diag < 0, -1.0, 1.0)
    Q = Q * signs[..., None, :]
    if spec.family is Family.SPECIAL_ORTHOGONAL:
        det_fixed = np.linalg.det(Q) < 0
        Q[..., :, -1] = np.where(det_fixed[..., None], -Q[..., :, -1], Q[..., :, -1])
    return Q, singular, det_fixed


def retract_array(spec, X, V):
    """Retraction ``R_X(V)``; see :func:`normalize_array` for the return value."""
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    if V.shape != X.shape:
        raise StructuralError(f"tangent shape {V.shape} != point shape {X.shape}")
    return normalize_array(spec, X + V)


def _sphere_exp(X, V, radius, axis):
    nv = np.sqrt(np.sum(V * V, axis=axis, keepdims=True))
    theta = nv / radius
    unit = np.divide(V, nv, out=np.zeros_like(V), where=nv > 0)
    Y = np.cos(theta) * X + radius * np.sin(theta) * unit
    ny = np.sqrt(np.sum(Y * Y, axis=axis, keepdims=True))
    return Y * (radius / ny)


def exp_array(spec, X, V):
    """Exponential map; closed form on the sphere and the oblique manifold only."""
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    _check_shape(spec, X)
    if V.shape != X.shape:
        raise StructuralError(f"tangent shape {V.shape} != point shape {X.shape}")
    if spec.family is Family.SPHERE:
        return _sphere_exp(X, V, spec.radius, axis=(-2, -1))
    if spec.family is Family.OBLIQUE:
        return _sphere_exp(X, V, 1.0, axis=-2)
    raise UnsupportedMapError(f"no exponential map for {spec.family.value}")


def distance_array(spec, X, Y):
    """Geodesic distance between stacked points (sphere and oblique only)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if spec.family is Family.SPHERE:
        r = spec.radius
        cos = np.clip(np.sum(X * Y, axis=(-2, -1)) / r ** 2, -1.0, 1.0)
        # chord form is exact for small angles where arccos loses half the digits
        chord = np.clip(_frob(X - Y) / (2 * r), 0.0, 1.0)
        return r * np.where(cos > 0.5, 2.0 * np.arcsin(chord), np.arccos(cos))
    if spec.family is Family.OBLIQUE:
        cos = np.clip(np.sum(X * Y, axis=-2), -1.0, 1.0)
        chord = np.clip(np.linalg.norm(X - Y, axis=-2) / 2, 0.0, 1.0)
        ang = np.where(cos > 0.5, 2.0 * np.arcsin(chord), np.arccos(cos))
        return np.sqrt(np.sum(ang * ang, axis=-1))
    raise UnsupportedMapError(f"no closed-form distance for {spec.family.value}")


def random_array(spec, batch_shape, rng):
    """Gaussian matrices pushed onto the manifold by ``normalize_array``."""
    G = rng.standard_normal(tuple(batch_shape) + spec.shape)
    points, singular, _ = normalize_array(spec, G)
    while np.any(singular):  # probability zero, but keep the map total
        G[singular] = rng.standard_normal((int(singular.sum()),) + spec.shape)
        points, singular, _ = normalize_array(spec, G)
    return points


# --------------------------------------------------------------------------
# point layer


def _frozen(value):
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class KernelPoint:
    spec: ManifoldSpec
    value: np.ndarray = field(repr=False)

    def __post_init__(self):
        value = _frozen(self.value)
        if value.shape != self.spec.shape:
            raise StructuralError(f"value shape {value.shape} != spec shape {self.spec.shape}")
        object.__setattr__(self, "value", value)

    def same_as(self, other):
        return self is other or (
            self.spec == other.spec and np.array_equal(self.value, other.value))


@dataclass(frozen=True, eq=False)
class TangentVector:
    at: KernelPoint
    value: np.ndarray = field(repr=False)

    def __post_init__(self):
        value = _frozen(self.value)
        if value.shape != self.at.spec.shape:
            raise StructuralError(
                f"tangent shape {value.shape} != point shape {self.at.spec.shape}")
        object.__setattr__(self, "value", value)

    @property
    def residual(self):
        return float(tangent_residual_array(self.at.spec, self.at.value, self.value))

    def is_tangent(self, tolerance=None):
        tol = self.at.spec.tangent_tolerance if tolerance is None else tolerance
        return self.residual <= tol

    def __mul__(self, scale):
        return TangentVector(self.at, float(scale) * self.value)

    __rmul__ = __mul__


class Validation(NamedTuple):
    ok: bool
    violation: float


def validate_point(p: KernelPoint) -> Validation:
    viol = float(violation_array(p.spec, p.value))
    return Validation(bool(viol <= p.spec.tolerance), viol)


def _require_valid(p):
    ok, viol = validate_point(p)
    if not ok:
        raise ConstraintError(
            f"point is off {p.spec.family.value}: violation {viol:.3e} > {p.spec.tolerance:.1e}")


def _require_at(p, v):
    if not v.at.same_as(p):
        raise StructuralError("tangent vector is attached to a different base point")


def project_tangent(p: KernelPoint, ambient) -> TangentVector:
    _require_valid(p)
    ambient = np.asarray(ambient, dtype=float)
    if ambient.shape != p.spec.shape:
        raise StructuralError(f"ambient shape {ambient.shape} != {p.spec.shape}")
    return TangentVector(p, project_array(p.spec, p.value, ambient))


def retract(p: KernelPoint, v: TangentVector) -> KernelPoint:
    _require_at(p, v)
    _require_valid(p)
    Y, singular, _ = retract_array(p.spec, p.value, v.value)
    if singular:
        raise SingularStepError(f"{p.spec.family.value} retraction is ill-posed at this step")
    return KernelPoint(p.spec, Y)


def exp_map(p: KernelPoint, v: TangentVector) -> KernelPoint:
    _require_at(p, v)
    _require_valid(p)
    return KernelPoint(p.spec, exp_array(p.spec, p.value, v.value))


def random_point(spec: ManifoldSpec, seed: int) -> KernelPoint:
    rng = np.random.default_rng(seed)
    return KernelPoint(spec, random_array(spec, (), rng))


def inner(p: KernelPoint, u: TangentVector, w: TangentVector) -> float:
    """Frobenius metric inherited from the ambient space."""
    _require_at(p, u)
    _require_at(p, w)
    return float(np.sum(u.value * w.value))


def norm(p: KernelPoint, u: TangentVector) -> float:
    return float(np.sqrt(inner(p, u, u)))


def geodesic_distance(p: KernelPoint, q: KernelPoint) -> float:
    if p.spec != q.spec:
        raise StructuralError("points live on different manifolds")
    return float(distance_array(p.spec, p.value, q.value))
