import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mksgd.errors import (
    ConfigError,
    ConstraintError,
    SingularStepError,
    StructuralError,
    UnsupportedMapError,
)
from mksgd.manifolds import (
    Family,
    KernelPoint,
    ManifoldSpec,
    TangentVector,
    distance_array,
    exp_array,
    exp_map,
    geodesic_distance,
    inner,
    norm,
    project_array,
    project_tangent,
    random_array,
    random_point,
    retract,
    retract_array,
    tangent_residual_array,
    validate_point,
    violation_array,
)

SPHERE = Family.SPHERE
OBLIQUE = Family.OBLIQUE
STIEFEL = Family.STIEFEL
SO = Family.SPECIAL_ORTHOGONAL


def point(family, value, **kw):
    value = np.asarray(value, dtype=float)
    return KernelPoint(ManifoldSpec(family, *value.shape, **kw), value)


def tangent(p, value):
    return TangentVector(p, np.asarray(value, dtype=float))


# spec construction ---------------------------------------------------------

@pytest.mark.parametrize("family, shape, dim", [
    (SPHERE, (3, 3), 8),
    (OBLIQUE, (4, 3), 9),
    (STIEFEL, (5, 3), 9),
    (SO, (3, 3), 3),
])
def test_intrinsic_dimension(family, shape, dim):
    assert ManifoldSpec(family, *shape).intrinsic_dimension == dim


@pytest.mark.parametrize("family, shape", [
    (STIEFEL, (2, 3)),
    (SO, (3, 2)),
    (SPHERE, (1, 1)),
    (OBLIQUE, (1, 4)),
    (SPHERE, (0, 3)),
])
def test_invalid_shapes_rejected(family, shape):
    with pytest.raises(ConfigError):
        ManifoldSpec(family, *shape)


def test_radius_only_on_sphere():
    ManifoldSpec(SPHERE, 2, 2, radius=2.0)
    with pytest.raises(ConfigError):
        ManifoldSpec(OBLIQUE, 2, 2, radius=2.0)
    with pytest.raises(ConfigError):
        ManifoldSpec(SPHERE, 2, 2, radius=-1.0)


def test_family_parse_aliases():
    assert Family.parse("SO") is SO
    assert Family.parse("Stiefel") is STIEFEL
    with pytest.raises(ConfigError):
        Family.parse("torus")


# validate_point ------------------------------------------------------------

def test_validate_unit_frobenius_sphere():
    ok, viol = validate_point(point(SPHERE, [[1, 0], [0, 0]]))
    assert ok and viol == 0


def test_validate_identity_stiefel():
    ok, viol = validate_point(point(STIEFEL, np.eye(3)))
    assert ok and viol == 0


def test_validate_oblique_violation_by_hand():
    ok, viol = validate_point(point(OBLIQUE, [[2, 0], [0, 1]]))
    assert not ok
    assert viol == pytest.approx(3.0)


def test_validate_so_rejects_reflection():
    ok, viol = validate_point(point(SO, np.diag([1.0, 1.0, -1.0])))
    assert not ok and viol == pytest.approx(2.0)
    assert validate_point(point(STIEFEL, np.diag([1.0, 1.0, -1.0]))).ok


def test_validate_sphere_radius():
    assert validate_point(point(SPHERE, [[3, 0], [0, 4]], radius=5.0)).ok


def test_shape_mismatch_is_structural():
    spec = ManifoldSpec(SPHERE, 2, 2)
    with pytest.raises(StructuralError):
        KernelPoint(spec, np.ones((3, 2)))


def test_nonfinite_point_fails_validation():
    assert not validate_point(point(SPHERE, [[np.nan, 0.0]])).ok


def test_point_value_read_only():
    p = point(SPHERE, [[1.0, 0.0]])
    with pytest.raises(ValueError):
        p.value[0, 0] = 2.0


# project_tangent -----------------------------------------------------------

def test_project_normal_direction_is_zero():
    p = point(SPHERE, [[1, 0], [0, 0]])
    assert np.allclose(project_tangent(p, p.value).value, 0)


def test_project_tangent_direction_unchanged():
    p = point(SPHERE, [[1, 0], [0, 0]])
    m = np.array([[0, 2.0], [-1, 3]])
    assert np.array_equal(project_tangent(p, m).value, m)


def test_skew_is_tangent_at_identity():
    p = point(STIEFEL, np.eye(2))
    m = np.array([[0, 1.0], [-1, 0]])
    assert np.allclose(project_tangent(p, m).value, m, atol=0)


def test_project_requires_valid_point():
    with pytest.raises(ConstraintError):
        project_tangent(point(SPHERE, [[2.0, 0.0]]), np.ones((1, 2)))


def test_tangent_vector_rejects_normal_component():
    p = point(SPHERE, [[1.0, 0.0]])
    v = tangent(p, [[1.0, 0.0]])
    assert not v.is_tangent()


# retract -------------------------------------------------------------------

def test_zero_step_retraction_is_identity():
    p = point(SPHERE, [[1, 0], [0, 0]])
    assert np.array_equal(retract(p, tangent(p, np.zeros((2, 2)))).value, p.value)


def test_oblique_retraction_by_hand():
    p = point(OBLIQUE, np.eye(2))
    q = retract(p, tangent(p, [[0, 0], [1, 0]]))
    s = 1 / math.sqrt(2)
    assert np.allclose(q.value, [[s, 0], [s, 1]], atol=1e-15)


def test_stiefel_retraction_orthogonal():
    p = point(STIEFEL, np.eye(2))
    q = retract(p, tangent(p, [[0, 0.1], [-0.1, 0]]))
    assert np.allclose(q.value.T @ q.value, np.eye(2), atol=1e-12)
    # QR with positive diagonal of R: first column is the normalized first column of I + V
    assert np.allclose(q.value[:, 0], np.array([1, -0.1]) / math.hypot(1, 0.1))


def test_so_retraction_keeps_determinant():
    rng = np.random.default_rng(0)
    spec = ManifoldSpec(SO, 4, 4)
    X = random_array(spec, (200,), rng)
    V = project_array(spec, X, 3 * rng.standard_normal(X.shape))
    Y, singular, _ = retract_array(spec, X, V)
    assert not singular.any()
    assert np.allclose(np.linalg.det(Y), 1.0, atol=1e-10)


def test_so_det_fix_counted():
    spec = ManifoldSpec(SO, 2, 2)
    X = np.eye(2)[None]
    # X + V = diag(1, -1) after the QR normalization would have det -1
    V = np.array([[[0.0, 0.0], [0.0, -2.0]]])
    Y, singular, fixed = retract_array(spec, X, V)
    assert fixed.all() or singular.all()
    if not singular.all():
        assert np.linalg.det(Y[0]) == pytest.approx(1.0)


def test_singular_retraction_raises():
    p = point(SPHERE, [[1.0, 0.0]])
    v = TangentVector.__new__(TangentVector)  # bypass the tangency check on purpose
    object.__setattr__(v, "at", p)
    object.__setattr__(v, "value", np.array([[-1.0, 0.0]]))
    with pytest.raises(SingularStepError):
        retract(p, v)


# exp_map -------------------------------------------------------------------

def test_exp_quarter_circle():
    p = point(SPHERE, [[1, 0]])
    q = exp_map(p, tangent(p, [[0, math.pi / 2]]))
    assert np.allclose(q.value, [[0, 1]], atol=1e-15)


def test_exp_zero_step():
    p = random_point(ManifoldSpec(SPHERE, 3, 2), 4)
    assert np.array_equal(exp_map(p, tangent(p, np.zeros((3, 2)))).value, p.value)


def test_oblique_exp_half_circle_per_column():
    p = point(OBLIQUE, np.eye(2))
    q = exp_map(p, tangent(p, [[0, 0], [math.pi, 0]]))
    assert np.allclose(q.value, [[-1, 0], [0, 1]], atol=1e-15)


@pytest.mark.parametrize("radius", [1.0, 2.5])
def test_sphere_antipode(radius):
    spec = ManifoldSpec(SPHERE, 3, 2, radius=radius)
    p = random_point(spec, 1)
    v = project_tangent(p, np.random.default_rng(2).standard_normal((3, 2))).value.copy()
    v *= radius * math.pi / np.linalg.norm(v)
    assert np.linalg.norm(exp_map(p, tangent(p, v)).value + p.value) <= 1e-10 * radius


def test_exp_unsupported_on_stiefel():
    p = point(STIEFEL, np.eye(3))
    with pytest.raises(UnsupportedMapError):
        exp_map(p, tangent(p, np.zeros((3, 3))))


# random_point / inner / distance ------------------------------------------

def test_random_point_sphere():
    p = random_point(ManifoldSpec(SPHERE, 3, 3), 7)
    assert abs(np.linalg.norm(p.value) - 1) <= 1e-12


def test_random_point_stiefel():
    p = random_point(ManifoldSpec(STIEFEL, 4, 2), 7)
    assert np.allclose(p.value.T @ p.value, np.eye(2), atol=1e-10)


@pytest.mark.parametrize("family, shape", [(SPHERE, (3, 3)), (OBLIQUE, (3, 2)),
                                           (STIEFEL, (4, 2)), (SO, (3, 3))])
def test_random_point_deterministic(family, shape):
    spec = ManifoldSpec(family, *shape)
    assert random_point(spec, 7).value.tobytes() == random_point(spec, 7).value.tobytes()


def test_inner_examples():
    p = point(SPHERE, [[1, 0, 0]])
    zero = tangent(p, [[0, 0, 0]])
    u = tangent(p, [[0, 1, 0]])
    w = tangent(p, [[0, 0, 1]])
    assert inner(p, zero, zero) == 0
    assert inner(p, u, u) == 1
    assert inner(p, u, w) == 0
    assert norm(p, u) == 1


def test_inner_requires_base_point():
    p, q = point(SPHERE, [[1, 0]]), point(SPHERE, [[0, 1]])
    with pytest.raises(Exception):
        inner(p, tangent(q, [[1, 0]]), tangent(q, [[1, 0]]))


def test_distance_examples():
    e1, e2 = point(SPHERE, [[1, 0]]), point(SPHERE, [[0, 1]])
    assert geodesic_distance(e1, e1) == 0
    assert geodesic_distance(e1, e2) == pytest.approx(math.pi / 2, abs=1e-15)
    assert geodesic_distance(e1, point(SPHERE, [[-1, 0]])) == pytest.approx(math.pi, abs=1e-15)


def test_distance_scales_with_radius():
    p = point(SPHERE, [[2, 0]], radius=2.0)
    q = point(SPHERE, [[0, 2]], radius=2.0)
    assert geodesic_distance(p, q) == pytest.approx(math.pi)


def test_distance_matches_exp_length():
    spec = ManifoldSpec(OBLIQUE, 3, 2)
    rng = np.random.default_rng(5)
    X = random_array(spec, (50,), rng)
    V = project_array(spec, X, rng.standard_normal(X.shape))
    V *= 0.7 / np.linalg.norm(V, axis=-2, keepdims=True)  # each column moves 0.7
    d = distance_array(spec, X, exp_array(spec, X, V))
    assert np.allclose(d, 0.7 * math.sqrt(2), atol=1e-12)


def test_small_distance_accurate():
    spec = ManifoldSpec(SPHERE, 2, 1)
    X = np.array([[1.0], [0.0]])
    Y = np.array([[math.cos(1e-9)], [math.sin(1e-9)]])
    assert distance_array(spec, X, Y) == pytest.approx(1e-9, rel=1e-6)


# properties ----------------------------------------------------------------

FAMILY_SHAPES = st.sampled_from([
    (SPHERE, 3, 3), (SPHERE, 4, 1), (OBLIQUE, 4, 3), (OBLIQUE, 2, 2),
    (STIEFEL, 5, 3), (STIEFEL, 3, 3), (SO, 3, 3), (SO, 2, 2),
])


@settings(max_examples=60, deadline=None)
@given(FAMILY_SHAPES, st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_retraction_closure(fs, seed, scale):
    family, rows, cols = fs
    spec = ManifoldSpec(family, rows, cols)
    rng = np.random.default_rng(seed)
    X = random_array(spec, (), rng)
    V = project_array(spec, X, rng.standard_normal(spec.shape))
    V *= scale / max(np.linalg.norm(V), 1e-300)
    Y, singular, _ = retract_array(spec, X, V)
    assert not singular
    assert violation_array(spec, Y) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(FAMILY_SHAPES, st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_projection_idempotent_and_tangent(fs, seed, magnitude):
    family, rows, cols = fs
    spec = ManifoldSpec(family, rows, cols)
    rng = np.random.default_rng(seed)
    X = random_array(spec, (), rng)
    M = magnitude * rng.standard_normal(spec.shape)
    P = project_array(spec, X, M)
    assert np.linalg.norm(project_array(spec, X, P) - P) <= 1e-10 * np.linalg.norm(M)
    assert tangent_residual_array(spec, X, P) <= 1e-10
    assert TangentVector(KernelPoint(spec, X), P).is_tangent(1e-10)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([(SPHERE, 3, 2), (OBLIQUE, 3, 3)]), st.integers(0, 2**32 - 1))
def test_retraction_agrees_with_exp_to_second_order(fs, seed):
    family, rows, cols = fs
    spec = ManifoldSpec(family, rows, cols)
    rng = np.random.default_rng(seed)
    X = random_array(spec, (), rng)
    V = project_array(spec, X, rng.standard_normal(spec.shape))
    V /= np.linalg.norm(V)
    for t in (0.1, 0.03, 0.01):
        R, _, _ = retract_array(spec, X, t * V)
        assert np.linalg.norm(R - exp_array(spec, X, t * V)) <= 1.0 * t**2


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_distance_symmetric_and_triangle(seed):
    spec = ManifoldSpec(SPHERE, 3, 1)
    rng = np.random.default_rng(seed)
    X, Y, Z = random_array(spec, (3,), rng)
    dxy, dyx = distance_array(spec, X, Y), distance_array(spec, Y, X)
    assert dxy == pytest.approx(dyx, abs=1e-14)
    assert dxy <= distance_array(spec, X, Z) + distance_array(spec, Z, Y) + 1e-12


def test_closure_10k_each_family():
    rng = np.random.default_rng(123)
    for family, shape in [(SPHERE, (3, 3)), (OBLIQUE, (4, 3)), (STIEFEL, (5, 3)), (SO, (3, 3))]:
        spec = ManifoldSpec(family, *shape)
        X = random_array(spec, (10_000,), rng)
        V = project_array(spec, X, rng.standard_normal(X.shape))
        V /= np.linalg.norm(V, axis=(-2, -1), keepdims=True)
        V *= rng.random(10_000)[:, None, None]
        Y, singular, _ = retract_array(spec, X, V)
        assert not singular.any()
        assert violation_array(spec, Y).max() <= 1e-8
