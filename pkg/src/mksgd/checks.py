"""Property suite run by ``mksgd --command check``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gradcheck import gradient_errors, random_network
from .manifolds import (
    Family,
    ManifoldSpec,
    exp_array,
    project_array,
    random_array,
    retract_array,
    tangent_residual_array,
    violation_array,
)

SPECS = {
    Family.SPHERE: ManifoldSpec(Family.SPHERE, 3, 3),
    Family.OBLIQUE: ManifoldSpec(Family.OBLIQUE, 4, 3),
    Family.STIEFEL: ManifoldSpec(Family.STIEFEL, 5, 3),
    Family.SPECIAL_ORTHOGONAL: ManifoldSpec(Family.SPECIAL_ORTHOGONAL, 3, 3),
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _broken_retract(spec, X, V):
    """Negative control: the sphere 'retraction' skips renormalization."""
    if spec.family is Family.SPHERE:
        Y = X + V
        return Y, np.zeros(Y.shape[:-2], bool), np.zeros(Y.shape[:-2], bool)
    return retract_array(spec, X, V)


def random_triples(spec, count, rng):
    """Random (point, unit tangent, scale in [0, 1]) triples as stacked arrays."""
    X = random_array(spec, (count,), rng)
    V = project_array(spec, X, rng.standard_normal(X.shape))
    V /= np.linalg.norm(V, axis=(-2, -1), keepdims=True)
    s = rng.random(count)[:, None, None]
    return X, V, s


def closure(spec, count, rng, retract=retract_array):
    X, V, s = random_triples(spec, count, rng)
    Y, singular, _ = retract(spec, X, s * V)
    return float(np.max(violation_array(spec, Y))), int(np.sum(singular))


def idempotence(spec, count, rng):
    X = random_array(spec, (count,), rng)
    M = rng.standard_normal(X.shape)
    P = project_array(spec, X, M)
    PP = project_array(spec, X, P)
    return float(np.max(np.linalg.norm(PP - P, axis=(-2, -1)) / np.linalg.norm(M, axis=(-2, -1))))


def tangency(spec, count, rng):
    X = random_array(spec, (count,), rng)
    V = project_array(spec, X, rng.standard_normal(X.shape))
    return float(np.max(tangent_residual_array(spec, X, V)))


def retraction_exp_slope(spec, rng, count=20):
    """Log-log slope of ``max |R_X(tV) - Exp_X(tV)|`` against ``t`` on ``t <= 0.1``."""
    X, V, _ = random_triples(spec, count, rng)
    ts = np.logspace(-3, -1, 9)
    errs = []
    for t in ts:
        R, _, _ = retract_array(spec, X, t * V)
        E = exp_array(spec, X, t * V)
        errs.append(np.max(np.linalg.norm(R - E, axis=(-2, -1))))
    slope, _ = np.polyfit(np.log(ts), np.log(errs), 1)
    return float(slope)


def antipode_error(rng, radius=1.0):
    spec = ManifoldSpec(Family.SPHERE, 3, 2, radius=radius)
    X = random_array(spec, (), rng)
    V = project_array(spec, X, rng.standard_normal(spec.shape))
    V *= radius * np.pi / np.linalg.norm(V)
    return float(np.linalg.norm(exp_array(spec, X, V) + X))


def so_det_error(count, rng):
    spec = SPECS[Family.SPECIAL_ORTHOGONAL]
    X, V, s = random_triples(spec, count, rng)
    Y, _, _ = retract_array(spec, X, s * V)
    return float(np.max(np.abs(np.linalg.det(Y) - 1.0)))


def run_checks(seed=0, count=10_000, networks=10, inject_fault=False):
    """Run every property check; returns a list of ``CheckResult``."""
    rng = np.random.default_rng(seed)
    retract = _broken_retract if inject_fault else retract_array
    results = []
    for family, spec in SPECS.items():
        worst, singular = closure(spec, count, rng, retract)
        results.append(CheckResult(f"closure {family.value}", worst <= 1e-8 and singular == 0,
                                   f"max violation {worst:.2e} over {count} steps"))
    for family, spec in SPECS.items():
        err = idempotence(spec, 1000, rng)
        results.append(CheckResult(f"idempotence {family.value}", err <= 1e-10,
                                   f"max |PPm - Pm|/|m| {err:.2e}"))
    for family, spec in SPECS.items():
        res = tangency(spec, 1000, rng)
        results.append(CheckResult(f"tangency {family.value}", res <= 1e-10,
                                   f"max normal residual {res:.2e}"))
    for family in (Family.SPHERE, Family.OBLIQUE):
        slope = retraction_exp_slope(SPECS[family], rng)
        results.append(CheckResult(f"retraction vs exp {family.value}", slope >= 1.9,
                                   f"log-log slope {slope:.2f}"))
    err = antipode_error(rng)
    results.append(CheckResult("sphere antipode", err <= 1e-10, f"|exp + p| {err:.2e}"))
    err = so_det_error(1000, rng)
    results.append(CheckResult("so determinant", err <= 1e-8, f"max |det - 1| {err:.2e}"))
    worst = 0.0
    for _ in range(networks):
        net, batch = random_network(rng)
        worst = max(worst, max(gradient_errors(net, batch).values()))
    results.append(CheckResult("backprop vs finite differences", worst <= 1e-4,
                               f"max relative error {worst:.2e} over {networks} nets"))
    return results


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  result  detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'PASS' if r.passed else 'FAIL':6}  {r.detail}")
    ok = sum(r.passed for r in results)
    lines.append(f"{ok}/{len(results)} checks passed")
    return "\n".join(lines)
