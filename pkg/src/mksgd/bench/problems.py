"""Benchmark problems with known optima on the sphere, Stiefel and oblique manifolds.

Problem data may carry a leading batch axis (see :func:`stack_problems`); the
objective and gradient broadcast over it, so many seeds can run as one stack.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..manifolds import Family, ManifoldSpec, random_array
from . import oracles


def _t(x):
    return np.swapaxes(x, -1, -2)


def _value(x):
    return np.asarray(getattr(x, "value", x), dtype=float)


@dataclass
class BenchProblem:
    name: str
    spec: ManifoldSpec
    oracle_optimum: float | np.ndarray
    initial: np.ndarray = field(repr=False)
    seed: int | tuple = 0

    def objective(self, X):
        raise NotImplementedError

    def euclidean_gradient(self, X):
        raise NotImplementedError

    @property
    def batch_shape(self):
        return self.initial.shape[:-2]


@dataclass
class RayleighProblem(BenchProblem):
    """Minimize ``-w^T M w`` over the unit sphere in R^n."""

    M: np.ndarray = field(default=None, repr=False)

    def objective(self, X):
        X = _value(X)
        return -np.sum(X * (self.M @ X), axis=(-2, -1))

    def euclidean_gradient(self, X):
        return -2.0 * (self.M @ _value(X))


@dataclass
class ProcrustesProblem(BenchProblem):
    """Minimize ``||P W - Q||_F^2`` over orthonormal frames."""

    P: np.ndarray = field(default=None, repr=False)
    Q: np.ndarray = field(default=None, repr=False)

    def objective(self, X):
        R = self.P @ _value(X) - self.Q
        return np.sum(R * R, axis=(-2, -1))

    def euclidean_gradient(self, X):
        return 2.0 * _t(self.P) @ (self.P @ _value(X) - self.Q)


@dataclass
class ObliqueDiagProblem(BenchProblem):
    """Minimize the off-diagonal energy of ``W^T M W`` over unit-column matrices."""

    M: np.ndarray = field(default=None, repr=False)

    def _off(self, X):
        S = _t(X) @ self.M @ X
        return S - S * np.eye(S.shape[-1])

    def objective(self, X):
        off = self._off(_value(X))
        return np.sum(off * off, axis=(-2, -1))

    def euclidean_gradient(self, X):
        X = _value(X)
        return 4.0 * self.M @ X @ self._off(X)


def _start(spec, seed):
    return random_array(spec, (), np.random.default_rng([seed, 1]))


def rayleigh_problem(n, seed=0, matrix=None):
    if n < 2:
        raise ConfigError("rayleigh needs n >= 2", key="problem.rows")
    if matrix is None:
        G = np.random.default_rng(seed).standard_normal((n, n))
        M = 0.5 * (G + G.T)
    else:
        M = np.asarray(matrix, dtype=float)
        if M.shape != (n, n) or not np.allclose(M, M.T):
            raise ConfigError("matrix must be symmetric n x n", key="problem.matrix")
    lam, _ = oracles.largest_eigenvalue(M)
    spec = ManifoldSpec(Family.SPHERE, n, 1)
    return RayleighProblem("rayleigh", spec, -lam, _start(spec, seed), seed, M=M)


def procrustes_problem(rows, cols, seed=0, family=Family.STIEFEL, P=None, Q=None, restarts=20):
    """Orthogonal Procrustes on ``St(rows, cols)`` (or ``SO(rows)``).

    Square instances use the SVD closed form. ``O(n)`` has two components and a
    retraction-based path never leaves the one it starts in, so the start point
    is put in the component of the global minimizer, i.e. ``det W0`` takes the
    sign of ``det(P^T Q)``.
    """
    family = Family.parse(family)
    if rows < cols:
        raise ConfigError(f"procrustes needs rows >= cols, got {rows}x{cols}", key="problem")
    spec = ManifoldSpec(family, rows, cols)
    rng = np.random.default_rng(seed)
    m = rows + 2
    if P is None:
        P = rng.standard_normal((m, rows)) / np.sqrt(m)
    if Q is None:
        Q = rng.standard_normal((m, cols)) / np.sqrt(m)
    P, Q = np.asarray(P, dtype=float), np.asarray(Q, dtype=float)
    if P.shape[1] != rows or Q.shape != (P.shape[0], cols):
        raise ConfigError("P must be m x rows and Q m x cols", key="problem")
    start = _start(spec, seed)
    prob = ProcrustesProblem("procrustes", spec, np.nan, start, seed, P=P, Q=Q)
    if rows == cols:
        C = P.T @ Q
        W = oracles.procrustes_solution(C, rotation_only=family is Family.SPECIAL_ORTHOGONAL)
        if family is Family.STIEFEL and np.linalg.det(start) * np.linalg.det(C) < 0:
            start = start.copy()
            start[:, -1] = -start[:, -1]
            prob.initial = start
        prob.oracle_optimum = float(prob.objective(W))
    else:
        prob.oracle_optimum, _ = oracles.multistart_stiefel(
            prob.objective, rows, cols, restarts=restarts, seed=seed)
    return prob


def oblique_diag_problem(rows, cols, seed=0, matrix=None, restarts=100):
    if rows < 2:
        raise ConfigError("oblique problem needs rows >= 2", key="problem.rows")
    if matrix is None:
        G = np.random.default_rng(seed).standard_normal((rows, rows))
        M = G @ G.T / rows + 0.5 * np.eye(rows)
    else:
        M = np.asarray(matrix, dtype=float)
    spec = ManifoldSpec(Family.OBLIQUE, rows, cols)
    prob = ObliqueDiagProblem("oblique_diag", spec, np.nan, _start(spec, seed), seed, M=M)
    if cols == 1:
        prob.oracle_optimum = 0.0
    else:
        prob.oracle_optimum, _ = oracles.multistart_oblique(
            prob.objective, prob.euclidean_gradient, rows, cols, restarts=restarts, seed=seed)
    return prob


PROBLEMS = {
    "rayleigh": lambda rows, cols, seed, family: rayleigh_problem(rows, seed),
    "procrustes": lambda rows, cols, seed, family: procrustes_problem(rows, cols, seed, family),
    "oblique_diag": lambda rows, cols, seed, family: oblique_diag_problem(rows, cols, seed),
}

DEFAULT_PROBLEM = {
    Family.SPHERE: "rayleigh",
    Family.OBLIQUE: "oblique_diag",
    Family.STIEFEL: "procrustes",
    Family.SPECIAL_ORTHOGONAL: "procrustes",
}


def make_problem(name, rows, cols, seed, family=None):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}", key="problem.name") from None
    return factory(rows, cols, seed, family or Family.STIEFEL)


def stack_problems(problems):
    """Combine same-kind problems into one whose arrays gain a leading axis."""
    first = problems[0]
    if any(type(p) is not type(first) or p.spec != first.spec for p in problems):
        raise ConfigError("can only stack problems of one kind and shape")
    arrays = {}
    for f in dataclasses.fields(first):
        if f.name in ("name", "spec"):
            continue
        vals = [getattr(p, f.name) for p in problems]
        arrays[f.name] = np.stack([np.asarray(v) for v in vals]) if f.name != "seed" else tuple(vals)
    return dataclasses.replace(first, **arrays)
