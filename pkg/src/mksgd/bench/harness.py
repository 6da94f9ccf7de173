"""Run Riemannian SGD on benchmark problems and judge convergence."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..manifolds import distance_array, normalize_array, project_array, violation_array
from ..optim import Hyperparams, OptimizerState, ScheduleKind, ScheduleSpec, clip_gradient, step_array
from .problems import stack_problems

VIOLATION_BOUND = 1e-8
GRAD_FLOOR = 1e-12  # below this the running minimum cannot meaningfully drop further

# Tuned defaults per problem (all inverse-time, so the Robbins-Monro sums hold).
DEFAULT_HYPER = {
    "rayleigh": Hyperparams(0.9, 0.1, ScheduleSpec(ScheduleKind.INVERSE_TIME, 0.5, 1e-3)),
    "procrustes": Hyperparams(0.5, 0.5, ScheduleSpec(ScheduleKind.INVERSE_TIME, 0.05, 1e-3)),
    "oblique_diag": Hyperparams(0.9, 0.1, ScheduleSpec(ScheduleKind.INVERSE_TIME, 0.5, 1e-3)),
}


@dataclass
class ConvergenceReport:
    loss: np.ndarray
    grad_norm: np.ndarray
    step_len: np.ndarray
    violation: np.ndarray
    oracle_optimum: float
    schedule_robbins_monro: bool
    failed: bool = False
    failure: str = ""
    final_point: np.ndarray | None = field(default=None, repr=False)
    label: str = "riemannian"

    def __len__(self):
        return len(self.loss)

    @property
    def grad_norm_final(self):
        """Smallest gradient norm over the last 1% of iterations."""
        if not len(self):
            return math.nan
        k = max(1, len(self) // 100)
        return float(np.min(self.grad_norm[-k:]))

    @property
    def gap_to_oracle(self):
        if not len(self):
            return math.nan
        return float(self.loss[-1] - self.oracle_optimum)

    @property
    def max_violation(self):
        return float(np.max(self.violation)) if len(self) else math.nan

    def iterations_to(self, gap):
        """First iteration whose objective is within ``gap`` of the oracle (None if never)."""
        hit = np.flatnonzero(self.loss - self.oracle_optimum <= gap)
        return int(hit[0]) + 1 if hit.size else None

    def series_rows(self):
        return [(t + 1, float(a), float(b), float(c), float(d)) for t, (a, b, c, d) in
                enumerate(zip(self.loss, self.grad_norm, self.violation, self.step_len))]

    def verdict(self):
        failed = self.failed or not len(self)
        return {
            "label": self.label,
            "failed": failed,
            "failure": self.failure or ("no iterations recorded" if not len(self) else ""),
            "iterations": len(self),
            "grad_norm_final": _finite_or_none(self.grad_norm_final),
            "gap_to_oracle": _finite_or_none(self.gap_to_oracle),
            "oracle_optimum": _finite_or_none(self.oracle_optimum),
            "max_violation": _finite_or_none(self.max_violation),
            "iterations_to_1e-3": self.iterations_to(1e-3) if len(self) else None,
            "schedule_robbins_monro": self.schedule_robbins_monro,
        }


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


def _run(problem, hyper, iters, euclidean=False):
    """Core loop over a possibly stacked problem; series have shape (iters, *batch)."""
    spec = problem.spec
    state = OptimizerState(hyper)
    X = np.array(problem.initial, dtype=float)
    batch = X.shape[:-2]
    loss = np.full((iters,) + batch, np.nan)
    gnorm = np.full_like(loss, np.nan)
    slen = np.full_like(loss, np.nan)
    viol = np.full_like(loss, np.nan)
    has_dist = spec.family.has_closed_form_geodesics
    G = problem.euclidean_gradient(X)
    failure = ""
    done = 0
    for t in range(iters):
        if euclidean:
            mu = state.hyper.theta_mu * state.momentum.get("w", 0.0) \
                - state.hyper.theta_E * clip_gradient(G, hyper.grad_clip)
            state.momentum["w"] = mu
            Y, singular, _ = normalize_array(spec, X + state.alpha * mu)
            if np.any(singular):
                failure = f"singular renormalization at t={t + 1}"
                break
            if state.alpha == 0:
                Y = X.copy()
        else:
            Y = step_array(state, "w", spec, X, G)
        state.advance()
        G = problem.euclidean_gradient(Y)
        f = problem.objective(Y)
        if not np.all(np.isfinite(f)):
            failure = f"non-finite loss at t={t + 1}"
            break
        loss[t] = f
        gnorm[t] = np.linalg.norm(project_array(spec, Y, clip_gradient(G, hyper.grad_clip)),
                                  axis=(-2, -1))
        viol[t] = violation_array(spec, Y)
        if has_dist:
            slen[t] = distance_array(spec, X, Y)
        X = Y
        done = t + 1
    return loss[:done], gnorm[:done], slen[:done], viol[:done], X, failure


def run_benchmark(problem, hyper: Hyperparams, iters: int, euclidean=False) -> ConvergenceReport:
    """Run Riemannian SGD (or the renormalized Euclidean baseline) on one problem."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    loss, g, s, v, X, failure = _run(problem, hyper, iters, euclidean)
    return ConvergenceReport(
        loss, g, s, v, float(problem.oracle_optimum), hyper.schedule.satisfies_robbins_monro,
        failed=bool(failure), failure=failure, final_point=X,
        label="euclidean" if euclidean else "riemannian")


def run_stacked(problems, hyper: Hyperparams, iters: int, euclidean=False):
    """Run many same-shaped problems as one stack; returns one report per problem.

    Equivalent to calling :func:`run_benchmark` on each, but vectorized.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    stacked = stack_problems(list(problems))
    loss, g, s, v, X, failure = _run(stacked, hyper, iters, euclidean)
    flag = hyper.schedule.satisfies_robbins_monro
    label = "euclidean" if euclidean else "riemannian"
    return [ConvergenceReport(loss[:, i], g[:, i], s[:, i], v[:, i],
                              float(stacked.oracle_optimum[i]), flag,
                              failed=bool(failure), failure=failure, final_point=X[i], label=label)
            for i in range(len(problems))]


@dataclass
class PairedReport:
    riemannian: ConvergenceReport
    euclidean: ConvergenceReport

    def summary(self):
        return {"riemannian": self.riemannian.verdict(), "euclidean": self.euclidean.verdict()}


def compare_euclidean_baseline(problem, hyper: Hyperparams, iters: int) -> PairedReport:
    """Riemannian SGD next to Euclidean momentum SGD followed by renormalization
    (norm scaling on sphere/oblique, QR on Stiefel) on the same problem."""
    return PairedReport(run_benchmark(problem, hyper, iters),
                        run_benchmark(problem, hyper, iters, euclidean=True))


@dataclass
class ConditionDiagnostics:
    compact: bool
    bounded_gradient: bool
    schedule: bool
    trend: bool | None  # None: no convergence claim under this schedule
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.compact and self.bounded_gradient and self.schedule and self.trend is not False

    def rows(self):
        return [
            ("(a) iterates stay on the manifold", self.compact),
            ("(b) gradient finite and bounded", self.bounded_gradient),
            ("(c) schedule satisfies Robbins-Monro", self.schedule),
            ("(d) running-min grad norm drops 10x", self.trend),
        ]


def running_min_drop(grad_norm, floor=GRAD_FLOOR):
    """Ratio of the running-min gradient norm after the first decile to the
    running min at the end; reports ``inf`` once the norm has hit ``floor``."""
    g = np.asarray(grad_norm, dtype=float)
    d = max(1, len(g) // 10)
    first = float(np.min(g[:d]))
    last = float(np.min(g))
    if last <= floor:
        return math.inf
    return first / last


def check_convergence_conditions(report: ConvergenceReport, hyper: Hyperparams,
                                 violation_bound=VIOLATION_BOUND) -> ConditionDiagnostics:
    n = len(report)
    compact = bool(n and not report.failed and report.max_violation <= violation_bound)
    max_grad = float(np.max(report.grad_norm)) if n else math.nan
    bounded = bool(n and math.isfinite(max_grad))
    if bounded and hyper.grad_clip is not None:
        bounded = max_grad <= hyper.grad_clip * (1 + 1e-12)
    schedule = hyper.schedule.satisfies_robbins_monro
    trend = None
    drop = None
    if schedule:
        drop = running_min_drop(report.grad_norm) if n else math.nan
        trend = bool(n and drop >= 10.0)
    return ConditionDiagnostics(compact, bounded, schedule, trend, {
        "max_violation": report.max_violation,
        "max_grad_norm": max_grad,
        "grad_clip": hyper.grad_clip,
        "running_min_drop": drop,
    })


def worker_count():
    """Parallelism cap from ``MKSGD_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("MKSGD_THREADS", "1")))
    except ValueError:
        return 1


def map_seeds(fn, seeds, workers=None):
    """``[fn(s) for s in seeds]``, spread over processes when allowed.

    Output order follows ``seeds`` regardless of completion order.
    """
    workers = worker_count() if workers is None else workers
    seeds = list(seeds)
    if workers <= 1 or len(seeds) <= 1:
        return [fn(s) for s in seeds]
    with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
        return list(pool.map(fn, seeds))
