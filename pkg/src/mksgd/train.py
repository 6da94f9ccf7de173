"""Minibatch training of a ``Network`` with Riemannian SGD on its kernels."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .manifolds import distance_array, project_array, violation_array
from .net import Batch, Network
from .optim import Hyperparams, OptimizerState, euclidean_step_array, step_array


@dataclass(frozen=True)
class TrainRecord:
    t: int
    loss: float
    grad_norm: float
    violation: float
    step_len: float
    wall_time: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    epoch_accuracy: list = field(default_factory=list)
    schedule_robbins_monro: bool = False
    det_corrections: int = 0
    failed: bool = False
    failure: str = ""

    @property
    def final_accuracy(self):
        return self.epoch_accuracy[-1] if self.epoch_accuracy else float("nan")

    @property
    def max_violation(self):
        return max((r.violation for r in self.records), default=float("nan"))

    def series_rows(self):
        return [(r.t, r.loss, r.grad_norm, r.violation, r.step_len) for r in self.records]

    def verdict(self):
        failed = self.failed or not self.records
        return {
            "failed": failed,
            "failure": self.failure or ("no iterations recorded" if not self.records else ""),
            "iterations": len(self.records),
            "final_loss": self.records[-1].loss if self.records else None,
            "final_accuracy": self.final_accuracy if self.epoch_accuracy else None,
            "epochs": len(self.epoch_accuracy),
            "max_violation": self.max_violation if self.records else None,
            "det_corrections": self.det_corrections,
            "schedule_robbins_monro": self.schedule_robbins_monro,
        }


def sweep(net: Network, state: OptimizerState, grads: dict):
    """Apply one optimizer update to every parameter and advance ``state.t``.

    Returns ``(mean grad norm over kernels, max violation, mean step length)``.
    The step length averages geodesic distances over kernels whose family has
    them and is NaN when none does.
    """
    norms, steps = [], []
    worst = 0.0
    kernels = net.kernels()
    for name, p in net.named_params().items():
        g = grads[name]
        spec = p.manifold
        if spec is None:
            if name in kernels:
                norms.append(np.sqrt(np.sum(np.reshape(g * g, (-1,) + g.shape[-2:]),
                                            axis=(-2, -1))))
            p.value = euclidean_step_array(state, name, p.value, g)
            continue
        norms.append(np.linalg.norm(project_array(spec, p.value, g), axis=(-2, -1)).ravel())
        new = step_array(state, name, spec, p.value, g)
        if spec.family.has_closed_form_geodesics:
            steps.append(np.ravel(distance_array(spec, p.value, new)))
        p.value = new
        worst = max(worst, float(np.max(violation_array(spec, new))))
    state.advance()
    grad_norm = float(np.mean(np.concatenate(norms))) if norms else 0.0
    step_len = float(np.mean(np.concatenate(steps))) if steps else math.nan
    return grad_norm, worst, step_len


def train(net: Network, dataset, hyper: Hyperparams, epochs: int, batch_size: int,
          seed: int = 0, eval_batch: Batch | None = None) -> TrainHistory:
    """Train for ``epochs`` passes over ``dataset`` (a ``data.Dataset``).

    Accuracy is measured in eval mode on ``eval_batch`` (default: the whole
    training set) after every epoch.
    """
    state = OptimizerState(hyper)
    history = TrainHistory(schedule_robbins_monro=hyper.schedule.satisfies_robbins_monro)
    full = eval_batch if eval_batch is not None else dataset.full_batch()
    start = time.perf_counter()
    for epoch in range(epochs):
        for batch in dataset.batches(batch_size, epoch, seed):
            loss, grads = net.loss_and_grads(batch)
            if not math.isfinite(loss):
                history.failed, history.failure = True, f"non-finite loss at t={state.t}"
                return history
            grad_norm, viol, step_len = sweep(net, state, grads)
            history.records.append(TrainRecord(
                state.t, loss, grad_norm, viol, step_len, time.perf_counter() - start))
        history.epoch_accuracy.append(net.accuracy(full))
    history.det_corrections = state.det_corrections
    return history
