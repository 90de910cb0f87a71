"""Adam with exponentially decaying learning rate, and the training loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ad_core import NonFiniteError, backward_grad, variable

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, step: int, breakdown: dict, message: str = "non-finite loss"):
        super().__init__(f"{message} at step {step}: {breakdown}")
        self.step = step
        self.breakdown = breakdown


@dataclass(frozen=True)
class ExpDecaySchedule:
    """``lr(step) = initial * rate ** (step / decay_steps)`` (floored exponent
    when ``staircase``)."""

    initial: float
    decay_steps: int
    rate: float
    staircase: bool = False

    def __post_init__(self):
        if self.initial <= 0 or self.decay_steps <= 0 or not 0 < self.rate <= 1:
            raise ValueError(f"invalid schedule {self}")

    def __call__(self, step: int) -> float:
        return lr_at(self, step)


def lr_at(schedule: ExpDecaySchedule, step: int) -> float:
    e = step / schedule.decay_steps
    if schedule.staircase:
        e = np.floor(e)
    return float(schedule.initial * schedule.rate ** e)


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> tuple:
    """One bias-corrected Adam update; returns ``(new_params, new_state)``."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = {}, {}, {}
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    for k, p in params.items():
        g = grads[k]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {k!r}")
        m = b1 * state.m.get(k, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(k, 0.0) + (1.0 - b2) * g * g
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(t, new_m, new_v, b1, b2, state.eps)


@dataclass
class TrainReport:
    params: dict
    history: list
    wall_clock: float
    steps: int
    seed: int


# An objective maps (parameter leaves, step, rng) -> (total loss node, breakdown dict).
Objective = Callable[[dict, int, np.random.Generator], tuple]


def train(objective: Objective, params: dict, schedule: ExpDecaySchedule, steps: int, seed: int = 0,
          log_every: int = 1, callback: Callable[[int, dict], None] | None = None,
          trainable: Callable[[str], bool] | None = None) -> TrainReport:
    """Minimise ``objective`` with Adam.

    ``rng`` drives minibatch selection and is seeded from ``seed`` only, so
    identical arguments reproduce identical histories.  ``trainable`` may
    freeze parameters by name.  A non-finite loss aborts with
    :class:`TrainingError`.
    """
    rng = np.random.default_rng(seed)
    state = AdamState()
    history = []
    start = time.perf_counter()
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    for step in range(steps):
        leaves = {k: variable(v, k) for k, v in params.items()}
        total, breakdown = objective(leaves, step, rng)
        loss = float(total.value)
        lr = lr_at(schedule, step)
        if not np.isfinite(loss):
            raise TrainingError(step, breakdown)
        grads = backward_grad(leaves, total)
        if trainable is not None:
            grads = {k: (g if trainable(k) else np.zeros_like(g)) for k, g in grads.items()}
        bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
        if bad:
            raise TrainingError(step, breakdown, f"non-finite gradient for {bad[0]!r}")
        if log_every and (step % log_every == 0 or step == steps - 1):
            history.append({"step": step, "total": loss, **breakdown, "lr": lr})
        params, state = adam_step(params, grads, state, lr)
        if callback is not None:
            callback(step, params)
    return TrainReport(params, history, time.perf_counter() - start, steps, seed)


def evaluate_objective(objective: Objective, params: dict, seed: int = 0) -> tuple:
    """Evaluate an objective once without updating anything."""
    leaves = {k: variable(v, k) for k, v in params.items()}
    total, breakdown = objective(leaves, 0, np.random.default_rng(seed))
    if not np.isfinite(total.value):
        raise NonFiniteError(["objective"])
    return float(total.value), breakdown
