"""Test-set error metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


def _as3(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    return a.reshape(a.shape[0], -1)


def per_sample_mse(truth, pred) -> np.ndarray:
    t, p = _as3(truth), _as3(pred)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {p.shape}")
    return np.mean((t - p) ** 2, axis=1)


def per_sample_rel_l2(truth, pred) -> np.ndarray:
    t, p = _as3(truth), _as3(pred)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {p.shape}")
    norms = np.sum(t ** 2, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"truth sample {int(zero[0])} has zero norm; relative error undefined")
    return np.sqrt(np.sum((t - p) ** 2, axis=1) / norms)


def mean_mse(truth, pred) -> float:
    """Average over samples of the per-sample mean squared error (components
    are folded into the point average)."""
    return float(np.mean(per_sample_mse(truth, pred)))


def mean_rel_l2(truth, pred) -> float:
    """Average over samples of ``||truth - pred|| / ||truth||``."""
    return float(np.mean(per_sample_rel_l2(truth, pred)))


@dataclass
class MetricsReport:
    mean_mse: float
    mean_rel_l2: float
    per_sample_mse: list = field(default_factory=list)
    per_sample_rel_l2: list = field(default_factory=list)
    config_hash: str = ""
    runtime: float = 0.0

    @classmethod
    def compute(cls, truth, pred, config_hash: str = "", runtime: float = 0.0) -> "MetricsReport":
        mse = per_sample_mse(truth, pred)
        rel = per_sample_rel_l2(truth, pred)
        return cls(float(np.mean(mse)), float(np.mean(rel)), mse.tolist(), rel.tolist(), config_hash, runtime)

    def to_dict(self) -> dict:
        return asdict(self)
