"""Noise injection and grid subsampling."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np

from ..multifidelity import FidelityDataset

log = logging.getLogger(__name__)


def add_noise(ds: FidelityDataset, variance: float, seed: int) -> FidelityDataset:
    """Additive zero-mean Gaussian noise on the outputs."""
    if variance < 0:
        raise ValueError("variance must be non-negative")
    out = ds.outputs.copy()
    if variance > 0:
        out = out + np.random.default_rng(seed).normal(0.0, np.sqrt(variance), size=out.shape)
    meta = dict(ds.meta, noise_variance=variance, noise_seed=seed)
    return replace(ds, outputs=out, meta=meta)


def subsample(values, fine_grid, target_grid, axis: int = -1, tol: float = 1e-10) -> np.ndarray:
    """Restrict samples along ``axis`` from a sorted 1-D ``fine_grid`` to ``target_grid``.

    When every target node coincides with a fine node the values are
    extracted exactly; otherwise they are linearly interpolated and a warning
    is logged.
    """
    values = np.asarray(values, dtype=np.float64)
    fine = np.asarray(fine_grid, dtype=np.float64).reshape(-1)
    target = np.asarray(target_grid, dtype=np.float64).reshape(-1)
    if values.shape[axis] != fine.size:
        raise ValueError(f"axis {axis} has {values.shape[axis]} entries, fine grid has {fine.size}")
    idx = np.clip(np.searchsorted(fine, target), 0, fine.size - 1)
    left = np.clip(idx - 1, 0, fine.size - 1)
    nearest = np.where(np.abs(fine[left] - target) < np.abs(fine[idx] - target), left, idx)
    if np.all(np.abs(fine[nearest] - target) <= tol):
        return np.take(values, nearest, axis=axis)
    log.warning("target grid does not nest in the fine grid; interpolating linearly")
    moved = np.moveaxis(values, axis, -1)
    flat = moved.reshape(-1, fine.size)
    out = np.stack([np.interp(target, fine, row) for row in flat]).reshape(moved.shape[:-1] + (target.size,))
    return np.moveaxis(out, -1, axis)
