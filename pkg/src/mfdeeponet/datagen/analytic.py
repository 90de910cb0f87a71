"""Closed-form benchmark families with known low/high-fidelity correlations.

Every family uses the input function ``u(x) = a x - 4`` (``x`` is the first
coordinate), except the ODE family whose input is the constant ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..multifidelity import FidelityDataset


def _u(a, pts):
    return a * pts[..., 0] - 4.0


def _jump_lf(a, pts):
    x = pts[..., 0]
    base = 0.5 * (6 * x - 2) ** 2 * np.sin(_u(a, pts)) + 10 * (x - 0.5)
    return np.where(x <= 0.5, base - 5.0, base - 2.0)


def _jump_hf(a, pts):
    return 2 * _jump_lf(a, pts) - 20 * pts[..., 0] + 20


def _corr_u_lf(a, pts):
    u = _u(a, pts)
    return np.sin(u) + pts[..., 0] - 0.25 * u


def _corr_u_hf(a, pts):
    return np.sin(_u(a, pts))


def _lin2d_lf(a, pts):
    return np.cos(_u(a, pts)) * np.cos(pts[..., 1]) + pts[..., 0]


def _lin2d_hf(a, pts):
    return np.cos(_u(a, pts)) * np.cos(pts[..., 1])


def _nonlin2d_hf(a, pts):
    return np.cos(_u(a, pts)) * np.cos(pts[..., 1]) ** 2


def _ode_lf(a, pts):
    return np.cos(4 * np.pi * pts[..., 0] + a) ** 2


def _ode_hf(a, pts):
    return np.cos(4 * np.pi * pts[..., 0] + a)


def _ode_u(a, pts):
    return a + 0.0 * pts[..., 0]


def _noncomp_lf(a, pts):
    return np.sin(_u(a, pts)) + pts[..., 0] - 5.5


@dataclass(frozen=True)
class AnalyticCase:
    name: str
    a_range: tuple
    dim: int
    lf: Callable
    hf: Callable
    u: Callable = _u

    def evaluate(self, fn: Callable, a_values, points) -> np.ndarray:
        a = np.asarray(a_values, dtype=np.float64).reshape(-1, 1)
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return fn(a, pts[None])

    def inputs(self, a_values, sensors) -> np.ndarray:
        return self.evaluate(self.u, a_values, sensors)


CASES = {
    "jump1d": AnalyticCase("jump1d", (10.0, 14.0), 1, _jump_lf, _jump_hf),
    "corr_u_1d": AnalyticCase("corr_u_1d", (10.0, 14.0), 1, _corr_u_lf, _corr_u_hf),
    "lin2d": AnalyticCase("lin2d", (8.0, 10.0), 2, _lin2d_lf, _lin2d_hf),
    "nonlin2d": AnalyticCase("nonlin2d", (8.0, 10.0), 2, _lin2d_lf, _nonlin2d_hf),
    "ode_lf_3_1": AnalyticCase("ode_lf_3_1", (0.0, 5.0), 1, _ode_lf, _ode_hf, _ode_u),
    "noncomp_1d": AnalyticCase("noncomp_1d", (10.0, 14.0), 1, _noncomp_lf, _corr_u_hf),
}


def get_case(name: str) -> AnalyticCase:
    try:
        return CASES[name]
    except KeyError:
        raise ValueError(f"unknown analytic case {name!r}; known: {sorted(CASES)}") from None


def train_a_values(case: str, n: int, seed: int) -> np.ndarray:
    """Training parameters drawn uniformly at random in the case's range."""
    lo, hi = get_case(case).a_range
    return np.random.default_rng(seed).uniform(lo, hi, size=n)


def test_a_values(case: str, n: int) -> np.ndarray:
    """Equispaced test parameters strictly inside the range (cell midpoints)."""
    lo, hi = get_case(case).a_range
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5) if n > 1 else np.array([(lo + hi) / 2])


def grid_1d(n: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return np.linspace(lo, hi, n)[:, None]


def grid_2d(n: int, lo: float, hi: float) -> np.ndarray:
    """Tensor grid with x varying slowest, as ``(n*n, 2)``."""
    g = np.linspace(lo, hi, n)
    X, Y = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def generate(case: str, a_values, grid, *, fidelity: str = "both", lf_sensors=None, seed=None):
    """Evaluate a family on ``grid`` (sensors = queries = grid).

    Returns ``(lf, hf)`` datasets; with ``fidelity="low"``/``"high"`` returns only
    one.  ``lf_sensors`` fills ``inputs_lf`` on the high-fidelity dataset.
    """
    c = get_case(case)
    grid = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    if grid.shape[1] != c.dim:
        raise ValueError(f"{case} needs {c.dim}-d points, got {grid.shape[1]}")
    if np.any(grid < 0) or np.any(grid > 1):
        raise ValueError("grid points must lie in [0, 1]")
    a = np.asarray(a_values, dtype=np.float64).reshape(-1)
    inputs = c.inputs(a, grid)
    meta = {"generator": case, "seed": seed, "a_sampling": "given"}
    out = []
    if fidelity in ("both", "low"):
        out.append(FidelityDataset("low", grid, inputs, grid, c.evaluate(c.lf, a, grid),
                                   params=a[:, None], meta=dict(meta)))
    if fidelity in ("both", "high"):
        inputs_lf = None if lf_sensors is None else c.inputs(a, lf_sensors)
        out.append(FidelityDataset("high", grid, inputs, grid, c.evaluate(c.hf, a, grid),
                                   inputs_lf=inputs_lf, params=a[:, None], meta=dict(meta)))
    return tuple(out) if len(out) > 1 else out[0]


def gen_jump_1d(a_values, x_grid):
    return generate("jump1d", a_values, x_grid)


def gen_corr_u_1d(a_values, x_grid):
    return generate("corr_u_1d", a_values, x_grid)


def gen_2d(case: str, a_values, lf_grid, hf_grid):
    if case not in ("lin2d", "nonlin2d"):
        raise ValueError("gen_2d handles lin2d and nonlin2d")
    lf = generate(case, a_values, lf_grid, fidelity="low")
    hf = generate(case, a_values, hf_grid, fidelity="high", lf_sensors=lf_grid)
    return lf, hf


def gen_ode_lf_3_1(a_values, x_grid) -> FidelityDataset:
    return generate("ode_lf_3_1", a_values, x_grid, fidelity="low")


def ode_exact(a_values, x_grid) -> np.ndarray:
    c = CASES["ode_lf_3_1"]
    return c.evaluate(c.hf, a_values, x_grid)


def ode_test_a_values(n: int = 20) -> np.ndarray:
    """``n`` equispaced values from 0.0125 to 4.975."""
    return np.linspace(0.0125, 4.975, n)


def gen_noncomp_1d(a_values, x_grid):
    """Returns ``(lf_oracle, hf)``; the oracle maps points ``(P, 1)`` to
    ``(N, P, 1)`` low-fidelity values for the given ``a_values``."""
    a = np.asarray(a_values, dtype=np.float64).reshape(-1)
    hf = generate("noncomp_1d", a, x_grid, fidelity="high")
    return lf_oracle("noncomp_1d", a), hf


def lf_oracle(case: str, a_values) -> Callable:
    c = get_case(case)
    a = np.asarray(a_values, dtype=np.float64).reshape(-1)

    def oracle(points):
        return c.evaluate(c.lf, a, points)[..., None]

    return oracle
