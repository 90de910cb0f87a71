"""Periodic viscous Burgers ``s_t + (s^2/2)_x = nu s_xx`` on [0, 1] by a
Fourier pseudo-spectral discretisation and ETDRK4 time stepping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BurgersBlowUp(RuntimeError):
    def __init__(self, t: float):
        super().__init__(f"non-finite Burgers solution at t = {t:.6g}")
        self.t = t


@dataclass(frozen=True)
class BurgersConfig:
    nu: float
    dt: float
    snapshot_dt: float = 0.05
    n_grid: int = 128
    t_final: float = 1.0
    contour_points: int = 32

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        if self.dt <= 0 or self.snapshot_dt <= 0:
            raise ValueError("time steps must be positive")
        r = self.snapshot_dt / self.dt
        if abs(r - round(r)) > 1e-9 * r:
            raise ValueError(f"dt = {self.dt} does not divide the snapshot interval {self.snapshot_dt}")
        n = self.t_final / self.snapshot_dt
        if abs(n - round(n)) > 1e-9 * n:
            raise ValueError("snapshot interval does not divide the final time")

    @property
    def steps_per_snapshot(self) -> int:
        return int(round(self.snapshot_dt / self.dt))

    @property
    def n_snapshots(self) -> int:
        return int(round(self.t_final / self.snapshot_dt)) + 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_snapshots) * self.snapshot_dt


def _etdrk4_coefficients(L: np.ndarray, h: float, m: int):
    """Kassam-Trefethen coefficients; phi functions by contour averaging."""
    E = np.exp(h * L)
    E2 = np.exp(h * L / 2)
    r = np.exp(1j * np.pi * (np.arange(1, m + 1) - 0.5) / m)
    LR = h * L[:, None] + r[None, :]
    Q = h * np.real(np.mean((np.exp(LR / 2) - 1) / LR, axis=1))
    f1 = h * np.real(np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR ** 2)) / LR ** 3, axis=1))
    f2 = h * np.real(np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR ** 3, axis=1))
    f3 = h * np.real(np.mean((-4 - 3 * LR - LR ** 2 + np.exp(LR) * (4 - LR)) / LR ** 3, axis=1))
    return E, E2, Q, f1, f2, f3


def solve_burgers_etdrk4(config: BurgersConfig, ic: np.ndarray) -> np.ndarray:
    """Advance initial conditions sampled at ``x_j = j / n_grid``.

    ``ic`` has shape ``(n_grid,)`` or ``(N, n_grid)``; returns snapshots
    ``(N, T, n_grid)`` at ``config.times``.
    """
    ic = np.atleast_2d(np.asarray(ic, dtype=np.float64))
    n = config.n_grid
    if ic.shape[1] != n:
        raise ValueError(f"initial condition has {ic.shape[1]} points, expected {n}")
    k = 2 * np.pi * np.fft.rfftfreq(n, d=1.0 / n)
    keep = np.abs(np.fft.rfftfreq(n, d=1.0 / n)) < n / 3
    g = -0.5j * k * keep
    E, E2, Q, f1, f2, f3 = _etdrk4_coefficients(-config.nu * k ** 2, config.dt, config.contour_points)

    def nonlinear(v):
        s = np.fft.irfft(v, n=n, axis=1)
        return g * np.fft.rfft(s * s, axis=1)

    v = np.fft.rfft(ic, axis=1)
    out = np.empty((ic.shape[0], config.n_snapshots, n))
    out[:, 0] = ic
    for j in range(1, config.n_snapshots):
        for _ in range(config.steps_per_snapshot):
            Nv = nonlinear(v)
            a = E2 * v + Q * Nv
            Na = nonlinear(a)
            b = E2 * v + Q * Na
            Nb = nonlinear(b)
            c = E2 * a + Q * (2 * Nb - Nv)
            Nc = nonlinear(c)
            v = E * v + Nv * f1 + 2 * (Na + Nb) * f2 + Nc * f3
        s = np.fft.irfft(v, n=n, axis=1)
        if not np.all(np.isfinite(s)):
            raise BurgersBlowUp(j * config.snapshot_dt)
        out[:, j] = s
    return out


def spectral_resample(values: np.ndarray, x) -> np.ndarray:
    """Evaluate the trigonometric interpolant of periodic samples (last axis)
    at arbitrary points ``x``."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[-1]
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    c = np.fft.rfft(values, axis=-1) / n
    kk = np.arange(c.shape[-1])
    w = np.full(c.shape[-1], 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    # Nyquist mode as cos only keeps the interpolant real
    basis = np.exp(2j * np.pi * np.outer(kk, x))
    if n % 2 == 0:
        basis[-1] = np.cos(np.pi * n * x)
    return np.real((c * w) @ basis)
