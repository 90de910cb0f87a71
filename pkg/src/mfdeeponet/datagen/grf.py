"""Periodic Gaussian random fields on [0, 1] with covariance
``scale * (-d^2/dx^2 + shift)^(-power)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GRFSpec:
    scale: float = 625.0
    shift: float = 25.0
    power: float = 4.0
    n_grid: int = 128

    def __post_init__(self):
        if self.power < 1:
            raise ValueError("power must be >= 1")
        if self.n_grid < 4:
            raise ValueError("grid too small")

    @property
    def n_modes(self) -> int:
        """Wavenumbers 0..K kept, K strictly below the grid Nyquist."""
        return (self.n_grid - 1) // 2

    def eigenvalues(self) -> np.ndarray:
        k = np.arange(self.n_modes + 1)
        return self.scale * ((2 * np.pi * k) ** 2 + self.shift) ** (-self.power)


@dataclass
class PeriodicField:
    """Real fields ``u(x) = c_0 + 2 Re sum_{k>=1} c_k exp(2 pi i k x)``; one row per sample."""

    coeffs: np.ndarray  # (N, K+1) complex

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        k = np.arange(self.coeffs.shape[1])
        modes = np.exp(2j * np.pi * np.outer(k, x))
        vals = self.coeffs[:, :1].real + 2 * (self.coeffs[:, 1:] @ modes[1:]).real
        return vals

    def on_grid(self, n: int) -> np.ndarray:
        """Values at ``x_j = j / n``, j = 0..n-1."""
        K = self.coeffs.shape[1] - 1
        if n <= 2 * K:
            raise ValueError("grid too coarse for the stored modes")
        spec = np.zeros((self.coeffs.shape[0], n // 2 + 1), dtype=complex)
        spec[:, :K + 1] = self.coeffs * n
        return np.fft.irfft(spec, n=n, axis=1)

    def __len__(self):
        return self.coeffs.shape[0]


def sample_grf(spec: GRFSpec, seed: int, n_samples: int = 1) -> PeriodicField:
    """Independent Gaussian Fourier coefficients with variance ``lambda_k``.

    Sample ``i`` depends only on ``(seed, i)``, so a batch equals the
    concatenation of its single-sample draws.
    """
    lam = spec.eigenvalues()
    coeffs = np.empty((n_samples, lam.size), dtype=complex)
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        xi, eta = rng.standard_normal((2, lam.size))
        c = np.sqrt(lam / 2) * (xi + 1j * eta)
        c[0] = np.sqrt(lam[0]) * xi[0]
        coeffs[i] = c
    return PeriodicField(coeffs)
