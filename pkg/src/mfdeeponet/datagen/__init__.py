"""Benchmark data: analytic families, random fields, Burgers solutions and dataset IO."""

from .analytic import (CASES, gen_2d, gen_corr_u_1d, gen_jump_1d, gen_noncomp_1d, gen_ode_lf_3_1, generate,
                       ode_exact, ode_test_a_values, test_a_values, train_a_values)
from .burgers import BurgersBlowUp, BurgersConfig, solve_burgers_etdrk4, spectral_resample
from .grf import GRFSpec, PeriodicField, sample_grf
from .io import DatasetFormatError, read_dataset, write_dataset
from .transforms import add_noise, subsample

__all__ = [
    "CASES", "gen_2d", "gen_corr_u_1d", "gen_jump_1d", "gen_noncomp_1d", "gen_ode_lf_3_1", "generate",
    "ode_exact", "ode_test_a_values", "test_a_values", "train_a_values", "BurgersBlowUp", "BurgersConfig",
    "solve_burgers_etdrk4", "spectral_resample", "GRFSpec", "PeriodicField", "sample_grf", "DatasetFormatError",
    "read_dataset", "write_dataset", "add_noise", "subsample",
]
