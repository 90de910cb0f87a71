"""Turn a benchmark description into training and test data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..datagen import analytic
from ..datagen.burgers import BurgersConfig, solve_burgers_etdrk4, spectral_resample
from ..datagen.grf import GRFSpec, sample_grf
from ..datagen.io import read_dataset
from ..datagen.transforms import add_noise
from ..losses import ConditionSet, PhysicsBatch, ResidualSpec, periodic_pairs
from ..multifidelity import FidelityDataset


@dataclass
class Problem:
    dim: int
    test: FidelityDataset
    lf: FidelityDataset | None = None
    hf: FidelityDataset | None = None
    physics: PhysicsBatch | None = None
    residual: ResidualSpec | None = None
    lf_oracle: Callable | None = None  # a-values -> oracle(points)
    hf_sensors: np.ndarray | None = None
    lf_test_truth: np.ndarray | None = None

    @property
    def lf_sensors(self) -> np.ndarray:
        return self.lf.sensors

    @property
    def n_out(self) -> int:
        return self.test.n_out


def _lattice(case, a_values, grid, hf_sensors, lf_sensors):
    c = analytic.get_case(case)
    return FidelityDataset("high", hf_sensors, c.inputs(a_values, hf_sensors), grid, c.evaluate(c.hf, a_values, grid),
                           inputs_lf=c.inputs(a_values, lf_sensors), params=np.asarray(a_values)[:, None],
                           meta={"generator": case, "role": "test"})


def _analytic(benchmark: str, d: dict) -> Problem:
    seed = int(d.get("data_seed", 1234))
    case = "ode_lf_3_1" if benchmark == "ode_3_1" else benchmark
    c = analytic.get_case(case)
    if c.dim == 1:
        lf_grid = analytic.grid_1d(d["lf_points"])
        hf_grid = analytic.grid_1d(d.get("hf_points", d["lf_points"]))
        test_grid = analytic.grid_1d(d.get("test_points", 101))
    else:
        lf_grid = analytic.grid_2d(d["lf_points"], *d.get("lf_range", (0.02, 0.98)))
        hf_grid = analytic.grid_2d(d["hf_points"], *d.get("hf_range", (0.05, 0.95)))
        test_grid = analytic.grid_2d(d.get("test_points", 41), *d.get("test_range", (0.0, 1.0)))
    a_lf = analytic.train_a_values(case, d["n_lf"], seed)
    a_hf = analytic.train_a_values(case, d["n_hf"], seed + 1)
    if benchmark == "ode_3_1":
        a_test = analytic.ode_test_a_values(d.get("test_a", 20))
    else:
        a_test = analytic.test_a_values(case, d.get("test_a", 100))
    lf = analytic.generate(case, a_lf, lf_grid, fidelity="low", seed=seed)
    test = _lattice(case, a_test, test_grid, hf_grid, lf_grid)
    lf_test_truth = c.evaluate(c.lf, a_test, test_grid)[..., None]
    if benchmark == "ode_3_1":
        rng = np.random.default_rng(seed + 2)
        colloc = np.sort(rng.uniform(0.0, 1.0, d.get("collocation", 101)))[:, None]
        bc = ConditionSet("value", np.zeros((1, 1)), np.cos(a_hf)[:, None])
        phys = PhysicsBatch(c.inputs(a_hf, hf_grid), c.inputs(a_hf, lf_grid), colloc, {"bc": bc}, a_hf[:, None])
        return Problem(1, test, lf=lf, physics=phys, residual=ResidualSpec("ode_sin"), hf_sensors=hf_grid,
                       lf_test_truth=lf_test_truth)
    hf = analytic.generate(case, a_hf, hf_grid, fidelity="high", lf_sensors=lf_grid, seed=seed + 1)
    oracle = (lambda a: analytic.lf_oracle(case, a)) if benchmark == "noncomp_1d" else None
    return Problem(c.dim, test, lf=lf, hf=hf, lf_oracle=oracle, hf_sensors=hf_grid, lf_test_truth=lf_test_truth)


def _space_time(nx: int, nt: int) -> np.ndarray:
    """(x, t) points with x varying fastest."""
    X, T = np.meshgrid(np.linspace(0, 1, nx), np.linspace(0, 1, nt), indexing="xy")
    return np.column_stack([X.ravel(), T.ravel()])


def burgers_fields(nu, ics, dt, nx, nt, n_grid=128):
    """Solve and resample to an ``nx`` x ``nt`` space-time lattice, ``(N, nt*nx)``."""
    cfg = BurgersConfig(nu, dt, snapshot_dt=1.0 / (nt - 1), n_grid=n_grid)
    snaps = solve_burgers_etdrk4(cfg, ics)
    vals = spectral_resample(snaps, np.linspace(0, 1, nx))
    return vals.reshape(vals.shape[0], -1)


def _burgers(d: dict) -> Problem:
    nu = float(d["nu"])
    seed = int(d.get("data_seed", 1234))
    n_train, n_lf, n_test = d["n_train"], d["n_lf"], d["n_test"]
    spec = GRFSpec(n_grid=d.get("n_grid", 128))
    field_ = sample_grf(spec, seed, n_train + n_test)
    ics = field_.on_grid(spec.n_grid)
    lf_sens = np.linspace(0, 1, d.get("lf_sensors", 21))[:, None]
    hf_sens = np.linspace(0, 1, d.get("hf_sensors", 101))[:, None]
    lf_nx, lf_nt = d.get("lf_grid", (21, 21))
    u_lf = field_(lf_sens[:, 0])
    u_hf = field_(hf_sens[:, 0])
    lf_idx = np.arange(min(n_lf, n_train))
    lf_out = burgers_fields(nu, ics[lf_idx], d.get("dt_lf", 5e-3), lf_nx, lf_nt, spec.n_grid)
    lf = FidelityDataset("low", lf_sens, u_lf[lf_idx], _space_time(lf_nx, lf_nt), lf_out,
                         meta={"generator": "burgers-etdrk4", "seed": seed, "dt": d.get("dt_lf", 5e-3), "nu": nu})
    if d.get("noise_variance", 0.0) > 0:
        lf = add_noise(lf, d["noise_variance"], seed + 7)
    te = np.arange(n_train, n_train + n_test)
    t_nx, t_nt = d.get("test_grid", (101, 101))
    test_out = burgers_fields(nu, ics[te], d.get("dt_ref", 1e-4), t_nx, t_nt, spec.n_grid)
    test = FidelityDataset("high", hf_sens, u_hf[te], _space_time(t_nx, t_nt), test_out, inputs_lf=u_lf[te],
                           meta={"generator": "burgers-etdrk4", "seed": seed, "dt": d.get("dt_ref", 1e-4),
                                 "nu": nu, "role": "test"})
    rng = np.random.default_rng(seed + 3)
    colloc = rng.uniform(0.0, 1.0, size=(d.get("collocation", 1000), 2))
    n_ic = d.get("n_ic", 101)
    x_ic = np.linspace(0, 1, n_ic)
    ic = ConditionSet("value", np.column_stack([x_ic, np.zeros(n_ic)]), field_(x_ic)[:n_train])
    bc = periodic_pairs(np.sort(rng.uniform(0.0, 1.0, d.get("n_bc", 100))))
    phys = PhysicsBatch(u_hf[:n_train], u_lf[:n_train], colloc, {"ic": ic, "bc": bc})
    return Problem(2, test, lf=lf, physics=phys, residual=ResidualSpec("burgers", nu), hf_sensors=hf_sens)


def _external(d: dict) -> Problem:
    lf = read_dataset(d["lf_path"]) if d.get("lf_path") else None
    hf = read_dataset(d["hf_path"]) if d.get("hf_path") else None
    test = read_dataset(d["test_path"])
    dim = test.queries.shape[1]
    return Problem(dim, test, lf=lf, hf=hf, hf_sensors=test.sensors)


def build_problem(benchmark: str, data: dict) -> Problem:
    if benchmark == "burgers":
        return _burgers(data)
    if benchmark == "external":
        return _external(data)
    return _analytic(benchmark, data)
