"""Composite low-fidelity / linear / nonlinear wiring and the non-composite variant.

The high-fidelity prediction is ``F_l + F_nl`` where

* ``F_LF`` is a modified DeepONet fitted to low-fidelity data,
* ``F_nl`` is a modified DeepONet (activation on every layer) whose branch
  input is ``[u(sensors_H) || F_LF(u)(probes)]``,
* ``F_l`` is an activation-free DeepONet.  Its branch input is either the
  low-fidelity prediction at the query point itself (``linear_input="query"``,
  which makes ``F_l`` a bilinear-affine function of ``(F_LF(u)(x), x)``) or
  the probe vector ``F_LF(u)(probes)`` (``linear_input="probes"``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ad_core import Jet, JetLayout, as_node, concat_jets, constant, detach, reshape
from .deeponet import ModifiedDeepONet, StandardDeepONet, branch_jet, trunk_jet

log = logging.getLogger(__name__)

LINEAR_INPUTS = ("query", "probes")


@dataclass
class FidelityDataset:
    """Input functions on sensors plus outputs on query points, at one fidelity.

    ``inputs_lf`` holds the same input functions evaluated on the
    low-fidelity sensors; it is needed whenever the low-fidelity subnet has
    to be run on these samples.  ``params`` carries generator parameters
    (e.g. the ``a`` of the analytic families) for reference and for
    parameter-dependent residuals.
    """

    fidelity: str
    sensors: np.ndarray
    inputs: np.ndarray
    queries: np.ndarray
    outputs: np.ndarray
    inputs_lf: np.ndarray | None = None
    params: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.sensors = np.atleast_2d(np.asarray(self.sensors, dtype=np.float64).T).T
        self.queries = np.atleast_2d(np.asarray(self.queries, dtype=np.float64).T).T
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.outputs = np.asarray(self.outputs, dtype=np.float64)
        if self.outputs.ndim == 2:
            self.outputs = self.outputs[..., None]
        self.validate()

    def validate(self):
        n = self.inputs.shape[0]
        if self.inputs.shape != (n, self.sensors.shape[0]):
            raise ValueError(f"inputs shape {self.inputs.shape} does not match {n} samples x "
                             f"{self.sensors.shape[0]} sensors")
        if self.outputs.shape[:2] != (n, self.queries.shape[0]):
            raise ValueError(f"outputs shape {self.outputs.shape} does not match {n} samples x "
                             f"{self.queries.shape[0]} queries")
        if self.inputs_lf is not None and self.inputs_lf.shape[0] != n:
            raise ValueError("inputs_lf sample count differs from inputs")
        if n == 0:
            raise ValueError("empty dataset")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_out(self) -> int:
        return self.outputs.shape[2]

    @property
    def lf_inputs(self) -> np.ndarray:
        if self.inputs_lf is None:
            if self.fidelity == "low":
                return self.inputs
            raise ValueError(f"{self.fidelity}-fidelity dataset lacks inputs on the low-fidelity sensors")
        return self.inputs_lf

    def take(self, idx) -> "FidelityDataset":
        idx = np.asarray(idx)
        return FidelityDataset(
            self.fidelity, self.sensors, self.inputs[idx], self.queries, self.outputs[idx],
            None if self.inputs_lf is None else self.inputs_lf[idx],
            None if self.params is None else self.params[idx], dict(self.meta))


def default_probe_grid(lf_dataset: FidelityDataset) -> np.ndarray:
    """Q_H = P_L: probe at every low-fidelity query point."""
    return lf_dataset.queries.copy()


def _prefixed(params, prefix):
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


@dataclass
class CompositeModel:
    lf: ModifiedDeepONet
    nonlinear: ModifiedDeepONet
    linear: StandardDeepONet
    probes: np.ndarray
    n_sensors_hf: int
    linear_input: str = "query"
    detach_probes: bool = False

    def __post_init__(self):
        self.probes = np.atleast_2d(np.asarray(self.probes, dtype=np.float64))
        if self.probes.shape[0] == 0:
            raise ValueError("probe grid must be non-empty")
        if self.linear_input not in LINEAR_INPUTS:
            raise ValueError(f"linear_input must be one of {LINEAR_INPUTS}")
        n_out = self.lf.n_out
        if self.nonlinear.branch_in != self.n_sensors_hf + self.n_probe_features:
            raise ValueError("nonlinear branch width must equal M_H + |probe grid| * n_out")
        expected = n_out if self.linear_input == "query" else self.n_probe_features
        if self.linear.branch.sizes[0] != expected:
            raise ValueError(f"linear branch width must be {expected} for linear_input={self.linear_input!r}")
        if not (self.nonlinear.final_activation and not self.lf.final_activation):
            raise ValueError("the nonlinear subnet needs a final activation and the low-fidelity one must not")

    @property
    def n_probe_features(self) -> int:
        return self.probes.shape[0] * self.lf.n_out

    @classmethod
    def build(cls, n_sensors_lf: int, n_sensors_hf: int, dim: int, probes, *,
              lf=(3, 40), nonlinear=(2, 30), linear=(1, 5), activation="tanh",
              n_out: int = 1, linear_input: str = "query", detach_probes: bool = False) -> "CompositeModel":
        """Sizes are ``(layers, neurons)`` pairs."""
        probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
        q = probes.shape[0] * n_out
        lf_net = ModifiedDeepONet(n_sensors_lf, dim, lf[1], lf[0], activation, False, n_out)
        nl_net = ModifiedDeepONet(n_sensors_hf + q, dim, nonlinear[1], nonlinear[0], activation, True, n_out)
        lin_in = n_out if linear_input == "query" else q
        lin_net = StandardDeepONet.build(lin_in, dim, linear[1], linear[0], "none", n_out)
        return cls(lf_net, nl_net, lin_net, probes, n_sensors_hf, linear_input, detach_probes)

    def init_params(self, seed: int) -> dict:
        params = self.lf.init_params(seed, "lf/")
        params.update(self.nonlinear.init_params(seed + 1, "nl/"))
        params.update(self.linear.init_params(seed + 2, "lin/"))
        return params

    def param_count(self) -> int:
        return self.lf.param_count() + self.nonlinear.param_count() + self.linear.param_count()

    # forward pieces -------------------------------------------------------

    def lf_predict(self, params, u_lf, x) -> Jet:
        """F_LF(u)(x) as a jet ``(C, N, P, n_out)``."""
        return self.lf.forward(params, u_lf, x, prefix="lf/")

    def probe_vector(self, params, u_lf):
        """``[F_LF(u)(probe_1), ..., F_LF(u)(probe_Q)]`` per sample, shape ``(N, Q * n_out)``."""
        out = self.lf.forward(params, u_lf, self.probes, prefix="lf/").value
        vec = reshape(out, (out.shape[0], -1))
        return detach(vec) if self.detach_probes else vec

    def hf_parts(self, params, u_lf, u_hf, x) -> tuple:
        """Return ``(F_l, F_nl)`` jets at query ``x``."""
        x = trunk_jet(x)
        layout = x.layout
        probes = branch_jet(self.probe_vector(params, u_lf), layout)
        u_hf = branch_jet(u_hf, layout)
        nl_in = concat_jets([u_hf, probes])
        if self.linear_input == "query":
            lin_in = self.lf_predict(params, u_lf, x)
        else:
            lin_in = probes
        f_l = self.linear.forward(params, lin_in, x, prefix="lin/")
        f_nl = self.nonlinear.forward(params, nl_in, x, prefix="nl/")
        return f_l, f_nl

    def hf_predict(self, params, u_lf, u_hf, x) -> Jet:
        f_l, f_nl = self.hf_parts(params, u_lf, u_hf, x)
        return f_l + f_nl


@dataclass
class NonCompositeModel:
    """Two correlation subnets driven by an exact low-fidelity function.

    ``lf_oracle(points)`` must return the low-fidelity values for the current
    batch of input functions, shape ``(N, len(points), n_out)``.
    """

    nonlinear: ModifiedDeepONet
    linear: StandardDeepONet
    probes: np.ndarray
    n_sensors_hf: int
    linear_input: str = "query"

    @classmethod
    def build(cls, n_sensors_hf: int, dim: int, probes, *, nonlinear=(2, 20), linear=(1, 7),
              activation="tanh", n_out: int = 1, linear_input: str = "query") -> "NonCompositeModel":
        probes = np.atleast_2d(np.asarray(probes, dtype=np.float64))
        q = probes.shape[0] * n_out
        nl_net = ModifiedDeepONet(n_sensors_hf + q, dim, nonlinear[1], nonlinear[0], activation, True, n_out)
        lin_in = n_out if linear_input == "query" else q
        lin_net = StandardDeepONet.build(lin_in, dim, linear[1], linear[0], "none", n_out)
        return cls(nl_net, lin_net, probes, n_sensors_hf, linear_input)

    def init_params(self, seed: int) -> dict:
        params = self.nonlinear.init_params(seed + 1, "nl/")
        params.update(self.linear.init_params(seed + 2, "lin/"))
        return params

    def param_count(self) -> int:
        return self.nonlinear.param_count() + self.linear.param_count()

    def hf_parts(self, params, lf_oracle: Callable, u_hf, x) -> tuple:
        x = np.asarray(x, dtype=np.float64)
        layout = JetLayout(0)
        probe_vals = np.asarray(lf_oracle(self.probes), dtype=np.float64)
        n = probe_vals.shape[0]
        probes = Jet.constant(probe_vals.reshape(n, 1, -1), layout)
        nl_in = Jet.constant(np.concatenate([np.asarray(u_hf, dtype=np.float64), probe_vals.reshape(n, -1)], axis=1)[:, None, :], layout)
        if self.linear_input == "query":
            at_x = np.asarray(lf_oracle(x), dtype=np.float64)
            lin_in = Jet(constant(at_x[None]), layout, const=True)
        else:
            lin_in = probes
        xj = trunk_jet(x)
        f_l = self.linear.forward(params, lin_in, xj, prefix="lin/")
        f_nl = self.nonlinear.forward(params, nl_in, xj, prefix="nl/")
        return f_l, f_nl

    def hf_predict(self, params, lf_oracle: Callable, u_hf, x) -> Jet:
        f_l, f_nl = self.hf_parts(params, lf_oracle, u_hf, x)
        return f_l + f_nl


# functional aliases mirroring the operation names -----------------------

def lf_predict(model: CompositeModel, params, u_sensors, x) -> np.ndarray:
    return model.lf_predict(params, np.atleast_2d(u_sensors), np.atleast_2d(x)).value.value[..., 0]


def probe_vector(model: CompositeModel, params, u_sensors) -> np.ndarray:
    return as_node(model.probe_vector(params, np.atleast_2d(u_sensors))).value


def hf_predict(model: CompositeModel, params, u_lf, u_hf, x) -> np.ndarray:
    return model.hf_predict(params, np.atleast_2d(u_lf), np.atleast_2d(u_hf), np.atleast_2d(x)).value.value[..., 0]


def noncomposite_hf_predict(model: NonCompositeModel, params, lf_oracle, u_hf, x) -> np.ndarray:
    return model.hf_predict(params, lf_oracle, np.atleast_2d(u_hf), np.atleast_2d(x)).value.value[..., 0]


@dataclass
class CorrelationReport:
    """Coefficients of ``F_l = lf * c_lf + x . c_x + c_0 + (x * lf) . c_xlf``."""

    c_lf: float
    c_x: np.ndarray
    c_const: float
    c_x_lf: np.ndarray
    residual: float

    def as_tuple(self) -> tuple:
        """(c1, c2, c0, c3) in one dimension."""
        return (self.c_lf, float(self.c_x[0]), self.c_const, float(self.c_x_lf[0]))

    def to_dict(self) -> dict:
        return {"c_lf": self.c_lf, "c_x": list(map(float, self.c_x)), "c_const": self.c_const,
                "c_x_lf": list(map(float, self.c_x_lf)), "residual": self.residual}


def extract_linear_correlation(linear: StandardDeepONet, params, queries, *, basis_index: int = 0,
                               lf_levels=None, prefix: str = "lin/") -> CorrelationReport:
    """Regress the linear subnet on ``{lf, x, 1, x * lf}`` over an (lf, x) grid.

    With ``linear_input="query"`` the branch input *is* the low-fidelity value
    at the query point.  With a probe-vector input, one probe (``basis_index``)
    is varied while the others are held at zero.  ``F_l`` is exactly
    bilinear-affine, so the reported residual is round-off.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    levels = np.linspace(-3.0, 3.0, 7) if lf_levels is None else np.asarray(lf_levels, dtype=np.float64)
    width = linear.branch.sizes[0]
    if not 0 <= basis_index < width:
        raise ValueError(f"basis_index {basis_index} outside branch width {width}")
    branch = np.zeros((levels.size, width))
    branch[:, basis_index] = levels
    out = linear.forward(params, branch, queries, prefix=prefix).value.value[..., 0]  # (S, P)
    lf = np.repeat(levels, queries.shape[0])
    xs = np.tile(queries, (levels.size, 1))
    design = np.column_stack([lf, xs, np.ones_like(lf), xs * lf[:, None]])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise ValueError(f"degenerate regression grid: {levels.size} lf levels x {queries.shape[0]} queries "
                         f"do not span the bilinear basis")
    coef, *_ = np.linalg.lstsq(design, out.reshape(-1), rcond=None)
    resid = out.reshape(-1) - design @ coef
    d = queries.shape[1]
    return CorrelationReport(float(coef[0]), coef[1:1 + d], float(coef[1 + d]), coef[2 + d:],
                             float(np.sqrt(np.mean(resid ** 2))))
