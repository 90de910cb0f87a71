"""Data, regularisation, residual and boundary losses.

Losses return tape nodes so they can be differentiated with
:func:`mfdeeponet.ad_core.backward_grad`.  Composite objectives return
``(total, breakdown)`` where ``breakdown`` maps term names to the *weighted*
floats that were summed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ad_core import CoordJet, Jet, Node, abs_, as_node, constant, jet_to_coordjet, mean, seed_coords, square, sum_
from .multifidelity import CompositeModel, FidelityDataset, NonCompositeModel

RESIDUAL_NORMS = ("l2", "l1")
TERMS = ("hf", "physics", "lf", "ic", "bc", "reg_nl", "reg_lf")


@dataclass(frozen=True)
class LossWeights:
    """lambda_1 .. lambda_6: HF (data or physics), LF data, nonlinear
    regulariser, LF regulariser, initial condition, boundary condition."""

    l1: float = 1.0
    l2: float = 1.0
    l3: float = 0.0
    l4: float = 0.0
    l5: float = 0.0
    l6: float = 0.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {k} must be finite and non-negative, got {v}")

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        return cls(**{k: float(v) for k, v in d.items()})


def _norm(r: Node, norm: str) -> Node:
    if norm == "l2":
        return square(r)
    if norm == "l1":
        return abs_(r)
    raise ValueError(f"residual_norm must be one of {RESIDUAL_NORMS}")


def mse(pred, target) -> Node:
    return mean(square(as_node(pred) - np.asarray(target, dtype=np.float64)))


def l2_reg(params: dict, prefix: str) -> Node:
    """Sum of squared weights and biases of every layer of the stack named
    ``prefix`` (e.g. ``"nl/branch"``)."""
    keys = sorted(k for k in params if k.startswith(prefix + "."))
    if not keys:
        raise KeyError(f"no parameters under {prefix!r}")
    total = constant(0.0)
    for k in keys:
        total = total + sum_(square(params[k]))
    return total


# ------------------------------------------------------------------ data terms


def loss_lf(model: CompositeModel, params, lf: FidelityDataset) -> Node:
    pred = model.lf_predict(params, lf.inputs, lf.queries).value
    return mse(pred, lf.outputs)


def loss_hf_data(model: CompositeModel, params, hf: FidelityDataset) -> Node:
    pred = model.hf_predict(params, hf.lf_inputs, hf.inputs, hf.queries).value
    return mse(pred, hf.outputs)


def loss_single(net, params, ds: FidelityDataset, prefix: str = "sf/") -> Node:
    """Data loss of a single-fidelity network on one dataset."""
    return mse(net.forward(params, ds.inputs, ds.queries, prefix=prefix).value, ds.outputs)


def combine_terms(terms: dict, weights: dict) -> tuple:
    total = constant(0.0)
    breakdown = {}
    for name, node in terms.items():
        w = weights[name]
        if w == 0.0:
            breakdown[name] = 0.0
            continue
        weighted = node * w
        breakdown[name] = float(weighted.value)
        total = total + weighted
    return total, breakdown


def loss_data_driven(model: CompositeModel, params, lf: FidelityDataset, hf: FidelityDataset,
                     w: LossWeights) -> tuple:
    """lambda1 L_HF + lambda2 L_LF + lambda3 |nl branch|^2 + lambda4 |lf branch|^2."""
    terms = {"hf": loss_hf_data(model, params, hf), "lf": loss_lf(model, params, lf),
             "reg_nl": l2_reg(params, "nl/branch"), "reg_lf": l2_reg(params, "lf/branch")}
    return combine_terms(terms, {"hf": w.l1, "lf": w.l2, "reg_nl": w.l3, "reg_lf": w.l4})


def loss_noncomposite(model: NonCompositeModel, params, lf_oracle: Callable, hf: FidelityDataset,
                      w: LossWeights) -> tuple:
    pred = model.hf_predict(params, lf_oracle, hf.inputs, hf.queries).value
    terms = {"hf": mse(pred, hf.outputs), "reg_nl": l2_reg(params, "nl/branch")}
    return combine_terms(terms, {"hf": w.l1, "reg_nl": w.l3})


# ------------------------------------------------------------------ residuals


@dataclass(frozen=True)
class ResidualSpec:
    """A PDE/ODE residual and the derivative channels it needs.

    ``kind="burgers"``: coordinates (x, t), ``s_t + s s_x - nu s_xx``.
    ``kind="ode_sin"``: coordinate x, ``y_x + 4 pi sin(4 pi x + a)`` with the
    per-sample parameter ``a``.
    """

    kind: str
    nu: float = 0.0

    @property
    def first(self) -> tuple:
        return (0, 1) if self.kind == "burgers" else (0,)

    @property
    def second(self) -> tuple:
        return (0,) if self.kind == "burgers" else ()

    def __call__(self, cj: CoordJet, points, sample_params=None) -> Node:
        if self.kind == "burgers":
            return residual_burgers(cj, self.nu)
        if self.kind == "ode_sin":
            return residual_ode_sin(cj, points, sample_params)
        raise ValueError(f"unknown residual {self.kind!r}")


def _scalar(n: Node) -> Node:
    return n[..., 0] if n.ndim == 3 else n


def residual_burgers(cj: CoordJet, nu: float) -> Node:
    s = _scalar(cj.value)
    return _scalar(cj.d[1]) + s * _scalar(cj.d[0]) - _scalar(cj.dd[0]) * nu


def residual_ode_sin(cj: CoordJet, points, a) -> Node:
    x = np.asarray(points, dtype=np.float64)[..., 0]
    a = np.asarray(a, dtype=np.float64).reshape(-1, 1)
    return _scalar(cj.d[0]) + 4.0 * np.pi * np.sin(4.0 * np.pi * x + a)


# ------------------------------------------------------------------ conditions


@dataclass
class ConditionSet:
    """Boundary or initial constraints.

    ``kind="value"``: ``s(points) - targets`` with ``targets`` of shape
    ``(N, P)`` (per sample) or ``(P,)``.  Used for initial conditions and
    Dirichlet data.
    ``kind="periodic"``: ``points`` and ``partners`` are paired boundary
    points; both ``s`` and ``d s / d coord[axis]`` must match.
    """

    kind: str
    points: np.ndarray
    targets: np.ndarray | None = None
    partners: np.ndarray | None = None
    axis: int = 0

    def take(self, idx) -> "ConditionSet":
        if self.targets is None or np.ndim(self.targets) < 2:
            return self
        return ConditionSet(self.kind, self.points, self.targets[np.asarray(idx)], self.partners, self.axis)


def periodic_pairs(times) -> ConditionSet:
    """Pairs (0, t) and (1, t) in (x, t) coordinates."""
    t = np.asarray(times, dtype=np.float64)
    return ConditionSet("periodic", np.column_stack([np.zeros_like(t), t]), None,
                        np.column_stack([np.ones_like(t), t]), axis=0)


def loss_condition(predict: Callable[[Jet], Jet], cond: ConditionSet, norm: str = "l2") -> Node:
    """Mean over samples and points of ``|B|^2`` (or ``|B|`` with ``norm="l1"``)."""
    if cond.kind == "value":
        out = _scalar(predict(seed_coords(cond.points[None], ())).value)
        return mean(_norm(out - np.asarray(cond.targets, dtype=np.float64), norm))
    if cond.kind == "periodic":
        a = jet_to_coordjet(predict(seed_coords(cond.points[None], (cond.axis,))), (cond.axis,), ())
        b = jet_to_coordjet(predict(seed_coords(cond.partners[None], (cond.axis,))), (cond.axis,), ())
        jump = _scalar(a.value) - _scalar(b.value)
        slope = _scalar(a.d[cond.axis]) - _scalar(b.d[cond.axis])
        return mean(_norm(jump, norm)) + mean(_norm(slope, norm))
    raise ValueError(f"unknown condition kind {cond.kind!r}")


loss_bc = loss_condition
loss_ic = loss_condition


def loss_physics(predict: Callable[[Jet], Jet], points, spec: ResidualSpec, sample_params=None,
                 norm: str = "l2") -> Node:
    """Mean over samples and collocation points of the residual norm."""
    points = np.asarray(points, dtype=np.float64)
    cj = jet_to_coordjet(predict(seed_coords(points[None], spec.first, spec.second)), spec.first, spec.second)
    return mean(_norm(spec(cj, points, sample_params), norm))


# ------------------------------------------------------------ composite PI objective


@dataclass
class PhysicsBatch:
    """Input functions on which physics is enforced, with their constraints."""

    inputs_hf: np.ndarray
    inputs_lf: np.ndarray | None
    collocation: np.ndarray
    conditions: dict = field(default_factory=dict)  # "ic"/"bc" -> ConditionSet
    params: np.ndarray | None = None


def loss_physics_informed(model: CompositeModel, params, lf: FidelityDataset, batch: PhysicsBatch,
                          spec: ResidualSpec, w: LossWeights, norm: str = "l2") -> tuple:
    """lambda1 physics + lambda2 L_LF + lambda5 IC + lambda6 BC + regularisers."""
    predict = lambda xj: model.hf_predict(params, batch.inputs_lf, batch.inputs_hf, xj)  # noqa: E731
    terms = {"physics": loss_physics(predict, batch.collocation, spec, batch.params, norm),
             "lf": loss_lf(model, params, lf)}
    weights = {"physics": w.l1, "lf": w.l2, "ic": w.l5, "bc": w.l6, "reg_nl": w.l3, "reg_lf": w.l4}
    for key in ("ic", "bc"):
        if key in batch.conditions and weights[key] > 0:
            terms[key] = loss_condition(predict, batch.conditions[key], norm)
    terms["reg_nl"] = l2_reg(params, "nl/branch")
    terms["reg_lf"] = l2_reg(params, "lf/branch")
    return combine_terms(terms, weights)


def loss_physics_single(net, params, batch: PhysicsBatch, spec: ResidualSpec, w: LossWeights,
                        norm: str = "l2", prefix: str = "sf/") -> tuple:
    """Physics-informed single-fidelity objective (no low-fidelity data)."""
    predict = lambda xj: net.forward(params, batch.inputs_hf, xj, prefix=prefix)  # noqa: E731
    terms = {"physics": loss_physics(predict, batch.collocation, spec, batch.params, norm)}
    weights = {"physics": w.l1, "ic": w.l5, "bc": w.l6}
    for key in ("ic", "bc"):
        if key in batch.conditions and weights[key] > 0:
            terms[key] = loss_condition(predict, batch.conditions[key], norm)
    return combine_terms(terms, weights)
