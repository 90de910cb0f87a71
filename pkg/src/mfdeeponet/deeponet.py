"""Unstacked DeepONets: the plain branch/trunk inner product and the
"modified" variant with encoder gating.

Networks are stateless descriptions; parameters live in flat ``dict``s of
float64 arrays keyed by ``"<stack>.W<l>"`` / ``"<stack>.b<l>"`` (plus
``"enc_u.*"`` and ``"enc_x.*"`` for the modified encoders), optionally with a
prefix such as ``"lf/"``.  Forward passes accept either arrays or
:class:`~mfdeeponet.ad_core.Node` leaves, so the same code serves inference
and training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ad_core import Jet, JetLayout, Node, ShapeError, seed_coords

ACTIVATIONS = ("tanh", "relu", "none")


@dataclass(frozen=True)
class MLPStack:
    """Fully connected stack; ``sizes = (in, h_1, ..., out)`` gives L = len - 1 layers."""

    sizes: tuple
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ValueError("an MLP stack needs at least one layer")
        if any(int(s) <= 0 for s in self.sizes):
            raise ValueError(f"zero-width layer in {self.sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def depth(self) -> int:
        return len(self.sizes) - 1

    def param_count(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))

    def init(self, rng: np.random.Generator, name: str) -> dict:
        params = {}
        for l, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:]), start=1):
            params[f"{name}.W{l}"] = glorot_uniform(rng, n_out, n_in)
            params[f"{name}.b{l}"] = np.zeros(n_out)
        return params


def glorot_uniform(rng: np.random.Generator, n_out: int, n_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_out, n_in))


def _get(params, prefix, key):
    try:
        return params[prefix + key]
    except KeyError:
        raise KeyError(f"missing parameter {prefix + key!r}") from None


def branch_jet(u, layout: JetLayout = JetLayout(0)) -> Jet:
    """Input-function samples ``(N, M)`` as a coordinate-independent jet ``(1, N, 1, M)``."""
    if isinstance(u, Jet):
        return u
    if isinstance(u, Node):
        from .ad_core import reshape
        return Jet(reshape(u, (1, u.shape[0], 1, u.shape[1])), layout, const=True)
    u = np.asarray(u, dtype=np.float64)
    return Jet.constant(u[:, None, :], layout)


def trunk_jet(x, first=(), second=()) -> Jet:
    """Query points ``(P, d)`` (shared) or ``(N, P, d)`` (per sample) as a seeded jet."""
    if isinstance(x, Jet):
        return x
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    return seed_coords(x, first, second)


def _components(h_u: Jet, h_x: Jet, n_out: int) -> Jet:
    prod = h_u * h_x
    width = prod.shape[-1]
    return prod.reshape(prod.shape[:-1] + (n_out, width // n_out)).sum_last().reshape(prod.shape[:-1] + (n_out,))


@dataclass(frozen=True)
class StandardDeepONet:
    """``G(u)(x) = <branch(u), trunk(x)>`` per output component.

    With ``activation="none"`` every layer is affine and the output is
    bilinear-plus-affine in (branch input, x).
    """

    branch: MLPStack
    trunk: MLPStack
    n_out: int = 1

    def __post_init__(self):
        if self.branch.sizes[-1] != self.trunk.sizes[-1]:
            raise ShapeError("StandardDeepONet", "final branch and trunk widths differ")
        if self.branch.sizes[-1] % self.n_out:
            raise ShapeError("StandardDeepONet", "final width not divisible by output count")

    @classmethod
    def build(cls, branch_in: int, trunk_in: int, width: int, depth: int,
              activation: str = "none", n_out: int = 1) -> "StandardDeepONet":
        hidden = (width,) * (depth - 1)
        out = width * n_out
        return cls(MLPStack((branch_in,) + hidden + (out,), activation),
                   MLPStack((trunk_in,) + hidden + (out,), activation), n_out)

    def param_count(self) -> int:
        return self.branch.param_count() + self.trunk.param_count()

    def init_params(self, seed: int, prefix: str = "") -> dict:
        rng = np.random.default_rng(seed)
        params = self.branch.init(rng, prefix + "branch")
        params.update(self.trunk.init(rng, prefix + "trunk"))
        return params

    @staticmethod
    def _stack(stack: MLPStack, params, prefix, name, h: Jet) -> Jet:
        for l in range(1, stack.depth + 1):
            h = h.linear(_get(params, prefix, f"{name}.W{l}"), _get(params, prefix, f"{name}.b{l}"))
            if l < stack.depth:
                h = h.activate(stack.activation)
        return h

    def forward(self, params, branch_in, x, prefix: str = "") -> Jet:
        """Output jet of shape ``(C, N, P, n_out)``."""
        x = trunk_jet(x)
        b = branch_jet(branch_in, x.layout)
        hb = self._stack(self.branch, params, prefix, "branch", b)
        ht = self._stack(self.trunk, params, prefix, "trunk", x)
        return _components(hb, ht, self.n_out)


@dataclass(frozen=True)
class ModifiedDeepONet:
    """Branch/trunk stacks whose hidden states are gated between two encoders.

    ``U = phi(W_u u + b_u)``, ``V = phi(W_x x + b_x)`` and, for every hidden
    layer, ``H = (1 - Z) * U + Z * V`` on *both* the branch and the trunk
    side.  The last layer is affine unless ``final_activation`` is set.
    """

    branch_in: int
    trunk_in: int
    width: int
    depth: int
    activation: str = "tanh"
    final_activation: bool = False
    n_out: int = 1

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.branch_in < 1 or self.trunk_in < 1:
            raise ValueError("depth, width and input sizes must be positive")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"modified DeepONet needs tanh or relu, got {self.activation!r}")

    @property
    def out_width(self) -> int:
        return self.width * self.n_out

    @property
    def branch(self) -> MLPStack:
        return MLPStack((self.branch_in,) + (self.width,) * (self.depth - 1) + (self.out_width,), self.activation)

    @property
    def trunk(self) -> MLPStack:
        return MLPStack((self.trunk_in,) + (self.width,) * (self.depth - 1) + (self.out_width,), self.activation)

    def param_count(self) -> int:
        enc = (self.branch_in + 1) * self.width + (self.trunk_in + 1) * self.width
        return self.branch.param_count() + self.trunk.param_count() + enc

    def init_params(self, seed: int, prefix: str = "") -> dict:
        rng = np.random.default_rng(seed)
        params = self.branch.init(rng, prefix + "branch")
        params.update(self.trunk.init(rng, prefix + "trunk"))
        params[prefix + "enc_u.W"] = glorot_uniform(rng, self.width, self.branch_in)
        params[prefix + "enc_u.b"] = np.zeros(self.width)
        params[prefix + "enc_x.W"] = glorot_uniform(rng, self.width, self.trunk_in)
        params[prefix + "enc_x.b"] = np.zeros(self.width)
        return params

    def forward(self, params, branch_in, x, prefix: str = "") -> Jet:
        """Output jet of shape ``(C, N, P, n_out)``."""
        x = trunk_jet(x)
        u = branch_jet(branch_in, x.layout)
        if u.shape[-1] != self.branch_in or x.shape[-1] != self.trunk_in:
            raise ShapeError("ModifiedDeepONet", f"inputs {u.shape[-1]}/{x.shape[-1]} do not match "
                             f"{self.branch_in}/{self.trunk_in}")
        act = self.activation
        p = lambda key: _get(params, prefix, key)  # noqa: E731
        hu, hx = u, x
        if self.depth > 1:
            U = u.linear(p("enc_u.W"), p("enc_u.b")).activate(act)
            V = x.linear(p("enc_x.W"), p("enc_x.b")).activate(act)
            gap = V - U
            for l in range(1, self.depth):
                zu = hu.linear(p(f"branch.W{l}"), p(f"branch.b{l}")).activate(act)
                zx = hx.linear(p(f"trunk.W{l}"), p(f"trunk.b{l}")).activate(act)
                hu = U + zu * gap
                hx = U + zx * gap
        L = self.depth
        hu = hu.linear(p(f"branch.W{L}"), p(f"branch.b{L}"))
        hx = hx.linear(p(f"trunk.W{L}"), p(f"trunk.b{L}"))
        if self.final_activation:
            hu, hx = hu.activate(act), hx.activate(act)
        return _components(hu, hx, self.n_out)


def init_params(net, seed: int, prefix: str = "") -> dict:
    """Glorot-uniform weights and zero biases, fully determined by ``seed``."""
    return net.init_params(seed, prefix)


def standard_forward(net: StandardDeepONet, params, branch_in, x) -> float:
    """Scalar output for a single (input vector, query point) pair."""
    out = net.forward(params, np.atleast_2d(branch_in), np.atleast_2d(x))
    return float(out.value.value.reshape(-1)[0])


def modified_forward(net: ModifiedDeepONet, params, u_sensors, x) -> float:
    """Scalar output for a single (sensor values, query point) pair."""
    out = net.forward(params, np.atleast_2d(u_sensors), np.atleast_2d(x))
    return float(out.value.value.reshape(-1)[0])
