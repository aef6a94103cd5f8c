"""
Minimal differentiable MLP stack: forward, reverse-mode gradients, Adam.

Parameters live in one flat float64 vector. Canonical order, layer by layer
from the input side: the weight matrix W (fan_out x fan_in, row-major)
followed by the bias b (fan_out). Gradients use the same layout.

All operations are functional: they return new Network / OptimizerState
objects and never mutate their inputs, so a network can be handed to another
thread between phases without copying.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field

import numpy as np

from utils.safety import ParameterError, ShapeError, UsageError, require_finite

logger = logging.getLogger(__name__)

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "tanh")


@dataclass(frozen=True)
class NetworkSpec:
    layer_widths: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ParameterError("a network needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ParameterError(f"layer widths must be >= 1, got {list(widths)}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ParameterError(f"unknown hidden activation '{self.hidden_activation}'")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ParameterError(f"unknown output activation '{self.output_activation}'")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_params(self) -> int:
        w = self.layer_widths
        return sum((w[i] + 1) * w[i + 1] for i in range(len(w) - 1))

    def layer_slices(self) -> Iterator[tuple[int, int, slice, slice]]:
        """Yield (fan_in, fan_out, weight slice, bias slice) per layer."""
        offset = 0
        w = self.layer_widths
        for i in range(len(w) - 1):
            fan_in, fan_out = w[i], w[i + 1]
            w_slice = slice(offset, offset + fan_in * fan_out)
            offset += fan_in * fan_out
            b_slice = slice(offset, offset + fan_out)
            offset += fan_out
            yield fan_in, fan_out, w_slice, b_slice


@dataclass(frozen=True)
class Network:
    spec: NetworkSpec
    params: np.ndarray

    def __post_init__(self):
        params = np.asarray(self.params, dtype=np.float64).reshape(-1)
        if params.shape[0] != self.spec.n_params:
            raise ShapeError(
                f"parameter vector has {params.shape[0]} entries, spec needs {self.spec.n_params}"
            )
        object.__setattr__(self, "params", params)

    def layers(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for fan_in, fan_out, w_slice, b_slice in self.spec.layer_slices():
            yield self.params[w_slice].reshape(fan_out, fan_in), self.params[b_slice]

    def with_params(self, params: np.ndarray) -> Network:
        return Network(self.spec, np.array(params, dtype=np.float64, copy=True))


@dataclass(frozen=True)
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class ForwardPass:
    """Activations cached by `forward_with_cache` for one `backward` call."""

    params: np.ndarray
    activations: list[np.ndarray] = field(default_factory=list)
    pre_activations: list[np.ndarray] = field(default_factory=list)
    batched: bool = False

    @property
    def output(self) -> np.ndarray:
        out = self.activations[-1]
        return out if self.batched else out[0]


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


def init_network(spec: NetworkSpec, rng: np.random.Generator) -> Network:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    params = np.zeros(spec.n_params, dtype=np.float64)
    for fan_in, fan_out, w_slice, _ in spec.layer_slices():
        bound = 1.0 / np.sqrt(fan_in)
        params[w_slice] = rng.uniform(-bound, bound, size=fan_in * fan_out)
    return Network(spec, params)


def zeros(spec: NetworkSpec) -> Network:
    return Network(spec, np.zeros(spec.n_params, dtype=np.float64))


def init_optimizer(net: Network, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> OptimizerState:
    if lr <= 0 or eps <= 0:
        raise ParameterError("lr and eps must be positive")
    n = net.spec.n_params
    return OptimizerState(np.zeros(n), np.zeros(n), 0, float(lr), beta1, beta2, eps)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


def _as_batch(net: Network, x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    batched = arr.ndim == 2
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != net.spec.input_dim:
        raise ShapeError(
            f"input has shape {np.shape(x)}, network expects width {net.spec.input_dim}"
        )
    return arr, batched


def forward_with_cache(net: Network, x) -> ForwardPass:
    """Run the network and keep what `backward` needs.

    `x` is one input vector or a (batch, input_dim) matrix.
    """
    a, batched = _as_batch(net, x)
    fp = ForwardPass(params=net.params, activations=[a], batched=batched)
    layers = list(net.layers())
    for i, (w, b) in enumerate(layers):
        z = a @ w.T + b
        kind = net.spec.output_activation if i == len(layers) - 1 else net.spec.hidden_activation
        a = _activate(z, kind)
        fp.pre_activations.append(z)
        fp.activations.append(a)
    return fp


def forward(net: Network, x) -> np.ndarray:
    return forward_with_cache(net, x).output


def backward(
    net: Network, fp: ForwardPass | None, output_grad
) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode pass through the cached forward context.

    Returns (parameter gradient, input gradient). For batched contexts the
    parameter gradient is summed over rows and the input gradient keeps one
    row per input.

    Raises:
        UsageError: no forward context, or one recorded for other parameters.
    """
    if fp is None or not fp.activations:
        raise UsageError("backward called without a forward context")
    if fp.params is not net.params:
        raise UsageError("forward context was recorded for different parameters")
    out = fp.activations[-1]
    delta = np.asarray(output_grad, dtype=np.float64).reshape(out.shape)

    layers = list(net.layers())
    grads = np.zeros(net.spec.n_params, dtype=np.float64)
    slices = list(net.spec.layer_slices())
    n_layers = len(layers)
    for i in range(n_layers - 1, -1, -1):
        kind = net.spec.output_activation if i == n_layers - 1 else net.spec.hidden_activation
        delta = delta * _activation_grad(fp.pre_activations[i], fp.activations[i + 1], kind)
        _, _, w_slice, b_slice = slices[i]
        grads[w_slice] = (delta.T @ fp.activations[i]).reshape(-1)
        grads[b_slice] = delta.sum(axis=0)
        delta = delta @ layers[i][0]
    input_grad = delta if fp.batched else delta[0]
    return grads, input_grad


# ---------------------------------------------------------------------------
# Updates
# ---------------------------------------------------------------------------


def adam_step(
    net: Network, grads, opt: OptimizerState
) -> tuple[Network, OptimizerState]:
    """One bias-corrected Adam update.

    Raises:
        ShapeError: gradient length differs from the parameter count.
        NumericError: a gradient component is not finite (index attached).
    """
    g = np.asarray(grads, dtype=np.float64).reshape(-1)
    if g.shape[0] != net.spec.n_params:
        raise ShapeError(f"gradient has {g.shape[0]} entries, network has {net.spec.n_params}")
    require_finite(g, "gradient")

    t = opt.step_count + 1
    m = opt.beta1 * opt.first_moment + (1.0 - opt.beta1) * g
    v = opt.beta2 * opt.second_moment + (1.0 - opt.beta2) * g * g
    m_hat = m / (1.0 - opt.beta1**t)
    v_hat = v / (1.0 - opt.beta2**t)
    params = net.params - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    new_opt = OptimizerState(m, v, t, opt.lr, opt.beta1, opt.beta2, opt.eps)
    return Network(net.spec, params), new_opt


def soft_update(target: Network, online: Network, tau: float) -> Network:
    """target' = tau * online + (1 - tau) * target."""
    if target.spec != online.spec:
        raise ShapeError("soft_update needs identical network specs")
    if not 0.0 <= tau <= 1.0:
        raise ParameterError(f"tau must lie in [0, 1], got {tau}")
    return Network(target.spec, tau * online.params + (1.0 - tau) * target.params)


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


def finite_difference(fn: Callable[[np.ndarray], float], point, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function at `point`."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    x = np.array(point, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    for i in range(x.shape[0]):
        orig = x[i]
        x[i] = orig + eps
        up = fn(x)
        x[i] = orig - eps
        down = fn(x)
        x[i] = orig
        grad[i] = (up - down) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric) -> float:
    """max |analytic - numeric| / max(1, |analytic|)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - n) / np.maximum(1.0, np.abs(a))))


def grad_check(
    net: Network,
    x,
    eps: float = 1e-5,
    backward_fn: Callable[..., tuple[np.ndarray, np.ndarray]] = backward,
) -> float:
    """Compare backward against central differences of L = sum(forward(net, x))."""
    fp = forward_with_cache(net, x)
    analytic, _ = backward_fn(net, fp, np.ones_like(fp.activations[-1]))

    def loss(params: np.ndarray) -> float:
        return float(np.sum(forward(Network(net.spec, params), x)))

    numeric = finite_difference(loss, net.params, eps)
    err = relative_error(analytic, numeric)
    logger.debug(f"grad_check over {net.spec.n_params} params: max rel err {err:.3e}")
    return err
