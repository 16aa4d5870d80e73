"""Self-contained fully connected network with tanh hidden layers.

Provides everything the constrained fundamental-diagram and trajectory
mapping fits need, without an autodiff framework:

* batched forward evaluation with internal min-max input normalization,
* reverse-mode parameter gradients for arbitrary per-row output cotangents,
* forward-mode propagation of first and second directional input
  derivatives (with respect to the physical, un-normalized input),
* reverse-mode parameter gradients of those directional derivatives
  (forward-over-reverse), which is what penalty terms on the derivative
  of the learned surface require,
* full-batch ADAM training with a pluggable loss callable.

Notation inside the derivative code: per layer, ``a`` is the activation,
``p`` its first directional tangent and ``s`` the second; ``phi1``/``phi2``
are the first/second derivatives of tanh.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFiniteLoss

FORMAT_TAG = "hetflow-mlp-1"


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    hidden_layers: int
    hidden_width: int
    activation: str = "TANH"
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1 or self.hidden_width < 1:
            raise ValueError("dimensions must be >= 1")
        if self.hidden_layers < 0:
            raise ValueError("hidden_layers must be >= 0")
        if self.activation != "TANH":
            raise ValueError("only TANH activation is supported")

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer, input to output."""
        widths = [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_dim]
        return list(zip(widths[:-1], widths[1:]))


@dataclass
class MlpModel:
    spec: MlpSpec
    weights: list[np.ndarray]          # each (fan_out, fan_in)
    biases: list[np.ndarray]           # each (fan_out,)
    norm_lo: np.ndarray = None         # per input dim
    norm_hi: np.ndarray = None

    def __post_init__(self):
        if self.norm_lo is None:
            self.norm_lo = np.zeros(self.spec.input_dim)
        if self.norm_hi is None:
            self.norm_hi = np.ones(self.spec.input_dim)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def set_normalization(self, x: np.ndarray) -> None:
        """Record per-dimension min-max bounds from training inputs."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = x.min(axis=0)
        hi = x.max(axis=0)
        flat = hi <= lo
        hi[flat] = lo[flat] + 1.0  # constant feature: keep the scale finite
        self.norm_lo, self.norm_hi = lo, hi

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.norm_lo) / (self.norm_hi - self.norm_lo)

    def copy(self) -> "MlpModel":
        return MlpModel(self.spec, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases],
                        self.norm_lo.copy(), self.norm_hi.copy())


def mlp_init(spec: MlpSpec) -> MlpModel:
    """Seeded scaled-uniform weights (range 1/sqrt(fan_in)), zero biases."""
    rng = np.random.default_rng(spec.seed)
    weights, biases = [], []
    for fan_in, fan_out in spec.layer_dims():
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(spec=spec, weights=weights, biases=biases)


def _check_input(m: MlpModel, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != m.spec.input_dim:
        raise DimensionMismatch(
            f"expected input dim {m.spec.input_dim}, got {x.shape[1]}")
    return x


def mlp_forward(m: MlpModel, x) -> np.ndarray:
    """Evaluate the network; rows are samples. Returns (n, output_dim)."""
    a = m.normalize(_check_input(m, x))
    last = len(m.weights) - 1
    for l, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = a @ w.T + b
        a = z if l == last else np.tanh(z)
    return a


def _forward_cache(m: MlpModel, x: np.ndarray):
    """Forward pass keeping the per-layer activations for backprop."""
    acts = [m.normalize(x)]
    last = len(m.weights) - 1
    for l, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = acts[-1] @ w.T + b
        acts.append(z if l == last else np.tanh(z))
    return acts


def backprop(m: MlpModel, x, output_cotangent) -> list[tuple[np.ndarray, np.ndarray]]:
    """Parameter gradients for loss with given dL/d(output) per row.

    Returns [(dL/dW, dL/db), ...] in layer order.
    """
    x = _check_input(m, x)
    acts = _forward_cache(m, x)
    delta = np.atleast_2d(np.asarray(output_cotangent, dtype=float))
    grads = [None] * len(m.weights)
    for l in range(len(m.weights) - 1, -1, -1):
        grads[l] = (delta.T @ acts[l], delta.sum(axis=0))
        if l > 0:
            delta = (delta @ m.weights[l]) * (1.0 - acts[l] ** 2)
    return grads


def mse_loss(m: MlpModel, x, y) -> tuple[float, list]:
    """Mean squared error over all rows plus its parameter gradients."""
    x = _check_input(m, x)
    y = np.atleast_2d(np.asarray(y, dtype=float)).reshape(x.shape[0], -1)
    pred = mlp_forward(m, x)
    resid = pred - y
    value = float(np.mean(resid ** 2))
    cot = 2.0 * resid / resid.size
    return value, backprop(m, x, cot)


# ---------------------------------------------------------------------------
# directional input derivatives (forward mode), and their parameter gradients

def _derivative_forward(m: MlpModel, x: np.ndarray, dim: int):
    """Propagate (value, first, second) tangents along physical axis `dim`.

    Returns the output triple plus the per-layer tape needed by
    :func:`derivative_backprop`.
    """
    n = x.shape[0]
    scale = 1.0 / (m.norm_hi[dim] - m.norm_lo[dim])
    a = m.normalize(x)
    p = np.zeros_like(a)
    p[:, dim] = scale
    s = np.zeros_like(a)

    tape = []
    last = len(m.weights) - 1
    for l, (w, b) in enumerate(zip(m.weights, m.biases)):
        z = a @ w.T + b
        zp = p @ w.T
        zs = s @ w.T
        if l == last:
            tape.append((a, p, s, None, None, None, None))
            a, p, s = z, zp, zs
        else:
            t = np.tanh(z)
            phi1 = 1.0 - t ** 2
            phi2 = -2.0 * t * phi1
            tape.append((a, p, s, t, phi1, phi2, (zp, zs)))
            a = t
            p = phi1 * zp
            s = phi1 * zs + phi2 * zp ** 2
    return a, p, s, tape


def input_derivatives(m: MlpModel, x, dim: int):
    """Value, first and second derivative of each output along input `dim`.

    Derivatives are with respect to the physical input (the internal
    min-max normalization is folded in by the chain rule).
    """
    x = _check_input(m, x)
    f, f1, f2, _ = _derivative_forward(m, x, dim)
    return f, f1, f2


def mlp_input_derivatives(m: MlpModel, x, dim: int = 0) -> tuple[float, float, float]:
    """Scalar convenience wrapper of :func:`input_derivatives`."""
    f, f1, f2 = input_derivatives(m, np.asarray(x, dtype=float).reshape(1, -1), dim)
    return float(f[0, 0]), float(f1[0, 0]), float(f2[0, 0])


def derivative_backprop(m: MlpModel, x, dim: int, cot_f=None, cot_f1=None, cot_f2=None):
    """Parameter gradients of a scalar loss given cotangents with respect
    to the network value, its first, and its second directional derivative.

    This is reverse mode applied to the extended (value, tangent, second
    tangent) forward computation, so penalty terms that involve the slope
    or curvature of the learned surface can be trained by gradient descent.
    Returns (value_triple, grads) where value_triple = (f, f1, f2).
    """
    x = _check_input(m, x)
    f, f1, f2, tape = _derivative_forward(m, x, dim)
    n_layers = len(m.weights)
    zero = lambda arr: np.zeros_like(arr)
    a_bar = zero(f) if cot_f is None else np.atleast_2d(cot_f)
    p_bar = zero(f1) if cot_f1 is None else np.atleast_2d(cot_f1)
    s_bar = zero(f2) if cot_f2 is None else np.atleast_2d(cot_f2)

    grads = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        a_in, p_in, s_in, t, phi1, phi2, zps = tape[l]
        if t is None:  # output layer, linear
            z_bar, zp_bar, zs_bar = a_bar, p_bar, s_bar
        else:
            zp, zs = zps
            zs_bar = phi1 * s_bar
            zp_bar = phi1 * p_bar + 2.0 * phi2 * zp * s_bar
            phi1_bar = zp * p_bar + zs * s_bar
            phi2_bar = zp ** 2 * s_bar
            phi3 = phi1 * (6.0 * t ** 2 - 2.0)  # d(phi2)/dz
            z_bar = a_bar * phi1 + phi1_bar * phi2 + phi2_bar * phi3
        gw = z_bar.T @ a_in + zp_bar.T @ p_in + zs_bar.T @ s_in
        gb = z_bar.sum(axis=0)
        grads[l] = (gw, gb)
        w = m.weights[l]
        a_bar = z_bar @ w
        p_bar = zp_bar @ w
        s_bar = zs_bar @ w
    return (f, f1, f2), grads


def add_grads(total: list, extra: list, scale: float = 1.0) -> list:
    """In-place total += scale * extra over layer-wise (gW, gb) pairs."""
    if total is None:
        return [(gw * scale, gb * scale) for gw, gb in extra]
    for l, (gw, gb) in enumerate(extra):
        total[l] = (total[l][0] + scale * gw, total[l][1] + scale * gb)
    return total


# ---------------------------------------------------------------------------
# training

@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 5000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def train(m: MlpModel, loss_fn, cfg: AdamConfig) -> tuple[MlpModel, np.ndarray]:
    """Full-batch ADAM on ``loss_fn(model) -> (value, grads)``.

    Mutates and returns the model together with the per-epoch loss trace.
    Raises NonFiniteLoss when the loss leaves the reals.
    """
    mw = [np.zeros_like(w) for w in m.weights]
    vw = [np.zeros_like(w) for w in m.weights]
    mb = [np.zeros_like(b) for b in m.biases]
    vb = [np.zeros_like(b) for b in m.biases]
    history = np.empty(cfg.epochs)

    for epoch in range(cfg.epochs):
        value, grads = loss_fn(m)
        if not np.isfinite(value):
            raise NonFiniteLoss(f"loss {value} at epoch {epoch}")
        history[epoch] = value
        t = epoch + 1
        bc1 = 1.0 - cfg.beta1 ** t
        bc2 = 1.0 - cfg.beta2 ** t
        for l, (gw, gb) in enumerate(grads):
            mw[l] = cfg.beta1 * mw[l] + (1.0 - cfg.beta1) * gw
            vw[l] = cfg.beta2 * vw[l] + (1.0 - cfg.beta2) * gw ** 2
            m.weights[l] -= cfg.learning_rate * (mw[l] / bc1) / (np.sqrt(vw[l] / bc2) + cfg.epsilon)
            mb[l] = cfg.beta1 * mb[l] + (1.0 - cfg.beta1) * gb
            vb[l] = cfg.beta2 * vb[l] + (1.0 - cfg.beta2) * gb ** 2
            m.biases[l] -= cfg.learning_rate * (mb[l] / bc1) / (np.sqrt(vb[l] / bc2) + cfg.epsilon)
    return m, history


# ---------------------------------------------------------------------------
# serialization

def model_to_dict(m: MlpModel) -> dict:
    return {
        "format": FORMAT_TAG,
        "spec": {
            "input_dim": m.spec.input_dim,
            "output_dim": m.spec.output_dim,
            "hidden_layers": m.spec.hidden_layers,
            "hidden_width": m.spec.hidden_width,
            "activation": m.spec.activation,
            "seed": m.spec.seed,
        },
        "norm_lo": m.norm_lo.tolist(),
        "norm_hi": m.norm_hi.tolist(),
        "weights": [w.tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
    }


def model_from_dict(data: dict) -> MlpModel:
    if data.get("format") != FORMAT_TAG:
        raise ValueError(f"unsupported model format {data.get('format')!r}")
    spec = MlpSpec(**data["spec"])
    return MlpModel(
        spec=spec,
        weights=[np.asarray(w, dtype=float) for w in data["weights"]],
        biases=[np.asarray(b, dtype=float) for b in data["biases"]],
        norm_lo=np.asarray(data["norm_lo"], dtype=float),
        norm_hi=np.asarray(data["norm_hi"], dtype=float),
    )


def save_model(m: MlpModel, path, extra: dict = None) -> None:
    data = model_to_dict(m)
    if extra:
        data.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh)


def load_model(path) -> MlpModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
