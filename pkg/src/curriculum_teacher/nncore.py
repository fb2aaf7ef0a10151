"""Dense feedforward networks in plain numpy.

Everything runs in float64. A network is a list of ``(fan_in, fan_out)``
weight matrices plus bias vectors; hidden layers use ReLU and the output
layer uses one of three heads (softmax, linear, tanh). Gradients come from
hand-written backpropagation and are checked against central finite
differences by :func:`finite_diff_grad`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import ConfigurationError, DimensionError, NumericError

FORMAT_VERSION = 1
HEADS = ("softmax", "linear", "tanh")
LOSSES = ("cross_entropy", "mse")


@dataclass(frozen=True)
class DenseNetSpec:
    layer_sizes: tuple
    output_head: str = "softmax"
    dropout_rate: float = 0.0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ConfigurationError("a DenseNet needs at least one hidden layer")
        if min(sizes) < 1:
            raise ConfigurationError(f"layer sizes must be >= 1, got {sizes}")
        if self.output_head not in HEADS:
            raise ConfigurationError(f"unknown output head {self.output_head!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must lie in [0, 1)")

    @property
    def hidden_sizes(self):
        return self.layer_sizes[1:-1]

    def to_dict(self):
        return {
            "layer_sizes": list(self.layer_sizes),
            "output_head": self.output_head,
            "dropout_rate": self.dropout_rate,
        }


class Gradients(NamedTuple):
    weights: list
    biases: list

    def scaled(self, factor):
        return Gradients([factor * w for w in self.weights], [factor * b for b in self.biases])

    def flat(self):
        return np.concatenate([a.ravel() for a in (*self.weights, *self.biases)])


@dataclass
class DenseNet:
    spec: DenseNetSpec
    weights: list
    biases: list

    def __post_init__(self):
        sizes = self.spec.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise DimensionError("parameter count does not match layer_sizes")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[k], sizes[k + 1]) or b.shape != (sizes[k + 1],):
                raise DimensionError(
                    f"layer {k}: expected W {(sizes[k], sizes[k + 1])} and b {(sizes[k + 1],)}, "
                    f"got {w.shape} and {b.shape}"
                )

    @classmethod
    def initialize(cls, spec, rng, final_limit=None):
        """Glorot-uniform weights, zero biases.

        ``final_limit`` replaces the Glorot bound of the output layer, e.g.
        a small value so an untrained network starts near zero output.
        """
        weights, biases = [], []
        pairs = list(zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]))
        for k, (fan_in, fan_out) in enumerate(pairs):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            if final_limit is not None and k == len(pairs) - 1:
                limit = final_limit
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(spec, weights, biases)

    @property
    def n_inputs(self):
        return self.spec.layer_sizes[0]

    @property
    def n_outputs(self):
        return self.spec.layer_sizes[-1]

    def copy(self):
        return DenseNet(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def parameters(self):
        return [*self.weights, *self.biases]

    def predict(self, inputs):
        """Inference-mode output for ``inputs``."""
        return forward(self, inputs).output

    def same_shape(self, other):
        return self.spec.layer_sizes == other.spec.layer_sizes


@dataclass
class Trace:
    """Everything a forward pass leaves behind for backpropagation.

    ``activations[0]`` is the input, ``activations[-1]`` the head output;
    ``masks[k]`` is the scaled dropout mask of hidden layer ``k`` (or None).
    """

    activations: list
    logits: np.ndarray
    masks: list = field(default_factory=list)

    @property
    def output(self):
        return self.activations[-1]


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _apply_head(head, logits):
    if head == "softmax":
        return softmax(logits)
    if head == "tanh":
        return np.tanh(logits)
    return logits


def _as_batch(inputs, width, what="inputs"):
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise DimensionError(f"{what} must have {width} columns, got shape {x.shape}")
    return x


def forward(net, inputs, train_mode=False, rng=None):
    """Run ``inputs`` through ``net`` and keep every activation.

    Dropout is active only when ``train_mode`` is set; surviving units are
    scaled by ``1 / (1 - rate)`` so inference needs no rescaling.
    """
    x = _as_batch(inputs, net.n_inputs)
    rate = net.spec.dropout_rate
    use_dropout = train_mode and rate > 0.0
    if use_dropout and rng is None:
        raise ConfigurationError("train-mode dropout needs an rng")
    activations = [x]
    masks = []
    h = x
    last = len(net.weights) - 1
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        if k == last:
            out = _apply_head(net.spec.output_head, z)
            activations.append(out)
            return Trace(activations, z, masks)
        h = np.maximum(z, 0.0)
        if use_dropout:
            mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
            h = h * mask
            masks.append(mask)
        else:
            masks.append(None)
        activations.append(h)
    raise AssertionError("unreachable")


def loss_value(trace, targets, loss):
    """Mean cross-entropy over rows, or MSE averaged over every entry."""
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != trace.output.shape:
        raise DimensionError(f"targets shape {y.shape} != output shape {trace.output.shape}")
    if loss == "cross_entropy":
        if trace.logits is None:
            raise ConfigurationError("cross_entropy needs logits")
        return float(-(y * log_softmax(trace.logits)).sum(axis=1).mean())
    if loss == "mse":
        return float(np.mean((trace.output - y) ** 2))
    raise ConfigurationError(f"unknown loss {loss!r}")


def _logit_grad(head, trace, output_grad):
    out = trace.output
    if head == "linear":
        return output_grad
    if head == "tanh":
        return output_grad * (1.0 - out**2)
    return out * (output_grad - (output_grad * out).sum(axis=1, keepdims=True))


def backprop(net, trace, output_grad, logit_grad=None):
    """Chain ``dL/d(output)`` back through ``net``.

    Returns the parameter gradients and the gradient with respect to the
    network input (needed when another network feeds this one). Pass
    ``logit_grad`` to skip the head Jacobian.
    """
    if logit_grad is None:
        g = np.asarray(output_grad, dtype=np.float64)
        if g.shape != trace.output.shape:
            raise DimensionError(f"output gradient shape {g.shape} != output {trace.output.shape}")
        delta = _logit_grad(net.spec.output_head, trace, g)
    else:
        delta = logit_grad
    n_layers = len(net.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for k in range(n_layers - 1, -1, -1):
        h_in = trace.activations[k]
        gw[k] = h_in.T @ delta
        gb[k] = delta.sum(axis=0)
        delta = delta @ net.weights[k].T
        if k > 0:
            mask = trace.masks[k - 1]
            if mask is not None:
                delta = delta * mask
            # ReLU derivative read off the post-activation; dropout zeros are already masked.
            delta = delta * (trace.activations[k] > 0.0)
    return Gradients(gw, gb), delta


def backward(net, trace, targets, loss):
    """Parameter gradients of the mean ``loss`` for the batch in ``trace``."""
    y = np.asarray(targets, dtype=np.float64)
    out = trace.output
    if y.shape != out.shape:
        raise DimensionError(f"targets shape {y.shape} != output shape {out.shape}")
    batch = out.shape[0]
    if loss == "cross_entropy":
        if net.spec.output_head == "softmax":
            grads, _ = backprop(net, trace, None, logit_grad=(out - y) / batch)
            return grads
        log_p = log_softmax(trace.logits)
        p = np.exp(log_p)
        # cross-entropy on a softmax of the raw logits, whatever the head
        return backprop(net, trace, None, logit_grad=(p - y) / batch)[0]
    if loss == "mse":
        grads, _ = backprop(net, trace, 2.0 * (out - y) / out.size)
        return grads
    raise ConfigurationError(f"unknown loss {loss!r}")


@dataclass
class SgdMomentum:
    learning_rate: float
    momentum: float = 0.0
    velocity: list = None
    max_grad_norm: float = None  # rescale the whole gradient when its L2 norm exceeds this

    def __post_init__(self):
        if not self.learning_rate >= 0.0:
            raise ConfigurationError("learning_rate must be non-negative")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must lie in [0, 1)")

    @classmethod
    def for_net(cls, net, learning_rate, momentum=0.0, max_grad_norm=None):
        return cls(learning_rate, momentum, [np.zeros_like(p) for p in net.parameters()],
                   max_grad_norm)

    def reset(self):
        self.velocity = [np.zeros_like(v) for v in self.velocity]


def sgd_step(opt, net, gradients):
    """``v <- momentum * v + g``; ``p <- p - lr * v``. Mutates and returns ``net``."""
    grads = [*gradients.weights, *gradients.biases]
    params = net.parameters()
    if len(grads) != len(params):
        raise DimensionError("gradient count does not match parameter count")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient entry; step aborted")
    if opt.velocity is None:
        opt.velocity = [np.zeros_like(p) for p in params]
    if opt.max_grad_norm is not None:
        norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
        if norm > opt.max_grad_norm:
            grads = [g * (opt.max_grad_norm / norm) for g in grads]
    for p, g, v in zip(params, grads, opt.velocity):
        v *= opt.momentum
        v += g
        p -= opt.learning_rate * v
    return net


def finite_diff_grad(net, inputs, targets, loss, epsilon=1e-5):
    """Central-difference gradient estimate, inference mode.

    ``loss`` is ``"cross_entropy"``, ``"mse"`` or a callable mapping the
    network output to a scalar (``targets`` is then ignored).
    """
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")

    if callable(loss):
        def objective(probe):
            return float(loss(forward(probe, inputs).output))
    else:
        def objective(probe):
            return loss_value(forward(probe, inputs), targets, loss)

    probe = net.copy()
    out_w, out_b = [], []
    for params, out in ((probe.weights, out_w), (probe.biases, out_b)):
        for p in params:
            g = np.zeros_like(p)
            flat, gflat = p.reshape(-1), g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                up = objective(probe)
                flat[i] = orig - epsilon
                down = objective(probe)
                flat[i] = orig
                gflat[i] = (up - down) / (2.0 * epsilon)
            out.append(g)
    return Gradients(out_w, out_b)


def relative_error(a, b, floor=1e-6):
    """Largest entrywise ``|a - b| / max(|a|, |b|, floor)``."""
    a = a.flat() if isinstance(a, Gradients) else np.asarray(a, dtype=np.float64).ravel()
    b = b.flat() if isinstance(b, Gradients) else np.asarray(b, dtype=np.float64).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def copy_into(target, source):
    """Overwrite ``target``'s parameters with ``source``'s, in place."""
    if not target.same_shape(source):
        raise DimensionError("networks differ in shape")
    for t, s in zip(target.parameters(), source.parameters()):
        t[...] = s


# -- persistence --------------------------------------------------------------

def net_to_dict(net, optimizer=None):
    out = {
        "format_version": FORMAT_VERSION,
        "spec": net.spec.to_dict(),
        "weights": [w.ravel().tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    if optimizer is not None:
        out["optimizer"] = {
            "learning_rate": optimizer.learning_rate,
            "momentum": optimizer.momentum,
            "velocity": None if optimizer.velocity is None
            else [v.ravel().tolist() for v in optimizer.velocity],
            "max_grad_norm": optimizer.max_grad_norm,
        }
    return out


def net_from_dict(data):
    """Inverse of :func:`net_to_dict`; returns ``(net, optimizer_or_None)``."""
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint format_version {version!r}")
    spec = DenseNetSpec(tuple(data["spec"]["layer_sizes"]), data["spec"]["output_head"],
                        float(data["spec"]["dropout_rate"]))
    sizes = spec.layer_sizes
    shapes = list(zip(sizes[:-1], sizes[1:]))
    if len(data["weights"]) != len(shapes) or len(data["biases"]) != len(shapes):
        raise DimensionError("checkpoint layer count does not match its spec")
    weights, biases = [], []
    for (fi, fo), w, b in zip(shapes, data["weights"], data["biases"]):
        w = np.asarray(w, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if w.size != fi * fo or b.size != fo:
            raise DimensionError(f"checkpoint layer of shape {(fi, fo)} has wrong data length")
        weights.append(w.reshape(fi, fo))
        biases.append(b)
    net = DenseNet(spec, weights, biases)
    opt = None
    if "optimizer" in data:
        o = data["optimizer"]
        velocity = None
        if o["velocity"] is not None:
            velocity = [np.asarray(v, dtype=np.float64).reshape(p.shape)
                        for v, p in zip(o["velocity"], net.parameters())]
        opt = SgdMomentum(float(o["learning_rate"]), float(o["momentum"]), velocity,
                          o.get("max_grad_norm"))
    return net, opt


def save_net(path, net, optimizer=None):
    Path(path).write_text(json.dumps(net_to_dict(net, optimizer)))


def load_net(path):
    return net_from_dict(json.loads(Path(path).read_text()))


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out
