"""Fully connected network with ReLU hidden layers and softmax cross-entropy."""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeError

LENET_300_100 = (784, 300, 100, 10)


@dataclass
class Layer:
    name: str
    weight: np.ndarray  # fan_in x fan_out
    bias: np.ndarray  # fan_out
    activation: str = "relu"

    @property
    def shape(self):
        return self.weight.shape


@dataclass
class MlpModel:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weight.shape[1] != nxt.weight.shape[0]:
                raise ShapeError(
                    f"layer {prev.name!r} outputs {prev.weight.shape[1]} units "
                    f"but {nxt.name!r} expects {nxt.weight.shape[0]}"
                )

    @classmethod
    def initialize(cls, sizes=LENET_300_100, seed=0, names=None):
        """Glorot-uniform weights, zero biases, ReLU on every layer but the last."""
        rng = np.random.default_rng(seed)
        n_layers = len(sizes) - 1
        names = names or [f"fc{i + 1}" for i in range(n_layers)]
        if len(names) != n_layers:
            raise ShapeError(f"{len(names)} names for {n_layers} layers")
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            layers.append(
                Layer(
                    name=names[i],
                    weight=rng.uniform(-limit, limit, size=(fan_in, fan_out)),
                    bias=np.zeros(fan_out),
                    activation="relu" if i < n_layers - 1 else "none",
                )
            )
        return cls(layers)

    @property
    def sizes(self):
        return tuple([self.layers[0].weight.shape[0]] + [l.weight.shape[1] for l in self.layers])

    def layer(self, name):
        for l in self.layers:
            if l.name == name:
                return l
        raise KeyError(f"no layer named {name!r}")

    def weights(self):
        return {l.name: l.weight for l in self.layers}

    def copy(self):
        return MlpModel(
            [Layer(l.name, l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def n_params(self):
        return sum(l.weight.size + l.bias.size for l in self.layers)


def forward(model, x):
    """Return ``(logits, cache)``; the cache holds what :func:`backward` needs."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.layers[0].weight.shape[0]:
        raise ShapeError(
            f"batch of shape {x.shape} does not match input width {model.layers[0].weight.shape[0]}"
        )
    inputs = []
    h = x
    for layer in model.layers:
        inputs.append(h)
        h = h @ layer.weight + layer.bias
        if layer.activation == "relu":
            h = np.maximum(h, 0.0)
    return h, inputs


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy of integer ``labels``."""
    logp = log_softmax(logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


def loss_and_backward(model, x, labels):
    """Mean cross-entropy and its gradients as a list of ``(d_weight, d_bias)`` per layer."""
    labels = np.asarray(labels)
    logits, inputs = forward(model, x)
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"labels of shape {labels.shape} for batch of {logits.shape[0]}")
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = float(-logp[np.arange(n), labels].mean())

    delta = np.exp(logp)
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        a = inputs[i]
        grads[i] = (a.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = delta @ layer.weight.T
            # inputs[i] is the (post-ReLU) output of layer i-1
            if model.layers[i - 1].activation == "relu":
                delta = delta * (a > 0.0)
    return loss, grads


def predict_logits(model, x, chunk=2000):
    x = np.asarray(x, dtype=np.float64)
    return np.concatenate([forward(model, x[i : i + chunk])[0] for i in range(0, len(x), chunk)])


def evaluate(model, dataset, chunk=2000):
    """Fraction of samples whose arg-max logit (lowest index on ties) matches the label."""
    pred = np.argmax(predict_logits(model, dataset.images, chunk), axis=1)
    return float(np.mean(pred == dataset.labels))
