"""SGD and Adam parameter updates operating in place on an :class:`MlpModel`."""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigError, ShapeError

KINDS = ("sgd", "adam")


@dataclass
class OptimizerState:
    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_every: int = 0  # 0 disables step decay
    decay_factor: float = 1.0
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def current_lr(self):
        if self.decay_every:
            return self.learning_rate * self.decay_factor ** (self.step // self.decay_every)
        return self.learning_rate


def make_optimizer(model, kind="adam", learning_rate=1e-3, **kw):
    if kind not in KINDS:
        raise ConfigError(f"optimizer kind must be one of {KINDS}, got {kind!r}")
    if learning_rate <= 0:
        raise ConfigError(f"learning rate must be positive, got {learning_rate}")
    state = OptimizerState(kind=kind, learning_rate=learning_rate, **kw)
    if kind == "adam":
        for layer in model.layers:
            state.m.append((np.zeros_like(layer.weight), np.zeros_like(layer.bias)))
            state.v.append((np.zeros_like(layer.weight), np.zeros_like(layer.bias)))
    return state


def optimizer_step(state, model, grads):
    """Apply one update in place and return ``(model, state)``."""
    if len(grads) != len(model.layers):
        raise ShapeError(f"{len(grads)} gradient pairs for {len(model.layers)} layers")
    lr = state.current_lr()
    state.step += 1
    if state.kind == "sgd":
        for layer, (gw, gb) in zip(model.layers, grads):
            layer.weight -= lr * gw
            layer.bias -= lr * gb
        return model, state

    b1, b2, eps = state.beta1, state.beta2, state.epsilon
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for i, (layer, grad_pair) in enumerate(zip(model.layers, grads)):
        for j, (param, g) in enumerate(zip((layer.weight, layer.bias), grad_pair)):
            m, v = state.m[i][j], state.v[i][j]
            if m.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match {m.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return model, state
