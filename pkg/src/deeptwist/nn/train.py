"""Deterministic minibatch training loop with an optional post-update hook."""

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DomainError
from .model import evaluate, loss_and_backward
from .optim import optimizer_step

EVAL_EVERY = 500


@dataclass
class TrainResult:
    model: object
    log: list = field(default_factory=list)  # dicts: step, train_loss, test_accuracy
    optimizer: object = None

    @property
    def final_accuracy(self):
        return self.log[-1]["test_accuracy"] if self.log else None


def epoch_permutation(seed, epoch, n):
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(
    model,
    dataset,
    optimizer,
    steps,
    batch_size,
    seed=0,
    hook=None,
    eval_data=None,
    eval_every=EVAL_EVERY,
    grad_hook=None,
    on_log=None,
):
    """Train ``model`` in place for ``steps`` minibatch updates.

    Minibatches come from a per-epoch permutation seeded by ``(seed, epoch)``;
    the last partial batch of an epoch is used as is.

    ``hook(step, model, final)`` runs after the optimizer update of every
    step and may overwrite weights in place. ``grad_hook(step, model, grads)``
    runs before the update and may edit gradients in place; it exists for
    comparator baselines only.

    A log entry is recorded every ``eval_every`` steps and at the last step.
    """
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    x, y = dataset.images, dataset.labels
    n = len(dataset)
    epoch = 0
    perm = epoch_permutation(seed, epoch, n)
    pos = 0
    result = TrainResult(model, optimizer=optimizer)
    loss_sum, loss_count = 0.0, 0

    for step in range(1, steps + 1):
        if pos >= n:
            epoch += 1
            perm = epoch_permutation(seed, epoch, n)
            pos = 0
        idx = perm[pos : pos + batch_size]
        pos += batch_size

        loss, grads = loss_and_backward(model, x[idx], y[idx])
        if grad_hook is not None:
            grad_hook(step, model, grads)
        optimizer_step(optimizer, model, grads)
        final = step == steps
        if hook is not None:
            hook(step, model, final)

        loss_sum += loss
        loss_count += 1
        if step % eval_every == 0 or final:
            entry = {
                "step": step,
                "train_loss": loss_sum / loss_count,
                "test_accuracy": evaluate(model, eval_data) if eval_data is not None else None,
            }
            result.log.append(entry)
            if on_log is not None:
                on_log(entry)
            loss_sum, loss_count = 0.0, 0
    return result
