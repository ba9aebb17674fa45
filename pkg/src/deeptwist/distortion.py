"""Occasional weight distortion wired into an unmodified training loop.

A :class:`DistortionHook` is passed to :func:`deeptwist.nn.train`. Every
``distortion_step`` steps (and at the last step) it replaces each assigned
layer's weights by their compressed-form reconstruction. Between firings
training proceeds untouched: pruned weights keep receiving full-precision
updates and may come back at the next firing.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .compress import (
    PruningSchedule,
    lowrank_distort,
    numerical_rank,
    prune_count,
    prune_distort,
    prune_distort_global,
    quantize_distort,
)
from .compress.quantization import GRANULARITIES, METHODS
from .exceptions import CompressedFormError, ConfigError
from .nn.model import cross_entropy, forward

PROBE_SIZE = 256


@dataclass(frozen=True)
class PruneAssignment:
    layer: str
    schedule: PruningSchedule
    method = "prune"


@dataclass(frozen=True)
class QuantizeAssignment:
    layer: str
    bits: int
    quantizer: str = "greedy"
    granularity: str = "whole"
    method = "quantize"

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 1:
            raise ConfigError(f"{self.layer}: bits must be a positive integer, got {self.bits}")
        if self.quantizer not in METHODS:
            raise ConfigError(f"{self.layer}: quantizer must be one of {METHODS}")
        if self.granularity not in GRANULARITIES:
            raise ConfigError(f"{self.layer}: granularity must be one of {GRANULARITIES}")


@dataclass(frozen=True)
class LowRankAssignment:
    layer: str
    rank: int
    method = "lowrank"

    def __post_init__(self):
        if int(self.rank) != self.rank or self.rank < 1:
            raise ConfigError(f"{self.layer}: rank must be a positive integer, got {self.rank}")


@dataclass
class DeepTwistConfig:
    distortion_step: int
    assignments: list = field(default_factory=list)
    global_prune: bool = True
    force_final_distortion: bool = True

    def __post_init__(self):
        if int(self.distortion_step) != self.distortion_step or self.distortion_step < 1:
            raise ConfigError(f"distortion_step must be >= 1, got {self.distortion_step}")
        names = [a.layer for a in self.assignments]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ConfigError(f"layers assigned more than once: {dup}")
        if self.global_prune:
            schedules = {a.schedule for a in self.assignments if a.method == "prune"}
            if len(schedules) > 1:
                raise ConfigError("global pruning needs one schedule shared by all pruned layers")

    def by_method(self, method):
        return [a for a in self.assignments if a.method == method]

    def validate(self, model):
        layers = {l.name: l for l in model.layers}
        for a in self.assignments:
            if a.layer not in layers:
                raise ConfigError(f"assignment refers to unknown layer {a.layer!r}")
            if a.method == "lowrank" and a.rank > min(layers[a.layer].weight.shape):
                raise ConfigError(
                    f"{a.layer}: rank {a.rank} exceeds min{layers[a.layer].weight.shape}"
                )
        return self


@dataclass
class DistortionEvent:
    step: int
    layers: dict  # name -> {"distance": ||W - W_hat||_F, plus method-specific stats}
    loss_before: float = None
    loss_after: float = None

    @property
    def delta_loss(self):
        if self.loss_before is None or self.loss_after is None:
            return None
        return self.loss_after - self.loss_before

    def to_dict(self):
        d = asdict(self)
        d["delta_loss"] = self.delta_loss
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def probe_batch(dataset, seed, size=PROBE_SIZE):
    """Fixed, seed-chosen subset of the training set reused at every firing."""
    rng = np.random.default_rng([seed, 0x9E37])
    idx = np.sort(rng.choice(len(dataset), size=min(size, len(dataset)), replace=False))
    return dataset.images[idx], dataset.labels[idx]


def distort_weights(weights, config, step):
    """Distorted copies of the assigned matrices plus per-layer statistics.

    ``weights`` maps layer name to matrix; unassigned layers are ignored.
    """
    out, stats = {}, {}
    prunes = config.by_method("prune")
    if prunes and config.global_prune:
        rate = prunes[0].schedule.rate_at(step)
        pruned, sparsity = prune_distort_global({a.layer: weights[a.layer] for a in prunes}, rate)
        for a in prunes:
            out[a.layer] = pruned[a.layer]
            stats[a.layer] = {"method": "prune", "rate": rate, "sparsity": sparsity[a.layer]}
    else:
        for a in prunes:
            rate = a.schedule.rate_at(step)
            out[a.layer] = prune_distort(weights[a.layer], rate)
            sparsity = float(np.count_nonzero(out[a.layer] == 0.0)) / out[a.layer].size
            stats[a.layer] = {"method": "prune", "rate": rate, "sparsity": sparsity}
    for a in config.by_method("quantize"):
        w = weights[a.layer]
        out[a.layer] = quantize_distort(w, a.bits, a.quantizer, a.granularity)
        mse = float(np.mean((w - out[a.layer]) ** 2))
        stats[a.layer] = {"method": "quantize", "bits": a.bits, "mse": mse}
    for a in config.by_method("lowrank"):
        w = weights[a.layer]
        out[a.layer] = lowrank_distort(w, a.rank)
        total = float(np.sum(w * w))
        tail = float(np.sum((w - out[a.layer]) ** 2))
        stats[a.layer] = {
            "method": "lowrank",
            "rank": a.rank,
            "tail_mass": tail / total if total > 0 else 0.0,
        }
    for name, w_hat in out.items():
        stats[name]["distance"] = float(np.linalg.norm(weights[name] - w_hat))
    return out, stats


class DistortionHook:
    """Training callback applying the configured distortions every ``distortion_step`` steps.

    Events are appended to ``events`` and forwarded to ``on_event``. When
    ``keep_snapshot`` is set, ``snapshot`` holds copies of the assigned
    weights as they were just before the most recent firing.
    """

    def __init__(self, config, model, probe=None, on_event=None, keep_snapshot=False):
        self.config = config.validate(model)
        self.probe = probe
        self.on_event = on_event
        self.keep_snapshot = keep_snapshot
        self.snapshot = None
        self.events = []

    def fires_at(self, step, final=False):
        if step >= 1 and step % self.config.distortion_step == 0:
            return True
        return bool(final and self.config.force_final_distortion)

    def _probe_loss(self, model):
        if self.probe is None:
            return None
        x, y = self.probe
        return cross_entropy(forward(model, x)[0], y)

    def apply(self, model, step):
        """Distort ``model`` in place now, regardless of the firing schedule."""
        if not self.config.assignments:
            return None
        weights = model.weights()
        if self.keep_snapshot:
            self.snapshot = {a.layer: weights[a.layer].copy() for a in self.config.assignments}
        before = self._probe_loss(model)
        distorted, stats = distort_weights(weights, self.config, step)
        for name, w_hat in distorted.items():
            model.layer(name).weight[...] = w_hat
        event = DistortionEvent(step, stats, before, self._probe_loss(model))
        self.events.append(event)
        if self.on_event is not None:
            self.on_event(event)
        return event

    def __call__(self, step, model, final=False):
        if self.fires_at(step, final):
            self.apply(model, step)


def make_hook(config, model, probe=None, on_event=None, keep_snapshot=False):
    return DistortionHook(config, model, probe, on_event, keep_snapshot)


@dataclass
class LayerCheck:
    layer: str
    method: str
    passed: bool
    detail: dict


@dataclass
class VerificationReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def raise_if_failed(self):
        if not self.passed:
            msg = "; ".join(f"{c.layer} ({c.method}): {c.detail}" for c in self.failures)
            raise CompressedFormError(f"layers not in compressed form: {msg}")
        return self

    def to_dict(self):
        return {"passed": self.passed, "checks": [asdict(c) for c in self.checks]}


def _distinct_per_group(w, granularity):
    if granularity == "per_row":
        return max(len(np.unique(row)) for row in w)
    return len(np.unique(w))


def verify_compressed_form(model, config):
    """Check that every assigned layer holds its compression format.

    prune: at least ``floor(p_f * N)`` exact zeros (counted over all pruned
    layers jointly under global pruning); quantize: at most ``2**bits``
    distinct values (per row for per-row granularity); lowrank: numerical
    rank (singular values above 1e-10 * sigma_1) at most ``rank``.
    """
    config.validate(model)
    checks = []
    prunes = config.by_method("prune")
    if prunes and config.global_prune:
        mats = [model.layer(a.layer).weight for a in prunes]
        total = sum(m.size for m in mats)
        zeros = sum(int(np.count_nonzero(m == 0.0)) for m in mats)
        need = prune_count(prunes[0].schedule.p_f, total)
        for a, m in zip(prunes, mats):
            detail = {
                "global_zeros": zeros,
                "required_zeros": need,
                "layer_sparsity": float(np.count_nonzero(m == 0.0)) / m.size,
            }
            checks.append(LayerCheck(a.layer, "prune", zeros >= need, detail))
    else:
        for a in prunes:
            m = model.layer(a.layer).weight
            zeros = int(np.count_nonzero(m == 0.0))
            need = prune_count(a.schedule.p_f, m.size)
            detail = {"zeros": zeros, "required_zeros": need, "layer_sparsity": zeros / m.size}
            checks.append(LayerCheck(a.layer, "prune", zeros >= need, detail))
    for a in config.by_method("quantize"):
        distinct = _distinct_per_group(model.layer(a.layer).weight, a.granularity)
        detail = {"distinct_values": distinct, "allowed": 2**a.bits}
        checks.append(LayerCheck(a.layer, "quantize", distinct <= 2**a.bits, detail))
    for a in config.by_method("lowrank"):
        rank = numerical_rank(model.layer(a.layer).weight)
        detail = {"numerical_rank": rank, "allowed": a.rank}
        checks.append(LayerCheck(a.layer, "lowrank", rank <= a.rank, detail))
    return VerificationReport(checks)


@dataclass
class TraceSummary:
    rows: list  # dicts: step, distances {layer: float}, delta_loss
    slope: float  # least-squares slope of delta_loss against step (None without probe losses)


def distortion_trace(events):
    """Per-event distances and loss jumps, plus the trend of the loss jump over time.

    Purely diagnostic: a negative slope means distortions hurt less as
    training goes on.
    """
    if len(events) < 2:
        raise ConfigError(f"distortion_trace needs at least 2 events, got {len(events)}")
    rows = [
        {
            "step": e.step,
            "distances": {k: v["distance"] for k, v in e.layers.items()},
            "delta_loss": e.delta_loss,
        }
        for e in events
    ]
    deltas = [r["delta_loss"] for r in rows]
    if any(d is None for d in deltas):
        return TraceSummary(rows, None)
    x = np.array([r["step"] for r in rows], dtype=np.float64)
    y = np.array(deltas, dtype=np.float64)
    xc = x - x.mean()
    denom = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / denom if denom > 0 else 0.0
    return TraceSummary(rows, slope)
