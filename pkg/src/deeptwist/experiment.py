"""Config-driven experiment runner and report generators behind the command line.

An experiment is described by one TOML file::

    name = "lenet300-prune"
    seed = 0
    steps = 20000
    batch_size = 50
    mode = "deeptwist"            # or "mask_frozen", "truncate_freeze"
    output_dir = "runs/prune"
    # init_checkpoint = "runs/baseline/model.dtwm"

    [data]
    root = "data/mnist"           # DEEPTWIST_DATA_ROOT overrides this

    [optimizer]
    kind = "adam"
    learning_rate = 5e-4

    [deeptwist]
    distortion_step = 5

    [[deeptwist.prune]]
    layers = ["fc1", "fc2", "fc3"]
    p_i = 0.25
    p_f = 0.95
    t_i = 8000
    t_f = 13000
    exponent = 7

    [sweep]                       # optional, at most one axis
    axis = "distortion_step"
    values = [5, 10, 50]

See the README for every key. Relative paths resolve against the working
directory.
"""

import csv
import dataclasses
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .compress import PruningSchedule, compression_ratio, lowrank_distort, numerical_rank
from .compress import prune_distort, prune_distort_global
from .distortion import (
    PROBE_SIZE,
    DeepTwistConfig,
    DistortionEvent,
    LowRankAssignment,
    PruneAssignment,
    QuantizeAssignment,
    distortion_trace,
    make_hook,
    probe_batch,
    verify_compressed_form,
)
from .exceptions import ConfigError, DomainError, NonFiniteError
from .linalg import svd
from .nn import MlpModel, load_checkpoint, load_mnist, make_optimizer, save_checkpoint, train
from .nn.data import MNIST_FILES
from .nn.model import LENET_300_100

DATA_ROOT_ENV = "DEEPTWIST_DATA_ROOT"
MODES = ("deeptwist", "mask_frozen", "truncate_freeze")
SWEEP_AXES = ("distortion_step", "rank", "bits", "p_f")


@dataclass
class ExperimentConfig:
    name: str
    output_dir: Path
    data_root: Path
    deeptwist: DeepTwistConfig
    steps: int = 20000
    batch_size: int = 50
    seed: int = 0
    eval_every: int = 500
    mode: str = "deeptwist"
    sizes: tuple = LENET_300_100
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "learning_rate": 5e-4})
    init_checkpoint: Path = None
    train_limit: int = None
    test_limit: int = None
    probe_size: int = PROBE_SIZE
    sweep_axis: str = None
    sweep_values: list = None


def _take(table, key, kind, where, default=dataclasses.MISSING):
    if key not in table:
        if default is dataclasses.MISSING:
            raise ConfigError(f"{where}: missing required key {key!r}")
        return default
    value = table[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, got {value!r}")
    return value


def _reject_unknown(table, allowed, where):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown keys {extra}")


def _assignments(dt):
    out = []
    for entry in dt.get("prune", []):
        _reject_unknown(entry, {"layers", "p_i", "p_f", "t_i", "t_f", "exponent"}, "deeptwist.prune")
        schedule = PruningSchedule(
            _take(entry, "p_i", float, "deeptwist.prune", 0.0),
            _take(entry, "p_f", float, "deeptwist.prune"),
            _take(entry, "t_i", int, "deeptwist.prune", 0),
            _take(entry, "t_f", int, "deeptwist.prune"),
            _take(entry, "exponent", int, "deeptwist.prune", 3),
        )
        out += [PruneAssignment(l, schedule) for l in _take(entry, "layers", list, "deeptwist.prune")]
    for entry in dt.get("quantize", []):
        _reject_unknown(entry, {"layers", "bits", "quantizer", "granularity"}, "deeptwist.quantize")
        out += [
            QuantizeAssignment(
                l,
                _take(entry, "bits", int, "deeptwist.quantize"),
                _take(entry, "quantizer", str, "deeptwist.quantize", "greedy"),
                _take(entry, "granularity", str, "deeptwist.quantize", "whole"),
            )
            for l in _take(entry, "layers", list, "deeptwist.quantize")
        ]
    for entry in dt.get("lowrank", []):
        _reject_unknown(entry, {"layers", "rank"}, "deeptwist.lowrank")
        rank = _take(entry, "rank", int, "deeptwist.lowrank")
        out += [LowRankAssignment(l, rank) for l in _take(entry, "layers", list, "deeptwist.lowrank")]
    return out


def parse_config(raw, check_paths=True):
    """Build and validate an :class:`ExperimentConfig` from a parsed TOML table."""
    try:
        return _parse(raw, check_paths)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def _parse(raw, check_paths):
    _reject_unknown(
        raw,
        {"name", "seed", "steps", "batch_size", "eval_every", "mode", "output_dir",
         "init_checkpoint", "data", "model", "optimizer", "deeptwist", "sweep"},
        "config",
    )
    data = raw.get("data", {})
    _reject_unknown(data, {"root", "train_limit", "test_limit"}, "data")
    model = raw.get("model", {})
    _reject_unknown(model, {"sizes"}, "model")
    opt = dict(raw.get("optimizer", {}))
    _reject_unknown(opt, {"kind", "learning_rate", "beta1", "beta2", "epsilon",
                          "decay_every", "decay_factor"}, "optimizer")
    opt.setdefault("kind", "adam")
    opt.setdefault("learning_rate", 5e-4)
    if opt["kind"] not in ("adam", "sgd"):
        raise ConfigError(f"optimizer.kind must be 'adam' or 'sgd', got {opt['kind']!r}")
    dt = raw.get("deeptwist", {})
    _reject_unknown(dt, {"distortion_step", "global_prune", "force_final_distortion",
                         "probe_size", "prune", "quantize", "lowrank"}, "deeptwist")

    deeptwist = DeepTwistConfig(
        _take(dt, "distortion_step", int, "deeptwist", 1),
        _assignments(dt),
        _take(dt, "global_prune", bool, "deeptwist", True),
        _take(dt, "force_final_distortion", bool, "deeptwist", True),
    )
    root = os.environ.get(DATA_ROOT_ENV) or _take(data, "root", str, "data", "data/mnist")
    init = _take(raw, "init_checkpoint", str, "config", None)
    cfg = ExperimentConfig(
        name=_take(raw, "name", str, "config"),
        output_dir=Path(_take(raw, "output_dir", str, "config")),
        data_root=Path(root),
        deeptwist=deeptwist,
        steps=_take(raw, "steps", int, "config", 20000),
        batch_size=_take(raw, "batch_size", int, "config", 50),
        seed=_take(raw, "seed", int, "config", 0),
        eval_every=_take(raw, "eval_every", int, "config", 500),
        mode=_take(raw, "mode", str, "config", "deeptwist"),
        sizes=tuple(_take(model, "sizes", list, "model", list(LENET_300_100))),
        optimizer=opt,
        init_checkpoint=Path(init) if init else None,
        train_limit=_take(data, "train_limit", int, "data", None),
        test_limit=_take(data, "test_limit", int, "data", None),
        probe_size=_take(dt, "probe_size", int, "deeptwist", PROBE_SIZE),
    )
    if "sweep" in raw:
        sweep = raw["sweep"]
        _reject_unknown(sweep, {"axis", "values"}, "sweep")
        cfg.sweep_axis = _take(sweep, "axis", str, "sweep")
        cfg.sweep_values = _take(sweep, "values", list, "sweep")
    validate_config(cfg, check_paths)
    return cfg


def validate_config(cfg, check_paths=True):
    for key in ("steps", "batch_size", "eval_every", "probe_size"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key} must be >= 1, got {getattr(cfg, key)}")
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}")
    methods = {a.method for a in cfg.deeptwist.assignments}
    if cfg.mode == "mask_frozen" and methods != {"prune"}:
        raise ConfigError("mask_frozen mode needs prune assignments and nothing else")
    if cfg.mode == "truncate_freeze" and methods != {"lowrank"}:
        raise ConfigError("truncate_freeze mode needs lowrank assignments and nothing else")
    if len(cfg.sizes) < 2 or any(not isinstance(s, int) or s < 1 for s in cfg.sizes):
        raise ConfigError(f"model.sizes must list at least two positive integers, got {cfg.sizes}")
    if cfg.optimizer["learning_rate"] <= 0:
        raise ConfigError("optimizer.learning_rate must be positive")
    if cfg.sweep_axis is not None:
        if cfg.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"sweep.axis must be one of {SWEEP_AXES}, got {cfg.sweep_axis!r}")
        if not cfg.sweep_values:
            raise ConfigError("sweep.values must be a non-empty list")
        needs = {"rank": "lowrank", "bits": "quantize", "p_f": "prune"}.get(cfg.sweep_axis)
        if needs and needs not in methods:
            raise ConfigError(f"sweep over {cfg.sweep_axis} needs a {needs} assignment")
    shape_check = MlpModel.initialize(cfg.sizes, seed=0)
    cfg.deeptwist.validate(shape_check)
    for v in cfg.sweep_values or []:
        sweep_point(cfg, v).deeptwist.validate(shape_check)
    if check_paths:
        for split in ("train", "test"):
            for name in MNIST_FILES[split]:
                base = cfg.data_root / name
                if not (base.exists() or base.with_name(name + ".gz").exists()):
                    raise ConfigError(f"data file not found: {base}")
        if cfg.init_checkpoint is not None and not cfg.init_checkpoint.exists():
            raise ConfigError(f"init_checkpoint not found: {cfg.init_checkpoint}")
    return cfg


def load_config(path, check_paths=True):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw, check_paths)


def sweep_point(cfg, value):
    """Copy of ``cfg`` with the sweep axis pinned to ``value`` and no sweep."""
    dt = cfg.deeptwist
    assignments = list(dt.assignments)
    step = dt.distortion_step
    if cfg.sweep_axis == "distortion_step":
        step = value
    elif cfg.sweep_axis == "rank":
        assignments = [dataclasses.replace(a, rank=value) if a.method == "lowrank" else a
                       for a in assignments]
    elif cfg.sweep_axis == "bits":
        assignments = [dataclasses.replace(a, bits=value) if a.method == "quantize" else a
                       for a in assignments]
    elif cfg.sweep_axis == "p_f":
        assignments = [
            dataclasses.replace(a, schedule=dataclasses.replace(a.schedule, p_f=float(value)))
            if a.method == "prune" else a
            for a in assignments
        ]
    new_dt = DeepTwistConfig(step, assignments, dt.global_prune, dt.force_final_distortion)
    return dataclasses.replace(
        cfg,
        deeptwist=new_dt,
        output_dir=cfg.output_dir / f"{cfg.sweep_axis}={value}",
        sweep_axis=None,
        sweep_values=None,
    )


# ----------------------------------------------------------------------------
# CSV helpers


def write_csv(path_or_file, header, rows):
    own = isinstance(path_or_file, (str, Path))
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in row])
    finally:
        if own:
            fh.close()


def read_csv(path_or_text):
    """Rows of a CSV written by :func:`write_csv` as dicts, numbers parsed back."""
    text = Path(path_or_text).read_text() if isinstance(path_or_text, Path) else path_or_text
    rows = list(csv.DictReader(io.StringIO(text)))
    return [{k: _number(v) for k, v in r.items()} for r in rows]


def _number(s):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        try:
            return float(s)
        except ValueError:
            return s


# ----------------------------------------------------------------------------
# Runs


@dataclass
class RunResult:
    output_dir: Path
    summary: dict
    model: MlpModel
    log: list
    events: list


def _load_data(cfg):
    train_ds = load_mnist(cfg.data_root, "train")
    test_ds = load_mnist(cfg.data_root, "test")
    if cfg.train_limit:
        train_ds = train_ds.subset(np.arange(min(cfg.train_limit, len(train_ds))))
    if cfg.test_limit:
        test_ds = test_ds.subset(np.arange(min(cfg.test_limit, len(test_ds))))
    return train_ds, test_ds


def _initial_model(cfg):
    if cfg.init_checkpoint is None:
        return MlpModel.initialize(cfg.sizes, seed=cfg.seed)
    model = load_checkpoint(cfg.init_checkpoint)
    if model.sizes != tuple(cfg.sizes):
        raise ConfigError(f"init_checkpoint has sizes {model.sizes}, config says {cfg.sizes}")
    return model


def _comparator_setup(cfg, model):
    """One-shot compression for the comparator modes plus the gradient filter that holds it."""
    dt = cfg.deeptwist
    weights = model.weights()
    if cfg.mode == "mask_frozen":
        prunes = dt.by_method("prune")
        if dt.global_prune:
            pruned, _ = prune_distort_global({a.layer: weights[a.layer] for a in prunes},
                                             prunes[0].schedule.p_f)
        else:
            pruned = {a.layer: prune_distort(weights[a.layer], a.schedule.p_f) for a in prunes}
        frozen = {}
        for name, w_hat in pruned.items():
            model.layer(name).weight[...] = w_hat
            frozen[name] = w_hat == 0.0
        index = {l.name: i for i, l in enumerate(model.layers)}

        def grad_hook(step, model, grads):
            for name, mask in frozen.items():
                grads[index[name]][0][mask] = 0.0

    else:
        frozen = set()
        for a in dt.by_method("lowrank"):
            model.layer(a.layer).weight[...] = lowrank_distort(weights[a.layer], a.rank)
            frozen.add(a.layer)
        index = {l.name: i for i, l in enumerate(model.layers)}

        def grad_hook(step, model, grads):
            for name in frozen:
                gw, gb = grads[index[name]]
                gw[...] = 0.0
                gb[...] = 0.0

    stats = {name: {"distance": float(np.linalg.norm(weights[name] - model.layer(name).weight))}
             for name in (frozen if isinstance(frozen, set) else frozen.keys())}
    return grad_hook, DistortionEvent(0, stats)


def _layer_summary(model, cfg, snapshot):
    assigned = {a.layer: a for a in cfg.deeptwist.assignments}
    layers = {}
    for layer in model.layers:
        w = layer.weight
        entry = {
            "shape": list(w.shape),
            "sparsity": float(np.count_nonzero(w == 0.0)) / w.size,
            "method": None,
        }
        a = assigned.get(layer.name)
        if a is not None:
            entry["method"] = a.method
            if a.method == "prune":
                entry["p_f"] = a.schedule.p_f
            elif a.method == "quantize":
                entry["bits"] = a.bits
                entry["distinct_values"] = int(len(np.unique(w)))
                if snapshot is not None and layer.name in snapshot:
                    entry["mse"] = float(np.mean((snapshot[layer.name] - w) ** 2))
            else:
                m, n = w.shape
                entry["rank"] = a.rank
                entry["numerical_rank"] = numerical_rank(w)
                entry["compression_ratio"] = compression_ratio(m, n, a.rank)
        layers[layer.name] = entry
    return layers


def run_single(cfg, data=None, log_stream=None):
    """Train one configuration and write its artifacts to ``cfg.output_dir``.

    ``data`` may supply a preloaded ``(train, test)`` pair.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = data if data is not None else _load_data(cfg)
    model = _initial_model(cfg)
    opt_kw = {k: v for k, v in cfg.optimizer.items() if k not in ("kind", "learning_rate")}
    optimizer = make_optimizer(model, cfg.optimizer["kind"], cfg.optimizer["learning_rate"], **opt_kw)
    started = time.perf_counter()

    hook = grad_hook = None
    events = []
    with open(out / "events.jsonl", "w") as ev_fh, open(out / "metrics.csv", "w", newline="") as mfh:
        def on_event(event):
            events.append(event)
            ev_fh.write(event.to_json() + "\n")
            ev_fh.flush()

        metrics = csv.writer(mfh, lineterminator="\n")
        metrics.writerow(["step", "train_loss", "test_accuracy"])

        def on_log(entry):
            if not math.isfinite(entry["train_loss"]):
                raise NonFiniteError(f"training loss became {entry['train_loss']} at step {entry['step']}")
            metrics.writerow([entry["step"], repr(entry["train_loss"]), repr(entry["test_accuracy"])])
            mfh.flush()
            if log_stream is not None:
                print(f"[{cfg.name}] step {entry['step']:>6}  loss {entry['train_loss']:.4f}  "
                      f"acc {entry['test_accuracy']:.4f}", file=log_stream, flush=True)

        has_assignments = bool(cfg.deeptwist.assignments)
        if cfg.mode == "deeptwist":
            if has_assignments:
                probe = probe_batch(train_ds, cfg.seed, cfg.probe_size)
                hook = make_hook(cfg.deeptwist, model, probe, on_event, keep_snapshot=True)
        else:
            grad_hook, event = _comparator_setup(cfg, model)
            on_event(event)
        result = train(model, train_ds, optimizer, cfg.steps, cfg.batch_size, seed=cfg.seed,
                       hook=hook, eval_data=test_ds, eval_every=cfg.eval_every,
                       grad_hook=grad_hook, on_log=on_log)

    save_checkpoint(model, out / "model.dtwm")
    snapshot = hook.snapshot if hook is not None else None
    if snapshot is not None:
        pre = model.copy()
        for name, w in snapshot.items():
            pre.layer(name).weight[...] = w
        save_checkpoint(pre, out / "pre_final.dtwm")

    verification = trace = None
    if has_assignments:
        verification = verify_compressed_form(model, cfg.deeptwist).to_dict()
        with_loss = [e for e in events if e.delta_loss is not None]
        if len(with_loss) >= 2:
            trace = distortion_trace(with_loss).slope
    summary = {
        "name": cfg.name,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "steps": cfg.steps,
        "distortion_step": cfg.deeptwist.distortion_step if has_assignments else None,
        "final_accuracy": result.final_accuracy,
        "final_train_loss": result.log[-1]["train_loss"],
        "layers": _layer_summary(model, cfg, snapshot),
        "compression": None,
        "verification": verification,
        "trace_slope": trace,
        "n_events": len(events),
        "elapsed_seconds": round(time.perf_counter() - started, 2),
    }
    if has_assignments:
        assigned = {a.layer for a in cfg.deeptwist.assignments}
        summary["compression"] = {k: v for k, v in summary["layers"].items() if k in assigned}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return RunResult(out, summary, model, result.log, events)


def run_experiment(cfg, log_stream=None):
    """Run ``cfg``, or every point of its sweep, and return the list of results."""
    data = _load_data(cfg)
    if cfg.sweep_axis is None:
        return [run_single(cfg, data, log_stream)]
    results = [run_single(sweep_point(cfg, v), data, log_stream) for v in cfg.sweep_values]
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    write_csv(
        Path(cfg.output_dir) / "sweep.csv",
        [cfg.sweep_axis, "final_accuracy"],
        [(v, r.summary["final_accuracy"]) for v, r in zip(cfg.sweep_values, results)],
    )
    return results


# ----------------------------------------------------------------------------
# Reports


@dataclass
class Spectrum:
    sigma: np.ndarray
    rank: int = None

    @property
    def tail_mass(self):
        """Share of squared singular-value mass beyond ``rank``."""
        energy = self.sigma**2
        total = float(energy.sum())
        return float(energy[self.rank:].sum()) / total if total > 0 else 0.0

    def rows(self):
        return [(i + 1, float(s)) for i, s in enumerate(self.sigma)]

    def to_csv(self, fh):
        write_csv(fh, ["index", "sigma"], self.rows())


def _weight(model, layer):
    try:
        return model.layer(layer).weight
    except KeyError as exc:
        names = [l.name for l in model.layers]
        raise ConfigError(f"no layer {layer!r}; available: {names}") from exc


def report_spectrum(model, layer, rank=None):
    w = _weight(model, layer)
    if rank is not None and not 1 <= rank <= min(w.shape):
        raise DomainError(f"rank must lie in [1, {min(w.shape)}], got {rank}")
    return Spectrum(svd(w).sigma, rank)


@dataclass
class Histogram:
    centers: np.ndarray
    counts: np.ndarray
    zeros: int

    def rows(self):
        return [("zero", 0.0, int(self.zeros))] + [
            ("bin", float(c), int(n)) for c, n in zip(self.centers, self.counts)
        ]

    def to_csv(self, fh):
        write_csv(fh, ["kind", "bin_center", "count"], self.rows())

    @classmethod
    def from_csv(cls, text):
        rows = read_csv(text)
        zeros = next(r["count"] for r in rows if r["kind"] == "zero")
        bins = [r for r in rows if r["kind"] == "bin"]
        return cls(np.array([float(r["bin_center"]) for r in bins]),
                   np.array([r["count"] for r in bins], dtype=np.int64), zeros)

    def near_zero_fraction(self):
        """Share of nonzero weights falling in the bin whose center is closest to zero."""
        total = int(self.counts.sum())
        return float(self.counts[np.argmin(np.abs(self.centers))]) / total if total else 0.0


def report_histogram(model, layer, bins):
    if int(bins) != bins or bins < 2:
        raise DomainError(f"bins must be an integer >= 2, got {bins}")
    w = _weight(model, layer).ravel()
    nonzero = w[w != 0.0]
    if nonzero.size == 0:
        raise DomainError(f"layer {layer!r} has no nonzero weights")
    counts, edges = np.histogram(nonzero, bins=int(bins))
    return Histogram((edges[:-1] + edges[1:]) / 2.0, counts, int(w.size - nonzero.size))


__all__ = [
    "DATA_ROOT_ENV",
    "MODES",
    "SWEEP_AXES",
    "ExperimentConfig",
    "Histogram",
    "RunResult",
    "Spectrum",
    "load_config",
    "parse_config",
    "read_csv",
    "report_histogram",
    "report_spectrum",
    "run_experiment",
    "run_single",
    "sweep_point",
    "validate_config",
    "write_csv",
]

