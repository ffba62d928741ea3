"""Experiment drivers: loss before/after merge, ROC-AUC heat maps, latencies,
and merge-versus-sequential convergence.

Trials are independent; trial ``i`` seeds its split, its shared input layer
and any sampling with ``config.seed + i``, so every report is a pure function
of its config.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import data as datasets
from ..anomaly import AnomalyDetector, fit, loss, losses, train_normal
from ..elm import Activation, Topology
from ..errors import ConfigurationError
from ..federation import EdgeNode, InProcessTransport, ServerRegistry, deserialize, serialize
from ..merge import combine, extract, rebuild
from .metrics import roc_auc
from .report import Report


@dataclass
class ExperimentConfig:
    dataset: str = "synth"
    data_dir: Optional[str] = None
    hidden: Optional[int] = None
    activation: Optional[str] = None
    ridge: float = 1e-4
    seed: int = 0
    trials: int = 50
    train_fraction: float = 0.8
    max_train_rows: Optional[int] = None
    init_rows: Optional[int] = None
    # synthetic-cluster generator
    n_features: int = 32
    classes: int = 4
    rows_per_class: int = 200
    # driving pipeline
    window: int = 60

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class MergeLossConfig(ExperimentConfig):
    pattern_a: Optional[str] = None
    pattern_b: Optional[str] = None


@dataclass
class RocConfig(ExperimentConfig):
    #: Ordered (p_A, p_B) pairs; ``None`` means every ordered pair.
    pairs: Optional[list] = None
    #: Draw this many distinct ordered pairs at random instead.
    random_pairs: Optional[int] = None
    anomaly_ratio: float = 0.1


@dataclass
class LatencyConfig(ExperimentConfig):
    hidden_sizes: Sequence[int] = (64, 128)
    n_input: int = 561
    repeats: int = 1000
    trials: int = 1


@dataclass
class ConvergenceConfig(ExperimentConfig):
    pattern_a: Optional[str] = None
    pattern_b: Optional[str] = None
    step: int = 50
    max_updates: Optional[int] = None
    crossover_factor: float = 2.0
    trials: int = 5


# Reference latencies (msec) from a Core i5 desktop, n = 561; reported, never asserted.
REFERENCE_LATENCY_MS = {
    64: {"training": 0.471, "prediction": 0.089, "merging": 5.78},
    128: {"training": 0.794, "prediction": 0.106, "merging": 21.8},
}


# --- shared helpers ------------------------------------------------------------

def load_dataset(cfg: ExperimentConfig) -> datasets.LabeledDataset:
    return datasets.load_named(
        cfg.dataset, cfg.data_dir, n_features=cfg.n_features, n_classes=cfg.classes,
        rows_per_class=cfg.rows_per_class, seed=cfg.seed, window=cfg.window,
    )


def hyperparams(cfg: ExperimentConfig) -> tuple[Activation, int]:
    act, nh = datasets.DEFAULT_HYPERPARAMS.get(cfg.dataset, ("identity", 16))
    return Activation.parse(cfg.activation or act), cfg.hidden or nh


def _topology(cfg: ExperimentConfig, n_features: int, seed: int) -> Topology:
    act, nh = hyperparams(cfg)
    return Topology.autoencoder(n_features, nh, act, init_seed=seed)


def _train(topo: Topology, x: np.ndarray, cfg: ExperimentConfig) -> AnomalyDetector:
    if cfg.max_train_rows is not None:
        x = x[: cfg.max_train_rows]
    if x.shape[0] == 0:
        raise ConfigurationError("no training rows for pattern")
    return fit(topo, x, ridge=cfg.ridge, init_rows=cfg.init_rows)


def merge_via_server(receiver: AnomalyDetector, sender: AnomalyDetector) -> AnomalyDetector:
    """Sender uploads, receiver downloads and merges, through an in-process server."""
    transport = InProcessTransport(ServerRegistry(clock=lambda: 0.0))
    EdgeNode("device-sender", sender, transport).publish()
    node = EdgeNode("device-receiver", receiver, transport)
    report = node.sync(["device-sender"])
    if report.merged != ["device-sender"]:
        raise ConfigurationError(f"merge did not happen: {report}")
    return node.detector


def _check_patterns(ds, *patterns):
    for p in patterns:
        ds.require(p)


def _median(values) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))


# --- loss before / after merge ---------------------------------------------------

def experiment_merge_loss(cfg: MergeLossConfig) -> Report:
    ds = load_dataset(cfg)
    pa = cfg.pattern_a or ds.classes[0]
    pb = cfg.pattern_b or ds.classes[1]
    _check_patterns(ds, pa, pb)
    patterns = list(ds.classes)

    per_trial = {key: [] for key in ("before", "after", "device_b", "device_b_after")}
    max_loss_diff = 0.0
    max_beta_diff = 0.0
    for trial in range(cfg.trials):
        seed = cfg.seed + trial
        train, test = datasets.split(ds, cfg.train_fraction, None, seed)
        topo = _topology(cfg, ds.n_features, seed)
        dev_a = _train(topo, train.require(pa), cfg)
        dev_b = _train(topo, train.require(pb), cfg)
        a_merged = merge_via_server(dev_a, dev_b)
        b_merged = merge_via_server(dev_b, dev_a)

        rows = {key: [] for key in per_trial}
        for p in patterns:
            x = test.rows(p)
            if x.shape[0] == 0:
                x = ds.rows(p)
            rows["before"].append(float(np.mean(losses(dev_a, x))))
            rows["after"].append(float(np.mean(losses(a_merged, x))))
            rows["device_b"].append(float(np.mean(losses(dev_b, x))))
            rows["device_b_after"].append(float(np.mean(losses(b_merged, x))))
        for key in per_trial:
            per_trial[key].append(rows[key])
        max_loss_diff = max(max_loss_diff, float(np.max(np.abs(
            np.subtract(rows["after"], rows["device_b_after"])))))
        beta_a, beta_b = a_merged.model.beta, b_merged.model.beta
        max_beta_diff = max(max_beta_diff, float(
            np.linalg.norm(beta_a - beta_b) / max(np.linalg.norm(beta_a), 1e-300)))

    arr = {k: np.asarray(v) for k, v in per_trial.items()}  # (trials, patterns)
    ia, ib = patterns.index(pa), patterns.index(pb)
    peer_drop = arr["before"][:, ib] / arr["after"][:, ib]
    own_ratio = arr["after"][:, ia] / arr["before"][:, ia]
    med = {k: np.median(v, axis=0) for k, v in arr.items()}

    report = Report("merge-loss", cfg.seed, {**cfg.as_dict(), "pattern_a": pa, "pattern_b": pb})
    report.results = {
        "patterns": patterns,
        "pattern_a": pa,
        "pattern_b": pb,
        "median_loss": {k: dict(zip(patterns, v.tolist())) for k, v in med.items()},
        "peer_pattern_drop_median": _median(peer_drop),
        "own_pattern_ratio_median": _median(own_ratio),
        "merged_devices_max_abs_loss_diff": max_loss_diff,
        "merged_devices_max_rel_beta_diff": max_beta_diff,
        "trials": cfg.trials,
    }
    report.add_table(
        f"Median mean loss over {cfg.trials} trials (Device-A normal: {pa}, Device-B normal: {pb})",
        ["pattern", "A before", "A after", "B"],
        [[p, med["before"][i], med["after"][i], med["device_b"][i]] for i, p in enumerate(patterns)],
    )
    return report


# --- ROC-AUC heat map ---------------------------------------------------------------

def _pairs(cfg: RocConfig, classes) -> list[tuple[str, str]]:
    if cfg.pairs is not None:
        return [(str(a), str(b)) for a, b in cfg.pairs]
    every = [(a, b) for a in classes for b in classes]
    if cfg.random_pairs is None:
        return every
    off = [(a, b) for a, b in every if a != b]
    rng = np.random.default_rng(cfg.seed)
    idx = rng.choice(len(off), size=min(cfg.random_pairs, len(off)), replace=False)
    return [off[i] for i in sorted(idx)]


def _roc_trial(ds, pa, pb, cfg: RocConfig, seed: int) -> tuple[float, float]:
    train, test = datasets.split(ds, cfg.train_fraction, cfg.anomaly_ratio, seed, normal_labels=[pa, pb])
    topo = _topology(cfg, ds.n_features, seed)
    xa, xb = train.require(pa), train.require(pb)
    if pa == pb:
        # Same pattern on both devices: give each a disjoint half.
        half = xa.shape[0] // 2
        xa, xb = xa[:half], xa[half:]
    dev_a = _train(topo, xa, cfg)
    dev_b = _train(topo, xb, cfg)
    is_normal = np.isin(test.labels, [pa, pb])
    if is_normal.all() or not is_normal.any():
        raise ConfigurationError(f"pair ({pa}, {pb}) leaves no normal or no anomalous test rows")
    before = losses(dev_a, test.features)
    after = losses(merge_via_server(dev_a, dev_b), test.features)
    return (roc_auc(before[is_normal], before[~is_normal]),
            roc_auc(after[is_normal], after[~is_normal]))


def experiment_roc_heatmap(cfg: RocConfig) -> Report:
    ds = load_dataset(cfg)
    classes = list(ds.classes)
    if len(classes) < 2:
        raise ConfigurationError("ROC-AUC heat map needs at least two classes")
    pairs = _pairs(cfg, classes)
    _check_patterns(ds, *{p for pair in pairs for p in pair})

    k = len(classes)
    before = np.full((k, k), np.nan)
    after = np.full((k, k), np.nan)
    offdiag_after_trials = []
    for pa, pb in pairs:
        scores = [_roc_trial(ds, pa, pb, cfg, cfg.seed + t) for t in range(cfg.trials)]
        b, a = np.asarray(scores).T
        i, j = classes.index(pa), classes.index(pb)
        before[i, j], after[i, j] = b.mean(), a.mean()
        if pa != pb:
            offdiag_after_trials.extend(a.tolist())

    off = ~np.eye(k, dtype=bool) & np.isfinite(before)
    diag = np.eye(k, dtype=bool) & np.isfinite(before)
    report = Report("roc-heatmap", cfg.seed, cfg.as_dict())
    report.results = {
        "patterns": classes,
        "pairs": [list(p) for p in pairs],
        "auc_before": before,
        "auc_after": after,
        "offdiag_mean_before": float(before[off].mean()) if off.any() else None,
        "offdiag_mean_after": float(after[off].mean()) if off.any() else None,
        "offdiag_after_median": _median(offdiag_after_trials) if offdiag_after_trials else None,
        "diag_max_abs_change": float(np.max(np.abs(after[diag] - before[diag]))) if diag.any() else None,
        "trials": cfg.trials,
    }
    for title, mat in (("ROC-AUC before merge", before), ("ROC-AUC after merge", after)):
        report.add_table(
            f"{title} (row: Device-A pattern, column: Device-B pattern, mean of {cfg.trials} trials)",
            ["A \\ B", *classes],
            [[classes[i], *mat[i].tolist()] for i in range(k)],
        )
    return report


# --- latencies ---------------------------------------------------------------------

def _time_ms(fn, repeats: int) -> float:
    samples = np.empty(repeats)
    for i in range(repeats):
        t0 = time.perf_counter()
        fn(i)
        samples[i] = time.perf_counter() - t0
    return float(np.median(samples) * 1e3)


def bench_latencies(cfg: LatencyConfig) -> Report:
    """Median wall-clock time of one k=1 update, one loss evaluation and one merge."""
    rng = np.random.default_rng(cfg.seed)
    results = {}
    rows = []
    for nh in cfg.hidden_sizes:
        topo = Topology.autoencoder(cfg.n_input, nh, Activation.parse(cfg.activation or "identity"),
                                    init_seed=cfg.seed)
        x = rng.uniform(0.0, 1.0, size=(4 * nh + 64, cfg.n_input))
        det = fit(topo, x[: 2 * nh], ridge=cfg.ridge)
        peer = deserialize(serialize(extract(fit(topo, x[2 * nh: 4 * nh], ridge=cfg.ridge).model)))
        stream = x[4 * nh:]
        state = {"det": det}

        def train_once(i):
            state["det"] = train_normal(state["det"], stream[i % stream.shape[0]][None, :])

        def predict_once(i):
            loss(det, stream[i % stream.shape[0]][None, :])

        def merge_once(i):
            rebuild(combine(extract(det.model), peer))

        timings = {
            "training": _time_ms(train_once, cfg.repeats),
            "prediction": _time_ms(predict_once, cfg.repeats),
            "merging": _time_ms(merge_once, cfg.repeats),
        }
        results[str(nh)] = timings
        ref = REFERENCE_LATENCY_MS.get(nh, {})
        rows += [[nh, key, timings[key], ref.get(key)] for key in ("training", "prediction", "merging")]

    report = Report("latency", cfg.seed, cfg.as_dict())
    report.results = {"median_ms": results, "reference_ms": {str(k): v for k, v in REFERENCE_LATENCY_MS.items()}}
    sizes = [str(n) for n in cfg.hidden_sizes]
    if len(sizes) >= 2:
        report.results["merging_ratio"] = results[sizes[-1]]["merging"] / results[sizes[0]]["merging"]
    report.add_table(
        f"Median latency over {cfg.repeats} runs [msec], n = {cfg.n_input}",
        ["hidden", "operation", "measured", "reference"], rows,
    )
    return report


# --- convergence -----------------------------------------------------------------------

def experiment_convergence(cfg: ConvergenceConfig) -> Report:
    ds = load_dataset(cfg)
    pa = cfg.pattern_a or ds.classes[0]
    pb = cfg.pattern_b or ds.classes[1]
    _check_patterns(ds, pa, pb)

    splits = [datasets.split(ds, cfg.train_fraction, None, cfg.seed + t) for t in range(cfg.trials)]
    rows_a = [train.require(pa)[: cfg.max_train_rows] for train, _ in splits]
    n_updates = cfg.max_updates if cfg.max_updates is not None else min(x.shape[0] for x in rows_a)
    recycled = any(n_updates > x.shape[0] for x in rows_a)
    checkpoints = list(range(0, n_updates + 1, cfg.step))
    if checkpoints[-1] != n_updates:
        checkpoints.append(n_updates)

    seq_curves, merged_losses = [], []
    for trial, ((train, test), xa) in enumerate(zip(splits, rows_a)):
        seed = cfg.seed + trial
        topo = _topology(cfg, ds.n_features, seed)
        probe = test.rows(pa) if test.rows(pa).shape[0] else xa
        dev_a = _train(topo, xa, cfg)
        dev_b = _train(topo, train.require(pb), cfg)
        merged = merge_via_server(dev_b, dev_a)
        merged_losses.append(float(np.mean(losses(merged, probe))))

        # Device-B keeps training on the very rows Device-A learned from.
        curve = []
        det = dev_b
        done = 0
        for target in checkpoints:
            while done < target:
                det = train_normal(det, xa[done % xa.shape[0]][None, :])
                done += 1
            curve.append(float(np.mean(losses(det, probe))))
        seq_curves.append(curve)

    seq_median = np.median(np.asarray(seq_curves), axis=0)
    merged_median = _median(merged_losses)
    hit = np.flatnonzero(seq_median <= cfg.crossover_factor * merged_median)
    equal = np.flatnonzero(seq_median <= merged_median)
    crossover = int(checkpoints[hit[0]]) if hit.size else None
    report = Report("convergence", cfg.seed, {**cfg.as_dict(), "pattern_a": pa, "pattern_b": pb})
    report.results = {
        "pattern_a": pa,
        "pattern_b": pb,
        "merged_loss_median": merged_median,
        "merged_loss_per_trial": merged_losses,
        "sequential_loss_median": seq_median,
        "checkpoints": checkpoints,
        "nonincreasing": bool(np.all(np.diff(seq_median) <= 0.0)),
        "crossover_updates": crossover,
        "crossover_factor": cfg.crossover_factor,
        "equal_loss_updates": int(checkpoints[equal[0]]) if equal.size else None,
        "samples_recycled": bool(recycled),
    }
    report.curves["loss"] = {
        "x": checkpoints,
        "sequential": seq_median.tolist(),
        "merged": [merged_median] * len(checkpoints),
    }
    report.add_table(
        f"Loss on pattern {pa} at Device-B (normal: {pb}), median of {cfg.trials} trials",
        ["updates", "sequential", "merged"],
        [[c, s, merged_median] for c, s in zip(checkpoints, seq_median.tolist())],
    )
    return report


EXPERIMENTS = {
    "merge-loss": (MergeLossConfig, experiment_merge_loss),
    "roc-heatmap": (RocConfig, experiment_roc_heatmap),
    "latency": (LatencyConfig, bench_latencies),
    "convergence": (ConvergenceConfig, experiment_convergence),
}


def run_experiment(name: str, **options) -> Report:
    try:
        config_cls, driver = EXPERIMENTS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}"
        ) from None
    known = {f.name for f in dataclasses.fields(config_cls)}
    return driver(config_cls(**{k: v for k, v in options.items() if k in known and v is not None}))
