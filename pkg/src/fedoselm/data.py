"""Dataset loaders and feature pipelines.

* MNIST from the standard IDX files (optionally gzipped), pixels / 255.
* Smartphone HAR from its pre-computed 561-feature tables.
* UAH-DriveSet style driving data: a 1 Hz speed series is quantized into 15
  levels of 10 km/h and each window becomes a flattened 15x15
  state-transition probability table (225 features).
* Gaussian clusters as a deterministic stand-in when no real data is around.
"""

from __future__ import annotations

import gzip
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, FormatError

HAR_ACTIVITIES = (
    "walking", "walking_upstairs", "walking_downstairs", "sitting", "standing", "laying",
)
HAR_FEATURES = 561
SPEED_LEVELS = 15
LEVEL_WIDTH_KMH = 10.0
DRIVING_PATTERNS = ("normal", "aggressive", "drowsy")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels).astype(str)
        if feats.ndim != 2:
            raise FormatError(f"features must be 2-D, got shape {feats.shape}")
        if labels.shape != (feats.shape[0],):
            raise FormatError(f"{labels.size} labels for {feats.shape[0]} feature rows")
        if not np.all(np.isfinite(feats)):
            raise FormatError("features contain NaN or Inf")
        classes = tuple(self.classes) or _natural_order(labels)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "classes", classes)

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def rows(self, label) -> np.ndarray:
        return self.features[self.labels == str(label)]

    def require(self, label) -> np.ndarray:
        label = str(label)
        if label not in self.classes:
            raise ConfigurationError(
                f"unknown pattern {label!r} in {self.name}; available: {', '.join(self.classes)}"
            )
        return self.rows(label)

    def subset(self, index) -> "LabeledDataset":
        return LabeledDataset(self.features[index], self.labels[index], self.name, self.classes)


def _natural_order(labels: np.ndarray) -> tuple[str, ...]:
    uniq = sorted(set(labels.tolist()))
    if all(u.lstrip("-").isdigit() for u in uniq):
        uniq.sort(key=int)
    return tuple(uniq)


# --- MNIST -----------------------------------------------------------------

def _read_bytes(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def parse_idx_images(raw: bytes) -> np.ndarray:
    if len(raw) < 16:
        raise FormatError(f"IDX image file too short ({len(raw)} bytes)")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"bad IDX image magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    expected = 16 + count * rows * cols
    if len(raw) != expected:
        raise FormatError(f"IDX image file length {len(raw)} != expected {expected}")
    return np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(count, rows * cols)


def parse_idx_labels(raw: bytes) -> np.ndarray:
    if len(raw) < 8:
        raise FormatError(f"IDX label file too short ({len(raw)} bytes)")
    magic, count = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"bad IDX label magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(raw) != 8 + count:
        raise FormatError(f"IDX label file length {len(raw)} != expected {8 + count}")
    return np.frombuffer(raw, dtype=np.uint8, offset=8)


def load_mnist(images_path, labels_path) -> LabeledDataset:
    pixels = parse_idx_images(_read_bytes(images_path))
    labels = parse_idx_labels(_read_bytes(labels_path))
    if pixels.shape[0] != labels.shape[0]:
        raise FormatError(f"{pixels.shape[0]} images but {labels.shape[0]} labels")
    return LabeledDataset(
        pixels.astype(np.float64) / 255.0, labels.astype(str), "mnist",
        tuple(str(d) for d in range(10)),
    )


def find_mnist(root) -> Optional[tuple[Path, Path]]:
    """Locate ``train-images-idx3-ubyte[.gz]`` and its labels under ``root``."""
    root = Path(root)
    for stem in ("train", "t10k"):
        for suffix in ("", ".gz"):
            img = root / f"{stem}-images-idx3-ubyte{suffix}"
            lab = root / f"{stem}-labels-idx1-ubyte{suffix}"
            if img.is_file() and lab.is_file():
                return img, lab
    return None


# --- HAR ---------------------------------------------------------------------

_SPLIT = re.compile(r"[,\s]+")


def read_table(path, width: Optional[int] = None) -> np.ndarray:
    """Numeric table separated by commas and/or whitespace."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            tokens = _SPLIT.split(line)
            try:
                values = [float(tok) for tok in tokens]
            except ValueError:
                col = next(i for i, tok in enumerate(tokens, 1) if not _is_float(tok))
                raise FormatError(
                    f"{path}: non-numeric token {tokens[col - 1]!r} at row {lineno}, column {col}"
                ) from None
            if width is not None and len(values) != width:
                raise FormatError(f"{path}: row {lineno} has {len(values)} values, expected {width}")
            rows.append(values)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _is_float(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def load_har(features_csv, labels_csv) -> LabeledDataset:
    feats = read_table(features_csv, HAR_FEATURES)
    ids = read_table(labels_csv, 1)[:, 0]
    if ids.shape[0] != feats.shape[0]:
        raise FormatError(f"{feats.shape[0]} feature rows but {ids.shape[0]} labels")
    names = []
    for i, raw in enumerate(ids, 1):
        if raw != int(raw) or not 1 <= int(raw) <= len(HAR_ACTIVITIES):
            raise FormatError(f"{labels_csv}: unknown activity id {raw:g} at row {i}")
        names.append(HAR_ACTIVITIES[int(raw) - 1])
    return LabeledDataset(feats, np.array(names), "har", HAR_ACTIVITIES)


# --- Driving -----------------------------------------------------------------

def speed_levels(speeds) -> np.ndarray:
    """Quantize km/h into 15 levels of 10 km/h; out-of-range speeds clamp."""
    s = np.clip(np.asarray(speeds, dtype=np.float64), 0.0, SPEED_LEVELS * LEVEL_WIDTH_KMH - 1e-3)
    return np.floor(s / LEVEL_WIDTH_KMH).astype(np.int64)


def transition_table(levels) -> np.ndarray:
    """Row-normalized 15x15 transition probabilities; rows never left stay zero."""
    levels = np.asarray(levels, dtype=np.int64)
    counts = np.zeros((SPEED_LEVELS, SPEED_LEVELS))
    np.add.at(counts, (levels[:-1], levels[1:]), 1.0)
    out_deg = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, out_deg, out=np.zeros_like(counts), where=out_deg > 0)


def driving_features(speeds: Sequence[float], window: int) -> np.ndarray:
    """One 225-feature row per consecutive, non-overlapping ``window`` of speeds."""
    speeds = np.asarray(speeds, dtype=np.float64).ravel()
    if speeds.size == 0:
        raise ConfigurationError("empty speed series")
    if window < 2:
        raise ConfigurationError("window must hold at least 2 speed samples")
    n_rows = speeds.size // window
    if n_rows == 0:
        raise ConfigurationError(f"speed series has {speeds.size} samples, window needs {window}")
    levels = speed_levels(speeds[: n_rows * window]).reshape(n_rows, window)
    return np.stack([transition_table(w).ravel() for w in levels])


def load_speed_series(path) -> np.ndarray:
    return read_table(path, 1)[:, 0]


def load_driving(series_by_pattern: Mapping[str, Sequence], window: int = 60) -> LabeledDataset:
    """Build a driving dataset from ``{pattern: speed file or array}``."""
    feats, labels = [], []
    for pattern, source in series_by_pattern.items():
        speeds = load_speed_series(source) if isinstance(source, (str, Path)) else source
        rows = driving_features(speeds, window)
        feats.append(rows)
        labels += [pattern] * rows.shape[0]
    return LabeledDataset(np.vstack(feats), np.array(labels), "uah", tuple(series_by_pattern))


# --- Synthetic ---------------------------------------------------------------

SYNTH_SIGMA = 0.1


def synth_clusters(n_features: int, n_classes: int, rows_per_class: int, seed: int = 0) -> LabeledDataset:
    """Isotropic Gaussian clusters (sigma 0.1) clipped to [0, 1].

    Class means are drawn uniformly from [0, 1]^n and redrawn until every
    pair is at least 3 sigma apart.
    """
    if n_features < 2:
        raise ConfigurationError("n_features must be >= 2")
    if n_classes < 1 or rows_per_class < 1:
        raise ConfigurationError("need at least one class and one row per class")
    rng = np.random.default_rng(seed)
    means = []
    while len(means) < n_classes:
        mu = rng.uniform(0.0, 1.0, n_features)
        if all(np.linalg.norm(mu - other) >= 3 * SYNTH_SIGMA for other in means):
            means.append(mu)
    feats = np.vstack([
        np.clip(mu + SYNTH_SIGMA * rng.standard_normal((rows_per_class, n_features)), 0.0, 1.0)
        for mu in means
    ])
    labels = np.repeat([str(c) for c in range(n_classes)], rows_per_class)
    return LabeledDataset(feats, labels, "synth", tuple(str(c) for c in range(n_classes)))


# --- Splitting ---------------------------------------------------------------

def split(ds: LabeledDataset, train_fraction: float = 0.8, anomaly_ratio_cap: Optional[float] = 0.1,
          seed: int = 0, normal_labels: Optional[Sequence] = None):
    """Seeded shuffle into ``(train, test)``.

    With ``normal_labels`` given, test rows of every other class are
    subsampled so they number at most ``anomaly_ratio_cap`` times the normal
    test rows.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError("train_fraction must lie strictly between 0 and 1")
    for label in ds.classes:
        if not np.any(ds.labels == label):
            raise ConfigurationError(f"class {label!r} has no rows")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ds))
    n_train = int(round(train_fraction * len(ds)))
    train_idx, test_idx = order[:n_train], order[n_train:]

    if normal_labels is not None and anomaly_ratio_cap is not None:
        normal = {str(label) for label in normal_labels}
        for label in normal:
            if not np.any(ds.labels == label):
                raise ConfigurationError(f"normal class {label!r} has no rows")
        is_normal = np.isin(ds.labels[test_idx], list(normal))
        normal_idx, anomal_idx = test_idx[is_normal], test_idx[~is_normal]
        cap = int(np.floor(anomaly_ratio_cap * normal_idx.size + 1e-9))
        if anomal_idx.size > cap:
            anomal_idx = rng.choice(anomal_idx, size=cap, replace=False)
        test_idx = np.concatenate([normal_idx, np.sort(anomal_idx)])
    return ds.subset(train_idx), ds.subset(test_idx)


# --- Named datasets ----------------------------------------------------------

#: Per-dataset (activation, n_hidden) used when the caller does not override.
DEFAULT_HYPERPARAMS = {
    "uah": ("sigmoid", 16),
    "har": ("identity", 128),
    "mnist": ("identity", 64),
    "synth": ("identity", 16),
}

DATASETS = tuple(DEFAULT_HYPERPARAMS)


def load_named(name: str, data_dir=None, *, n_features: int = 32, n_classes: int = 4,
               rows_per_class: int = 200, seed: int = 0, window: int = 60) -> LabeledDataset:
    """Resolve a dataset by name.

    ``synth`` is generated; the others are read from ``data_dir``:

    * ``mnist``: ``train-images-idx3-ubyte[.gz]`` + ``train-labels-idx1-ubyte[.gz]``
    * ``har``: ``X_train.txt`` + ``y_train.txt`` (directly or under ``train/``)
    * ``uah``: one speed file per pattern, ``normal.txt``, ``aggressive.txt``, ``drowsy.txt``
    """
    if name == "synth":
        return synth_clusters(n_features, n_classes, rows_per_class, seed)
    if name not in DATASETS:
        raise ConfigurationError(f"unknown dataset {name!r}; choose from {', '.join(DATASETS)}")
    if data_dir is None:
        raise FileNotFoundError(f"dataset {name!r} needs a data directory")
    root = Path(data_dir)
    if name == "mnist":
        found = find_mnist(root)
        if found is None:
            raise FileNotFoundError(f"no MNIST IDX files under {root}")
        return load_mnist(*found)
    if name == "har":
        for base in (root, root / "train"):
            if (base / "X_train.txt").is_file() and (base / "y_train.txt").is_file():
                return load_har(base / "X_train.txt", base / "y_train.txt")
        raise FileNotFoundError(f"no X_train.txt / y_train.txt under {root}")
    files = {p: root / f"{p}.txt" for p in DRIVING_PATTERNS if (root / f"{p}.txt").is_file()}
    if not files:
        raise FileNotFoundError(f"no speed series ({', '.join(DRIVING_PATTERNS)}).txt under {root}")
    return load_driving(files, window)
