"""Dataset loading, preprocessing and seeded splitting.

Two sources are supported: the banknote-authentication CSV (4 features and a
binary label per row) and MNIST in IDX format. Preprocessing statistics are
always fit on the training split and carry a provenance tag so leakage can be
checked.
"""

from __future__ import annotations

import csv
import gzip
import io
import math
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, InputError, ParseError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

BANKNOTE_FILE = "data_banknote_authentication.txt"
MNIST_IMAGES_FILE = "train-images-idx3-ubyte"
MNIST_LABELS_FILE = "train-labels-idx1-ubyte"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    split_tag: str = "all"
    source_index: np.ndarray | None = None
    preprocessing: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise InputError(
                f"features {self.features.shape} and labels {self.labels.shape} do not line up"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise InputError(f"labels must lie in 0..{self.n_classes - 1}")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, index, split_tag: str | None = None) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        src = self.source_index if self.source_index is not None else np.arange(len(self))
        return replace(
            self,
            features=self.features[index],
            labels=self.labels[index],
            split_tag=split_tag or self.split_tag,
            source_index=src[index],
        )


# ---------------------------------------------------------------------------
# CSV


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_banknote_csv(path) -> Dataset:
    """Read ``f1,f2,f3,f4,label`` rows; a non-numeric first line is treated as a header."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))

    numbered = [(i + 1, r) for i, r in enumerate(rows) if any(cell.strip() for cell in r)]
    if numbered and not all(_is_number(c) for c in numbered[0][1]):
        numbered = numbered[1:]
    if not numbered:
        raise FormatError(f"{path}: no data rows")

    feats, labels = [], []
    for line, row in numbered:
        if len(row) != 5:
            raise FormatError(f"{path}: line {line}: expected 5 columns, got {len(row)}")
        try:
            values = [float(c) for c in row]
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", line=line) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError(f"{path}: non-finite value", line=line)
        label = values[4]
        if label not in (0.0, 1.0):
            raise ParseError(f"{path}: label must be 0 or 1, got {row[4]!r}", line=line)
        feats.append(values[:4])
        labels.append(int(label))
    return Dataset(np.array(feats, dtype=float), np.array(labels, dtype=np.int64), 2)


# ---------------------------------------------------------------------------
# IDX


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as fh:
            return fh.read()
    except (OSError, EOFError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FormatError(f"{path}: unreadable ({exc})") from None


def read_idx(path, magic: int) -> np.ndarray:
    """Parse one IDX file of unsigned bytes with the given magic number."""
    raw = _read_bytes(path)
    if len(raw) < 4:
        raise FormatError(f"{path}: truncated header")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise FormatError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header != count:
        raise FormatError(f"{path}: expected {count} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def write_idx(path, array: np.ndarray) -> None:
    """Write an unsigned-byte array as IDX (gzip-compressed if the name ends in .gz)."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise InputError("IDX writer supports unsigned bytes only")
    buf = io.BytesIO()
    buf.write(struct.pack(">I", 0x00000800 | array.ndim))
    buf.write(struct.pack(f">{array.ndim}I", *array.shape))
    buf.write(array.tobytes())
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_mnist_idx(images_path, labels_path) -> Dataset:
    """Images as 784 values in [0, 1] (byte / 255) and digit labels 0..9."""
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if labels.size and labels.max() > 9:
        raise FormatError(f"{labels_path}: label {labels.max()} outside 0..9")
    feats = images.reshape(images.shape[0], -1).astype(float) / 255.0
    return Dataset(feats, labels.astype(np.int64), 10)


# ---------------------------------------------------------------------------
# preprocessing


def resize_block_mean(image, block: int = 7) -> np.ndarray:
    """28x28 image to 16 features: mean of each 7x7 block, row-major."""
    img = np.asarray(image, dtype=float)
    if img.shape == (784,):
        img = img.reshape(28, 28)
    if img.shape != (28, 28):
        raise InputError(f"expected a 28x28 image, got shape {img.shape}")
    s = 28 // block
    return img.reshape(s, block, s, block).mean(axis=(1, 3)).ravel()


def resize_batch(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=float)
    if images.ndim != 2 or images.shape[1] != 784:
        raise InputError(f"expected rows of 784 pixels, got shape {images.shape}")
    return images.reshape(-1, 4, 7, 4, 7).mean(axis=(2, 4)).reshape(-1, 16)


@dataclass(frozen=True)
class Standardizer:
    """Affine feature map ``(x - shift) * scale`` plus where its statistics came from."""

    shift: np.ndarray
    scale: np.ndarray
    fitted_on: str
    kind: str = "zscore"

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.shift) * self.scale

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "fitted_on": self.fitted_on,
            "shift": self.shift.tolist(),
            "scale": self.scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["shift"], float), np.asarray(d["scale"], float), d["fitted_on"], d.get("kind", "zscore"))


def fit_standardizer(train: Dataset, kind: str = "zscore", std_floor: float = 1e-8) -> Standardizer:
    """Z-score statistics from the train split, or the fixed [0, 1] -> [0, pi] pixel map."""
    if kind == "zscore":
        mean = train.features.mean(axis=0)
        std = np.maximum(train.features.std(axis=0), std_floor)
        return Standardizer(mean, 1.0 / std, train.split_tag, kind)
    if kind == "angle":
        d = train.n_features
        return Standardizer(np.zeros(d), np.full(d, np.pi), train.split_tag, kind)
    raise ConfigError(f"unknown standardization {kind!r}")


def standardize(dataset: Dataset, stats: Standardizer) -> Dataset:
    feats = stats.transform(dataset.features)
    if not np.all(np.isfinite(feats)):
        raise InputError("non-finite features after preprocessing")
    prep = dict(dataset.preprocessing, standardizer=stats.kind, stats_from=stats.fitted_on)
    return replace(dataset, features=feats, preprocessing=prep)


def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then ``ceil(m (1 - f))`` train rows and the rest as test."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    m = len(dataset)
    n_train = math.ceil(m * (1.0 - test_fraction))
    if n_train == 0 or n_train == m:
        raise ConfigError(f"split of {m} samples with test_fraction={test_fraction} leaves one side empty")
    order = np.random.default_rng(seed).permutation(m)
    return dataset.subset(np.sort(order[:n_train]), "train"), dataset.subset(np.sort(order[n_train:]), "test")


# ---------------------------------------------------------------------------
# task-level pipelines


@dataclass
class DataConfig:
    """Where the data lives and how it is cut down; paths are relative to ``data_dir``."""

    data_dir: str | None = None
    banknote_csv: str = BANKNOTE_FILE
    mnist_images: str = MNIST_IMAGES_FILE
    mnist_labels: str = MNIST_LABELS_FILE
    test_fraction: float = 0.1
    mnist_subset: int = 10000


def resolve_data_dir(data_dir: str | None) -> Path:
    return Path(data_dir or os.environ.get("ANO_DATA_DIR") or "data")


def _locate(root: Path, name: str) -> Path:
    p = Path(name)
    if not p.is_absolute():
        p = root / p
    if p.exists():
        return p
    gz = p.with_name(p.name + ".gz")
    if gz.exists():
        return gz
    raise FileNotFoundError(f"data file not found: {p} (set ANO_DATA_DIR or data.data_dir)")


def load_task(task: str, cfg: DataConfig, seed: int) -> tuple[Dataset, Dataset, Standardizer]:
    """Load, split and preprocess one task; statistics come from the train split only."""
    root = resolve_data_dir(cfg.data_dir)
    if task == "banknote":
        raw = load_banknote_csv(_locate(root, cfg.banknote_csv))
        kind = "zscore"
    elif task == "mnist":
        full = load_mnist_idx(_locate(root, cfg.mnist_images), _locate(root, cfg.mnist_labels))
        if cfg.mnist_subset > len(full):
            raise FormatError(f"requested a {cfg.mnist_subset}-sample prefix but the file holds {len(full)}")
        prefix = full.subset(np.arange(cfg.mnist_subset))
        raw = replace(prefix, features=resize_batch(prefix.features))
        kind = "angle"
    else:
        raise ConfigError(f"unknown task {task!r}; expected 'banknote' or 'mnist'")
    train, test = split(raw, cfg.test_fraction, seed)
    stats = fit_standardizer(train, kind)
    return standardize(train, stats), standardize(test, stats), stats
