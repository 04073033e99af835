"""Binary-feature classification data: a synthetic generator and an IDX reader."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from ..prob import Alphabet, LabeledDataset
from ..seeding import derive_rng

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


def _bits_alphabet(features: np.ndarray):
    rows, inverse = np.unique(features, axis=0, return_inverse=True)
    symbols = tuple("".join(map(str, r)) for r in rows)
    return Alphabet(symbols), np.asarray(inverse).reshape(-1)


class BinaryDataset(LabeledDataset):
    """LabeledDataset whose x symbols are bit strings; keeps the raw 0/1 feature matrix."""

    def __init__(self, features, labels, classes: int):
        feats = np.asarray(features, dtype=np.uint8)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError("features must be a non-empty (n, dim) array")
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if labels.size != feats.shape[0]:
            raise ValueError("features and labels differ in length")
        if labels.min() < 0 or labels.max() >= classes:
            raise ValueError("labels outside 0..classes-1")
        x_alpha, xs = _bits_alphabet(feats)
        super().__init__(np.stack([xs, labels], axis=1), x_alpha, Alphabet.of_size(classes))
        self.features = feats
        self.labels = labels
        self.classes = int(classes)

    def subset(self, idx) -> "BinaryDataset":
        idx = np.asarray(idx)
        return BinaryDataset(self.features[idx], self.labels[idx], self.classes)

    def with_labels(self, labels) -> "BinaryDataset":
        return BinaryDataset(self.features, labels, self.classes)


def synth_dataset(classes: int, dim: int, n: int, separation: float, seed: int) -> BinaryDataset:
    """Random prototype per class; each bit of a sample flips with probability (1 - separation)/2."""
    if classes < 2 or dim < 2:
        raise ValueError("need classes >= 2 and dim >= 2")
    if n < 1:
        raise ValueError("n must be positive")
    if not 0.0 <= separation <= 1.0:
        raise ValueError("separation must lie in [0,1]")
    proto = derive_rng(seed, "prototypes").integers(0, 2, size=(classes, dim), dtype=np.uint8)
    rng = derive_rng(seed, "samples", n)
    labels = rng.integers(0, classes, size=n)
    flips = rng.random((n, dim)) < (1.0 - separation) / 2.0
    return BinaryDataset(proto[labels] ^ flips.astype(np.uint8), labels, classes)


@dataclass(frozen=True)
class SynthConfig:
    classes: int = 4
    dim: int = 20
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 2000
    separation: float = 0.5
    seed: int = 0


@dataclass(frozen=True)
class DataSplits:
    train: BinaryDataset
    val: BinaryDataset | None
    test: BinaryDataset


def synth_splits(cfg: SynthConfig, train_parts: int = 1):
    """Train/val/test drawn from one generator; train is split into `train_parts` disjoint chunks."""
    total = cfg.n_train * train_parts + cfg.n_val + cfg.n_test
    full = synth_dataset(cfg.classes, cfg.dim, total, cfg.separation, cfg.seed)
    cut = cfg.n_train * train_parts
    trains = [full.subset(np.arange(i * cfg.n_train, (i + 1) * cfg.n_train)) for i in range(train_parts)]
    val = full.subset(np.arange(cut, cut + cfg.n_val)) if cfg.n_val > 0 else None
    test = full.subset(np.arange(cut + cfg.n_val, total))
    if train_parts == 1:
        return DataSplits(trains[0], val, test)
    return trains, val, test


# -- IDX -----------------------------------------------------------------------

def _read(path) -> bytes:
    path = str(path)
    opener = gzip.open if path.endswith(".gz") else open
    with opener(path, "rb") as fh:
        return fh.read()


def _idx_header(raw: bytes, magic: int, ndim: int, what: str):
    need = 4 + 4 * ndim
    if len(raw) < need:
        raise IdxFormatError(f"truncated {what} header")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise IdxFormatError(f"bad magic in {what} file: 0x{got:08x}")
    return struct.unpack(">" + "I" * ndim, raw[4:need]), need


def load_idx(images_path, labels_path, limit: int | None = None) -> BinaryDataset:
    """First `limit` images binarized at half the maximum pixel value (255)."""
    if limit is not None and limit < 1:
        raise ValueError("limit must be positive: empty dataset")
    img_raw, lab_raw = _read(images_path), _read(labels_path)
    (count, rows, cols), off = _idx_header(img_raw, IMAGES_MAGIC, 3, "images")
    (lcount,), loff = _idx_header(lab_raw, LABELS_MAGIC, 1, "labels")
    if count != lcount:
        raise IdxFormatError(f"count mismatch: {count} images vs {lcount} labels")
    if len(img_raw) - off < count * rows * cols:
        raise IdxFormatError("truncated images file")
    if len(lab_raw) - loff < lcount:
        raise IdxFormatError("truncated labels file")
    k = count if limit is None else min(limit, count)
    if k < 1:
        raise ValueError("empty dataset")
    pix = np.frombuffer(img_raw, dtype=np.uint8, count=k * rows * cols, offset=off).reshape(k, rows * cols)
    labels = np.frombuffer(lab_raw, dtype=np.uint8, count=k, offset=loff).astype(np.int64)
    feats = (pix > 127.5).astype(np.uint8)
    return BinaryDataset(feats, labels, max(int(labels.max()) + 1, 2))
