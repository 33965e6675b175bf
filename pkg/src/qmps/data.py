"""Dataset generation, MNIST IDX ingestion, preprocessing, and persistence."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

DATASET_FORMAT_VERSION = 1

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Base class for IDX container problems."""


class BadMagicError(IdxFormatError):
    pass


class TruncatedIdxError(IdxFormatError):
    pass


class CountMismatchError(IdxFormatError):
    pass


class DatasetIntegrityError(ValueError):
    """Checksum stored with a dataset file does not match its contents."""


class DatasetVersionError(ValueError):
    pass


@dataclass
class Dataset:
    """Feature rows in [0,1] with binary labels and a provenance tag."""

    features: np.ndarray
    labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features must be (n, L) with one label per row")
        if np.any(self.features < 0.0) or np.any(self.features > 1.0):
            raise ValueError("features must lie in [0, 1]")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be 0 or 1")

    @property
    def length(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]


def gen_trigger_batch(length: int, n: int, rng: np.random.Generator) -> Dataset:
    """Uniform random bitstrings labeled by their first bit.

    Sampling with replacement: the population has 2^L points, so enumeration
    is out of the question at the lengths this dataset is meant for.
    """
    if length < 2:
        raise ValueError("need length >= 2")
    if n < 1:
        raise ValueError("need at least one sample")
    bits = rng.integers(0, 2, size=(n, length))
    return Dataset(bits.astype(np.float64), bits[:, 0].astype(np.int64), {"kind": "trigger", "length": length})


def gen_trigger_pairs(length: int, n_pairs: int, rng: np.random.Generator) -> Dataset:
    """Balanced trigger batch: each random tail appears once with each label.

    Handy for gradient statistics, where the exact label balance removes the
    O(1/sqrt(n)) sampling noise that would otherwise mask small signals.
    """
    if length < 2:
        raise ValueError("need length >= 2")
    tails = rng.integers(0, 2, size=(n_pairs, length - 1)).astype(np.float64)
    feats = np.zeros((2 * n_pairs, length))
    feats[0::2, 1:] = tails
    feats[1::2, 1:] = tails
    feats[1::2, 0] = 1.0
    labels = feats[:, 0].astype(np.int64)
    return Dataset(feats, labels, {"kind": "trigger-paired", "length": length})


def _read_idx_header(data: bytes, path: str, expected_magic: int, n_dims: int):
    header_len = 4 * (1 + n_dims)
    if len(data) < header_len:
        raise TruncatedIdxError(f"{path}: header needs {header_len} bytes, file has {len(data)}")
    magic = struct.unpack(">I", data[:4])[0]
    if magic != expected_magic:
        raise BadMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    dims = struct.unpack(f">{n_dims}I", data[4:header_len])
    return dims, header_len


def load_idx(images_path, labels_path):
    """Parse the big-endian IDX pair; returns (images uint8 (n,r,c), labels uint8 (n,))."""
    with open(images_path, "rb") as f:
        img_data = f.read()
    with open(labels_path, "rb") as f:
        lab_data = f.read()
    (n_img, rows, cols), img_off = _read_idx_header(img_data, str(images_path), IDX_IMAGES_MAGIC, 3)
    expected = img_off + n_img * rows * cols
    if len(img_data) != expected:
        raise TruncatedIdxError(f"{images_path}: expected {expected} bytes, found {len(img_data)}")
    (n_lab,), lab_off = _read_idx_header(lab_data, str(labels_path), IDX_LABELS_MAGIC, 1)
    expected = lab_off + n_lab
    if len(lab_data) != expected:
        raise TruncatedIdxError(f"{labels_path}: expected {expected} bytes, found {len(lab_data)}")
    if n_img != n_lab:
        raise CountMismatchError(f"{n_img} images vs {n_lab} labels")
    images = np.frombuffer(img_data, dtype=np.uint8, offset=img_off).reshape(n_img, rows, cols)
    labels = np.frombuffer(lab_data, dtype=np.uint8, offset=lab_off)
    return images, labels


def _box_weights(n_in: int, n_out: int) -> np.ndarray:
    """Area-overlap averaging weights from n_in pixels to n_out cells, rows sum to 1."""
    w = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for i in range(n_out):
        lo, hi = i * ratio, (i + 1) * ratio
        for j in range(int(np.floor(lo)), min(n_in, int(np.ceil(hi)))):
            w[i, j] = min(hi, j + 1) - max(lo, j)
    return w / ratio


def preprocess_mnist(images: np.ndarray, labels: np.ndarray, classes, side: int) -> Dataset:
    """Filter to a digit pair, box-average to side x side, scale to [0,1], flatten.

    The smaller digit maps to label 0.  28 is not a multiple of 16, so the
    resize uses exact fractional area overlaps rather than any interpolation
    kernel; pixel mass is preserved up to the averaging.
    """
    a, b = sorted(set(int(c) for c in classes))
    if a == b:
        raise ValueError("need two distinct classes")
    if side not in (8, 14, 16, 28):
        raise ValueError(f"side must be one of 8, 14, 16, 28, got {side}")
    labels = np.asarray(labels)
    mask = (labels == a) | (labels == b)
    if not mask.any() or not (labels == a).any() or not (labels == b).any():
        raise ValueError(f"classes {a} and {b} must both be present")
    imgs = np.asarray(images)[mask].astype(np.float64) / 255.0
    w = _box_weights(imgs.shape[1], side)
    small = np.einsum("oi,nij,pj->nop", w, imgs, w)
    feats = np.clip(small.reshape(len(imgs), -1), 0.0, 1.0)
    binary = (labels[mask] == b).astype(np.int64)
    return Dataset(feats, binary, {"kind": "mnist", "classes": [a, b], "side": side})


def split_dataset(ds: Dataset, rng: np.random.Generator, holdout_fraction: float = 0.1):
    """Seeded shuffle-and-split; returns (train, holdout)."""
    if not (0.0 < holdout_fraction < 1.0):
        raise ValueError("holdout_fraction must be in (0, 1)")
    perm = rng.permutation(len(ds))
    n_hold = max(1, int(round(holdout_fraction * len(ds))))
    hold, train = perm[:n_hold], perm[n_hold:]
    return (
        Dataset(ds.features[train], ds.labels[train], dict(ds.provenance)),
        Dataset(ds.features[hold], ds.labels[hold], dict(ds.provenance)),
    )


def _dataset_payload(ds: Dataset) -> dict:
    return {
        "format_version": DATASET_FORMAT_VERSION,
        "provenance": ds.provenance,
        "features": ds.features.tolist(),
        "labels": ds.labels.tolist(),
    }


def _payload_checksum(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def save_dataset(path, ds: Dataset):
    payload = _dataset_payload(ds)
    payload["checksum"] = _payload_checksum(payload)
    with open(path, "w") as f:
        json.dump(payload, f)


def load_dataset(path) -> Dataset:
    with open(path) as f:
        payload = json.load(f)
    stored = payload.pop("checksum", None)
    version = payload.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise DatasetVersionError(f"{path}: format version {version}, expected {DATASET_FORMAT_VERSION}")
    actual = _payload_checksum(payload)
    if stored != actual:
        raise DatasetIntegrityError(f"{path}: checksum mismatch")
    return Dataset(np.array(payload["features"]), np.array(payload["labels"]), payload["provenance"])
