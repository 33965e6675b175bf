"""Shared checkpoint format for both classifier families.

JSON documents with complex tensors stored as nested [real, imag] pairs.
Python's float repr round-trips exactly, so load(save(model)) is bit
identical on every tensor value.  A sha256 over the canonical payload guards
against silent corruption.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .circuit import QmpsCircuit
from .features import FeatureMapConfig
from .mps import Mps

CHECKPOINT_FORMAT_VERSION = 1


class CheckpointIntegrityError(ValueError):
    pass


class CheckpointVersionError(ValueError):
    pass


def _encode(a: np.ndarray):
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _decode(nested) -> np.ndarray:
    arr = np.asarray(nested, dtype=np.float64)
    return arr[..., 0] + 1j * arr[..., 1]


def _checksum(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _write(path, payload: dict):
    payload["checksum"] = _checksum(payload)
    with open(path, "w") as f:
        json.dump(payload, f)


def _read(path) -> dict:
    with open(path) as f:
        payload = json.load(f)
    stored = payload.pop("checksum", None)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {CHECKPOINT_FORMAT_VERSION}")
    if stored != _checksum(payload):
        raise CheckpointIntegrityError(f"{path}: checksum mismatch")
    return payload


def save_mps(path, model: Mps, feature_cfg: FeatureMapConfig, seed: int, metadata: dict | None = None):
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_kind": "mps",
        "length": model.length,
        "feature_map": feature_cfg.as_dict(),
        "tensors": {
            "first": _encode(model.first),
            "middles": _encode(model.middles),
            "last": _encode(model.last),
        },
        "seed": seed,
        "metadata": metadata or {},
    }
    _write(path, payload)


def save_qmps(path, circuit: QmpsCircuit, feature_cfg: FeatureMapConfig, seed: int, w: float, metadata: dict | None = None):
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_kind": "qmps",
        "length": circuit.length,
        "feature_map": feature_cfg.as_dict(),
        "tensors": {
            "gates": _encode(circuit.gates),
            "head": _encode(circuit.head),
        },
        "seed": seed,
        "w": w,
        "metadata": metadata or {},
    }
    _write(path, payload)


def load_checkpoint(path):
    """Load either checkpoint kind; returns (model, info dict).

    info carries model_kind, feature_map (as FeatureMapConfig), seed,
    metadata, and for circuits the measurement weight at save time.
    """
    payload = _read(path)
    kind = payload.get("model_kind")
    info = {
        "model_kind": kind,
        "feature_map": FeatureMapConfig.from_dict(payload["feature_map"]),
        "seed": payload.get("seed"),
        "metadata": payload.get("metadata", {}),
        "length": payload.get("length"),
    }
    tensors = payload["tensors"]
    if kind == "mps":
        model = Mps(_decode(tensors["first"]), _decode(tensors["middles"]), _decode(tensors["last"]))
    elif kind == "qmps":
        model = QmpsCircuit(_decode(tensors["gates"]), _decode(tensors["head"]))
        info["w"] = payload.get("w")
    else:
        raise ValueError(f"{path}: unknown model_kind {kind!r}")
    if model.length != payload["length"]:
        raise CheckpointIntegrityError(f"{path}: stored length {payload['length']} != tensor length {model.length}")
    return model, info
