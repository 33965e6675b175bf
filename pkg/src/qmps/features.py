"""Single-site feature maps shared by the classical and circuit classifiers.

The same map feeds both model families but with different normalizations:
the classical contraction wants the components to sum to one (so identity
tensors pass inputs through unchanged), while the circuit wants unit L2 norm
(a valid qubit state).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("linear", "trig")
NORMALIZATIONS = ("sum-one", "unit-l2")


@dataclass(frozen=True)
class FeatureMapConfig:
    kind: str = "linear"
    normalization: str = "sum-one"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature map kind {self.kind!r}, expected one of {KINDS}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(
                f"unknown normalization {self.normalization!r}, expected one of {NORMALIZATIONS}"
            )

    def as_dict(self) -> dict:
        return {"kind": self.kind, "normalization": self.normalization}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureMapConfig":
        return cls(kind=d["kind"], normalization=d["normalization"])


MPS_FEATURES = FeatureMapConfig("linear", "sum-one")
QMPS_FEATURES = FeatureMapConfig("linear", "unit-l2")


def feature_map_batch(x: np.ndarray, cfg: FeatureMapConfig) -> np.ndarray:
    """Map an array of scalars to feature vectors, output shape x.shape + (2,).

    The linear kind maps x in [0,1] to (1-x, x) before normalization; the
    trig kind maps any real x to (cos x, sin x).
    """
    x = np.asarray(x, dtype=np.float64)
    if cfg.kind == "linear":
        if np.any(x < 0.0) or np.any(x > 1.0):
            bad = x[(x < 0.0) | (x > 1.0)].flat[0]
            raise ValueError(f"linear feature map requires x in [0,1], got {bad}")
        phi = np.stack([1.0 - x, x], axis=-1)
    else:
        phi = np.stack([np.cos(x), np.sin(x)], axis=-1)
    if cfg.normalization == "sum-one":
        denom = phi.sum(axis=-1, keepdims=True)
    else:
        denom = np.linalg.norm(phi, axis=-1, keepdims=True)
    return phi / denom


def feature_map(x: float, cfg: FeatureMapConfig) -> np.ndarray:
    """Feature vector for a single scalar input."""
    return feature_map_batch(np.asarray(x, dtype=np.float64), cfg)
