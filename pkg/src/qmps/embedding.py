"""Exact conversion of a canonicalized MPS into a postselected circuit.

Each 4x2 isometry block becomes a two-qubit gate through unitary completion;
the canonical center becomes the measurement head.  With measurement weight
w = 0 the circuit's scores reproduce the squared classical logits exactly,
which `verify_embedding` checks sample by sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import QmpsCircuit, propagate_batch
from .features import MPS_FEATURES, QMPS_FEATURES
from .linalg import unitary_completion
from .mps import CanonicalMps, Mps, mps_forward


@dataclass
class EmbeddingReport:
    """Outcome of comparing circuit scores against classical scores."""

    max_rel_deviation: float
    scale: float
    success_probabilities: np.ndarray
    argmax_agreement: float


def embed(c: CanonicalMps, seed: int) -> QmpsCircuit:
    """Complete every isometry block into a gate; absorb the center into the head.

    The carry of the circuit evolves with the conjugate of the classical
    chain (the completion pins the columns of U^dag, not of U), so the head
    is the conjugate transpose of the center; scores then come out as the
    squared moduli of the classical logits.  The completion's free columns
    are seeded but never touch postselected histories.
    """
    rng = np.random.default_rng(seed)
    gates = np.stack([unitary_completion(v, rng) for v in c.isometries])
    return QmpsCircuit(gates, head=c.center.conj().T)


def verify_embedding(m: Mps, q: QmpsCircuit, samples: np.ndarray) -> EmbeddingReport:
    """Compare postselected circuit scores against squared classical logits.

    Circuit scores are diag(head tau head^dag) at w = 0 with unit-l2 features;
    classical scores are |logit|^2 with sum-one features.  For bitstring
    samples the two feature conventions coincide and a single global scale
    relates the score families; the report carries the best-fit scale, the
    worst per-sample relative deviation after rescaling, and the per-sample
    postselection success probabilities.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[1] != m.length or m.length != q.length:
        raise ValueError("model, circuit, and samples disagree on length")
    logits = np.atleast_2d(mps_forward(m, samples, MPS_FEATURES))
    mps_scores = np.abs(logits) ** 2
    fwd = propagate_batch(q, samples, w=0.0, cfg=QMPS_FEATURES)
    hr = np.einsum("ai,bij,cj->bac", q.head, fwd["rho_final"], q.head.conj())
    circ_scores = np.maximum(np.einsum("baa->ba", hr).real, 0.0) * fwd["traces"][:, None]
    denom = float(np.sum(mps_scores * mps_scores))
    scale = float(np.sum(circ_scores * mps_scores)) / denom if denom > 0 else 1.0
    row_scale = np.maximum(np.abs(scale * mps_scores).max(axis=1), 1e-300)
    rel = np.abs(circ_scores - scale * mps_scores) / row_scale[:, None]
    agreement = float(np.mean(np.argmax(circ_scores, axis=1) == np.argmax(mps_scores, axis=1)))
    return EmbeddingReport(
        max_rel_deviation=float(rel.max()),
        scale=scale,
        success_probabilities=fwd["traces"],
        argmax_agreement=agreement,
    )
