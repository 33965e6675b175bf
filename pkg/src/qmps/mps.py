"""Bond-dimension-2 MPS binary classifier.

The model is a chain of rank-3 tensors with a two-dimensional label leg on
the last site.  This module covers its classical life cycle: stacked-identity
initialization, forward contraction, softmax/NLL loss, analytic gradients via
cached left/right environments, Adam updates, and the left-to-right isometry
sweep that prepares the chain for exact circuit embedding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .features import MPS_FEATURES, FeatureMapConfig, feature_map_batch
from .linalg import SingularMatrixError, qr_positive


class CanonicalizationError(ValueError):
    """Raised when the isometry sweep hits a rank-deficient block."""


@dataclass
class Mps:
    """Chain of complex tensors: first (s1, i1), middles (s, i, j), last (s, i, label).

    `middles` is stored as one (L-2, 2, 2, 2) array so batched contraction
    stays a handful of einsums.
    """

    first: np.ndarray
    middles: np.ndarray
    last: np.ndarray

    def __post_init__(self):
        self.first = np.asarray(self.first, dtype=np.complex128)
        self.middles = np.asarray(self.middles, dtype=np.complex128).reshape(-1, 2, 2, 2)
        self.last = np.asarray(self.last, dtype=np.complex128)
        if self.first.shape != (2, 2) or self.last.shape != (2, 2, 2):
            raise ValueError("boundary tensors must be 2x2 and 2x2x2")
        for name, t in (("first", self.first), ("middles", self.middles), ("last", self.last)):
            if not (np.all(np.isfinite(t.real)) and np.all(np.isfinite(t.imag))):
                raise ValueError(f"non-finite entries in {name} tensor")

    @property
    def length(self) -> int:
        return self.middles.shape[0] + 2

    def copy(self) -> "Mps":
        return Mps(self.first.copy(), self.middles.copy(), self.last.copy())

    def tensors(self) -> dict:
        return {"first": self.first, "middles": self.middles, "last": self.last}


@dataclass(frozen=True)
class MpsInitConfig:
    """Noise scale (before the 1/sqrt(L) division) and seed for initialization."""

    eps_prime: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.eps_prime < 0:
            raise ValueError("eps_prime must be nonnegative")
        if self.eps_prime > 0.5:
            warnings.warn(
                f"eps_prime = {self.eps_prime} is large; the near-identity analysis "
                "assumes eps_prime << 1",
                stacklevel=2,
            )


def init_stacked_identity(length: int, cfg: MpsInitConfig = MpsInitConfig()) -> Mps:
    """Identity-stacked tensors plus Gaussian noise of std eps_prime / sqrt(L).

    Without noise every layer passes its input through unchanged under
    sum-one features, so the chain outputs (1, 1) and predicts 50/50; the
    noise breaks that tie without biasing either class.
    """
    if length < 2:
        raise ValueError(f"need at least 2 sites, got {length}")
    rng = np.random.default_rng(cfg.seed)
    eps = cfg.eps_prime / np.sqrt(length)
    eye = np.eye(2)
    first = np.ones((2, 2)) + rng.normal(0.0, eps, (2, 2))
    middles = np.broadcast_to(eye, (length - 2, 2, 2, 2)) + rng.normal(0.0, eps, (length - 2, 2, 2, 2))
    last = np.broadcast_to(eye, (2, 2, 2)) + rng.normal(0.0, eps, (2, 2, 2))
    return Mps(first, middles, last)


def perfect_trigger_mps(length: int) -> Mps:
    """Delta-tensor chain that classifies any bitstring by its first bit."""
    if length < 2:
        raise ValueError(f"need at least 2 sites, got {length}")
    eye = np.eye(2)
    return Mps(eye.copy(), np.broadcast_to(eye, (length - 2, 2, 2, 2)).copy(), np.broadcast_to(eye, (2, 2, 2)).copy())


def _check_inputs(m: Mps, features: np.ndarray, cfg: FeatureMapConfig):
    if cfg.normalization != "sum-one":
        raise ValueError("the classical contraction requires sum-one feature normalization")
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != m.length:
        raise ValueError(f"sample length {features.shape[1]} != model length {m.length}")
    return features


def _site_matrices(m: Mps, phis: np.ndarray):
    """Contract features into per-site transfer matrices.

    Returns (v1, mats, mlast): v1 (B,2) is the vector after site 1, mats is a
    (L-2, B, 2, 2) array for the interior sites, mlast (B,2,2) maps the final
    virtual index to the label leg.
    """
    v1 = np.einsum("bs,si->bi", phis[:, 0, :], m.first)
    mats = np.einsum("ksij,bks->kbij", m.middles, phis[:, 1:-1, :])
    mlast = np.einsum("sil,bs->bil", m.last, phis[:, -1, :])
    return v1, mats, mlast


def mps_forward(m: Mps, features: np.ndarray, cfg: FeatureMapConfig = MPS_FEATURES) -> np.ndarray:
    """Exact left-to-right chain contraction; returns logits of shape (B, 2).

    A single sample (1-d features) returns shape (2,).
    """
    single = np.asarray(features).ndim == 1
    feats = _check_inputs(m, features, cfg)
    phis = feature_map_batch(feats, cfg)
    v1, mats, mlast = _site_matrices(m, phis)
    v = v1
    for k in range(mats.shape[0]):
        v = np.einsum("bi,bij->bj", v, mats[k])
    logits = np.einsum("bi,bil->bl", v, mlast)
    return logits[0] if single else logits


def predicted_labels(logits: np.ndarray) -> np.ndarray:
    """argmax of |logit|, ties resolved toward label 0."""
    logits = np.atleast_2d(logits)
    return np.argmax(np.abs(logits), axis=1)


def nll_softmax_loss(logits: np.ndarray, label: int) -> float:
    """Negative log-likelihood of `label` under a softmax over the logits.

    Complex logits contribute through their real part; the log-sum-exp form
    is overflow-safe for arbitrarily large logits.
    """
    f = np.real(np.asarray(logits, dtype=np.complex128))
    m = f.max()
    lse = m + np.log(np.exp(f - m).sum())
    return float(lse - f[label])


def batch_nll(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean NLL over a batch of logit pairs."""
    f = np.real(np.atleast_2d(logits))
    labels = np.asarray(labels, dtype=np.int64)
    m = f.max(axis=1, keepdims=True)
    lse = (m[:, 0] + np.log(np.exp(f - m).sum(axis=1)))
    return float(np.mean(lse - f[np.arange(len(labels)), labels]))


def _softmax_residuals(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    f = np.real(logits)
    m = f.max(axis=1, keepdims=True)
    e = np.exp(f - m)
    p = e / e.sum(axis=1, keepdims=True)
    g = p.copy()
    g[np.arange(len(labels)), labels] -= 1.0
    return g


def mps_loss_and_gradient(
    m: Mps,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: FeatureMapConfig = MPS_FEATURES,
):
    """Mean NLL, its gradient for every tensor, and batch accuracy.

    One left-to-right and one right-to-left environment sweep, O(L) per
    sample.  Gradients are reported in steepest-descent convention for a real
    loss of complex parameters: G = dL/dRe + i dL/dIm.
    """
    feats = _check_inputs(m, features, cfg)
    labels = np.asarray(labels, dtype=np.int64)
    if feats.shape[0] != labels.shape[0]:
        raise ValueError("features and labels disagree on batch size")
    if feats.shape[0] == 0:
        raise ValueError("empty batch")
    n, length = feats.shape
    phis = feature_map_batch(feats, cfg)
    v1, mats, mlast = _site_matrices(m, phis)

    lefts = np.empty((length - 1, n, 2), dtype=np.complex128)
    lefts[0] = v1
    for k in range(length - 2):
        lefts[k + 1] = np.einsum("bi,bij->bj", lefts[k], mats[k])
    logits = np.einsum("bi,bil->bl", lefts[-1], mlast)

    rights = np.empty((length - 1, n, 2, 2), dtype=np.complex128)
    rights[-1] = mlast
    for k in range(length - 3, -1, -1):
        rights[k] = np.einsum("bij,bjl->bil", mats[k], rights[k + 1])

    g = _softmax_residuals(logits, labels)
    phic = phis.conj()

    h = np.einsum("bil,bl->bi", rights[0].conj(), g)
    grad_first = np.einsum("bs,bi->si", phic[:, 0, :], h) / n
    grad_mid = np.empty_like(m.middles)
    for k in range(length - 2):
        h = np.einsum("bjl,bl->bj", rights[k + 1].conj(), g)
        grad_mid[k] = np.einsum("bs,bi,bj->sij", phic[:, k + 1, :], lefts[k].conj(), h) / n
    grad_last = np.einsum("bs,bi,bl->sil", phic[:, -1, :], lefts[-1].conj(), g) / n

    loss = batch_nll(logits, labels)
    acc = float(np.mean(predicted_labels(logits) == labels))
    grads = {"first": grad_first, "middles": grad_mid, "last": grad_last}
    return loss, grads, acc


def mps_gradient(m: Mps, features, labels, cfg: FeatureMapConfig = MPS_FEATURES) -> dict:
    """Gradient of the batch-mean NLL for every tensor of the chain."""
    _, grads, _ = mps_loss_and_gradient(m, features, labels, cfg)
    return grads


# --- Adam ---------------------------------------------------------------


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0


def init_adam(model: Mps) -> AdamState:
    zeros_c = {k: np.zeros_like(t) for k, t in model.tensors().items()}
    zeros_r = {k: np.zeros(t.shape) for k, t in model.tensors().items()}
    return AdamState(m=zeros_c, v=zeros_r)


def adam_step(model: Mps, grads: dict, state: AdamState, hyper: AdamHyper = AdamHyper()):
    """One bias-corrected Adam update; returns (new model, new state)."""
    t = state.t + 1
    new_m, new_v, new_p = {}, {}, {}
    for key, p in model.tensors().items():
        g = grads[key]
        mk = hyper.beta1 * state.m[key] + (1.0 - hyper.beta1) * g
        vk = hyper.beta2 * state.v[key] + (1.0 - hyper.beta2) * np.abs(g) ** 2
        mhat = mk / (1.0 - hyper.beta1**t)
        vhat = vk / (1.0 - hyper.beta2**t)
        new_p[key] = p - hyper.lr * mhat / (np.sqrt(vhat) + hyper.eps)
        new_m[key], new_v[key] = mk, vk
    model2 = Mps(new_p["first"], new_p["middles"], new_p["last"])
    return model2, AdamState(m=new_m, v=new_v, t=t)


def train_mps(
    model: Mps,
    epoch_batches,
    probe=None,
    hyper: AdamHyper = AdamHyper(),
    cfg: FeatureMapConfig = MPS_FEATURES,
    stop_loss: float | None = None,
    check_every: int = 8,
    state: AdamState | None = None,
):
    """Adam over epochs of minibatches, with an accuracy-saturation stop.

    `epoch_batches` yields one iterable of (features, labels) batches per
    epoch.  When `stop_loss` is set and a probe batch is given, training
    halts as soon as probe accuracy (modulus rule) reaches 1.0 while the
    batch loss sits at or below `stop_loss`, checked every `check_every`
    steps.  Stopping there matters: further NLL descent only inflates the
    logit scale and eventually drives the rejected logit so far negative
    that argmax|f| (the rule the embedded circuit implements) breaks even
    though the softmax rule stays perfect.

    Returns (model, state, epoch_records, stopped_early).
    """
    state = state or init_adam(model)
    records = []
    step = 0
    stopped = False
    for epoch, batches in enumerate(epoch_batches):
        losses, accs = [], []
        for feats, labels in batches:
            loss, grads, acc = mps_loss_and_gradient(model, feats, labels, cfg)
            model, state = adam_step(model, grads, state, hyper)
            losses.append(loss)
            accs.append(acc)
            step += 1
            if stop_loss is not None and probe is not None and loss <= stop_loss and step % check_every == 0:
                logits = mps_forward(model, probe[0], cfg)
                if np.all(predicted_labels(logits) == probe[1]):
                    stopped = True
                    break
        record = {"epoch": epoch, "loss": float(np.mean(losses)), "accuracy": float(np.mean(accs))}
        if probe is not None:
            logits = mps_forward(model, probe[0], cfg)
            record["probe_accuracy"] = float(np.mean(predicted_labels(logits) == probe[1]))
        records.append(record)
        if stopped:
            break
    return model, state, records, stopped


# --- canonical form -------------------------------------------------------


@dataclass
class CanonicalMps:
    """Left-to-right isometry gauge of an Mps.

    `isometries[0]` combines sites 1 and 2 with rows indexed by the two
    physical legs; each later block has rows (virtual-in, physical) and its
    two columns are orthonormal.  `center` is the residual 2x2 matrix pushed
    onto the label leg: logits = center^T @ (isometry chain applied to the
    feature vectors).
    """

    isometries: np.ndarray  # (L-1, 4, 2)
    center: np.ndarray  # (2, 2)
    base: Mps = field(repr=False, default=None)

    @property
    def length(self) -> int:
        return self.isometries.shape[0] + 1

    def isometry_defect(self) -> float:
        eye = np.eye(2)
        return max(
            float(np.linalg.norm(v.conj().T @ v - eye)) for v in self.isometries
        )


def right_canonicalize(m: Mps) -> CanonicalMps:
    """Sweep QR factorizations down the chain, pushing the residual to the label leg.

    The first block contracts sites 1 and 2 before factorizing; every later
    site absorbs the previous R on its incoming virtual leg.  Contracting the
    resulting isometries and finishing with `center` reproduces the original
    logits exactly (up to float roundoff).
    """
    length = m.length
    site2 = m.last if length == 2 else m.middles[0]
    block = np.einsum("si,tij->stj", m.first, site2).reshape(4, 2)
    isometries = np.empty((length - 1, 4, 2), dtype=np.complex128)
    try:
        q, r = qr_positive(block)
    except SingularMatrixError as err:
        raise CanonicalizationError(f"sites 1-2: {err}") from err
    isometries[0] = q
    rest = [m.middles[k] for k in range(1, length - 2)] + ([m.last] if length > 2 else [])
    for idx, tensor in enumerate(rest):
        site = idx + 3
        absorbed = np.einsum("ik,skj->isj", r, tensor).reshape(4, 2)
        try:
            q, r = qr_positive(absorbed)
        except SingularMatrixError as err:
            raise CanonicalizationError(f"site {site}: {err}") from err
        isometries[idx + 1] = q
    return CanonicalMps(isometries=isometries, center=r, base=m)


def canonical_forward(c: CanonicalMps, features: np.ndarray, cfg: FeatureMapConfig = MPS_FEATURES) -> np.ndarray:
    """Contract the isometry chain and the center; matches mps_forward."""
    single = np.asarray(features).ndim == 1
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if feats.shape[1] != c.length:
        raise ValueError(f"sample length {feats.shape[1]} != model length {c.length}")
    phis = feature_map_batch(feats, cfg)
    pair = np.einsum("bs,bt->bst", phis[:, 0, :], phis[:, 1, :]).reshape(-1, 4)
    v = pair @ c.isometries[0]
    for k in range(1, c.length - 1):
        pair = np.einsum("bi,bs->bis", v, phis[:, k + 1, :]).reshape(-1, 4)
        v = pair @ c.isometries[k]
    logits = v @ c.center
    return logits[0] if single else logits
