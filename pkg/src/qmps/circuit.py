"""Weighted-channel simulation of staircase qMPS classifiers.

A circuit is an ordered list of two-qubit gates plus a fixed 2x2 measurement
head.  At every gate the carry register occupies the first tensor factor and
the fresh input qubit the second; after the gate the first factor is measured
and its outcomes are kept with classical weights (1, w).  w = 0 reproduces
postselection on outcome 0, w = 1 the trace-preserving partial trace, and the
unnormalized combination interpolates smoothly in between.

The carry state is renormalized after every gate and the per-gate trace
ratios are tracked separately, so success probabilities stay accurate even
when they are exponentially small in the chain length.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .features import QMPS_FEATURES, FeatureMapConfig, feature_map_batch

PROB_CLAMP = 1e-300


class NumericalCorruptionError(ArithmeticError):
    """Raised when an intermediate state stops being positive semidefinite."""


@dataclass(frozen=True)
class WeightConfig:
    """Uniform measurement-outcome weights (1, w) applied at every gate."""

    w: float

    def __post_init__(self):
        if not (0.0 <= self.w <= 1.0):
            raise ValueError(f"w must lie in [0, 1], got {self.w}")


def _weight_value(w) -> float:
    value = w.w if isinstance(w, WeightConfig) else float(w)
    WeightConfig(value)
    return value


@dataclass(frozen=True)
class LossConfig:
    """Base loss on the class probabilities plus a success-rate regularizer.

    kind "nll" is -log p(label); "focal" damps well-classified samples by
    (1-p)^gamma.  reg_lambda multiplies -log Tr[tau], which pushes the
    optimizer toward high-survival circuits.
    """

    kind: str = "nll"
    gamma: float = 2.0
    reg_lambda: float = 0.1

    def __post_init__(self):
        if self.kind not in ("nll", "focal"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "focal" and self.gamma <= 0:
            raise ValueError("focal loss needs gamma > 0")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be nonnegative")


@dataclass
class PropagationResult:
    """Final unnormalized state, its trace, per-gate trace ratios, class probabilities."""

    tau: np.ndarray
    trace: float
    gate_traces: np.ndarray
    probs: np.ndarray
    log_trace: float


class QmpsCircuit:
    """Staircase circuit: (L-1) two-qubit gates and a 2x2 measurement head."""

    def __init__(self, gates: np.ndarray, head: np.ndarray | None = None, validate: bool = True):
        self.gates = np.asarray(gates, dtype=np.complex128).reshape(-1, 4, 4)
        self.head = np.eye(2, dtype=np.complex128) if head is None else np.asarray(head, dtype=np.complex128)
        if self.head.shape != (2, 2):
            raise ValueError("head must be 2x2")
        if validate:
            eye = np.eye(4)
            for k, u in enumerate(self.gates):
                defect = float(np.linalg.norm(u.conj().T @ u - eye))
                if defect > 1e-10:
                    raise ValueError(f"gate {k} is not unitary: ||U^dag U - I|| = {defect:.3e}")
            if not (np.all(np.isfinite(self.head.real)) and np.all(np.isfinite(self.head.imag))):
                raise ValueError("head has non-finite entries")
            cond = float(np.linalg.cond(self.head))
            if cond > 1e6:
                warnings.warn(f"measurement head is ill-conditioned (cond = {cond:.3e})", stacklevel=2)

    @property
    def length(self) -> int:
        return self.gates.shape[0] + 1

    def copy(self) -> "QmpsCircuit":
        return QmpsCircuit(self.gates.copy(), self.head.copy(), validate=False)


def swap_gate() -> np.ndarray:
    s = np.zeros((4, 4), dtype=np.complex128)
    s[0, 0] = s[3, 3] = 1.0
    s[1, 2] = s[2, 1] = 1.0
    return s


def all_swap_circuit(length: int, head: np.ndarray | None = None) -> QmpsCircuit:
    """The hand-built perfect trigger classifier: every gate a SWAP, head identity."""
    return QmpsCircuit(np.broadcast_to(swap_gate(), (length - 1, 4, 4)).copy(), head)


def _check_features(length: int, features: np.ndarray, cfg: FeatureMapConfig) -> np.ndarray:
    if cfg.normalization != "unit-l2":
        raise ValueError("circuit propagation requires unit-l2 feature normalization")
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if feats.shape[1] != length:
        raise ValueError(f"sample length {feats.shape[1]} != circuit length {length}")
    return feats


def _psd_check(rho: np.ndarray, gate_index: int):
    a = rho[..., 0, 0].real
    d = rho[..., 1, 1].real
    herm = np.abs(rho - np.swapaxes(rho, -1, -2).conj()).max()
    if herm > 1e-10:
        raise NumericalCorruptionError(f"state lost Hermiticity at gate {gate_index}: defect {herm:.3e}")
    disc = np.sqrt(((a - d) / 2.0) ** 2 + np.abs(rho[..., 0, 1]) ** 2)
    eig_min = (a + d) / 2.0 - disc
    worst = float(eig_min.min())
    if worst < -1e-10:
        raise NumericalCorruptionError(f"state lost positivity at gate {gate_index}: min eigenvalue {worst:.3e}")


def _forward(gates, head, phis, w, *, want_caches=False, psd_check=True):
    """Shared propagation core over a batch; carries are kept trace-normalized."""
    n = phis.shape[0]
    n_gates = gates.shape[0]
    rho = np.einsum("bi,bj->bij", phis[:, 0, :].astype(np.complex128), phis[:, 0, :].conj())
    ratios = np.empty((n, n_gates))
    caches = np.empty((n_gates + 1, n, 2, 2), dtype=np.complex128) if want_caches else None
    if want_caches:
        caches[0] = rho
    for k in range(n_gates):
        kraus = np.einsum("mjis,bs->bmji", gates[k].reshape(2, 2, 2, 2), phis[:, k + 1, :].astype(np.complex128))
        c0 = np.einsum("bji,bik,blk->bjl", kraus[:, 0], rho, kraus[:, 0].conj())
        c1 = np.einsum("bji,bik,blk->bjl", kraus[:, 1], rho, kraus[:, 1].conj())
        c = c0 + w * c1
        r = np.einsum("bii->b", c).real
        ratios[:, k] = r
        alive = r > 0.0
        rho = np.where(alive[:, None, None], c / np.where(alive, r, 1.0)[:, None, None], 0.0)
        if psd_check:
            _psd_check(rho, k)
        if want_caches:
            caches[k + 1] = rho
    with np.errstate(divide="ignore"):
        log_traces = np.where((ratios > 0.0).all(axis=1), np.log(np.maximum(ratios, PROB_CLAMP)).sum(axis=1), -np.inf)
    traces = np.exp(log_traces)
    hr = np.einsum("ai,bij,cj->bac", head, rho, head.conj())
    diag = np.maximum(np.einsum("baa->ba", hr).real, 0.0)
    total = diag.sum(axis=1)
    safe = total > 0.0
    probs = np.where(safe[:, None], diag / np.where(safe, total, 1.0)[:, None], 0.5)
    out = {"rho_final": rho, "ratios": ratios, "traces": traces, "log_traces": log_traces, "probs": probs}
    if want_caches:
        out["caches"] = caches
    return out


def propagate(q: QmpsCircuit, features, w, cfg: FeatureMapConfig = QMPS_FEATURES) -> PropagationResult:
    """Propagate a single sample through the weighted channel chain."""
    feats = _check_features(q.length, features, cfg)
    if feats.shape[0] != 1:
        raise ValueError("propagate takes one sample; use propagate_batch for many")
    wv = _weight_value(w)
    phis = feature_map_batch(feats, cfg)
    fwd = _forward(q.gates, q.head, phis, wv)
    trace = float(fwd["traces"][0])
    return PropagationResult(
        tau=fwd["rho_final"][0] * trace,
        trace=trace,
        gate_traces=fwd["ratios"][0],
        probs=fwd["probs"][0],
        log_trace=float(fwd["log_traces"][0]),
    )


def propagate_batch(q: QmpsCircuit, features, w, cfg: FeatureMapConfig = QMPS_FEATURES) -> dict:
    """Batched propagation; returns probs, traces, log_traces, ratios, rho_final."""
    feats = _check_features(q.length, features, cfg)
    phis = feature_map_batch(feats, cfg)
    return _forward(q.gates, q.head, phis, _weight_value(w))


def classify(q: QmpsCircuit, features, w, cfg: FeatureMapConfig = QMPS_FEATURES):
    """Class probabilities and the argmax label (ties resolve to label 0)."""
    result = propagate(q, features, w, cfg)
    return result.probs, int(np.argmax(result.probs))


def success_stats(result: PropagationResult, length: int):
    """Overall postselection survival and its per-gate geometric rate."""
    if length < 2:
        raise ValueError("need at least 2 sites")
    if result.trace <= 0.0:
        raise ValueError(f"nonpositive trace {result.trace}")
    p_success = result.trace
    p_srpg = float(np.exp(result.log_trace / (length - 1)))
    return p_success, p_srpg


def batch_success_rate(log_traces: np.ndarray, length: int) -> float:
    """Geometric-mean per-gate survival over a batch."""
    return float(np.exp(np.mean(log_traces) / (length - 1)))


def _base_loss_and_residual(probs, labels, loss_cfg: LossConfig):
    n = probs.shape[0]
    idx = np.arange(n)
    p = np.maximum(probs[idx, labels], PROB_CLAMP)
    if loss_cfg.kind == "nll":
        base = -np.log(p)
        dbase_dp = -1.0 / p
    else:
        one_minus = 1.0 - p
        base = -(one_minus**loss_cfg.gamma) * np.log(p)
        dbase_dp = loss_cfg.gamma * one_minus ** (loss_cfg.gamma - 1.0) * np.log(p) - one_minus**loss_cfg.gamma / p
    g_p = np.zeros_like(probs)
    g_p[idx, labels] = dbase_dp
    return base, g_p


def qmps_loss(q: QmpsCircuit, features, labels, w, loss_cfg: LossConfig = LossConfig(), cfg: FeatureMapConfig = QMPS_FEATURES) -> float:
    """Batch-mean loss: base loss on the class probabilities plus reg_lambda * (-log Tr[tau])."""
    loss, _aux = _loss_from_forward(propagate_batch(q, features, w, cfg), labels, loss_cfg)
    return loss


def _loss_from_forward(fwd, labels, loss_cfg: LossConfig):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != fwd["probs"].shape[0]:
        raise ValueError("features and labels disagree on batch size")
    if labels.shape[0] == 0:
        raise ValueError("empty batch")
    base, g_p = _base_loss_and_residual(fwd["probs"], labels, loss_cfg)
    reg = -loss_cfg.reg_lambda * fwd["log_traces"]
    loss = float(np.mean(base + reg))
    return loss, {"g_p": g_p, "base": base, "reg": reg}


def qmps_batch_eval(q: QmpsCircuit, features, labels, w, loss_cfg: LossConfig = LossConfig(), cfg: FeatureMapConfig = QMPS_FEATURES) -> dict:
    """Loss, accuracy, mean trace, and per-gate survival for a labeled batch."""
    fwd = propagate_batch(q, features, w, cfg)
    labels = np.asarray(labels, dtype=np.int64)
    loss, _ = _loss_from_forward(fwd, labels, loss_cfg)
    pred = np.argmax(fwd["probs"], axis=1)
    return {
        "loss": loss,
        "accuracy": float(np.mean(pred == labels)),
        "mean_trace": float(np.mean(fwd["traces"])),
        "p_srpg": batch_success_rate(fwd["log_traces"], q.length),
        "probs": fwd["probs"],
    }


def qmps_loss_and_gradient(
    q: QmpsCircuit,
    features,
    labels,
    w,
    loss_cfg: LossConfig = LossConfig(),
    cfg: FeatureMapConfig = QMPS_FEATURES,
):
    """Loss plus its Euclidean gradient with respect to every gate.

    One forward pass caches the normalized carries, one backward pass pulls
    the loss sensitivity through the adjoint of each weighted channel.  The
    gradient treats each gate as an unconstrained complex matrix, reported as
    G = dL/dRe + i dL/dIm; project onto the tangent space before stepping.
    """
    feats = _check_features(q.length, features, cfg)
    labels = np.asarray(labels, dtype=np.int64)
    wv = _weight_value(w)
    phis = feature_map_batch(feats, cfg)
    fwd = _forward(q.gates, q.head, phis, wv, want_caches=True)
    loss, aux = _loss_from_forward(fwd, labels, loss_cfg)
    probs, g_p = fwd["probs"], aux["g_p"]
    info = {"probs": probs, "traces": fwd["traces"], "log_traces": fwd["log_traces"]}

    n = feats.shape[0]
    n_gates = q.gates.shape[0]
    caches, ratios = fwd["caches"], fwd["ratios"]
    head = q.head

    # residual on the diagonal of head @ rho @ head^dag, through the prob normalization
    hr = np.einsum("ai,bij,cj->bac", head, caches[-1], head.conj())
    total = np.maximum(np.einsum("baa->ba", hr).real.sum(axis=1), PROB_CLAMP)
    g_d = (g_p - (g_p * probs).sum(axis=1, keepdims=True)) / total[:, None]
    lam = np.einsum("ai,ba,aj->bij", head.conj(), g_d, head)

    eye = np.eye(2)
    weights = (1.0, wv)
    grads = np.zeros((n_gates, 4, 4), dtype=np.complex128)
    for k in range(n_gates - 1, -1, -1):
        r = ratios[:, k]
        rho_in, rho_out = caches[k], caches[k + 1]
        lam_dot = np.einsum("bij,bji->b", lam, rho_out).real
        xi = (lam - (lam_dot + loss_cfg.reg_lambda)[:, None, None] * eye) / r[:, None, None]
        phi = phis[:, k + 1, :].astype(np.complex128)
        sigma = np.einsum("bik,bs,bt->biskt", rho_in, phi, phi.conj()).reshape(n, 4, 4)
        omega = np.zeros((n, 4, 4), dtype=np.complex128)
        omega[:, :2, :2] = weights[0] * xi
        omega[:, 2:, 2:] = weights[1] * xi
        grads[k] = 2.0 * np.einsum("bij,jk,bkl->il", omega, q.gates[k], sigma) / n
        kraus = np.einsum("mjis,bs->bmji", q.gates[k].reshape(2, 2, 2, 2), phi)
        lam = weights[0] * np.einsum("bji,bjl,blk->bik", kraus[:, 0].conj(), xi, kraus[:, 0]) + weights[1] * np.einsum(
            "bji,bjl,blk->bik", kraus[:, 1].conj(), xi, kraus[:, 1]
        )
    return loss, grads, info


def qmps_gradient(q: QmpsCircuit, features, labels, w, loss_cfg: LossConfig = LossConfig(), cfg: FeatureMapConfig = QMPS_FEATURES) -> np.ndarray:
    """Euclidean gradient of the batch loss, one 4x4 complex matrix per gate."""
    _, grads, _ = qmps_loss_and_gradient(q, features, labels, w, loss_cfg, cfg)
    return grads


def head_gradient(q: QmpsCircuit, features, labels, w, loss_cfg: LossConfig = LossConfig(), cfg: FeatureMapConfig = QMPS_FEATURES) -> np.ndarray:
    """Euclidean gradient of the batch loss with respect to the 2x2 head."""
    fwd = propagate_batch(q, features, w, cfg)
    labels = np.asarray(labels, dtype=np.int64)
    _, aux = _loss_from_forward(fwd, labels, loss_cfg)
    probs, g_p = fwd["probs"], aux["g_p"]
    hr = np.einsum("ai,bij,cj->bac", q.head, fwd["rho_final"], q.head.conj())
    total = np.maximum(np.einsum("baa->ba", hr).real.sum(axis=1), PROB_CLAMP)
    g_d = (g_p - (g_p * probs).sum(axis=1, keepdims=True)) / total[:, None]
    return 2.0 * np.einsum("ba,ai,bij->aj", g_d, q.head, fwd["rho_final"]) / len(labels)
