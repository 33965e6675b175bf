"""Schedule-driven removal of postselection.

The measurement weight ramps from 0 to 1 along a predefined schedule; at
each value the circuit is re-optimized until an inner convergence criterion
fires, and every iteration is logged.  The geometric ramp grows slowly until
the weight clears a switch point, then accelerates; raising w deforms the
loss landscape gently enough that the optimizer tracks the minimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import LossConfig, QmpsCircuit, batch_success_rate, propagate_batch, qmps_loss_and_gradient
from .data import Dataset
from .features import QMPS_FEATURES, FeatureMapConfig
from .riemannian import RAdamHyper, init_radam, radam_step, riemannian_grad_norm


class EncodingFailure(ArithmeticError):
    """Raised when the inner optimization produces a non-finite loss."""


@dataclass(frozen=True)
class Schedule:
    """Strictly increasing weight values from 0 to 1 plus inner-loop knobs."""

    values: tuple
    inner_max_iters: int = 500
    inner_loss_target: float = 0.05
    patience: int = 50

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) < 2 or vals[0] != 0.0 or vals[-1] != 1.0:
            raise ValueError("schedule must start at exactly 0 and end at exactly 1")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("schedule values must be strictly increasing")
        if self.inner_max_iters < 1 or self.patience < 1 or self.inner_loss_target <= 0:
            raise ValueError("inner-loop knobs must be positive")


def make_schedule(
    w_init: float = 0.002,
    slow_factor: float = 1.25,
    fast_factor: float = 1.6,
    switch_point: float = 0.02,
    **inner,
) -> Schedule:
    """Geometric ramp: multiply by slow_factor below the switch point, then by fast_factor.

    The last value is clamped to exactly 1; the first stored training value
    is w_init (the leading 0 marks the untouched postselected start point).
    """
    if not (0.0 < w_init < switch_point < 1.0):
        raise ValueError("need 0 < w_init < switch_point < 1")
    if slow_factor <= 1.0 or fast_factor <= 1.0:
        raise ValueError("ramp factors must exceed 1")
    values = [0.0]
    cur = w_init
    while True:
        values.append(min(cur, 1.0))
        if cur >= 1.0:
            break
        cur *= slow_factor if cur < switch_point else fast_factor
    return Schedule(values=tuple(values), **inner)


@dataclass
class EncodingTrace:
    """Per-iteration records plus a final summary; optionally streamed to a sink."""

    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def append(self, record: dict, sink=None):
        self.records.append(record)
        if sink is not None:
            sink(record)

    def weights(self) -> np.ndarray:
        return np.array([r["w"] for r in self.records if r["phase"] == "train"])


class TriggerBatchSource:
    """Fresh trigger batches, one child stream per draw index."""

    def __init__(self, length: int, batch_size: int, seed: int):
        self.length = length
        self.batch_size = batch_size
        self.seed = seed
        self._count = 0

    def next_batch(self):
        rng = np.random.default_rng([self.seed, self._count])
        self._count += 1
        bits = rng.integers(0, 2, size=(self.batch_size, self.length)).astype(np.float64)
        return bits, bits[:, 0].astype(np.int64)

    def probe_batch(self, n: int = 1024):
        # distinct child stream, never reused by next_batch
        rng = np.random.default_rng([self.seed, 986743])
        bits = rng.integers(0, 2, size=(n, self.length)).astype(np.float64)
        return bits, bits[:, 0].astype(np.int64)


class DatasetBatchSource:
    """Seeded shuffled minibatch cycling over a fixed dataset."""

    def __init__(self, dataset: Dataset, batch_size: int, seed: int):
        self.dataset = dataset
        self.batch_size = min(batch_size, len(dataset))
        self.rng = np.random.default_rng(seed)
        self._order = self.rng.permutation(len(dataset))
        self._pos = 0

    def next_batch(self):
        if self._pos + self.batch_size > len(self._order):
            self._order = self.rng.permutation(len(self.dataset))
            self._pos = 0
        idx = self._order[self._pos : self._pos + self.batch_size]
        self._pos += self.batch_size
        return self.dataset.features[idx], self.dataset.labels[idx]

    def probe_batch(self, n: int = 1024):
        n = min(n, len(self.dataset))
        return self.dataset.features[:n], self.dataset.labels[:n]


class FixedBatchSource:
    """Returns the same batch every time; useful for deterministic tests."""

    def __init__(self, features, labels):
        self.features = np.asarray(features, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)

    def next_batch(self):
        return self.features, self.labels

    def probe_batch(self, n: int = 1024):
        return self.features, self.labels


def _evaluate(circuit, feats, labels, w, loss_cfg, fm_cfg):
    fwd = propagate_batch(circuit, feats, w, fm_cfg)
    pred = np.argmax(fwd["probs"], axis=1)
    idx = np.arange(len(labels))
    p = np.maximum(fwd["probs"][idx, labels], 1e-300)
    if loss_cfg.kind == "nll":
        base = -np.log(p)
    else:
        base = -((1.0 - p) ** loss_cfg.gamma) * np.log(p)
    loss = float(np.mean(base - loss_cfg.reg_lambda * fwd["log_traces"]))
    return {
        "loss": loss,
        "accuracy": float(np.mean(pred == labels)),
        "mean_trace": float(np.mean(fwd["traces"])),
        "p_srpg": batch_success_rate(fwd["log_traces"], circuit.length),
    }


def run_adiabatic(
    circuit: QmpsCircuit,
    source,
    schedule: Schedule,
    opt_hyper: RAdamHyper = RAdamHyper(),
    loss_cfg: LossConfig = LossConfig(),
    fm_cfg: FeatureMapConfig = QMPS_FEATURES,
    retention_tol: float = 0.02,
    retention_ref: float | None = None,
    start_w: float | None = None,
    sink=None,
):
    """Anneal the measurement weight to 1 while re-optimizing the gates.

    At each scheduled weight the inner loop runs until the batch loss reaches
    the target, `patience` evaluations pass without improvement, or the
    iteration cap fires; each iteration appends a trace record.  A held-out
    probe batch is scored after every inner loop, and the run is flagged if
    probe accuracy ever drops more than `retention_tol` below its value at
    the postselected start.  Returns (circuit, trace).
    """
    probe_feats, probe_labels = source.probe_batch()
    trace = EncodingTrace()
    gates = circuit.gates.copy()
    head = circuit.head
    state = init_radam(gates.shape[0])
    step = 0

    ref_eval = _evaluate(QmpsCircuit(gates, head, validate=False), probe_feats, probe_labels, 0.0, loss_cfg, fm_cfg)
    if retention_ref is None:
        retention_ref = ref_eval["accuracy"]
    trace.append({"phase": "probe", "step": step, "w": 0.0, **ref_eval}, sink)

    retention_held = True
    train_values = [v for v in schedule.values if v > 0.0 and (start_w is None or v > start_w)]
    for w in train_values:
        best = math.inf
        stale = 0
        for _ in range(schedule.inner_max_iters):
            feats, labels = source.next_batch()
            current = QmpsCircuit(gates, head, validate=False)
            loss, grads, info = qmps_loss_and_gradient(current, feats, labels, w, loss_cfg, fm_cfg)
            acc = float(np.mean(np.argmax(info["probs"], axis=1) == labels))
            record = {
                "phase": "train",
                "step": step,
                "w": w,
                "loss": loss,
                "accuracy": acc,
                "mean_trace": float(np.mean(info["traces"])),
                "p_srpg": batch_success_rate(info["log_traces"], current.length),
                "grad_norm": riemannian_grad_norm(gates, grads),
            }
            trace.append(record, sink)
            step += 1
            if not math.isfinite(loss):
                trace.summary = {"failed": True, "final_w": w, "steps": step}
                raise EncodingFailure(f"non-finite loss {loss} at w = {w}")
            if loss <= schedule.inner_loss_target:
                break
            if loss < best - 1e-12:
                best = loss
                stale = 0
            else:
                stale += 1
                if stale >= schedule.patience:
                    break
            gates, state = radam_step(gates, grads, state, opt_hyper)
        probe = _evaluate(QmpsCircuit(gates, head, validate=False), probe_feats, probe_labels, w, loss_cfg, fm_cfg)
        trace.append({"phase": "probe", "step": step, "w": w, **probe}, sink)
        if probe["accuracy"] < retention_ref - retention_tol:
            retention_held = False

    final = QmpsCircuit(gates, head, validate=False)
    final_probe = _evaluate(final, probe_feats, probe_labels, 1.0, loss_cfg, fm_cfg)
    trace.summary = {
        "failed": False,
        "final_w": 1.0,
        "steps": step,
        "retention_held": retention_held,
        "retention_ref": retention_ref,
        "final_accuracy": final_probe["accuracy"],
        "final_loss": final_probe["loss"],
        "final_p_srpg": final_probe["p_srpg"],
        "final_mean_trace": final_probe["mean_trace"],
    }
    if sink is not None:
        sink({"phase": "summary", **trace.summary})
    return final, trace
