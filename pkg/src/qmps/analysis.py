"""Numerical verification harness.

Covers the three exponential/flat scaling statements the package is built
around: the output-state contrast of Haar-random staircase circuits (and its
gate Jacobian) decays geometrically at rate 6/15 per extra site, the
gradients of the stacked-identity classical chain stay O(1), and the
postselection survival of an embedded perfect trigger classifier is exactly
2^-(L-1) for every input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sstats

from .circuit import propagate_batch
from .data import gen_trigger_pairs
from .embedding import embed
from .features import QMPS_FEATURES
from .linalg import haar_unitaries
from .mps import MpsInitConfig, init_stacked_identity, mps_loss_and_gradient, perfect_trigger_mps, right_canonicalize

DECAY_RATE = 6.0 / 15.0


@dataclass
class MomentRecursion:
    """Second-moment sequences under one Haar gate per step.

    sq_of_trace tracks E[(Tr D)^2] and is conserved (the channel preserves
    the trace); trace_of_sq tracks E[Tr(D^2)] and contracts by 6/15 of the
    running total each step.
    """

    sq_of_trace: np.ndarray
    trace_of_sq: np.ndarray


def moment_recursion(length: int) -> MomentRecursion:
    """Iterate the two-moment recursion from (0, 1) through L-1 gates."""
    if length < 1:
        raise ValueError("length must be >= 1")
    a = np.empty(length)
    b = np.empty(length)
    a[0], b[0] = 0.0, 1.0
    for k in range(length - 1):
        a[k + 1] = a[k]
        b[k + 1] = DECAY_RATE * (a[k] + b[k])
    return MomentRecursion(sq_of_trace=a, trace_of_sq=b)


def analytic_variance(length: int) -> float:
    """Normalized variance scale of the final-state contrast: (6/15)^(L-1)."""
    return float(moment_recursion(length).trace_of_sq[-1])


def analytic_entry_variance(length: int) -> np.ndarray:
    """Per-entry variance of the 2x2 contrast matrix.

    The trial distribution is invariant under conjugating the carry with any
    U(2) element, so the second-moment tensor is spanned by identity and
    swap; with a traceless contrast that pins the diagonal entries at B/3 and
    the off-diagonal ones at 2B/3, where B is `analytic_variance`.
    """
    b = analytic_variance(length)
    return np.array([[b / 3.0, 2.0 * b / 3.0], [2.0 * b / 3.0, b / 3.0]])


@dataclass
class DeltaRhoStats:
    """Per-length Monte Carlo records for the state contrast and its gate Jacobian."""

    records: list = field(default_factory=list)

    def lengths(self) -> np.ndarray:
        return np.array([r["length"] for r in self.records])

    def column(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records])


def _tail_zero_kraus(gates: np.ndarray) -> np.ndarray:
    """Kraus pair for a fresh qubit fixed to |0>: K[t, m, j, i] = U[(m,j),(i,0)]."""
    return gates.reshape(-1, 2, 2, 2, 2)[..., 0]


def _apply_pair(kraus: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.einsum("tji,tik,tlk->tjl", kraus[:, 0], x, kraus[:, 0].conj())
    out += np.einsum("tji,tik,tlk->tjl", kraus[:, 1], x, kraus[:, 1].conj())
    return out


def _delta_rho_and_jacobian(gates: np.ndarray, designated: int):
    """Final contrast (T,2,2) and its Euclidean Jacobian (T,4,4,2,2) at one gate.

    Both branches share every gate and every fresh |0> qubit, so the contrast
    can be propagated directly from its initial value diag(1, -1).
    """
    n_trials, n_gates = gates.shape[0], gates.shape[1]
    delta = np.broadcast_to(np.diag([1.0 + 0j, -1.0 + 0j]), (n_trials, 2, 2)).copy()
    delta_at_designated = None
    for k in range(n_gates):
        if k == designated:
            delta_at_designated = delta.copy()
        delta = _apply_pair(_tail_zero_kraus(gates[:, k]), delta)

    # sigma = kron(delta_in, |0><0|); jac[a, b] = partial-trace of E_ab sigma U^dag
    u = gates[:, designated]
    sigma = np.zeros((n_trials, 4, 4), dtype=np.complex128)
    sigma[:, 0::2, 0::2] = delta_at_designated
    s = np.einsum("tab,tcb->tac", sigma, u.conj()).reshape(n_trials, 4, 2, 2)
    jac = np.zeros((n_trials, 4, 4, 2, 2), dtype=np.complex128)
    for a in range(4):
        jac[:, a, :, a % 2, :] = s[:, :, a // 2, :]
    for k in range(designated + 1, n_gates):
        kraus = _tail_zero_kraus(gates[:, k])
        flat = jac.reshape(n_trials, 16, 2, 2)
        flat = np.einsum("tji,tnik,tlk->tnjl", kraus[:, 0], flat, kraus[:, 0].conj()) + np.einsum(
            "tji,tnik,tlk->tnjl", kraus[:, 1], flat, kraus[:, 1].conj()
        )
        jac = flat.reshape(n_trials, 4, 4, 2, 2)
    return delta, jac


def mc_delta_rho_stats(
    l_values,
    trials: int,
    rng: np.random.Generator,
    designated_gate: int | str = "last",
    chunk: int = 512,
) -> DeltaRhoStats:
    """Sample Haar staircases and record contrast / Jacobian moments per length.

    Inputs differ only in the first qubit, every tail qubit is |0>, the head
    is the identity, and the channel runs trace-preserving (w = 1).  Entry
    means and variances come with standard errors so the caller can do
    3-sigma comparisons against the analytic recursion.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for meaningful errors")
    stats = DeltaRhoStats()
    for length in l_values:
        if length < 2:
            raise ValueError("lengths must be >= 2")
        n_gates = length - 1
        designated = n_gates - 1 if designated_gate == "last" else int(designated_gate)
        if not (0 <= designated < n_gates):
            raise ValueError(f"designated gate {designated} out of range for length {length}")
        deltas = np.empty((trials, 2, 2), dtype=np.complex128)
        jac_sq = np.empty((trials, 4, 4, 2, 2))
        done = 0
        for sub in rng.spawn(int(np.ceil(trials / chunk))):
            m = min(chunk, trials - done)
            gates = haar_unitaries(4, m * n_gates, sub).reshape(m, n_gates, 4, 4)
            d, j = _delta_rho_and_jacobian(gates, designated)
            deltas[done : done + m] = d
            jac_sq[done : done + m] = np.abs(j) ** 2
            done += m
        sq = np.abs(deltas) ** 2
        jac_fro = jac_sq.reshape(trials, -1).sum(axis=1)
        rec = {
            "length": int(length),
            "trials": int(trials),
            "designated_gate": int(designated),
            "entry_mean_re": deltas.real.mean(axis=0).tolist(),
            "entry_mean_im": deltas.imag.mean(axis=0).tolist(),
            "entry_mean_se_re": (deltas.real.std(axis=0, ddof=1) / np.sqrt(trials)).tolist(),
            "entry_mean_se_im": (deltas.imag.std(axis=0, ddof=1) / np.sqrt(trials)).tolist(),
            "entry_var": sq.mean(axis=0).tolist(),
            "entry_var_se": (sq.std(axis=0, ddof=1) / np.sqrt(trials)).tolist(),
            "fro_sq_mean": float(sq.reshape(trials, -1).sum(axis=1).mean()),
            "fro_sq_se": float(sq.reshape(trials, -1).sum(axis=1).std(ddof=1) / np.sqrt(trials)),
            "grad_fro_sq_mean": float(jac_fro.mean()),
            "grad_fro_sq_se": float(jac_fro.std(ddof=1) / np.sqrt(trials)),
        }
        stats.records.append(rec)
    return stats


@dataclass
class FitResult:
    slope: float
    intercept: float
    stderr: float
    ci95: tuple


def fit_loglinear(x: np.ndarray, y: np.ndarray) -> FitResult:
    """Ordinary least squares of log(y) on x with a residual-based 95% interval."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(x)) < 2:
        raise ValueError("degenerate fit: all abscissae equal")
    if len(np.unique(x)) < 4:
        raise ValueError("need at least 4 distinct lengths to fit a decay rate")
    ly = np.log(y)
    xc = x - x.mean()
    slope = float(np.dot(xc, ly - ly.mean()) / np.dot(xc, xc))
    intercept = float(ly.mean() - slope * x.mean())
    resid = ly - (intercept + slope * x)
    dof = len(x) - 2
    if dof > 0:
        se = float(np.sqrt(resid @ resid / dof / np.dot(xc, xc)))
        half = float(sstats.t.ppf(0.975, dof)) * se
    else:
        se, half = 0.0, 0.0
    return FitResult(slope=slope, intercept=intercept, stderr=se, ci95=(slope - half, slope + half))


def fit_decay_rate(stats: DeltaRhoStats, quantity: str = "state") -> FitResult:
    """Fit the log of the mean squared Frobenius norm against the chain length."""
    key = {"state": "fro_sq_mean", "gradient": "grad_fro_sq_mean"}[quantity]
    return fit_loglinear(stats.lengths(), stats.column(key))


def postselection_scan(l_values, n_inputs: int = 100, seed: int = 0):
    """Embedded perfect trigger classifier: survival probability per length.

    Reports the mean survival over random bitstring inputs and the spread
    (max minus min), which should sit at float-roundoff scale.
    """
    rows = []
    rng = np.random.default_rng(seed)
    for length in l_values:
        if length < 2:
            raise ValueError("lengths must be >= 2")
        circuit = embed(right_canonicalize(perfect_trigger_mps(length)), seed=seed)
        bits = rng.integers(0, 2, size=(n_inputs, length)).astype(np.float64)
        traces = propagate_batch(circuit, bits, w=0.0, cfg=QMPS_FEATURES)["traces"]
        rows.append(
            {
                "length": int(length),
                "probability": float(traces.mean()),
                "spread": float(traces.max() - traces.min()),
                "expected": 2.0 ** -(length - 1),
            }
        )
    return rows


def mps_gradnorm_scan(l_values, eps_prime: float, trials: int, batch_pairs: int, rng: np.random.Generator):
    """Gradient-size statistics of stacked-identity chains on balanced trigger batches.

    For each length: the mean absolute entry of the first-site gradient
    (which sits near 1/4 regardless of L) and the Frobenius norms of the
    interior-site gradients (O(eps_prime), flat in L).  Medians and quartiles
    over independent (model, batch) draws.
    """
    rows = []
    for length in l_values:
        first_comp = np.empty(trials)
        interior = np.empty(trials)
        for t, sub in enumerate(rng.spawn(trials)):
            seed = int(sub.integers(0, 2**31 - 1))
            model = init_stacked_identity(length, MpsInitConfig(eps_prime=eps_prime, seed=seed))
            batch = gen_trigger_pairs(length, batch_pairs, sub)
            _, grads, _ = mps_loss_and_gradient(model, batch.features, batch.labels)
            first_comp[t] = np.abs(grads["first"]).mean()
            norms = np.linalg.norm(grads["middles"].reshape(length - 2, -1), axis=1)
            interior[t] = np.median(norms)
        q25, q50, q75 = np.percentile(first_comp, [25, 50, 75])
        i25, i50, i75 = np.percentile(interior, [25, 50, 75])
        rows.append(
            {
                "length": int(length),
                "trials": int(trials),
                "first_component_median": float(q50),
                "first_component_q25": float(q25),
                "first_component_q75": float(q75),
                "interior_norm_median": float(i50),
                "interior_norm_q25": float(i25),
                "interior_norm_q75": float(i75),
            }
        )
    return rows
