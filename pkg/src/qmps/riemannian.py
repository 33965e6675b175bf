"""Adam on products of U(4).

Euclidean gradients are projected to the Lie algebra, the adaptive moments
live there too (so vector transport is the identity), and every update
returns to the manifold through the exact exponential retraction.  The
second moment is a single scalar per gate, which keeps the rescaled step
inside the tangent space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import dagger, exp_skew, qr_positive, unitarity_defect


@dataclass(frozen=True)
class RAdamHyper:
    lr: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class RAdamState:
    m: np.ndarray  # (n_gates, 4, 4) skew-Hermitian first moments
    v: np.ndarray  # (n_gates,) nonnegative scalar second moments
    t: int = 0
    renorm_count: int = 0


def init_radam(n_gates: int, dim: int = 4) -> RAdamState:
    return RAdamState(m=np.zeros((n_gates, dim, dim), dtype=np.complex128), v=np.zeros(n_gates))


def project_tangent(u: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Lie-algebra representation of the Riemannian gradient: skew(U^dag G)."""
    x = dagger(u) @ g
    return (x - dagger(x)) / 2.0


def riemannian_grad_norm(gates: np.ndarray, grads: np.ndarray) -> float:
    """Frobenius norm of the projected gradient across all gates."""
    total = 0.0
    for u, g in zip(gates, grads):
        total += float(np.linalg.norm(project_tangent(u, g)) ** 2)
    return float(np.sqrt(total))


def radam_step(gates: np.ndarray, grads: np.ndarray, state: RAdamState, hyper: RAdamHyper = RAdamHyper()):
    """One Adam update per gate; returns (new gates, new state).

    Drifted gates (unitarity defect above 1e-8) are snapped back with the
    sign-fixed QR and counted in state.renorm_count; with the exponential
    retraction this should never fire.
    """
    gates = np.asarray(gates, dtype=np.complex128)
    grads = np.asarray(grads, dtype=np.complex128)
    if gates.shape != grads.shape:
        raise ValueError(f"shape mismatch: gates {gates.shape}, grads {grads.shape}")
    t = state.t + 1
    new_gates = np.empty_like(gates)
    new_m = np.empty_like(state.m)
    new_v = np.empty_like(state.v)
    renorms = state.renorm_count
    for k in range(gates.shape[0]):
        xi = project_tangent(gates[k], grads[k])
        mk = hyper.beta1 * state.m[k] + (1.0 - hyper.beta1) * xi
        vk = hyper.beta2 * state.v[k] + (1.0 - hyper.beta2) * float(np.linalg.norm(xi) ** 2)
        mhat = mk / (1.0 - hyper.beta1**t)
        vhat = vk / (1.0 - hyper.beta2**t)
        step = -hyper.lr * mhat / (np.sqrt(vhat) + hyper.eps)
        u = gates[k] @ exp_skew(step, tol=1e-8)
        if unitarity_defect(u) > 1e-8:
            u, _ = qr_positive(u)
            renorms += 1
        new_gates[k] = u
        new_m[k] = mk
        new_v[k] = vk
    return new_gates, RAdamState(m=new_m, v=new_v, t=t, renorm_count=renorms)
