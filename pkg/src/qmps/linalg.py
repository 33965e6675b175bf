"""Dense complex linear algebra helpers.

Everything downstream (Haar sampling, canonicalization, gate embedding,
Riemannian retraction) runs through the sign-fixed QR in this module, so
all of it is deterministic for a fixed seed.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "SingularMatrixError",
    "IsometryError",
    "dagger",
    "frob",
    "unitarity_defect",
    "qr_positive",
    "haar_unitary",
    "haar_unitaries",
    "unitary_completion",
    "exp_skew",
]


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a QR factor has a (near-)zero diagonal entry."""


class IsometryError(ValueError):
    """Raised when an input expected to satisfy V^dag V = I does not."""


def dagger(a: np.ndarray) -> np.ndarray:
    return a.conj().T


def frob(a: np.ndarray) -> float:
    return float(np.linalg.norm(a))


def unitarity_defect(u: np.ndarray) -> float:
    """Frobenius distance of U^dag U from the identity."""
    u = np.asarray(u)
    return frob(dagger(u) @ u - np.eye(u.shape[1]))


def qr_positive(m: np.ndarray, tol: float = 1e-12):
    """QR factorization with the diagonal of R real and strictly positive.

    Accepts square or tall input; tall input gets the reduced factorization
    (Q with orthonormal columns, R square upper triangular).  The positive
    diagonal pins down the otherwise free column phases, which keeps Haar
    sampling and MPS canonicalization reproducible per seed.

    Raises SingularMatrixError naming the first offending diagonal index if
    the input is rank deficient relative to `tol`.
    """
    m = np.asarray(m, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] < m.shape[1]:
        raise ValueError(f"expected a square or tall matrix, got shape {m.shape}")
    q, r = np.linalg.qr(m)
    d = np.diagonal(r).copy()
    scale = max(1.0, float(np.abs(d).max(initial=0.0)))
    small = np.abs(d) <= tol * scale
    if small.any():
        j = int(np.argmax(small))
        raise SingularMatrixError(
            f"rank-deficient input: |R[{j},{j}]| = {abs(d[j]):.3e} <= {tol:g} * {scale:g}"
        )
    phases = d / np.abs(d)
    q = q * phases[np.newaxis, :]
    r = phases.conj()[:, np.newaxis] * r
    np.fill_diagonal(r, np.abs(d))
    return q, r


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one Haar-distributed unitary from U(dim).

    Ginibre sample followed by the sign-fixed QR; forcing diag(R) > 0 is what
    makes the QR output actually Haar rather than Haar-up-to-phases.
    """
    if not isinstance(dim, (int, np.integer)) or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, _ = qr_positive(z)
    return q


def haar_unitaries(dim: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized stack of `n` independent Haar unitaries, shape (n, dim, dim)."""
    if not isinstance(dim, (int, np.integer)) or dim < 1:
        raise ValueError(f"dim must be a positive integer, got {dim!r}")
    if n < 0:
        raise ValueError("n must be nonnegative")
    z = (rng.standard_normal((n, dim, dim)) + 1j * rng.standard_normal((n, dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.einsum("nii->ni", r)
    q = q * (d / np.abs(d))[:, np.newaxis, :]
    return q


def unitary_completion(v: np.ndarray, rng: np.random.Generator, tol: float = 1e-10) -> np.ndarray:
    """Embed a 4x2 isometry V into a 4x4 unitary gate U.

    The returned U satisfies <i,s| U^dag |0,j> = V[(i,s), j] for all i, s, j:
    the two columns of U^dag indexed by the measured register being |0> are
    exactly the columns of V.  The remaining two columns are an orthonormal
    completion of a seeded random complement, so repeated embeddings with
    different seeds exercise the gauge freedom that postselected histories
    never see.
    """
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 2 or v.shape[0] < v.shape[1]:
        raise ValueError(f"expected a tall isometry, got shape {v.shape}")
    defect = frob(dagger(v) @ v - np.eye(v.shape[1]))
    if defect > tol:
        raise IsometryError(f"input is not an isometry: ||V^dag V - I|| = {defect:.3e} > {tol:g}")
    rows, cols = v.shape
    g = (rng.standard_normal((rows, rows - cols)) + 1j * rng.standard_normal((rows, rows - cols))) / np.sqrt(2.0)
    q, _ = qr_positive(np.hstack([v, g]))
    # diag(R) > 0 and the V columns already being orthonormal force the first
    # `cols` columns of Q to reproduce V exactly.
    return dagger(q)


def exp_skew(a: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Matrix exponential of a skew-Hermitian matrix, unitary by construction.

    Uses the eigendecomposition of the Hermitian matrix -iA, which is exact
    to machine precision at the 4x4 sizes this package cares about.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    defect = frob(a + dagger(a))
    if defect > tol:
        raise ValueError(f"input is not skew-Hermitian: ||A + A^dag|| = {defect:.3e} > {tol:g}")
    h = -1j * a
    h = (h + dagger(h)) / 2.0
    lam, vec = np.linalg.eigh(h)
    return (vec * np.exp(1j * lam)) @ dagger(vec)
