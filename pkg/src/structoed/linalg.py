"""Dense numerical kernels: truncated SVD, pivoted QR, the EIG functional
``psi``, seeded Gaussian sketches and symmetric square roots."""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericalError",
    "TruncatedSvd",
    "cpqr_pivots",
    "derive_seed",
    "gaussian_sketch",
    "gks_certificate",
    "make_rng",
    "psi",
    "reduced_factor",
    "sym_sqrt",
    "truncated_svd",
]


class NumericalError(ArithmeticError):
    """A factorization or solve failed on numerically degenerate input."""


def derive_seed(seed: int, tag: str) -> np.random.SeedSequence:
    """Seed sequence for the stream ``(seed, tag)``.

    The tag is folded in as the spawn key ``crc32(tag)``, so streams for
    different purposes never depend on the order in which they are drawn.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(tag.encode()),))


def make_rng(seed: int, tag: str) -> np.random.Generator:
    """PCG64 generator for the stream ``(seed, tag)``."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, tag)))


@dataclass(frozen=True)
class TruncatedSvd:
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray


def truncated_svd(a, k: int) -> TruncatedSvd:
    """Top-``k`` singular triplets, taken from a full thin SVD."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or not 1 <= k <= min(a.shape):
        raise ValueError(f"rank {k} out of range for a matrix of shape {a.shape}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return TruncatedSvd(U=u[:, :k], sigma=s[:k], V=vt[:k].T)


def cpqr_pivots(m, k: int) -> list[int]:
    """First ``k`` pivots of Businger-Golub column-pivoted QR.

    Each step takes the column with the largest residual 2-norm; ties go to
    the lowest column index. Residual norms are recomputed after every
    projection instead of downdated, so exact ties survive rounding.
    """
    r = np.array(m, dtype=float)
    if r.ndim != 2 or not 1 <= k <= r.shape[1]:
        raise ValueError(f"cannot take {k} pivots from a matrix of shape {np.shape(m)}")
    pivots: list[int] = []
    taken = np.zeros(r.shape[1], dtype=bool)
    for _ in range(k):
        norms = np.einsum("ij,ij->j", r, r)
        norms[taken] = -np.inf
        p = int(np.argmax(norms))
        pivots.append(p)
        taken[p] = True
        nrm = np.sqrt(norms[p])
        if nrm > 0.0:
            q = r[:, p] / nrm
            # two passes keep the residual orthogonal to the chosen columns
            r -= np.outer(q, q @ r)
            r -= np.outer(q, q @ r)
    return pivots


def psi(a) -> float:
    """``logdet(I + A A^T) = sum_i log(1 + sigma_i(A)^2)``."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    if not np.all(np.isfinite(a)):
        raise ValueError("psi of a matrix with non-finite entries")
    s = np.linalg.svd(a, compute_uv=False)
    return float(np.sum(np.log1p(s * s)))


def gaussian_sketch(r: int, n: int, seed: int, tag: str = "sketch") -> np.ndarray:
    """``r x n`` matrix with i.i.d. N(0, 1/r) entries from stream ``(seed, tag)``."""
    if r < 1 or n < 1:
        raise ValueError(f"sketch shape ({r}, {n}) must be positive")
    return make_rng(seed, tag).standard_normal((r, n)) / np.sqrt(r)


def sym_sqrt(c) -> np.ndarray:
    """Symmetric square root of a symmetric positive semidefinite matrix.

    Eigenvalues down to ``-1e-8`` (relative to the largest magnitude) are
    treated as rounding and clipped to zero.
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {c.shape}")
    scale = max(1.0, float(np.max(np.abs(c), initial=0.0)))
    if np.max(np.abs(c - c.T), initial=0.0) > 1e-10 * scale:
        raise ValueError("matrix is not symmetric")
    w, v = np.linalg.eigh(0.5 * (c + c.T))
    wscale = max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if w.size and w[0] < -1e-8 * wscale:
        raise ValueError(f"matrix is not positive semidefinite (eigenvalue {w[0]:.3e})")
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return 0.5 * (root + root.T)


def gks_certificate(v_k, sel) -> float:
    """``||(S^T V_K)^{-1}||_2`` for the selected rows of ``V_K``.

    Returns ``inf`` when the selected block is singular.
    """
    v_k = np.asarray(v_k, dtype=float)
    sel = list(sel)
    if len(sel) != v_k.shape[1]:
        raise ValueError(f"{len(sel)} indices for a rank-{v_k.shape[1]} basis")
    s = np.linalg.svd(v_k[sel, :], compute_uv=False)
    smin = s[-1]
    if not np.isfinite(smin) or smin <= np.finfo(float).eps * max(1.0, s[0]):
        return float("inf")
    return float(1.0 / smin)


def reduced_factor(a, tail_tol: float = 1e-12) -> np.ndarray:
    """``B = diag(sigma_r) V_r^T`` with ``psi(A S) - psi(B S) <= tail_tol``
    for every column selection ``S``.

    The rank ``r`` is the smallest one whose discarded tail satisfies
    ``sum_{i>r} log(1 + sigma_i^2) <= tail_tol`` (subadditivity of logdet
    plus interlacing bound the error by that tail).
    """
    a = np.asarray(a, dtype=float)
    _, s, vt = np.linalg.svd(a, full_matrices=False)
    tail = np.cumsum(np.log1p(s[::-1] ** 2))[::-1]
    keep = int(np.count_nonzero(tail > tail_tol))
    keep = max(keep, 1)
    return s[:keep, None] * vt[:keep]
