"""Column subset selection engines.

Every engine maps a matrix and a count ``k`` to ``k`` distinct column
indices. The same engines act on tensors through :meth:`CsspMethod.select_mode`,
which is what the structured templates call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from .kernels import stack_logdet
from .linalg import NumericalError, cpqr_pivots, gks_certificate, truncated_svd
from .tensor import tensor_to_matrix, unfold

__all__ = [
    "ColumnSelection",
    "CsspMethod",
    "cssp_deim",
    "cssp_gks",
    "cssp_greedy_matrix",
    "greedy_mode_select",
]

# singular values below RANK_RTOL * sigma_max count as zero for certificates
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class ColumnSelection:
    """Chosen columns in selection order.

    ``certificate`` is ``||(S^T V_K)^{-1}||_2`` for the SVD-based engines
    (``inf`` when ``k`` exceeds the numerical rank or the block is
    singular). ``trace`` holds the greedy objective after each step.
    """

    indices: tuple[int, ...]
    certificate: Optional[float] = None
    trace: Optional[tuple[float, ...]] = None

    @property
    def certified(self) -> bool:
        return self.certificate is not None and np.isfinite(self.certificate)


def _check_k(a, k):
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got an array of shape {a.shape}")
    if not 1 <= k <= min(a.shape):
        raise ValueError(f"k={k} out of range for a matrix of shape {a.shape}")


def _certificate(svd, sel):
    s = svd.sigma
    if s[0] == 0.0 or s[-1] < RANK_RTOL * s[0]:
        return float("inf")
    return gks_certificate(svd.V, sel)


def cssp_gks(a, k: int) -> ColumnSelection:
    """Golub-Klema-Stewart selection: pivoted QR on the top-``k`` right
    singular vectors."""
    a = np.asarray(a, dtype=float)
    _check_k(a, k)
    svd = truncated_svd(a, k)
    piv = cpqr_pivots(svd.V.T, k)
    return ColumnSelection(tuple(piv), _certificate(svd, piv))


def cssp_deim(a, k: int) -> ColumnSelection:
    """Sequential DEIM point selection on the rows of ``V_K``."""
    a = np.asarray(a, dtype=float)
    _check_k(a, k)
    svd = truncated_svd(a, k)
    v = svd.V
    p = [int(np.argmax(np.abs(v[:, 0])))]
    for j in range(1, k):
        block = v[p, :j]
        if np.linalg.cond(block) > 1.0 / (np.finfo(float).eps * 10):
            raise NumericalError(f"DEIM interpolation block singular at step {j}")
        c = np.linalg.solve(block, v[p, j])
        res = np.abs(v[:, j] - v[:, :j] @ c)
        res[p] = -1.0
        p.append(int(np.argmax(res)))
    return ColumnSelection(tuple(p), _certificate(svd, p))


def _row_reduce(c):
    # psi of any column subset is unchanged by an orthogonal change of rows
    n, m = c.shape
    if n > m:
        return np.linalg.qr(c, mode="r")
    return c


def _greedy_blocks(c, n_blocks, k, cap=None):
    """Greedy logdet maximization over equal-width column blocks of ``c``.

    Block ``i`` is ``c[:, i*w:(i+1)*w]``. Returns chosen blocks in order and
    the objective after each step.
    """
    if not 1 <= k <= n_blocks:
        raise ValueError(f"cannot choose {k} of {n_blocks} candidates")
    b = _row_reduce(np.asarray(c, dtype=float))
    r, ncols = b.shape
    w = ncols // n_blocks
    blocks = b.reshape(r, n_blocks, w)
    allowed = np.ones(n_blocks, dtype=bool)
    if cap is not None and cap < n_blocks:
        single = stack_logdet(np.eye(w) + np.einsum("rbi,rbj->bij", blocks, blocks))
        order = np.lexsort((np.arange(n_blocks), -single))
        allowed[:] = False
        allowed[order[: max(cap, k)]] = True
    prec = np.eye(r)
    chosen: list[int] = []
    trace: list[float] = []
    total = 0.0
    for _ in range(k):
        chol = np.linalg.cholesky(prec)
        wmat = solve_triangular(chol, b, lower=True).reshape(r, n_blocks, w)
        gains = stack_logdet(np.eye(w) + np.einsum("rbi,rbj->bij", wmat, wmat))
        gains[~allowed] = -np.inf
        gains[chosen] = -np.inf
        best = int(np.argmax(gains))
        chosen.append(best)
        total += float(gains[best])
        trace.append(total)
        prec += blocks[:, best, :] @ blocks[:, best, :].T
    return chosen, trace


def cssp_greedy_matrix(a, k: int, cap: Optional[int] = None) -> ColumnSelection:
    """Greedy column selection maximizing ``psi`` of the chosen submatrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or not 1 <= k <= a.shape[1]:
        raise ValueError(f"k={k} out of range for a matrix of shape {a.shape}")
    chosen, trace = _greedy_blocks(a, a.shape[1], k, cap)
    return ColumnSelection(tuple(chosen), None, tuple(trace))


def greedy_mode_select(g, j: int, k: int, cap: Optional[int] = None) -> ColumnSelection:
    """Greedy choice of ``k`` mode-``j`` slices of an order-``d+1`` tensor.

    Each step adds the slice that maximizes ``psi`` of the last-mode
    unfolding of the subtensor built from the slices chosen so far.
    """
    g = np.asarray(g, dtype=float)
    d = g.ndim - 1
    if not 0 <= j < d:
        raise ValueError(f"mode {j} is not a design mode of an order-{g.ndim} tensor")
    m = g.shape[j]
    # put mode j last among the design modes so each slice is a contiguous
    # block of columns in the last-mode unfolding
    c = tensor_to_matrix(np.moveaxis(g, j, d - 1))
    chosen, trace = _greedy_blocks(c, m, k, cap)
    return ColumnSelection(tuple(chosen), None, tuple(trace))


_KINDS = ("gks", "deim", "greedy")


@dataclass(frozen=True)
class CsspMethod:
    """A column selection engine with its parameters."""

    kind: str = "gks"
    candidate_cap: Optional[int] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown CSSP engine {self.kind!r}; choose from {_KINDS}")
        if self.candidate_cap is not None and self.kind != "greedy":
            raise ValueError("candidate_cap applies to the greedy engine only")

    @classmethod
    def coerce(cls, value) -> CsspMethod:
        return value if isinstance(value, cls) else cls(str(value))

    def select(self, a, k: int) -> ColumnSelection:
        if self.kind == "gks":
            return cssp_gks(a, k)
        if self.kind == "deim":
            return cssp_deim(a, k)
        return cssp_greedy_matrix(a, k, self.candidate_cap)

    def select_mode(self, g, j: int, k: int) -> ColumnSelection:
        """Select ``k`` indices of mode ``j``; ``CSSP(G_(j)^T, k)``."""
        if self.kind == "greedy":
            return greedy_mode_select(g, j, k, self.candidate_cap)
        return self.select(unfold(g, j).T, k)
