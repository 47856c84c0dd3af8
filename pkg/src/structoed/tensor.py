"""Dense tensors: mode unfoldings, mode products and structured selections.

Tensors are plain :class:`numpy.ndarray` objects. Unfoldings follow the
column-major convention of Kolda & Bader: entry ``(i_0, ..., i_{P-1})`` of
an order-``P`` tensor lands in row ``i_j`` and column
``sum_{l != j} i_l * J_l`` of the mode-``j`` unfolding, with
``J_l = prod_{m < l, m != j} n_m``. All mode indices are zero-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import prod
from typing import Sequence

import numpy as np

__all__ = [
    "SelectionOperator",
    "apply_selection",
    "fold",
    "matrix_to_tensor",
    "mode_product",
    "tensor_to_matrix",
    "unfold",
]


def _check_mode(ndim, j):
    if not 0 <= j < ndim:
        raise ValueError(f"mode {j} out of range for an order-{ndim} tensor")


def unfold(t, j):
    """Mode-``j`` unfolding, shape ``n_j x prod_{l != j} n_l``."""
    t = np.asarray(t)
    _check_mode(t.ndim, j)
    return np.reshape(np.moveaxis(t, j, 0), (t.shape[j], -1), order="F")


def fold(m, j, dims):
    """Inverse of :func:`unfold` for a tensor of shape ``dims``."""
    m = np.asarray(m)
    dims = tuple(int(n) for n in dims)
    _check_mode(len(dims), j)
    rest = dims[:j] + dims[j + 1:]
    if m.shape != (dims[j], prod(rest)):
        raise ValueError(
            f"matrix of shape {m.shape} cannot be folded along mode {j} into {dims}"
        )
    return np.moveaxis(np.reshape(m, (dims[j],) + rest, order="F"), 0, j)


def mode_product(t, s, j):
    """Mode-``j`` product ``t x_j s``; the result satisfies
    ``unfold(result, j) == s @ unfold(t, j)``."""
    t = np.asarray(t)
    s = np.asarray(s)
    _check_mode(t.ndim, j)
    if s.ndim != 2 or s.shape[1] != t.shape[j]:
        raise ValueError(
            f"matrix of shape {s.shape} does not act on mode {j} of size {t.shape[j]}"
        )
    out = np.tensordot(s, t, axes=([1], [j]))
    return np.moveaxis(out, 0, j)


def matrix_to_tensor(a, mode_sizes):
    """Reshape ``A`` (``N x M``) into ``X`` of shape ``(m_1, ..., m_d, N)``
    so that the last-mode unfolding of ``X`` is ``A``."""
    a = np.asarray(a)
    mode_sizes = tuple(int(m) for m in mode_sizes)
    if not mode_sizes or any(m < 1 for m in mode_sizes):
        raise ValueError(f"invalid mode sizes {mode_sizes}")
    if a.ndim != 2 or a.shape[1] != prod(mode_sizes):
        raise ValueError(
            f"matrix of shape {a.shape} does not have prod{mode_sizes} columns"
        )
    return fold(a, len(mode_sizes), mode_sizes + (a.shape[0],))


def tensor_to_matrix(x):
    """Last-mode unfolding; inverse of :func:`matrix_to_tensor`."""
    x = np.asarray(x)
    return unfold(x, x.ndim - 1)


@dataclass(frozen=True)
class SelectionOperator:
    """Structured selection ``S = S_d kron ... kron S_1``.

    ``per_mode[j]`` holds the chosen indices of mode ``j`` in ascending
    order; ``mode_sizes[j]`` is the number of candidates ``m_j``.
    """

    per_mode: tuple[tuple[int, ...], ...]
    mode_sizes: tuple[int, ...]

    def __post_init__(self):
        per_mode = tuple(tuple(sorted(int(i) for i in s)) for s in self.per_mode)
        sizes = tuple(int(m) for m in self.mode_sizes)
        object.__setattr__(self, "per_mode", per_mode)
        object.__setattr__(self, "mode_sizes", sizes)
        if not sizes:
            raise ValueError("a selection needs at least one mode")
        if len(per_mode) != len(sizes):
            raise ValueError(f"{len(per_mode)} index sets for {len(sizes)} modes")
        for j, (s, m) in enumerate(zip(per_mode, sizes)):
            if not s:
                raise ValueError(f"mode {j}: empty index set")
            if len(set(s)) != len(s):
                raise ValueError(f"mode {j}: duplicate indices {s}")
            if s[0] < 0 or s[-1] >= m:
                raise ValueError(f"mode {j}: indices {s} out of range for size {m}")

    @classmethod
    def identity(cls, mode_sizes: Sequence[int]) -> SelectionOperator:
        return cls(tuple(tuple(range(m)) for m in mode_sizes), tuple(mode_sizes))

    @property
    def k(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.per_mode)

    @property
    def size(self) -> int:
        """Number of selected columns ``K = prod k_j``."""
        return prod(self.k)

    def column_indices(self) -> np.ndarray:
        """Selected columns of ``A`` in Kronecker order (mode 0 fastest)."""
        strides = np.cumprod((1,) + self.mode_sizes[:-1])
        cols = np.zeros(1, dtype=np.intp)
        for s, stride in zip(self.per_mode, strides):
            cols = (cols[:, None] + stride * np.asarray(s, dtype=np.intp)[None, :]).ravel(order="F")
        return cols

    def matrix(self) -> np.ndarray:
        """Explicit ``M x K`` selection matrix; for small problems and tests."""
        out = np.eye(1)
        for s, m in zip(self.per_mode, self.mode_sizes):
            out = np.kron(np.eye(m)[:, list(s)], out)
        return out

    def designs(self):
        """Iterate over the selected multi-indices ``(i_0, ..., i_{d-1})``."""
        return product(*self.per_mode)

    def to_dict(self) -> dict:
        return {"mode_sizes": list(self.mode_sizes), "indices": [list(s) for s in self.per_mode]}

    @classmethod
    def from_dict(cls, data: dict) -> SelectionOperator:
        return cls(tuple(tuple(s) for s in data["indices"]), tuple(data["mode_sizes"]))


def apply_selection(t, sel: SelectionOperator):
    """Subtensor ``t x_1 S_1^T ... x_d S_d^T`` of shape ``(k_1, ..., k_d, N)``.

    Done by gathering along each mode in turn; the Kronecker product is
    never formed.
    """
    t = np.asarray(t)
    d = len(sel.mode_sizes)
    if t.ndim < d or t.shape[:d] != sel.mode_sizes:
        raise ValueError(
            f"selection for modes {sel.mode_sizes} does not fit a tensor of shape {t.shape}"
        )
    for j, s in enumerate(sel.per_mode):
        if len(s) != t.shape[j]:
            t = np.take(t, s, axis=j)
    return t
