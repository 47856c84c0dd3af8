"""Numpy implementation of the log-determinant kernels.

Same signatures and results (up to rounding) as the compiled ``_kernels``
module. Work is chunked so peak memory stays around ``_CHUNK_BYTES``.
"""
from itertools import combinations

import numpy as np

_CHUNK_BYTES = 64 * 2**20


def _chunk_len(mat_size):
    return max(1, _CHUNK_BYTES // (8 * max(mat_size, 1) ** 2))


def _batched_logdet(mats):
    try:
        chol = np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        out = np.empty(len(mats))
        for t, m in enumerate(mats):
            try:
                c = np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                out[t] = np.nan
            else:
                out[t] = 2.0 * np.log(np.diagonal(c)).sum()
        return out
    return 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)


def gram_subset_logdet(gram, designs):
    gram = np.asarray(gram, dtype=float)
    designs = np.asarray(designs, dtype=np.intp)
    n, k = designs.shape
    out = np.empty(n)
    if k == 0:
        out.fill(0.0)
        return out
    eye = np.eye(k)
    step = _chunk_len(k)
    for lo in range(0, n, step):
        d = designs[lo:lo + step]
        sub = gram[d[:, :, None], d[:, None, :]] + eye
        out[lo:lo + step] = _batched_logdet(sub)
    return out


def block_combo_logdet(blocks, k, base):
    blocks = np.asarray(blocks, dtype=float)
    base = np.asarray(base, dtype=float)
    m, r = blocks.shape[0], blocks.shape[1]
    if k < 0 or k > m:
        raise ValueError(f"cannot choose {k} of {m} blocks")
    combos = list(combinations(range(m), k))
    combos = np.array(combos, dtype=np.intp).reshape(len(combos), k)
    out = np.empty(len(combos))
    if r == 0:
        out.fill(0.0)
        return out
    step = _chunk_len(r)
    for lo in range(0, len(combos), step):
        c = combos[lo:lo + step]
        acc = np.broadcast_to(base, (len(c), r, r)).copy()
        for t in range(k):
            acc += blocks[c[:, t]]
        out[lo:lo + step] = _batched_logdet(acc)
    return out


def stack_logdet(mats):
    mats = np.asarray(mats, dtype=float)
    if mats.shape[1] == 0:
        return np.zeros(len(mats))
    return _batched_logdet(mats)
