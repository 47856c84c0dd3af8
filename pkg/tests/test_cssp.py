from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from structoed.cssp import (
    CsspMethod,
    cssp_deim,
    cssp_gks,
    cssp_greedy_matrix,
    greedy_mode_select,
)
from structoed.linalg import NumericalError, psi
from structoed.tensor import tensor_to_matrix

ENGINES = ["gks", "deim", "greedy"]


def deim_oracle(a, k):
    """Textbook DEIM written from scratch: interpolate each new basis
    vector on the points chosen so far and pick its largest residual."""
    _, _, vt = np.linalg.svd(a)
    u = vt[:k].T
    pts = [int(np.argmax(np.abs(u[:, 0])))]
    for j in range(1, k):
        p_mat = np.zeros((u.shape[0], j))
        p_mat[pts, np.arange(j)] = 1.0
        c = np.linalg.solve(p_mat.T @ u[:, :j], p_mat.T @ u[:, j])
        r = u[:, j] - u[:, :j] @ c
        pts.append(int(np.argmax(np.abs(r))))
    return pts


def greedy_oracle(a, k):
    chosen = []
    for _ in range(k):
        best, val = None, -np.inf
        for c in range(a.shape[1]):
            if c in chosen:
                continue
            v = psi(a[:, chosen + [c]])
            if v > val + 1e-12:
                best, val = c, v
        chosen.append(best)
    return chosen


def slice_greedy_oracle(g, j, k):
    """Structured greedy on slices evaluated literally with psi."""
    chosen = []
    for _ in range(k):
        best, val = None, -np.inf
        for i in range(g.shape[j]):
            if i in chosen:
                continue
            sub = np.take(g, sorted(chosen + [i]), axis=j)
            v = psi(tensor_to_matrix(sub))
            if v > val + 1e-12:
                best, val = i, v
        chosen.append(best)
    return chosen


def test_diag_examples():
    a = np.diag([1.0, 5.0, 3.0])
    assert cssp_gks(a, 1).indices == (1,)
    assert cssp_deim(a, 1).indices == (1,)
    assert sorted(cssp_greedy_matrix(a, 2).indices) == [1, 2]


def test_gks_avoids_duplicate_pair():
    a = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    idx = set(cssp_gks(a, 2).indices)
    assert 2 in idx and len(idx & {0, 1}) == 1


def test_deim_full_rank_orthogonal(rng):
    q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    a = q @ np.diag([5.0, 4, 3, 2, 1])
    assert sorted(cssp_deim(a, 5).indices) == [0, 1, 2, 3, 4]


@given(st.integers(0, 2**32 - 1))
def test_deim_matches_oracle(seed):
    a = np.random.default_rng(seed).standard_normal((8, 12))
    assert list(cssp_deim(a, 3).indices) == deim_oracle(a, 3)


def test_deim_singular_block_raises(monkeypatch):
    # an orthonormal basis never produces a singular block, so feed a
    # degenerate one with two equal columns
    from structoed import cssp
    from structoed.linalg import TruncatedSvd

    v = np.array([[0.2, 0.2, 0.1], [0.9, 0.9, 0.3], [0.3, 0.3, 0.9], [0.1, 0.1, 0.2]])
    monkeypatch.setattr(cssp, "truncated_svd",
                        lambda a, k: TruncatedSvd(np.eye(4)[:, :3], np.ones(3), v))
    with pytest.raises(NumericalError):
        cssp_deim(np.eye(4), 3)


def test_greedy_single_column_is_max_norm(rng):
    a = rng.standard_normal((6, 9))
    assert cssp_greedy_matrix(a, 1).indices == (int(np.argmax(np.linalg.norm(a, axis=0))),)


@given(st.integers(0, 2**32 - 1))
def test_greedy_matches_literal_oracle_and_is_monotone(seed):
    a = np.random.default_rng(seed).standard_normal((6, 8))
    res = cssp_greedy_matrix(a, 3)
    assert list(res.indices) == greedy_oracle(a, 3)
    assert all(np.diff(res.trace) >= 0)
    assert res.trace[-1] == pytest.approx(psi(a[:, list(res.indices)]), rel=1e-10)


def test_greedy_against_exhaustive_and_random(rng):
    a = rng.standard_normal((6, 8))
    res = cssp_greedy_matrix(a, 3)
    val = psi(a[:, list(res.indices)])
    best = max(psi(a[:, list(c)]) for c in combinations(range(8), 3))
    assert val <= best + 1e-12
    # submodularity gives (1 - 1/e) of the optimum for the normalized gain
    assert val >= (1 - 1 / np.e) * best
    rand = [psi(a[:, rng.choice(8, 3, replace=False)]) for _ in range(200)]
    assert val >= np.median(rand)


def test_greedy_candidate_cap(rng):
    a = rng.standard_normal((5, 10))
    res = cssp_greedy_matrix(a, 2, cap=3)
    top = np.argsort(-np.linalg.norm(a, axis=0), kind="stable")[:3]
    assert set(res.indices) <= set(top)
    with pytest.raises(ValueError):
        CsspMethod("gks", candidate_cap=3)


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_gks_value_sandwich(seed, k):
    r = np.random.default_rng(seed)
    a = r.standard_normal((10, 20)) * np.exp(-0.3 * np.arange(20))
    res = cssp_gks(a, k)
    s = np.linalg.svd(a, compute_uv=False)
    phi = psi(a[:, list(res.indices)])
    assert res.certified
    assert res.certificate <= 2**k * np.sqrt(20 - k)
    assert psi(np.diag(s[:k] / res.certificate)) - 1e-9 <= phi
    assert phi <= psi(np.diag(s[:k])) + 1e-9 <= psi(a) + 2e-9


def test_gks_rank_deficient_flags_certificate(rng):
    a = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 7))
    res = cssp_gks(a, 4)
    assert len(set(res.indices)) == 4
    assert res.certificate == np.inf and not res.certified


@pytest.mark.parametrize("kind", ENGINES)
def test_engines_return_distinct_in_range(kind, rng):
    a = rng.standard_normal((7, 11))
    for k in range(1, 8):
        idx = CsspMethod(kind).select(a, k).indices
        assert len(idx) == k == len(set(idx))
        assert all(0 <= i < 11 for i in idx)


@pytest.mark.parametrize("kind", ENGINES)
def test_full_selection_recovers_psi(kind, rng):
    a = rng.standard_normal((9, 6))
    idx = CsspMethod(kind).select(a, 6).indices
    assert sorted(idx) == list(range(6))
    assert psi(a[:, list(idx)]) == pytest.approx(psi(a), rel=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_structured_greedy_matches_literal_oracle(seed):
    g = np.random.default_rng(seed).standard_normal((5, 4, 12))
    res = greedy_mode_select(g, 0, 2)
    assert list(res.indices) == slice_greedy_oracle(g, 0, 2)
    res1 = greedy_mode_select(g, 1, 3)
    assert list(res1.indices) == slice_greedy_oracle(g, 1, 3)
    assert all(np.diff(res1.trace) >= 0)


def test_structured_greedy_single_step_and_d1(rng):
    g = rng.standard_normal((5, 4, 6))
    single = [psi(tensor_to_matrix(g[[i]])) for i in range(5)]
    assert greedy_mode_select(g, 0, 1).indices == (int(np.argmax(single)),)
    a = rng.standard_normal((6, 9))
    x = a.T.copy()
    assert greedy_mode_select(x, 0, 4).indices == cssp_greedy_matrix(a, 4).indices
    with pytest.raises(ValueError):
        greedy_mode_select(g, 2, 1)


def test_range_errors():
    with pytest.raises(ValueError):
        cssp_gks(np.eye(3), 0)
    with pytest.raises(ValueError):
        cssp_deim(np.eye(3), 4)
    with pytest.raises(ValueError):
        cssp_greedy_matrix(np.eye(3), 4)
    with pytest.raises(ValueError):
        CsspMethod("srrqr")
