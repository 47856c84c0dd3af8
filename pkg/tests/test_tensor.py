import itertools
from functools import reduce
from math import prod

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from structoed.tensor import (
    SelectionOperator,
    apply_selection,
    fold,
    matrix_to_tensor,
    mode_product,
    tensor_to_matrix,
    unfold,
)


def unfold_loops(t, j):
    """Entry-by-entry unfolding from the column-major index formula."""
    dims = t.shape
    out = np.zeros((dims[j], prod(dims) // dims[j]))
    for idx in itertools.product(*[range(n) for n in dims]):
        col, stride = 0, 1
        for l, n in enumerate(dims):
            if l == j:
                continue
            col += idx[l] * stride
            stride *= n
        out[idx[j], col] = t[idx]
    return out


def kron_chain(mats):
    # S_P kron ... kron S_1 for mats = [S_1, ..., S_P]
    return reduce(lambda acc, m: np.kron(m, acc), mats[1:], mats[0])


shapes = st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple)


def tensors(shape):
    return arrays(np.float64, shape, elements=st.floats(-10, 10, allow_nan=False))


def test_unfold_2x2_example():
    t = np.array([1.0, 2, 3, 4]).reshape((2, 2), order="F")
    np.testing.assert_array_equal(unfold(t, 0), [[1, 3], [2, 4]])
    np.testing.assert_array_equal(unfold(t, 1), [[1, 2], [3, 4]])


def test_unfold_matches_index_formula(rng):
    t = rng.standard_normal((3, 4, 2))
    u = unfold(t, 1)
    assert u.shape == (4, 6)
    np.testing.assert_array_equal(u, unfold_loops(t, 1))
    np.testing.assert_array_equal(fold(u, 1, t.shape), t)


@given(shapes.flatmap(lambda s: st.tuples(tensors(s), st.integers(0, len(s) - 1))))
def test_fold_unfold_round_trip(case):
    t, j = case
    np.testing.assert_array_equal(fold(unfold(t, j), j, t.shape), t)
    np.testing.assert_array_equal(unfold(t, j), unfold_loops(t, j))


def test_fold_order_one():
    m = np.array([[1.0], [2.0]])
    np.testing.assert_array_equal(fold(m, 0, (2,)), [1.0, 2.0])


def test_unfold_and_fold_errors():
    with pytest.raises(ValueError):
        unfold(np.zeros((2, 2)), 2)
    with pytest.raises(ValueError):
        fold(np.zeros((2, 3)), 0, (2, 2))


def test_mode_product_identity_and_composition(rng):
    t = rng.standard_normal((3, 4, 5))
    np.testing.assert_array_equal(mode_product(t, np.eye(4), 1), t)
    s = rng.standard_normal((2, 4))
    b = rng.standard_normal((6, 2))
    np.testing.assert_allclose(mode_product(mode_product(t, s, 1), b, 1), mode_product(t, b @ s, 1),
                               rtol=1e-12, atol=1e-12)
    s0 = rng.standard_normal((2, 3))
    s2 = rng.standard_normal((7, 5))
    np.testing.assert_allclose(mode_product(mode_product(t, s0, 0), s2, 2),
                               mode_product(mode_product(t, s2, 2), s0, 0), rtol=1e-12, atol=1e-12)
    with pytest.raises(ValueError):
        mode_product(t, np.eye(3), 1)


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple), st.integers(0, 2**32 - 1))
def test_kronecker_mode_identity(shape, seed):
    r = np.random.default_rng(seed)
    t = r.standard_normal(shape)
    mats = [r.standard_normal((r.integers(1, 4), n)) for n in shape]
    y = t
    for l, s in enumerate(mats):
        y = mode_product(y, s, l)
    for j in range(len(shape)):
        rest = [s for l, s in enumerate(mats) if l != j]
        expect = mats[j] @ unfold(t, j)
        if rest:
            expect = expect @ kron_chain(rest).T
        got = unfold(y, j)
        assert np.linalg.norm(got - expect) <= 1e-12 * max(1.0, np.linalg.norm(expect))


def test_matrix_to_tensor_shapes(rng):
    a = rng.standard_normal((401, 280))
    x = matrix_to_tensor(a, (28, 10))
    assert x.shape == (28, 10, 401)
    np.testing.assert_array_equal(tensor_to_matrix(x), a)
    a6 = rng.standard_normal((6, 6))
    x6 = matrix_to_tensor(a6, (2, 3))
    for i0, i1, n in itertools.product(range(2), range(3), range(6)):
        assert x6[i0, i1, n] == a6[n, i0 + 2 * i1]
    a1 = rng.standard_normal((4, 5))
    np.testing.assert_array_equal(unfold(matrix_to_tensor(a1, (5,)), 1), a1)
    with pytest.raises(ValueError):
        matrix_to_tensor(a6, (4, 2))


def test_selection_operator_validation():
    with pytest.raises(ValueError):
        SelectionOperator(((0, 0),), (3,))
    with pytest.raises(ValueError):
        SelectionOperator(((3,),), (3,))
    with pytest.raises(ValueError):
        SelectionOperator(((),), (3,))
    with pytest.raises(ValueError):
        SelectionOperator(((0,),), (3, 2))
    s = SelectionOperator(((2, 0),), (3,))
    assert s.per_mode == ((0, 2),)
    assert SelectionOperator.from_dict(s.to_dict()) == s


def test_apply_selection_identity_and_single(rng):
    t = rng.standard_normal((2, 2, 5))
    np.testing.assert_array_equal(apply_selection(t, SelectionOperator.identity((2, 2))), t)
    one = apply_selection(t, SelectionOperator(((0,), (1,)), (2, 2)))
    np.testing.assert_array_equal(one[0, 0], t[0, 1])


@given(st.lists(st.integers(1, 4), min_size=1, max_size=3).map(tuple),
       st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_apply_selection_matches_kronecker(sizes, n, seed):
    r = np.random.default_rng(seed)
    t = r.standard_normal(sizes + (n,))
    per_mode = [tuple(sorted(r.choice(m, r.integers(1, m + 1), replace=False))) for m in sizes]
    sel = SelectionOperator(tuple(per_mode), sizes)
    smat = kron_chain([np.eye(m)[:, list(s)] for m, s in zip(sizes, per_mode)])
    np.testing.assert_allclose(sel.matrix(), smat)
    expect = tensor_to_matrix(t) @ smat
    np.testing.assert_array_equal(tensor_to_matrix(apply_selection(t, sel)), expect)
    np.testing.assert_array_equal(tensor_to_matrix(t)[:, sel.column_indices()], expect)
    assert sel.size == smat.shape[1]
