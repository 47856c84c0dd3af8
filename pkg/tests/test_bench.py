from itertools import combinations, product

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from structoed import bench
from structoed.bench import (
    BudgetExceeded,
    MethodSpec,
    compare_methods,
    design_count,
    exhaustive_search,
    percentile_of,
    random_designs,
    write_comparison_csv,
    write_histogram_csv,
)
from structoed.linalg import psi
from structoed.problems import HeatConfig, heat_problem
from structoed.tensor import SelectionOperator


def nested_loop_values(a, sizes, k):
    """Every structured design scored directly with slogdet on A."""
    vals = []
    for combo in product(*[combinations(range(m), kj) for m, kj in zip(sizes, k)]):
        sel = SelectionOperator(combo, sizes)
        a_s = a[:, sel.column_indices()]
        sign, ld = np.linalg.slogdet(np.eye(a.shape[0]) + a_s @ a_s.T)
        vals.append(ld)
    return np.array(vals)


@pytest.fixture(scope="module")
def heat_desk():
    p = heat_problem(HeatConfig(sensors=12), seed=1)
    return p.matrix(), p.mode_sizes


def test_exhaustive_trivial_cases():
    a = np.diag([1.0, 5.0, 3.0])
    best, dist = exhaustive_search(a, (3,), (1,))
    assert best.per_mode == ((1,),)
    np.testing.assert_allclose(dist.values, np.log([2.0, 26.0, 10.0]), rtol=1e-12)
    best, dist = exhaustive_search(np.ones((2, 6)), (2, 3), (2, 3))
    assert len(dist) == 1 and best == SelectionOperator.identity((2, 3))


@pytest.mark.parametrize("n", [3, 40])
def test_exhaustive_matches_nested_loops(n, rng):
    # n=3 exercises the row-space kernel, n=40 the Gram kernel
    sizes, k = (5, 4, 3), (2, 2, 2)
    a = rng.standard_normal((n, 60)) * 0.7
    best, dist = exhaustive_search(a, sizes, k)
    oracle = nested_loop_values(a, sizes, k)
    assert len(dist) == design_count(sizes, k) == len(oracle)
    np.testing.assert_allclose(dist.values, oracle, rtol=1e-10, atol=1e-10)
    assert psi(a[:, best.column_indices()]) == pytest.approx(oracle.max(), rel=1e-10)
    for i in (0, 7, len(oracle) - 1):
        assert psi(a[:, dist.design(i).column_indices()]) == pytest.approx(oracle[i], rel=1e-10)


def test_exhaustive_worker_count_irrelevant(rng):
    a = rng.standard_normal((10, 30))
    d1 = exhaustive_search(a, (5, 6), (2, 3), workers=1)[1]
    d4 = exhaustive_search(a, (5, 6), (2, 3), workers=4)[1]
    np.testing.assert_array_equal(d1.values, d4.values)


def test_heat_desk_exhaustive(heat_desk):
    a, sizes = heat_desk
    k = (4, sizes[1])
    best, dist = exhaustive_search(a, sizes, k)
    assert len(dist) == 495
    oracle = nested_loop_values(a, sizes, k)
    np.testing.assert_allclose(dist.values, oracle, rtol=1e-10)
    assert best.per_mode[0] == list(combinations(range(12), 4))[int(np.argmax(oracle))]
    rand = random_designs(a, sizes, k, 5000, seed=3)
    assert rand.values.max() <= dist.values.max() + 1e-9


def test_budget_refusal():
    with pytest.raises(BudgetExceeded) as err:
        exhaustive_search(np.ones((2, 28)), (28,), (5,), budget=1000)
    assert err.value.count == 98280
    assert "98280" in str(err.value)


def test_nth_combination_matches_itertools():
    for m, k in [(6, 3), (5, 1), (4, 4), (7, 2)]:
        for i, c in enumerate(combinations(range(m), k)):
            assert bench._nth_combination(m, k, i) == list(c)


def test_random_designs_properties(rng):
    a = rng.standard_normal((8, 24))
    sizes, k = (4, 6), (2, 3)
    d1 = random_designs(a, sizes, k, 300, seed=5)
    d2 = random_designs(a, sizes, k, 300, seed=5, workers=3)
    np.testing.assert_array_equal(d1.values, d2.values)
    for i in range(0, 300, 37):
        sel = d1.design(i)
        assert sel.k == k
        assert d1.values[i] == pytest.approx(psi(a[:, sel.column_indices()]), rel=1e-10)
    full = random_designs(a, sizes, sizes, 10, seed=1)
    assert all(full.design(i) == SelectionOperator.identity(sizes) for i in range(10))
    assert np.ptp(full.values) < 1e-9
    with pytest.raises(ValueError):
        random_designs(a, sizes, k, 0)


def test_random_designs_uniform_marginals():
    a = np.ones((2, 10))
    d = random_designs(a, (10,), (3,), 20000, seed=2)
    freq = np.bincount(d.samples[0].ravel(), minlength=10) / 20000
    np.testing.assert_allclose(freq, 0.3, atol=0.02)


def test_percentile_rules():
    assert percentile_of(10.0, [1.0, 2.0, 3.0]) == 100.0
    assert percentile_of(0.0, [1.0, 2.0, 3.0]) == 0.0
    assert percentile_of(2.0, [1.0, 2.0, 3.0]) == pytest.approx(100 / 3)
    with pytest.raises(ValueError):
        percentile_of(1.0, [])


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=50))
def test_percentile_of_maximum(values):
    vals = np.array(values)
    t = np.count_nonzero(vals == vals.max())
    assert percentile_of(vals.max(), vals) == pytest.approx(100 * (len(vals) - t) / len(vals))


def test_method_spec_parsing():
    assert MethodSpec.parse("iter:greedy:sketch") == MethodSpec("iter", "greedy", True)
    assert MethodSpec.parse("seq").engine == "gks"
    assert MethodSpec.parse("ind:deim").label == "IndSelect-DEIM"
    for bad in ("foo:gks", "ind:qr", "ind:gks:fast", "a:b:c:d"):
        with pytest.raises(ValueError):
            MethodSpec.parse(bad)


def test_compare_without_baseline(rng):
    a = rng.standard_normal((9, 12))
    res = compare_methods(a, (3, 4), (2, 2), ["ind:gks"])
    assert len(res.rows) == 1 and res.rows[0].percentile is None
    text = write_comparison_csv(res.rows)
    assert text.splitlines()[0] == "method,name,eig,percentile,wall_time_s,sweeps,seed"
    assert text.splitlines()[1].split(",")[3] == ""


@pytest.mark.filterwarnings("ignore:sketch has")
def test_compare_ranks_and_records_failures(rng, monkeypatch):
    a = rng.standard_normal((12, 20))
    real = bench.run_template

    def flaky(x, cfg, template):
        if cfg.cssp.kind == "deim":
            raise ArithmeticError("boom")
        return real(x, cfg, template)

    monkeypatch.setattr(bench, "run_template", flaky)
    res = compare_methods(a, (4, 5), (2, 2), ["ind:gks", "ind:deim", "iter:greedy", "seq:gks:sketch"],
                          random=200, exhaustive=True, seed=1)
    ok = [r for r in res.rows if r.error is None]
    assert [r.eig for r in ok] == sorted((r.eig for r in ok), reverse=True)
    assert res.rows[-1].method == "ind:deim" and res.rows[-1].error == "boom"
    best = res.exhaustive.values.max()
    assert all(r.eig <= best + 1e-9 for r in ok)
    assert res.random.values.max() <= best + 1e-9
    assert all(0 <= r.percentile <= 100 for r in ok)
    hist = write_histogram_csv(res.reference)
    assert len(hist.splitlines()) == design_count((4, 5), (2, 2))
    csv_text = write_comparison_csv(res.rows, timings=True)
    assert csv_text.splitlines()[1].split(",")[4] != ""
