"""Reference oracles and method comparison.

``exhaustive_search`` enumerates every structured design, ``random_designs``
samples a baseline, and ``compare_methods`` places template runs on the
percentile scale of one of those distributions.
"""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, product
from math import comb, prod
from typing import Optional, Sequence

import numpy as np

from .kernels import block_combo_logdet, gram_subset_logdet, stack_logdet
from .linalg import make_rng, psi, reduced_factor
from .select import TEMPLATES, TemplateConfig, run_template, sketch_first
from .tensor import SelectionOperator, matrix_to_tensor

__all__ = [
    "DEFAULT_BUDGET",
    "BudgetExceeded",
    "ComparisonRow",
    "DesignDistribution",
    "MethodSpec",
    "compare_methods",
    "design_count",
    "exhaustive_search",
    "percentile_of",
    "random_designs",
    "write_comparison_csv",
    "write_histogram_csv",
]

DEFAULT_BUDGET = 10**6


class BudgetExceeded(RuntimeError):
    """Exhaustive enumeration refused because it would exceed the budget."""

    def __init__(self, count: int, budget: int):
        super().__init__(f"exhaustive search needs {count} designs, budget is {budget}")
        self.count = count
        self.budget = budget


def design_count(mode_sizes: Sequence[int], k: Sequence[int]) -> int:
    return prod(comb(m, kj) for m, kj in zip(mode_sizes, k))


@dataclass
class DesignDistribution:
    """EIG values of a set of structured designs.

    Exhaustive distributions list designs in lexicographic order of the
    per-mode combinations, mode 0 slowest. Random distributions keep the
    sampled index arrays, one ``count x k_j`` array per mode.
    """

    values: np.ndarray
    mode_sizes: tuple[int, ...]
    k: tuple[int, ...]
    exhaustive: bool
    seed: Optional[int] = None
    samples: Optional[list] = None

    def __len__(self) -> int:
        return len(self.values)

    def design(self, i: int) -> SelectionOperator:
        """The ``i``-th design of the distribution."""
        if self.exhaustive:
            counts = [comb(m, kj) for m, kj in zip(self.mode_sizes, self.k)]
            pos = np.unravel_index(i, counts)
            per_mode = [_nth_combination(m, kj, int(p))
                        for m, kj, p in zip(self.mode_sizes, self.k, pos)]
        else:
            per_mode = [s[i] for s in self.samples]
        return SelectionOperator(tuple(tuple(int(v) for v in s) for s in per_mode), self.mode_sizes)

    def best(self) -> tuple[SelectionOperator, float]:
        i = int(np.argmax(self.values))
        return self.design(i), float(self.values[i])


def _nth_combination(m, k, index):
    # lexicographic unranking, same order as itertools.combinations
    out = []
    start = 0
    for slot in range(k, 0, -1):
        for c in range(start, m):
            block = comb(m - c - 1, slot - 1)
            if index < block:
                out.append(c)
                start = c + 1
                break
            index -= block
    return out


def percentile_of(value: float, dist) -> float:
    """Share of the distribution strictly below ``value``, in percent."""
    vals = dist.values if isinstance(dist, DesignDistribution) else np.asarray(dist, dtype=float)
    if len(vals) == 0:
        raise ValueError("percentile of an empty distribution")
    return 100.0 * float(np.count_nonzero(vals < value)) / len(vals)


def _map(fn, items, workers):
    if workers is None or workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def exhaustive_search(a, mode_sizes: Sequence[int], k: Sequence[int],
                      budget: int = DEFAULT_BUDGET, workers: int = 1):
    """Evaluate every structured design and return ``(best, distribution)``.

    Designs are scored on ``B = diag(sigma_r) V_r^T``, the smallest
    reduction of ``A`` whose discarded spectrum contributes at most
    ``1e-12`` to any design's EIG. One mode (the one with most
    combinations) is enumerated inside the kernel; the rest are looped over.
    """
    a = np.asarray(a, dtype=float)
    sizes = tuple(int(m) for m in mode_sizes)
    k = tuple(int(v) for v in k)
    if len(sizes) != len(k) or any(not 1 <= kj <= m for kj, m in zip(k, sizes)):
        raise ValueError(f"k={k} does not fit mode sizes {sizes}")
    if a.ndim != 2 or a.shape[1] != prod(sizes):
        raise ValueError(f"matrix of shape {a.shape} does not fit mode sizes {sizes}")
    count = design_count(sizes, k)
    if count > budget:
        raise BudgetExceeded(count, budget)

    b = reduced_factor(a)
    r = b.shape[0]
    bt = matrix_to_tensor(b, sizes)
    counts = [comb(m, kj) for m, kj in zip(sizes, k)]
    v = int(np.argmax(counts))
    others = [j for j in range(len(sizes)) if j != v]
    other_combos = [list(combinations(range(sizes[j]), k[j])) for j in others]
    kk = prod(k)
    width = kk // k[v]
    eye_r = np.eye(r)

    def evaluate(fixed):
        y = bt
        for j, c in zip(others, fixed):
            y = np.take(y, c, axis=j)
        # columns of block i are the entries with mode-v index i
        blocks = np.moveaxis(y, v, 0).reshape(sizes[v], -1, r)
        if r <= kk:
            q = np.ascontiguousarray(np.einsum("icr,ics->irs", blocks, blocks))
            return block_combo_logdet(q, k[v], eye_r)
        flat = blocks.reshape(-1, r)
        gram = np.ascontiguousarray(flat @ flat.T)
        combo = np.array(list(combinations(range(sizes[v]), k[v])), dtype=np.intp)
        cols = (combo[:, :, None] * width + np.arange(width)[None, None, :]).reshape(len(combo), -1)
        return gram_subset_logdet(gram, np.ascontiguousarray(cols))

    fixed_list = list(product(*other_combos))
    results = _map(evaluate, fixed_list, workers)
    grid = np.empty(counts)
    for pos, vals in zip(product(*[range(len(c)) for c in other_combos]), results):
        index = list(pos)
        index.insert(v, slice(None))
        grid[tuple(index)] = vals
    values = grid.ravel()
    if not np.all(np.isfinite(values)):
        raise ArithmeticError("non-finite EIG during enumeration")
    dist = DesignDistribution(values, sizes, k, exhaustive=True)
    return dist.best()[0], dist


def _sample_indices(mode_sizes, k, count, seed):
    rng = make_rng(seed, "random-designs")
    out = []
    for m, kj in zip(mode_sizes, k):
        if kj == m:
            out.append(np.tile(np.arange(m, dtype=np.intp), (count, 1)))
        else:
            keys = rng.random((count, m))
            out.append(np.sort(np.argsort(keys, axis=1, kind="stable")[:, :kj], axis=1))
    return out


def random_designs(a, mode_sizes: Sequence[int], k: Sequence[int], count: int,
                   seed: int = 0, workers: int = 1) -> DesignDistribution:
    """EIG of ``count`` random structured designs.

    Each design draws ``k_j`` distinct indices per mode uniformly; designs are
    independent, so repeats are possible. All indices are drawn before any
    evaluation, which makes the result independent of ``workers``.
    """
    a = np.asarray(a, dtype=float)
    sizes = tuple(int(m) for m in mode_sizes)
    k = tuple(int(v) for v in k)
    if count < 1:
        raise ValueError("count must be positive")
    if len(sizes) != len(k) or any(not 1 <= kj <= m for kj, m in zip(k, sizes)):
        raise ValueError(f"k={k} does not fit mode sizes {sizes}")
    samples = _sample_indices(sizes, k, count, seed)
    strides = np.cumprod((1,) + sizes[:-1])
    cols = np.zeros((count, 1), dtype=np.intp)
    for s, stride in zip(samples, strides):
        # Kronecker order: earlier modes vary fastest
        cols = (cols[:, :, None] + stride * s[:, None, :]).reshape(count, -1, order="F")
    b = reduced_factor(a)
    r, kk = b.shape[0], cols.shape[1]
    chunks = np.array_split(np.arange(count), max(1, count // 512))

    if r < kk:
        def evaluate(idx):
            bs = b[:, cols[idx]].transpose(1, 0, 2)
            mats = np.eye(r) + bs @ bs.transpose(0, 2, 1)
            return stack_logdet(np.ascontiguousarray(mats))
    else:
        gram = np.ascontiguousarray(b.T @ b)

        def evaluate(idx):
            return gram_subset_logdet(gram, np.ascontiguousarray(cols[idx]))

    values = np.concatenate(_map(evaluate, chunks, workers))
    return DesignDistribution(values, sizes, k, exhaustive=False, seed=seed, samples=samples)


_ENGINE_NAMES = {"gks": "GKS", "deim": "DEIM", "greedy": "Greedy"}
_TEMPLATE_NAMES = {"ind": "IndSelect", "seq": "SeqSelect", "iter": "IterSelect"}


@dataclass(frozen=True)
class MethodSpec:
    """``template:engine`` with an optional ``:sketch`` suffix."""

    template: str
    engine: str = "gks"
    sketch: bool = False

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise ValueError(f"unknown template {self.template!r}; choose from {TEMPLATES}")
        if self.engine not in _ENGINE_NAMES:
            raise ValueError(f"unknown engine {self.engine!r}; choose from {tuple(_ENGINE_NAMES)}")

    @classmethod
    def parse(cls, text: str) -> MethodSpec:
        parts = text.strip().split(":")
        if not 1 <= len(parts) <= 3 or (len(parts) == 3 and parts[2] != "sketch"):
            raise ValueError(f"method {text!r} is not of the form template:engine[:sketch]")
        engine = parts[1] if len(parts) > 1 else "gks"
        return cls(parts[0], engine, len(parts) == 3)

    @property
    def key(self) -> str:
        return f"{self.template}:{self.engine}" + (":sketch" if self.sketch else "")

    @property
    def label(self) -> str:
        name = f"{_TEMPLATE_NAMES[self.template]}-{_ENGINE_NAMES[self.engine]}"
        return name + "-Sketch" if self.sketch else name


@dataclass
class ComparisonRow:
    method: str
    name: str
    eig: float
    percentile: Optional[float]
    wall_time: float
    sweeps: int
    seed: int
    report: object = None
    error: Optional[str] = None


@dataclass
class Comparison:
    rows: list
    reference: Optional[DesignDistribution] = None
    random: Optional[DesignDistribution] = None
    exhaustive: Optional[DesignDistribution] = None
    timings: dict = field(default_factory=dict)


def compare_methods(a, mode_sizes: Sequence[int], k: Sequence[int], methods: Sequence,
                    random: int = 0, exhaustive: bool = False, seed: int = 0,
                    budget: int = DEFAULT_BUDGET, workers: int = 1, **cfg_kw) -> Comparison:
    """Run each method once on ``A`` and rank it against a baseline.

    The baseline is the exhaustive distribution when requested, otherwise
    ``random`` sampled designs. Wall time covers the selection call only.
    Rows are sorted by EIG, best first; failed methods come last with
    their error message.
    """
    a = np.asarray(a, dtype=float)
    sizes = tuple(int(m) for m in mode_sizes)
    k = tuple(int(v) for v in k)
    specs = [m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in methods]
    x = matrix_to_tensor(a, sizes)
    out = Comparison(rows=[])
    if exhaustive:
        t0 = time.perf_counter()
        out.exhaustive = exhaustive_search(a, sizes, k, budget, workers)[1]
        out.timings["exhaustive"] = time.perf_counter() - t0
    if random > 0:
        t0 = time.perf_counter()
        out.random = random_designs(a, sizes, k, random, seed, workers)
        out.timings["random"] = time.perf_counter() - t0
    out.reference = out.exhaustive if out.exhaustive is not None else out.random

    rows = []
    for spec in specs:
        cfg = TemplateConfig(k, cssp=spec.engine, seed=seed, **cfg_kw)
        try:
            t0 = time.perf_counter()
            if spec.sketch:
                rep = sketch_first(a, cfg, spec.template, sizes)
            else:
                rep = run_template(x, cfg, spec.template)
            elapsed = time.perf_counter() - t0
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            rows.append(ComparisonRow(spec.key, spec.label, float("nan"), None, 0.0, 0, seed,
                                      error=str(exc)))
            continue
        rep.wall_time = elapsed
        pct = percentile_of(rep.eig, out.reference) if out.reference is not None else None
        rows.append(ComparisonRow(spec.key, spec.label, rep.eig, pct, elapsed, rep.sweeps, seed, rep))
    ok = sorted((r for r in rows if r.error is None), key=lambda r: -r.eig)
    out.rows = ok + [r for r in rows if r.error is not None]
    return out


CSV_HEADER = ("method", "name", "eig", "percentile", "wall_time_s", "sweeps", "seed")


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_comparison_csv(rows, path=None, timings: bool = False) -> str:
    """Comparison table; wall times are written only when ``timings`` is set
    so that repeated runs give identical files."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.method, r.name, _fmt(r.eig) if r.error is None else "",
                    _fmt(r.percentile), _fmt(r.wall_time) if timings else "",
                    r.sweeps if r.error is None else "", r.seed])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def write_histogram_csv(dist: DesignDistribution, path=None) -> str:
    """One EIG value per line, in distribution order."""
    text = "".join(f"{float(v)!r}\n" for v in dist.values)
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
