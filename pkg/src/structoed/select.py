"""Structured selection templates and their sketched variants.

All templates take the design tensor ``X`` of shape ``(m_1, ..., m_d, N)``
whose last-mode unfolding is ``A`` and return a :class:`SelectionReport`.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from math import prod
from typing import Optional, Sequence

import numpy as np

from .cssp import CsspMethod
from .linalg import gaussian_sketch, make_rng, psi
from .tensor import SelectionOperator, apply_selection, matrix_to_tensor, tensor_to_matrix

__all__ = [
    "TEMPLATES",
    "SelectionReport",
    "TemplateConfig",
    "ind_select",
    "iter_select",
    "run_template",
    "seq_select",
    "sketch_first",
]

TEMPLATES = ("ind", "seq", "iter")


@dataclass(frozen=True)
class TemplateConfig:
    """Parameters shared by the selection templates.

    ``order`` is a permutation of ``range(d)``; ``None`` means natural order.
    ``seed`` drives the IterSelect initialization and the sketch.
    """

    k: tuple[int, ...]
    order: Optional[tuple[int, ...]] = None
    cssp: CsspMethod = field(default_factory=CsspMethod)
    tol: float = 1e-10
    max_sweeps: int = 20
    seed: int = 0
    oversample: int = 10

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        object.__setattr__(self, "cssp", CsspMethod.coerce(self.cssp))
        if self.order is not None:
            object.__setattr__(self, "order", tuple(int(v) for v in self.order))
        if not self.k or min(self.k) < 1:
            raise ValueError(f"every k_j must be positive, got {self.k}")
        if self.order is not None and sorted(self.order) != list(range(len(self.k))):
            raise ValueError(f"order {self.order} is not a permutation of {len(self.k)} modes")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be positive")
        if not self.tol >= 0:
            raise ValueError("tol must be non-negative")
        if self.oversample < 0:
            raise ValueError("oversample must be non-negative")

    @property
    def modes(self) -> tuple[int, ...]:
        return self.order if self.order is not None else tuple(range(len(self.k)))

    def check(self, mode_sizes: Sequence[int]):
        if len(mode_sizes) != len(self.k):
            raise ValueError(f"k has {len(self.k)} entries for {len(mode_sizes)} design modes")
        for j, (k, m) in enumerate(zip(self.k, mode_sizes)):
            if k > m:
                raise ValueError(f"mode {j}: k={k} exceeds the {m} candidates")


@dataclass
class SelectionReport:
    """Outcome of one template run.

    ``eig`` is evaluated on the full matrix whenever it is available; for
    sketched runs ``sketch_eig`` keeps the objective on ``Y = Omega A`` and
    ``eig_is_sketched`` marks reports where only that value exists.
    ``history`` lists the accepted IterSelect objectives, starting from the
    random initialization.
    """

    selection: SelectionOperator
    eig: float
    template: str
    engine: str
    sweeps: int = 1
    per_mode_certificates: list = field(default_factory=list)
    wall_time: float = 0.0
    seed: int = 0
    sketched: bool = False
    sketch_rows: Optional[int] = None
    sketch_eig: Optional[float] = None
    eig_is_sketched: bool = False
    history: list = field(default_factory=list)

    @property
    def init_eig(self) -> Optional[float]:
        return self.history[0] if self.history else None

    def to_dict(self, timings: bool = True) -> dict:
        def num(v):
            if v is None:
                return None
            v = float(v)
            return v if np.isfinite(v) else str(v)

        out = {
            "template": self.template,
            "engine": self.engine,
            "sketched": self.sketched,
            "selection": self.selection.to_dict(),
            "k": list(self.selection.k),
            "eig": num(self.eig),
            "eig_is_sketched": self.eig_is_sketched,
            "sketch_eig": num(self.sketch_eig),
            "sketch_rows": self.sketch_rows,
            "sweeps": self.sweeps,
            "history": [num(v) for v in self.history],
            "per_mode_certificates": [num(c) for c in self.per_mode_certificates],
            "seed": self.seed,
        }
        if timings:
            out["wall_time_s"] = self.wall_time
        return out


def _eig(x, sel):
    return psi(tensor_to_matrix(apply_selection(x, sel)))


def _check_tensor(x, cfg):
    x = np.asarray(x, dtype=float)
    if x.ndim < 2:
        raise ValueError("the design tensor needs at least one design mode and the ambient mode")
    cfg.check(x.shape[:-1])
    return x


def _select(g, j, k, cfg):
    """Indices for mode ``j`` of ``g`` (sorted) and the engine certificate."""
    m = g.shape[j]
    if k == m:
        return tuple(range(m)), None
    res = cfg.cssp.select_mode(g, j, k)
    return tuple(sorted(res.indices)), res.certificate


def ind_select(x, cfg: TemplateConfig) -> SelectionReport:
    """Choose every mode independently from the unfoldings of ``X``."""
    t0 = time.perf_counter()
    x = _check_tensor(x, cfg)
    sizes = x.shape[:-1]
    per_mode = [None] * len(sizes)
    certs = [None] * len(sizes)
    for j in cfg.modes:
        per_mode[j], certs[j] = _select(x, j, cfg.k[j], cfg)
    sel = SelectionOperator(tuple(per_mode), sizes)
    eig = _eig(x, sel)
    return SelectionReport(sel, eig, "ind", cfg.cssp.kind, 1, certs,
                           time.perf_counter() - t0, cfg.seed)


def seq_select(x, cfg: TemplateConfig) -> SelectionReport:
    """Choose modes one after another, shrinking the tensor after each."""
    t0 = time.perf_counter()
    x = _check_tensor(x, cfg)
    sizes = x.shape[:-1]
    per_mode = [None] * len(sizes)
    certs = [None] * len(sizes)
    g = x
    for j in cfg.modes:
        per_mode[j], certs[j] = _select(g, j, cfg.k[j], cfg)
        if len(per_mode[j]) != g.shape[j]:
            g = np.take(g, per_mode[j], axis=j)
    sel = SelectionOperator(tuple(per_mode), sizes)
    eig = _eig(x, sel)
    return SelectionReport(sel, eig, "seq", cfg.cssp.kind, 1, certs,
                           time.perf_counter() - t0, cfg.seed)


def _random_init(sizes, k, seed):
    rng = make_rng(seed, "iter-init")
    out = []
    for m, kj in zip(sizes, k):
        if kj == m:
            out.append(tuple(range(m)))
        else:
            out.append(tuple(sorted(int(i) for i in rng.choice(m, kj, replace=False))))
    return out


def iter_select(x, cfg: TemplateConfig) -> SelectionReport:
    """Alternate over the modes, reselecting one mode at a time with the
    others held at their current selections.

    A sweep is accepted when its objective does not drop. From the second
    sweep on, a relative improvement below ``cfg.tol`` also stops the
    iteration; in both stopping cases the previous selection is returned.
    """
    t0 = time.perf_counter()
    x = _check_tensor(x, cfg)
    sizes = x.shape[:-1]
    current = _random_init(sizes, cfg.k, cfg.seed)
    phi_prev = _eig(x, SelectionOperator(tuple(current), sizes))
    history = [phi_prev]
    certs = [None] * len(sizes)
    sweeps = 0
    while sweeps < cfg.max_sweeps:
        sweeps += 1
        trial = list(current)
        trial_certs = [None] * len(sizes)
        for j in cfg.modes:
            y = x
            for l, s in enumerate(trial):
                if l != j and len(s) != sizes[l]:
                    y = np.take(y, s, axis=l)
            trial[j], trial_certs[j] = _select(y, j, cfg.k[j], cfg)
        if trial == current:
            certs = trial_certs
            break
        phi = _eig(x, SelectionOperator(tuple(trial), sizes))
        if phi < phi_prev:
            break
        if sweeps > 1:
            gain = phi - phi_prev
            scale = abs(phi_prev)
            if (gain < cfg.tol * scale) if scale > 0 else (gain <= 0):
                break
        current, phi_prev, certs = trial, phi, trial_certs
        history.append(phi)
    sel = SelectionOperator(tuple(current), sizes)
    return SelectionReport(sel, phi_prev, "iter", cfg.cssp.kind, sweeps, certs,
                           time.perf_counter() - t0, cfg.seed, history=history)


_RUNNERS = {"ind": ind_select, "seq": seq_select, "iter": iter_select}


def run_template(x, cfg: TemplateConfig, template: str) -> SelectionReport:
    try:
        runner = _RUNNERS[template]
    except KeyError:
        raise ValueError(f"unknown template {template!r}; choose from {TEMPLATES}") from None
    return runner(x, cfg)


def sketch_first(source, cfg: TemplateConfig, template: str = "ind",
                 mode_sizes: Optional[Sequence[int]] = None) -> SelectionReport:
    """Run a template on the sketch ``Y = Omega A`` instead of ``A``.

    ``source`` is either the matrix ``A`` (then ``mode_sizes`` is required)
    or a :class:`~structoed.problems.DesignProblem`, which is sketched
    without applying the adjoint of its forward map. ``Omega`` has
    ``K + cfg.oversample`` rows of N(0, 1/r) entries from the stream
    ``(cfg.seed, "sketch")``.
    """
    t0 = time.perf_counter()
    r = prod(cfg.k) + cfg.oversample
    is_problem = hasattr(source, "sketch")
    if is_problem:
        sizes = tuple(source.mode_sizes)
        n = source.n_params
    else:
        if mode_sizes is None:
            raise ValueError("mode_sizes is required when sketching a plain matrix")
        source = np.asarray(source, dtype=float)
        sizes = tuple(int(m) for m in mode_sizes)
        n = source.shape[0]
    cfg.check(sizes)
    if r > n:
        warnings.warn(f"sketch has {r} rows but the ambient dimension is only {n}", stacklevel=2)
    omega = gaussian_sketch(r, n, cfg.seed)
    y = source.sketch(omega) if is_problem else omega @ source
    rep = run_template(matrix_to_tensor(y, sizes), cfg, template)
    rep.sketched = True
    rep.sketch_rows = r
    rep.sketch_eig = rep.eig
    if not is_problem or source.materializable:
        a = source.matrix() if is_problem else source
        rep.eig = psi(a[:, rep.selection.column_indices()])
    else:
        rep.eig_is_sketched = True
    rep.wall_time = time.perf_counter() - t0
    return rep
