"""Linear Bayesian inverse problems and their design matrices.

A problem is ``d = F u + eps`` with prior ``u ~ N(u_pr, Gamma_pr)`` and
noise ``eps ~ N(0, sigma_R^2 I)``. Its design matrix is
``A = sigma_R^{-1} Gamma_pr^{1/2} F^T`` (``n x M``), whose columns are
indexed by the observation grid ``m_1 x ... x m_d`` with mode 0 fastest.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from math import prod, sqrt
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.sparse import diags

from .linalg import NumericalError, make_rng, psi, sym_sqrt
from .tensor import SelectionOperator, apply_selection, matrix_to_tensor, tensor_to_matrix

__all__ = [
    "DesignProblem",
    "HeatConfig",
    "TomoConfig",
    "build_a",
    "heat_operators",
    "heat_problem",
    "lowrank_problem",
    "posterior_eig",
    "posterior_mean",
    "posterior_precision",
    "ray_weights",
    "subsampled_eig",
    "tomo_problem",
]

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass(eq=False)
class DesignProblem:
    """An OED instance.

    ``forward`` is either the dense ``M x n`` matrix ``F`` or a callable
    applying ``F`` to an ``n x c`` block. ``adjoint`` (applying ``F^T`` to an
    ``M x c`` block) is optional; without it and without a dense ``F`` the
    design matrix cannot be formed and only sketching is possible.
    """

    forward: Union[np.ndarray, Operator]
    prior_sqrt: np.ndarray
    noise_sigma: float
    mode_sizes: tuple[int, ...]
    adjoint: Optional[Operator] = None
    u_true: Optional[np.ndarray] = None
    data: Optional[np.ndarray] = None
    kind: str = "custom"
    config: dict = field(default_factory=dict)
    seed: Optional[int] = None

    def __post_init__(self):
        self.mode_sizes = tuple(int(m) for m in self.mode_sizes)
        self.prior_sqrt = np.asarray(self.prior_sqrt, dtype=float)
        self.noise_sigma = float(self.noise_sigma)
        g = self.prior_sqrt
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"prior square root must be square, got shape {g.shape}")
        scale = max(1.0, float(np.max(np.abs(g), initial=0.0)))
        if np.max(np.abs(g - g.T), initial=0.0) > 1e-10 * scale:
            raise ValueError("prior square root is not symmetric")
        if not self.noise_sigma > 0:
            raise ValueError(f"noise sigma must be positive, got {self.noise_sigma}")
        if not self.mode_sizes or min(self.mode_sizes) < 1:
            raise ValueError(f"invalid mode sizes {self.mode_sizes}")
        if not callable(self.forward):
            self.forward = np.asarray(self.forward, dtype=float)
            if self.forward.shape != (self.n_obs, self.n_params):
                raise ValueError(
                    f"forward matrix has shape {self.forward.shape}, expected "
                    f"({self.n_obs}, {self.n_params}) from the mode sizes and prior"
                )
        for name in ("u_true", "data"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float).ravel()
                want = self.n_params if name == "u_true" else self.n_obs
                if v.size != want:
                    raise ValueError(f"{name} has length {v.size}, expected {want}")
                setattr(self, name, v)
        self._a = None

    @property
    def n_params(self) -> int:
        return self.prior_sqrt.shape[0]

    @property
    def n_obs(self) -> int:
        return prod(self.mode_sizes)

    @property
    def is_dense(self) -> bool:
        return not callable(self.forward)

    @property
    def materializable(self) -> bool:
        return self.is_dense or self.adjoint is not None

    def apply_forward(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self.forward @ u if self.is_dense else np.asarray(self.forward(u), dtype=float)

    def forward_matrix(self) -> np.ndarray:
        """Dense ``F``; applies an operator-form forward map to the identity."""
        if self.is_dense:
            return self.forward
        return self.apply_forward(np.eye(self.n_params))

    def matrix(self) -> np.ndarray:
        """``A = sigma_R^{-1} Gamma_pr^{1/2} F^T``, cached after the first call."""
        if self._a is None:
            if self.is_dense:
                ft = self.forward.T
            elif self.adjoint is not None:
                ft = np.asarray(self.adjoint(np.eye(self.n_obs)), dtype=float)
            else:
                raise ValueError(
                    "the forward map has no adjoint, so A cannot be formed; "
                    "use sketch_first, which needs only forward applications"
                )
            self._a = (self.prior_sqrt @ ft) / self.noise_sigma
        return self._a

    def tensor(self) -> np.ndarray:
        return matrix_to_tensor(self.matrix(), self.mode_sizes)

    def sketch(self, omega) -> np.ndarray:
        """``Y = Omega A`` computed as ``(sigma_R^{-1} F (Gamma_pr^{1/2} Omega^T))^T``.

        Only forward applications are used.
        """
        omega = np.asarray(omega, dtype=float)
        if omega.ndim != 2 or omega.shape[1] != self.n_params:
            raise ValueError(f"sketch of shape {omega.shape} does not act on {self.n_params} parameters")
        yt = self.apply_forward(self.prior_sqrt @ omega.T) / self.noise_sigma
        return np.ascontiguousarray(yt.T)

    def with_noise(self, sigma: float) -> DesignProblem:
        """Copy with a different noise level (data kept as is)."""
        return DesignProblem(self.forward, self.prior_sqrt, sigma, self.mode_sizes, self.adjoint,
                             self.u_true, self.data, self.kind, dict(self.config), self.seed)


def build_a(p: DesignProblem) -> np.ndarray:
    """The design matrix ``A`` of a problem."""
    return p.matrix()


def _check_selection(mode_sizes, sel: SelectionOperator):
    if tuple(sel.mode_sizes) != tuple(mode_sizes):
        raise ValueError(f"selection for modes {sel.mode_sizes} does not match {tuple(mode_sizes)}")


def subsampled_eig(a, sel: SelectionOperator) -> float:
    """``logdet(I + (A S)(A S)^T)`` for a structured selection ``S``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[1] != prod(sel.mode_sizes):
        raise ValueError(f"matrix of shape {a.shape} does not fit modes {sel.mode_sizes}")
    return psi(tensor_to_matrix(apply_selection(matrix_to_tensor(a, sel.mode_sizes), sel)))


def posterior_mean(p: DesignProblem, sel: Optional[SelectionOperator] = None,
                   data=None, u_pr=None) -> np.ndarray:
    """Posterior mean from the observations kept by ``sel``.

    Evaluated as ``u_pr + Gamma^{1/2} A_S (I + A_S^T A_S)^{-1} (S^T d / sigma_R - A_S^T Gamma^{-1/2} u_pr)``,
    which equals the textbook precision form but needs only a ``K x K``
    factorization. ``sel=None`` means all observations.
    """
    if sel is None:
        sel = SelectionOperator.identity(p.mode_sizes)
    _check_selection(p.mode_sizes, sel)
    d = p.data if data is None else np.asarray(data, dtype=float).ravel()
    if d is None:
        raise ValueError("problem carries no data")
    if d.size != p.n_obs:
        raise ValueError(f"data has length {d.size}, expected {p.n_obs}")
    cols = sel.column_indices()
    a_s = p.matrix()[:, cols]
    rhs = d[cols] / p.noise_sigma
    u0 = np.zeros(p.n_params) if u_pr is None else np.asarray(u_pr, dtype=float).ravel()
    if u_pr is not None:
        rhs = rhs - a_s.T @ np.linalg.solve(p.prior_sqrt, u0)
    try:
        fac = cho_factor(np.eye(len(cols)) + a_s.T @ a_s, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("posterior system is not positive definite") from exc
    return u0 + p.prior_sqrt @ (a_s @ cho_solve(fac, rhs))


def posterior_precision(p: DesignProblem, sel: Optional[SelectionOperator] = None) -> np.ndarray:
    """``Gamma_pr^{-1} + sigma_R^{-2} F^T S S^T F``."""
    if sel is None:
        sel = SelectionOperator.identity(p.mode_sizes)
    _check_selection(p.mode_sizes, sel)
    f_s = p.forward_matrix()[sel.column_indices()]
    g_inv = np.linalg.inv(p.prior_sqrt)
    prior_prec = g_inv @ g_inv
    return 0.5 * (prior_prec + prior_prec.T) + (f_s.T @ f_s) / p.noise_sigma**2


def posterior_eig(p: DesignProblem, sel: Optional[SelectionOperator] = None) -> float:
    """``logdet(Gamma^{1/2} Gamma_post^{-1} Gamma^{1/2})`` from the posterior precision."""
    g = p.prior_sqrt
    sign, logdet = np.linalg.slogdet(g @ posterior_precision(p, sel) @ g)
    if sign <= 0:
        raise ValueError("posterior precision is not positive definite")
    return float(logdet)


def _noisy_data(f, u, noise, seed):
    clean = f @ u
    sigma = noise * np.linalg.norm(clean) / sqrt(clean.size)
    if not sigma > 0:
        raise ValueError("noise-free data vanish; cannot set a relative noise level")
    return sigma, clean + sigma * make_rng(seed, "noise").standard_normal(clean.size)


@dataclass(frozen=True)
class HeatConfig:
    """1-D heat equation on ``[0, 1]`` with ``dof`` mesh nodes (ends included)."""

    dof: int = 401
    kappa: float = sqrt(3.0)
    dt: float = 4e-3
    snapshots: int = 10
    sensors: int = 28
    gamma: float = 0.1
    noise: float = 0.02

    def __post_init__(self):
        if self.dof < 3:
            raise ValueError("heat mesh needs at least 3 nodes")
        if self.snapshots < 1 or self.sensors < 1:
            raise ValueError("snapshots and sensors must be positive")
        if self.sensors > self.dof - 2:
            raise ValueError(f"{self.sensors} sensors do not fit {self.dof - 2} interior nodes")
        if not (self.kappa > 0 and self.gamma > 0 and self.noise > 0 and self.dt >= 0):
            raise ValueError("kappa, gamma and noise must be positive and dt non-negative")


def heat_operators(cfg: HeatConfig):
    """Mesh nodes, P1 mass and stiffness matrices, one implicit Euler step,
    and the sensor node indices."""
    n = cfg.dof
    h = 1.0 / (n - 1)
    x = np.linspace(0.0, 1.0, n)
    main_m = np.full(n, 4.0 * h / 6.0)
    main_m[[0, -1]] = h / 3.0
    main_k = np.full(n, 2.0 / h)
    main_k[[0, -1]] = 1.0 / h
    mass = diags([np.full(n - 1, h / 6.0), main_m, np.full(n - 1, h / 6.0)], [-1, 0, 1]).toarray()
    stiff = diags([np.full(n - 1, -1.0 / h), main_k, np.full(n - 1, -1.0 / h)], [-1, 0, 1]).toarray()
    # homogeneous Dirichlet ends: the step acts on interior nodes only
    inner = np.arange(1, n - 1)
    step = np.zeros((n, n))
    lhs = (mass + cfg.dt * cfg.kappa * stiff)[np.ix_(inner, inner)]
    step[np.ix_(inner, inner)] = np.linalg.solve(lhs, mass[np.ix_(inner, inner)])
    targets = np.arange(1, cfg.sensors + 1) / (cfg.sensors + 1)
    nodes = np.array([int(np.argmin(np.abs(x - t))) for t in targets])
    return x, mass, stiff, step, nodes


def heat_problem(cfg: HeatConfig = HeatConfig(), seed: int = 0) -> DesignProblem:
    """Sensor placement for the 1-D heat equation.

    Observation ``(i, l)`` reads sensor ``i`` at snapshot ``l`` (``l = 0`` is
    the initial state). The prior is ``(gamma K + N)^{-1} N (gamma K + N)^{-1}``
    and the unknown is the initial temperature.
    """
    x, mass, stiff, step, nodes = heat_operators(cfg)
    n = cfg.dof
    blocks = []
    prop = np.eye(n)
    for _ in range(cfg.snapshots):
        blocks.append(prop[nodes])
        prop = step @ prop
    # stack as (sensor, snapshot) with the sensor index fastest
    f = np.concatenate(blocks, axis=0)
    inv = np.linalg.inv(cfg.gamma * stiff + mass)
    cov = inv @ mass @ inv
    prior_sqrt = sym_sqrt(0.5 * (cov + cov.T))
    u_true = np.exp(-(((x - 0.45) / 0.1) ** 2))
    sigma, data = _noisy_data(f, u_true, cfg.noise, seed)
    return DesignProblem(f, prior_sqrt, sigma, (cfg.sensors, cfg.snapshots), None, u_true, data,
                         "heat", asdict(cfg), seed)


@dataclass(frozen=True)
class TomoConfig:
    """Straight-ray tomography on the unit square with a ``grid x grid`` image.

    Sources sit on the right edge, receivers on the top edge.
    """

    grid: int = 32
    sources: int = 16
    receivers: int = 20
    length_scale: float = 0.15
    variance: float = 1.0
    noise: float = 0.02

    def __post_init__(self):
        if min(self.grid, self.sources, self.receivers) < 1:
            raise ValueError("grid, sources and receivers must be positive")
        if not (self.length_scale > 0 and self.variance > 0 and self.noise > 0):
            raise ValueError("length scale, variance and noise must be positive")


def ray_weights(p0, p1, grid: int) -> np.ndarray:
    """Pixel weights of the segment ``p0 -> p1`` by midpoint quadrature with a
    step of at most half a pixel. Pixel ``(ix, iy)`` has index ``ix + grid * iy``."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    length = float(np.linalg.norm(p1 - p0))
    w = np.zeros(grid * grid)
    if length == 0.0:
        return w
    steps = int(np.ceil(length / (0.5 / grid)))
    t = (np.arange(steps) + 0.5) / steps
    pts = p0 + np.outer(t, p1 - p0)
    ij = np.clip(np.floor(pts * grid).astype(int), 0, grid - 1)
    np.add.at(w, ij[:, 0] + grid * ij[:, 1], length / steps)
    return w


def tomo_problem(cfg: TomoConfig = TomoConfig(), seed: int = 0) -> DesignProblem:
    """Source/receiver selection for straight-ray travel-time tomography.

    Observation ``(a, b)`` is the ray from source ``a`` at ``(1, (a + 1/2)/s)``
    to receiver ``b`` at ``((b + 1/2)/q, 1)``. The prior is a squared
    exponential kernel on the pixel centres with a small nugget.
    """
    g, s, q = cfg.grid, cfg.sources, cfg.receivers
    ys = (np.arange(s) + 0.5) / s
    xr = (np.arange(q) + 0.5) / q
    f = np.empty((s * q, g * g))
    for b in range(q):
        for a in range(s):
            f[a + s * b] = ray_weights((1.0, ys[a]), (xr[b], 1.0), g)
    c = (np.arange(g) + 0.5) / g
    px = np.tile(c, g)
    py = np.repeat(c, g)
    dist2 = (px[:, None] - px[None, :]) ** 2 + (py[:, None] - py[None, :]) ** 2
    cov = cfg.variance * np.exp(-dist2 / (2.0 * cfg.length_scale**2))
    cov += 1e-8 * cfg.variance * np.eye(g * g)
    prior_sqrt = sym_sqrt(cov)
    u_true = (np.exp(-((px - 0.7) ** 2 + (py - 0.7) ** 2) / (2 * 0.12**2))
              - 0.6 * np.exp(-((px - 0.82) ** 2 + (py - 0.42) ** 2) / (2 * 0.08**2)))
    sigma, data = _noisy_data(f, u_true, cfg.noise, seed)
    return DesignProblem(f, prior_sqrt, sigma, (s, q), None, u_true, data,
                         "tomo", asdict(cfg), seed)


def lowrank_problem(n: int, mode_sizes: Sequence[int], rank: int, decay: float,
                    seed: int = 0, scale: float = 1.0) -> DesignProblem:
    """Problem whose design matrix is ``U diag(scale * decay^i) V^T`` with random
    orthonormal ``U`` (``n x rank``) and ``V`` (``M x rank``).

    Exposed with ``F = A^T``, ``Gamma_pr = I`` and ``sigma_R = 1``.
    """
    mode_sizes = tuple(int(m) for m in mode_sizes)
    m = prod(mode_sizes)
    if not 1 <= rank <= min(n, m):
        raise ValueError(f"rank must lie in [1, {min(n, m)}], got {rank}")
    if decay < 0 or scale <= 0:
        raise ValueError("decay must be non-negative and scale positive")
    rng = make_rng(seed, "lowrank")
    u, _ = np.linalg.qr(rng.standard_normal((n, rank)))
    v, _ = np.linalg.qr(rng.standard_normal((m, rank)))
    sigma = scale * float(decay) ** np.arange(rank)
    a = (u * sigma) @ v.T
    config = {"n": n, "mode_sizes": list(mode_sizes), "rank": rank, "decay": decay, "scale": scale}
    return DesignProblem(np.ascontiguousarray(a.T), np.eye(n), 1.0, mode_sizes,
                         kind="lowrank", config=config, seed=seed)
