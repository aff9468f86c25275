"""ALS training for implicit-feedback tensor factorization.

The model approximates a binary D-dimensional tensor as the elementwise
product of one factor column per axis, summed over K features.  Training
alternates over axes; each axis update solves, per column, the
confidence-weighted ridge system

    (J + sum_cells (w - 1) v v^T + lambda I) m = sum_cells w v

where v is the Hadamard product of the other axes' columns at a stored
cell's coordinates and J, the contribution of every implicit zero cell,
is the Hadamard product of the other axes' cached K x K Gram matrices.
Splitting each stored weight as 1 + (w - 1) is what removes the full
tensor sweep: zero cells are covered entirely by the Gram product, so an
epoch costs O(K^2 N+ + K^3 sum S_i) instead of touching all cells.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .tensor import ObservationTensor, TensorShape

__all__ = [
    "TrainConfig",
    "Model",
    "SolverError",
    "effective_lambda",
    "effective_lambdas",
    "predict_cell",
    "solve_axis",
    "fit",
    "solve_ridge",
    "init_factors",
]

log = logging.getLogger("itals")

REG_MODES = ("constant", "support")


class SolverError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``reg_mode='support'`` scales the base regularization by each
    column's stored-cell count (floored at 1 for empty columns);
    ``'constant'`` applies ``reg`` uniformly.  ``init_scale`` defaults to
    1/sqrt(features) so initial predictions start near the data scale.
    """

    features: int = 20
    epochs: int = 10
    reg: float = 0.0
    reg_mode: str = "constant"
    seed: int = 0
    init_scale: Optional[float] = None

    def __post_init__(self):
        if self.features < 1:
            raise ValueError("features must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.reg < 0:
            raise ValueError("reg must be >= 0")
        if self.reg_mode not in REG_MODES:
            raise ValueError(f"reg_mode must be one of {REG_MODES}")
        if self.init_scale is None:
            self.init_scale = 1.0 / np.sqrt(self.features)
        if self.init_scale <= 0:
            raise ValueError("init_scale must be > 0")


@dataclass
class Model:
    """Trained factorization: one K x S_i factor matrix per axis.

    ``grams[i]`` caches factors[i] @ factors[i].T and is kept consistent
    by the axis updates.  ``id_maps`` optionally carries the original
    string ids per axis (None for axes without one).
    """

    shape: TensorShape
    factors: list
    grams: list
    config: TrainConfig
    id_maps: Optional[list] = None

    @property
    def ndim(self) -> int:
        return self.shape.ndim

    @property
    def features(self) -> int:
        return int(self.factors[0].shape[0])

    def refresh_grams(self) -> None:
        self.grams = [m @ m.T for m in self.factors]


def init_factors(config: TrainConfig, dims: Sequence[int]) -> list:
    """Seeded positive uniform init in (0, init_scale), axis by axis."""
    rng = np.random.default_rng(config.seed)
    return [
        rng.uniform(0.0, config.init_scale, size=(config.features, int(s)))
        for s in dims
    ]


def effective_lambda(
    config: TrainConfig, obs: ObservationTensor, axis: int, column: int
) -> float:
    """Per-column regularization; support mode floors empty columns at reg * 1."""
    if config.reg_mode == "constant":
        return config.reg
    return config.reg * max(int(obs.support[axis][column]), 1)


def effective_lambdas(config: TrainConfig, obs: ObservationTensor, axis: int) -> np.ndarray:
    """Vectorized effective_lambda over all columns of one axis."""
    size = obs.shape.dims[axis]
    if config.reg_mode == "constant":
        return np.full(size, config.reg, dtype=np.float64)
    return config.reg * np.maximum(obs.support[axis], 1).astype(np.float64)


def predict_cell(model: Model, coord: Sequence[int]) -> float:
    """Score one cell: sum over features of the product of factor entries."""
    coord = tuple(int(c) for c in coord)
    if len(coord) != model.ndim:
        raise IndexError(f"coordinate must have {model.ndim} entries")
    v = np.ones(model.features, dtype=np.float64)
    for axis, c in enumerate(coord):
        if not (0 <= c < model.shape.dims[axis]):
            raise IndexError(
                f"coordinate {c} out of bounds on axis {axis} "
                f"(size {model.shape.dims[axis]})"
            )
        v = v * model.factors[axis][:, c]
    return float(v.sum())


def solve_ridge(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """Solve (a + lam I) x = b, Cholesky first, pivoted LU as fallback.

    The system matrix is never inverted explicitly.  An exactly singular
    system with lam == 0 raises SolverError.
    """
    k = a.shape[0]
    system = a + lam * np.eye(k)
    try:
        cho = scipy.linalg.cho_factor(system, lower=True, check_finite=False)
        return scipy.linalg.cho_solve(cho, b, check_finite=False)
    except scipy.linalg.LinAlgError:
        pass
    try:
        return np.linalg.solve(system, b)
    except np.linalg.LinAlgError as exc:
        raise SolverError(
            "singular normal equations; use a regularization value > 0"
        ) from exc


def _segment_sums(arr: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Per-segment row sums of a (K, n) array; arr must end at starts[-1].

    ``starts`` has one more entry than there are segments.  Empty
    segments sum to zero; reduceat only sees the nonempty starts, which
    sidesteps its empty-slice and past-the-end quirks (consecutive
    nonempty starts still bound each segment exactly because the empty
    segments between them contain no cells).
    """
    n_seg = len(starts) - 1
    result = np.zeros((arr.shape[0], n_seg))
    idx = starts[:-1]
    nonempty = starts[1:] > idx
    if arr.shape[1] and nonempty.any():
        result[:, nonempty] = np.add.reduceat(arr, idx[nonempty], axis=1)
    return result


def _cho_solve_stacked(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cholesky-solve a stack of SPD systems: a is (m, K, K), b is (m, K).

    numpy has stacked cholesky but no stacked triangular solve, so the
    substitution loops run over K with all systems vectorized.
    """
    lower = np.linalg.cholesky(a)
    k = b.shape[1]
    y = np.empty_like(b)
    for i in range(k):
        y[:, i] = (b[:, i] - np.einsum("sj,sj->s", lower[:, i, :i], y[:, :i])) / lower[:, i, i]
    x = np.empty_like(b)
    for i in range(k - 1, -1, -1):
        x[:, i] = (y[:, i] - np.einsum("sj,sj->s", lower[:, i + 1 :, i], x[:, i + 1 :])) / lower[
            :, i, i
        ]
    return x


# block limits for the vectorized axis solve: cells per block keeps the
# gathered (K, cells) working set cache-sized, columns per block bounds
# the stacked (cols, K, K) system buffer
CELL_BLOCK = 8192
SOLVE_BLOCK = 1024


def _column_blocks(starts: np.ndarray, max_cells: int, max_cols: int) -> list:
    """Split columns into [c0, c1) blocks bounding cells and columns per block.

    A single column with more than max_cells stored cells becomes its own
    block.
    """
    size = len(starts) - 1
    blocks = []
    c0 = 0
    while c0 < size:
        c1 = int(np.searchsorted(starts, starts[c0] + max_cells, side="right")) - 1
        c1 = max(c1, c0 + 1)
        c1 = min(c1, c0 + max_cols, size)
        blocks.append((c0, c1))
        c0 = c1
    return blocks


def solve_axis(
    model: Model,
    obs: ObservationTensor,
    axis: int,
    lambda_eff,
) -> None:
    """Exactly solve every column of one factor matrix, then refresh its Gram.

    ``lambda_eff`` is a scalar or per-column array of ridge terms.  The
    Gram matrices of all other axes must be consistent with their factors
    when called; ``fit`` maintains that invariant.

    Stored cells are processed in column blocks: the Hadamard cell
    vectors of a block are gathered in one pass, every column's system
    accumulates via segmented sums, and the block's columns are solved by
    one stacked Cholesky (falling back to per-column solves if any system
    in the block is not positive definite).
    """
    d = model.ndim
    size = obs.shape.dims[axis]
    k = model.features
    others = [a for a in range(d) if a != axis]

    base = model.grams[others[0]].copy()
    for a in others[1:]:
        base *= model.grams[a]

    lam = np.broadcast_to(np.asarray(lambda_eff, dtype=np.float64), (size,))
    order, starts = obs.axis_groups(axis)
    coords = obs.coords
    matrix = model.factors[axis]
    eye = np.arange(k)

    for c0, c1 in _column_blocks(starts, CELL_BLOCK, SOLVE_BLOCK):
        lo, hi = starts[c0], starts[c1]
        cells = order[lo:hi]
        n_cols = c1 - c0
        seg = starts[c0 : c1 + 1] - lo

        # Hadamard product of the other axes' columns, one K-vector per
        # stored cell; w splits as 1 + (w - 1) so the zero cells are
        # already covered by the Gram product in `base`.
        # np.take keeps gathers C-contiguous, which reduceat needs to be fast
        v = model.factors[others[0]].take(coords[cells, others[0]], axis=1)
        for a in others[1:]:
            v *= model.factors[a].take(coords[cells, a], axis=1)
        w = obs.weights[cells]
        confidence = v * (w - 1.0)

        systems = np.empty((n_cols, k, k))
        buf = np.empty_like(v)
        for row in range(k):
            np.multiply(confidence, v[row], out=buf)
            systems[:, row, :] = _segment_sums(buf, seg).T
        systems += base
        systems[:, eye, eye] += lam[c0:c1, None]
        np.multiply(v, w, out=buf)
        rhs = _segment_sums(buf, seg).T

        try:
            solution = _cho_solve_stacked(systems, rhs)
        except np.linalg.LinAlgError:
            solution = np.empty_like(rhs)
            for j in range(n_cols):
                solution[j] = solve_ridge(
                    systems[j] - lam[c0 + j] * np.eye(k), rhs[j], lam[c0 + j]
                )
        matrix[:, c0:c1] = solution.T

    model.grams[axis] = matrix @ matrix.T


def fit(
    obs: ObservationTensor,
    config: TrainConfig,
    id_maps: Optional[list] = None,
    after_axis: Optional[Callable] = None,
) -> Model:
    """Train a model by alternating exact axis solves.

    Factors start from a seeded uniform init, Grams are precomputed, and
    each epoch sweeps axes in order.  Deterministic given seed, data and
    config.  ``after_axis(model, epoch, axis)`` is invoked after every
    axis update when provided (used for loss tracing).
    """
    if obs.n_nonzero == 0:
        raise SolverError("cannot fit an empty observation tensor")
    d = obs.ndim
    factors = init_factors(config, obs.shape.dims)
    grams = [m @ m.T for m in factors]
    model = Model(obs.shape, factors, grams, config, id_maps)

    lams = [effective_lambdas(config, obs, axis) for axis in range(d)]
    for epoch in range(config.epochs):
        started = time.perf_counter()
        for axis in range(d):
            solve_axis(model, obs, axis, lams[axis])
            if after_axis is not None:
                after_axis(model, epoch, axis)
        log.info(
            "epoch %d/%d finished in %.3fs",
            epoch + 1,
            config.epochs,
            time.perf_counter() - started,
        )
    return model
