"""Sparse binary observation tensor with per-cell confidence weights.

Only the observed (value 1) cells are stored, each with a weight above 1.
Every unstored cell is implicitly 0 with weight exactly 1, which is what
lets the solver precompute the zero-cell contribution from Gram matrices
instead of touching the full tensor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .events import EventLog

__all__ = [
    "TensorShape",
    "WeightingScheme",
    "ObservationTensor",
    "TensorBuildError",
    "build_tensor",
]


class TensorBuildError(ValueError):
    pass


@dataclass(frozen=True)
class TensorShape:
    """Dimension sizes and axis roles; exactly one user and one item axis."""

    dims: tuple
    axis_roles: tuple

    def __init__(self, dims: Sequence[int], axis_roles: Sequence[str]):
        object.__setattr__(self, "dims", tuple(int(s) for s in dims))
        object.__setattr__(self, "axis_roles", tuple(str(r) for r in axis_roles))
        if len(self.dims) < 2:
            raise ValueError("tensor needs at least 2 dimensions")
        if any(s < 1 for s in self.dims):
            raise ValueError(f"every dimension size must be >= 1, got {self.dims}")
        if len(self.axis_roles) != len(self.dims):
            raise ValueError("axis_roles must match dims in length")
        if self.axis_roles.count("user") != 1 or self.axis_roles.count("item") != 1:
            raise ValueError("axis_roles needs exactly one 'user' and one 'item' entry")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def user_axis(self) -> int:
        return self.axis_roles.index("user")

    @property
    def item_axis(self) -> int:
        return self.axis_roles.index("item")

    @property
    def context_axes(self) -> tuple:
        return tuple(
            i for i, r in enumerate(self.axis_roles) if r not in ("user", "item")
        )

    def n_cells(self) -> int:
        return int(np.prod([int(s) for s in self.dims], dtype=object))


@dataclass(frozen=True)
class WeightingScheme:
    """Affine cell weighting: w = base + alpha * (weighted event count).

    Guarantees w > 1 on observed cells provided alpha >= 0 and
    base + alpha > 1, which the constructor enforces.
    """

    base: float = 1.0
    alpha: float = 100.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.base + self.alpha <= 1.0:
            raise ValueError("base + alpha must exceed 1 so observed weights stay > 1")


class ObservationTensor:
    """Immutable sparse record of the observed cells and their weights.

    ``coords`` is an (N+, D) int64 array in lexicographic order and
    ``weights`` the matching float64 confidences, all strictly greater
    than 1.  ``support[i][j]`` counts stored cells whose i-th coordinate
    is j.
    """

    def __init__(self, shape: TensorShape, coords: np.ndarray, weights: np.ndarray):
        coords = np.asarray(coords, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != shape.ndim:
            raise TensorBuildError(
                f"coords must be (n, {shape.ndim}), got {coords.shape}"
            )
        if weights.shape != (coords.shape[0],):
            raise TensorBuildError("weights must align with coords rows")
        for axis, size in enumerate(shape.dims):
            col = coords[:, axis]
            if col.size and (col.min() < 0 or col.max() >= size):
                role = shape.axis_roles[axis]
                raise TensorBuildError(
                    f"coordinate out of bounds on axis {axis} ({role}, size {size})"
                )
        if not np.all(weights > 1.0):
            raise TensorBuildError("every stored cell weight must be > 1")

        # canonical lexicographic order: deterministic and duplicate-checkable
        if coords.shape[0]:
            order = np.lexsort(tuple(coords[:, a] for a in reversed(range(shape.ndim))))
            coords = coords[order]
            weights = weights[order]
            dup = np.all(coords[1:] == coords[:-1], axis=1)
            if np.any(dup):
                where = coords[1:][dup][0]
                raise TensorBuildError(f"duplicate coordinate {tuple(int(c) for c in where)}")

        coords.setflags(write=False)
        weights.setflags(write=False)
        self.shape = shape
        self.coords = coords
        self.weights = weights
        self.support = [
            np.bincount(coords[:, a], minlength=shape.dims[a]).astype(np.int64)
            for a in range(shape.ndim)
        ]
        self._groups: dict = {}

    @property
    def n_nonzero(self) -> int:
        return int(self.coords.shape[0])

    @property
    def ndim(self) -> int:
        return self.shape.ndim

    def axis_groups(self, axis: int):
        """Cells grouped by their coordinate on one axis.

        Returns (order, starts): ``order[starts[j]:starts[j+1]]`` indexes
        the cells whose ``axis`` coordinate equals j.  This is the
        indexing that stands in for unfolding the tensor.
        """
        cached = self._groups.get(axis)
        if cached is None:
            col = self.coords[:, axis]
            order = np.argsort(col, kind="stable")
            starts = np.searchsorted(col[order], np.arange(self.shape.dims[axis] + 1))
            cached = (order, starts)
            self._groups[axis] = cached
        return cached


def build_tensor(
    events: EventLog,
    context_states: Optional[Sequence[Sequence[tuple]]],
    shape: TensorShape,
    scheme: WeightingScheme = WeightingScheme(),
) -> ObservationTensor:
    """Aggregate events into an observation tensor.

    ``context_states[e]`` lists (state, relative-weight) pairs for event e
    on the single context axis; relative weights must lie in (0, 1].  With
    a 2-dimensional shape the context input is ignored and cells are keyed
    (user, item).  Repeat events on one cell merge into its weight:
    w = base + alpha * sum of contributing relative weights.
    """
    d = shape.ndim
    if d not in (2, 3):
        raise TensorBuildError(
            "event-based construction supports 2 or 3 dimensions; "
            "synthesize higher-order tensors directly"
        )
    n_events = len(events)

    if d == 2:
        keys = np.stack([events.users, events.items], axis=1)
        contributions = np.ones(n_events, dtype=np.float64)
    else:
        if context_states is None or len(context_states) != n_events:
            raise TensorBuildError("context_states must provide one entry per event")
        ctx_axis = shape.context_axes[0]
        rows, contrib = [], []
        for e in range(n_events):
            for state, rel in context_states[e]:
                if not (0 < rel <= 1.0):
                    raise TensorBuildError(
                        f"relative weight must be in (0, 1], got {rel} for event {e}"
                    )
                row = [0, 0, 0]
                row[shape.user_axis] = int(events.users[e])
                row[shape.item_axis] = int(events.items[e])
                row[ctx_axis] = int(state)
                rows.append(row)
                contrib.append(float(rel))
        keys = np.asarray(rows, dtype=np.int64).reshape(-1, 3)
        contributions = np.asarray(contrib, dtype=np.float64)

    for axis in range(d):
        size = shape.dims[axis]
        col = keys[:, axis]
        if col.size and (col.min() < 0 or col.max() >= size):
            role = shape.axis_roles[axis]
            raise TensorBuildError(
                f"coordinate out of bounds on axis {axis} ({role}, size {size})"
            )

    if keys.shape[0] == 0:
        coords = np.empty((0, d), dtype=np.int64)
        weights = np.empty(0, dtype=np.float64)
        return ObservationTensor(shape, coords, weights)

    flat = np.ravel_multi_index(tuple(keys[:, a] for a in range(d)), shape.dims)
    unique_flat, inverse = np.unique(flat, return_inverse=True)
    totals = np.zeros(unique_flat.shape[0], dtype=np.float64)
    np.add.at(totals, inverse, contributions)
    coords = np.stack(np.unravel_index(unique_flat, shape.dims), axis=1).astype(np.int64)
    weights = scheme.base + scheme.alpha * totals
    if not np.all(weights > 1.0):
        raise TensorBuildError(
            "weighting scheme produced a cell weight <= 1; raise base or alpha"
        )
    return ObservationTensor(shape, coords, weights)
