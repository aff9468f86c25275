"""Implicit-feedback baselines: plain iALS and the per-context composite.

iALS is the classic two-matrix formulation (user and item passes against
the other side's Gram); it is kept as a standalone code path so the
generic tensor solver's two-dimensional reduction can be checked against
it.  The composite baseline (iCA) trains one independent iALS model per
context state on that state's slice of the events.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .solver import (
    Model,
    SolverError,
    TrainConfig,
    effective_lambdas,
    init_factors,
    predict_cell,
    solve_ridge,
)
from .tensor import ObservationTensor, TensorShape

__all__ = ["CompositeModel", "fit_ials", "fit_ica", "predict_ica"]

log = logging.getLogger("itals")


def fit_ials(
    obs: ObservationTensor,
    config: TrainConfig,
    id_maps: Optional[list] = None,
) -> Model:
    """Train a two-dimensional implicit ALS model.

    Alternates a user pass and an item pass per epoch.  Each pass builds
    the other side's Gram once, then per row adds the (w - 1)-weighted
    outer products of the observed columns and solves the ridge system.
    """
    if obs.ndim != 2:
        raise SolverError("iALS requires a 2-dimensional observation tensor")
    if obs.n_nonzero == 0:
        raise SolverError("cannot fit an empty observation tensor")

    factors = init_factors(config, obs.shape.dims)
    lams = [effective_lambdas(config, obs, axis) for axis in range(2)]
    k = config.features

    for _epoch in range(config.epochs):
        for axis in (0, 1):
            this, other = factors[axis], factors[1 - axis]
            gram = other @ other.T
            order, starts = obs.axis_groups(axis)
            other_coords = obs.coords[:, 1 - axis]
            for j in range(obs.shape.dims[axis]):
                cells = order[starts[j] : starts[j + 1]]
                if cells.size == 0:
                    this[:, j] = solve_ridge(gram, np.zeros(k), lams[axis][j])
                    continue
                cols = other[:, other_coords[cells]]
                w = obs.weights[cells]
                a_mat = gram + (cols * (w - 1.0)) @ cols.T
                this[:, j] = solve_ridge(a_mat, cols @ w, lams[axis][j])

    grams = [m @ m.T for m in factors]
    return Model(obs.shape, factors, grams, config, id_maps)


@dataclass
class CompositeModel:
    """One iALS model per context state; empty states hold None.

    All sub-models share the feature count and the user/item vocabulary
    (and therefore the id maps), so their item rankings are comparable.
    """

    context_axis: int
    shape: TensorShape
    submodels: list
    config: TrainConfig
    id_maps: Optional[list] = None

    @property
    def n_states(self) -> int:
        return len(self.submodels)

    @property
    def features(self) -> int:
        return self.config.features


def _pair_shape(shape: TensorShape) -> TensorShape:
    return TensorShape(
        (shape.dims[shape.user_axis], shape.dims[shape.item_axis]), ("user", "item")
    )


def slice_by_state(obs: ObservationTensor, state: int) -> ObservationTensor:
    """The (user, item) sub-tensor of cells whose context equals state."""
    if obs.ndim != 3:
        raise SolverError("state slicing requires a 3-dimensional tensor")
    ctx_axis = obs.shape.context_axes[0]
    mask = obs.coords[:, ctx_axis] == state
    coords = np.stack(
        [
            obs.coords[mask, obs.shape.user_axis],
            obs.coords[mask, obs.shape.item_axis],
        ],
        axis=1,
    )
    return ObservationTensor(_pair_shape(obs.shape), coords, obs.weights[mask])


def fit_ica(
    obs: ObservationTensor,
    config: TrainConfig,
    id_maps: Optional[list] = None,
) -> CompositeModel:
    """Train the composite baseline: one iALS model per context state.

    States with no stored cells get a null model that scores everything
    zero.  Sub-models share hyperparameters and the global vocabularies.
    """
    if obs.ndim != 3:
        raise SolverError("the composite baseline requires user, item and one context axis")
    ctx_axis = obs.shape.context_axes[0]
    n_states = obs.shape.dims[ctx_axis]
    pair_maps = None
    if id_maps is not None:
        pair_maps = [id_maps[obs.shape.user_axis], id_maps[obs.shape.item_axis]]

    submodels: list = []
    for state in range(n_states):
        part = slice_by_state(obs, state)
        if part.n_nonzero == 0:
            submodels.append(None)
            continue
        log.info("composite state %d/%d: %d cells", state + 1, n_states, part.n_nonzero)
        submodels.append(fit_ials(part, config, pair_maps))
    return CompositeModel(ctx_axis, obs.shape, submodels, config, id_maps)


def predict_ica(model: CompositeModel, user: int, item: int, state: int) -> float:
    """Score from the state's sub-model; null states score 0."""
    if not (0 <= state < model.n_states):
        raise IndexError(f"context state {state} out of bounds ({model.n_states} states)")
    sub = model.submodels[state]
    if sub is None:
        return 0.0
    return predict_cell(sub, (user, item))
