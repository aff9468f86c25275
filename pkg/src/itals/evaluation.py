"""Date splits, implicitization and top-N ranking metrics.

Recall@N and precision@N follow the per-user convention: relevant items
are the distinct items the user touched in the test period, one ranking
is produced per user from their request-time context, and metrics are
averaged over the users with at least one test event.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .baseline import CompositeModel
from .context import resolve_context_vector
from .events import EventLog, RatingLog
from .solver import Model

__all__ = [
    "SplitSpec",
    "RankedList",
    "RankingReport",
    "EvalError",
    "implicitize",
    "split_by_date",
    "score_items",
    "recommend_topn",
    "recall_precision_at",
    "emit_pr_curve",
]

log = logging.getLogger("itals")


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    """Date-based split: train strictly before, test at or after.

    With a horizon, test events at or past split_timestamp + horizon are
    dropped entirely.
    """

    split_timestamp: int
    test_horizon: Optional[int] = None

    def __post_init__(self):
        if self.test_horizon is not None and self.test_horizon <= 0:
            raise EvalError("test_horizon must be positive when given")


def split_by_date(events: EventLog, spec: SplitSpec):
    """Partition an event log into (train, test) by timestamp."""
    train_mask = events.timestamps < spec.split_timestamp
    test_mask = ~train_mask
    if spec.test_horizon is not None:
        test_mask &= events.timestamps < spec.split_timestamp + spec.test_horizon
    train = events.select(train_mask)
    test = events.select(test_mask)
    if len(train) == 0:
        log.warning("date split produced an empty training set")
    if len(test) == 0:
        log.warning("date split produced an empty test set")
    return train, test


def implicitize(ratings: RatingLog, threshold: float) -> EventLog:
    """Keep ratings at or above the threshold as positive implicit events."""
    mask = ratings.ratings >= threshold
    return EventLog(
        users=ratings.users[mask],
        items=ratings.items[mask],
        timestamps=ratings.timestamps[mask],
        categories=None,
        user_ids=ratings.user_ids,
        item_ids=ratings.item_ids,
        category_ids=None,
    )


@dataclass
class RankedList:
    """Top-N recommendation for one user: item ids with descending scores."""

    user: int
    context: Optional[list]
    items: np.ndarray
    scores: np.ndarray


StateInput = Union[int, Sequence, Mapping, None]


def _states_per_axis(model: Model, states: StateInput) -> dict:
    """Normalize context-state input to {axis: [(state, weight), ...]}."""
    ctx_axes = model.shape.context_axes
    if not ctx_axes:
        return {}
    if states is None:
        raise EvalError("model has a context axis; context states are required")
    if isinstance(states, Mapping):
        return {axis: list(pairs) for axis, pairs in states.items()}
    if len(ctx_axes) != 1:
        raise EvalError("pass a {axis: states} mapping for multi-context models")
    if isinstance(states, (int, np.integer)):
        return {ctx_axes[0]: [(int(states), 1.0)]}
    return {ctx_axes[0]: list(states)}


def _dominant_state(states: StateInput) -> int:
    if states is None:
        raise EvalError("the composite baseline needs a context state")
    if isinstance(states, (int, np.integer)):
        return int(states)
    if isinstance(states, Mapping):
        if len(states) != 1:
            raise EvalError("composite models have exactly one context axis")
        states = next(iter(states.values()))
    pairs = list(states)
    if not pairs:
        raise EvalError("empty context state list")
    return int(max(pairs, key=lambda sw: sw[1])[0])


def score_items(model, user: int, states: StateInput = None, allow_unknown: bool = False) -> np.ndarray:
    """Scores for every item, for one user in one context.

    For a tensor model this is the item factor matrix contracted with the
    elementwise product of the user column and the resolved context
    vectors.  For a composite model the context state selects the
    sub-model (null sub-models score everything 0).  An out-of-vocabulary
    user raises unless ``allow_unknown``, which scores from a zero vector.
    """
    if isinstance(model, CompositeModel):
        n_users = model.shape.dims[model.shape.user_axis]
        n_items = model.shape.dims[model.shape.item_axis]
        if not (0 <= user < n_users):
            if allow_unknown:
                return np.zeros(n_items)
            raise EvalError(f"unknown user {user} (model has {n_users})")
        sub = model.submodels[_dominant_state(states)]
        if sub is None:
            return np.zeros(n_items)
        return score_items(sub, user)

    n_users = model.shape.dims[model.shape.user_axis]
    if not (0 <= user < n_users):
        if allow_unknown:
            return np.zeros(model.shape.dims[model.shape.item_axis])
        raise EvalError(f"unknown user {user} (model has {n_users})")
    weights = model.factors[model.shape.user_axis][:, user].copy()
    for axis, pairs in _states_per_axis(model, states).items():
        weights *= resolve_context_vector(model, pairs, axis)
    return weights @ model.factors[model.shape.item_axis]


def recommend_topn(
    model,
    user: int,
    states: StateInput,
    n: int,
    exclude_items: Optional[np.ndarray] = None,
    allow_unknown: bool = False,
) -> RankedList:
    """Rank the top n items for a user, ties broken by ascending item id.

    ``exclude_items`` drops the given item ids (typically the user's
    training items) from the candidate set.
    """
    if n < 1:
        raise EvalError("n must be >= 1")
    scores = score_items(model, user, states, allow_unknown=allow_unknown)
    candidates = np.arange(scores.shape[0])
    if exclude_items is not None and len(exclude_items):
        keep = np.ones(scores.shape[0], dtype=bool)
        keep[np.asarray(exclude_items, dtype=np.int64)] = False
        candidates = candidates[keep]
        scores = scores[keep]
    order = np.lexsort((candidates, -scores))[:n]
    ctx = None
    if states is not None and not isinstance(states, (int, np.integer)):
        ctx = list(states) if not isinstance(states, Mapping) else dict(states)
    elif states is not None:
        ctx = [(int(states), 1.0)]
    return RankedList(user=user, context=ctx, items=candidates[order], scores=scores[order])


@dataclass
class RankingReport:
    """Recall@N and precision@N for N = 1..n_max plus evaluation counts."""

    n_max: int
    recall: np.ndarray
    precision: np.ndarray
    n_users: int
    n_skipped: int = 0
    average: str = "macro"

    def at(self, n: int):
        return float(self.recall[n - 1]), float(self.precision[n - 1])


def recall_precision_at(
    model,
    test: EventLog,
    n_max: int,
    request_states: Union[Callable, Mapping, None] = None,
    seen: Optional[EventLog] = None,
    skip_unknown_users: bool = False,
    average: str = "macro",
) -> RankingReport:
    """Ranking metrics over all users with at least one test event.

    Per user, relevant items are the distinct test items; hits@N counts
    the relevant items in that user's top N.  ``request_states`` resolves
    each user's recommendation-request context (callable or mapping from
    user id); ``seen`` excludes that log's per-user items from rankings.
    Users outside the model vocabulary score zero hits unless
    ``skip_unknown_users``.  ``average`` is macro (mean of per-user
    ratios) or micro (ratio of summed counts).
    """
    if n_max < 1:
        raise EvalError("n_max must be >= 1")
    if len(test) == 0:
        raise EvalError("test log is empty")
    if average not in ("macro", "micro"):
        raise EvalError("average must be 'macro' or 'micro'")

    n_users_model = model.shape.dims[model.shape.user_axis]

    exclude: dict = {}
    if seen is not None:
        for u, i in zip(seen.users, seen.items):
            exclude.setdefault(int(u), []).append(int(i))

    def states_for(user: int):
        if request_states is None:
            return None
        if callable(request_states):
            return request_states(user)
        try:
            return request_states[user]
        except KeyError:
            raise EvalError(f"no request context for user {user}") from None

    steps = np.arange(1, n_max + 1, dtype=np.float64)
    recall_sum = np.zeros(n_max)
    precision_sum = np.zeros(n_max)
    hits_sum = np.zeros(n_max)
    total_relevant = 0
    n_eval = 0
    n_skipped = 0

    for user in np.unique(test.users):
        user = int(user)
        relevant = np.unique(test.items[test.users == user])
        if user >= n_users_model:
            if skip_unknown_users:
                n_skipped += 1
                continue
            hits = np.zeros(n_max)
        else:
            ranked = recommend_topn(
                model,
                user,
                states_for(user),
                n_max,
                exclude_items=np.asarray(exclude.get(user, []), dtype=np.int64),
            )
            flags = np.isin(ranked.items, relevant).astype(np.float64)
            hits = np.zeros(n_max)
            hits[: len(flags)] = np.cumsum(flags)
            if len(flags) < n_max:
                hits[len(flags) :] = hits[len(flags) - 1] if len(flags) else 0.0
        n_eval += 1
        total_relevant += len(relevant)
        hits_sum += hits
        recall_sum += hits / len(relevant)
        precision_sum += hits / steps

    if n_eval == 0:
        raise EvalError("no evaluable users in the test log")
    if average == "macro":
        recall = recall_sum / n_eval
        precision = precision_sum / n_eval
    else:
        recall = hits_sum / total_relevant
        precision = hits_sum / (steps * n_eval)
    return RankingReport(n_max, recall, precision, n_eval, n_skipped, average)


def emit_pr_curve(report: RankingReport, path: Union[str, Path, None] = None) -> str:
    """CSV of (N, recall, precision) rows for N = 1..n_max."""
    buf = io.StringIO()
    buf.write("N,recall,precision\n")
    for n in range(1, report.n_max + 1):
        r, p = report.at(n)
        buf.write(f"{n},{r:.10g},{p:.10g}\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
