import io
import logging

import numpy as np
import pytest

from itals import (
    EvalError,
    Model,
    RankingReport,
    SplitSpec,
    TensorShape,
    TrainConfig,
    emit_pr_curve,
    implicitize,
    ingest_ratings,
    recall_precision_at,
    recommend_topn,
    split_by_date,
)
from itals.evaluation import score_items

from conftest import make_event_log


def scoring_model(user_matrix, item_matrix, context_matrix=None):
    factors = [np.asarray(user_matrix, float), np.asarray(item_matrix, float)]
    roles = ["user", "item"]
    if context_matrix is not None:
        factors.append(np.asarray(context_matrix, float))
        roles.append("context-1")
    shape = TensorShape(tuple(m.shape[1] for m in factors), tuple(roles))
    config = TrainConfig(features=factors[0].shape[0], epochs=1)
    return Model(shape, factors, [m @ m.T for m in factors], config)


def identity_scorer(score_rows):
    """Model whose score for (user, item) is score_rows[user][item]."""
    scores = np.asarray(score_rows, dtype=np.float64)
    n_users, n_items = scores.shape
    return scoring_model(scores.T, np.eye(n_items))


class TestImplicitize:
    def parse(self, text):
        return ingest_ratings(io.StringIO(text))

    def test_five_star_rule(self):
        ratings = self.parse("u\ta\t5\t1\nu\tb\t4\t2\nv\tc\t5\t3\n")
        events = implicitize(ratings, 5.0)
        assert len(events) == 2
        assert events.items.tolist() == [0, 2]

    def test_half_star_threshold(self):
        ratings = self.parse("u\ta\t4.5\t1\nu\tb\t5.0\t2\nu\tc\t4.0\t3\n")
        events = implicitize(ratings, 4.5)
        assert len(events) == 2

    def test_zero_threshold_keeps_all(self):
        ratings = self.parse("u\ta\t1\t1\nu\tb\t3\t2\n")
        events = implicitize(ratings, 0.0)
        assert len(events) == len(ratings)
        assert events.timestamps.tolist() == [1, 2]


class TestSplitByDate:
    def log(self):
        return make_event_log([0, 0, 1, 1], [0, 1, 0, 1], [10, 20, 30, 40])

    def test_partition(self):
        train, test = split_by_date(self.log(), SplitSpec(25))
        assert len(train) == 2 and len(test) == 2
        assert train.timestamps.max() < 25 <= test.timestamps.min()

    def test_all_before_split_gives_empty_test(self, caplog):
        with caplog.at_level(logging.WARNING, logger="itals"):
            train, test = split_by_date(self.log(), SplitSpec(100))
        assert len(test) == 0
        assert "empty test" in caplog.text

    def test_horizon_bounds_test_window(self):
        log = make_event_log([0, 0, 0], [0, 1, 2], [10, 50, 200_000])
        train, test = split_by_date(log, SplitSpec(20, test_horizon=86_400))
        assert len(train) == 1
        assert len(test) == 1  # the far-future event is dropped
        assert test.timestamps.max() - 20 < 86_400

    def test_exhaustive_without_horizon(self):
        log = self.log()
        train, test = split_by_date(log, SplitSpec(25))
        assert len(train) + len(test) == len(log)


class TestRecommendTopn:
    def test_all_items_when_n_large(self):
        model = identity_scorer([[0.5, 0.1, 0.9]])
        ranked = recommend_topn(model, 0, None, 10)
        assert ranked.items.tolist() == [2, 0, 1]
        assert list(ranked.scores) == sorted(ranked.scores, reverse=True)

    def test_monotone_construction(self):
        # item columns are scalar multiples of the user direction
        user = np.array([[1.0], [2.0]])
        multiples = [0.3, 1.5, 0.7, 1.1]
        items = np.array([[m * 1.0 for m in multiples], [m * 2.0 for m in multiples]])
        model = scoring_model(user, items)
        ranked = recommend_topn(model, 0, None, 4)
        assert ranked.items.tolist() == [1, 3, 2, 0]

    def test_ties_break_by_ascending_id(self):
        model = identity_scorer([[1.0, 1.0, 1.0, 2.0]])
        ranked = recommend_topn(model, 0, None, 4)
        assert ranked.items.tolist() == [3, 0, 1, 2]

    def test_exclude_items(self):
        model = identity_scorer([[5.0, 4.0, 3.0, 2.0]])
        ranked = recommend_topn(model, 0, None, 3, exclude_items=np.array([0, 2]))
        assert ranked.items.tolist() == [1, 3]

    def test_matches_exhaustive_sort(self):
        rng = np.random.default_rng(21)
        user_m = rng.normal(size=(20, 5))
        item_m = rng.normal(size=(20, 60))
        model = scoring_model(user_m, item_m)
        for user in range(5):
            scores = user_m[:, user] @ item_m
            expected = sorted(range(60), key=lambda i: (-scores[i], i))[:20]
            ranked = recommend_topn(model, user, None, 20)
            assert ranked.items.tolist() == expected

    def test_unknown_user(self):
        model = identity_scorer([[1.0, 2.0]])
        with pytest.raises(EvalError, match="unknown user"):
            recommend_topn(model, 5, None, 2)
        ranked = recommend_topn(model, 5, None, 2, allow_unknown=True)
        assert np.all(ranked.scores == 0.0)

    def test_context_required_for_tensor_model(self):
        model = scoring_model(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 5)))
        with pytest.raises(EvalError, match="context"):
            recommend_topn(model, 0, None, 2)

    def test_context_vector_reweights_scores(self):
        user = np.array([[1.0], [1.0]])
        items = np.array([[1.0, 0.0], [0.0, 1.0]])
        ctx = np.array([[2.0, 0.0], [0.0, 3.0]])
        model = scoring_model(user, items, ctx)
        assert score_items(model, 0, 0).tolist() == [2.0, 0.0]
        assert score_items(model, 0, 1).tolist() == [0.0, 3.0]
        assert score_items(model, 0, [(0, 1.0), (1, 1.0)]).tolist() == [1.0, 1.5]


class TestRecallPrecision:
    def test_perfect_ranker_closed_forms(self):
        # user 0 has 3 relevant items ranked first; user 1 has 1
        scores = [
            [9.0, 8.0, 7.0, 0.1, 0.2, 0.0],
            [0.0, 0.1, 0.2, 9.0, 0.0, 0.1],
        ]
        model = identity_scorer(scores)
        test = make_event_log(
            [0, 0, 0, 1], [0, 1, 2, 3], [1, 2, 3, 4], n_users=2, n_items=6
        )
        report = recall_precision_at(model, test, 6)
        for n in range(1, 7):
            expected_recall = (min(n, 3) / 3 + min(n, 1) / 1) / 2
            expected_precision = (min(n, 3) / n + min(n, 1) / n) / 2
            r, p = report.at(n)
            assert r == pytest.approx(expected_recall)
            assert p == pytest.approx(expected_precision)

    def test_recall_weakly_increasing_precision_times_n_is_hits(self):
        rng = np.random.default_rng(31)
        model = identity_scorer(rng.normal(size=(8, 30)))
        test = make_event_log(
            rng.integers(0, 8, 40), rng.integers(0, 30, 40), np.arange(40),
            n_users=8, n_items=30,
        )
        report = recall_precision_at(model, test, 15)
        assert np.all(np.diff(report.recall) >= -1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(32)
        base = rng.normal(size=(6, 20))
        test = make_event_log(
            rng.integers(0, 6, 25), rng.integers(0, 20, 25), np.arange(25),
            n_users=6, n_items=20,
        )
        a = recall_precision_at(identity_scorer(base), test, 10)
        b = recall_precision_at(identity_scorer(3.0 * base + 7.0), test, 10)
        np.testing.assert_array_equal(a.recall, b.recall)
        np.testing.assert_array_equal(a.precision, b.precision)

    def test_unknown_users_count_as_misses_by_default(self):
        model = identity_scorer([[1.0, 2.0, 3.0]])
        test = make_event_log([0, 5], [0, 1], [1, 2], n_users=6, n_items=3)
        counted = recall_precision_at(model, test, 3)
        skipped = recall_precision_at(model, test, 3, skip_unknown_users=True)
        assert counted.n_users == 2
        assert skipped.n_users == 1
        assert skipped.n_skipped == 1
        # counting the unknown user halves macro recall at full depth
        assert counted.recall[-1] == pytest.approx(skipped.recall[-1] / 2)

    def test_exclude_seen(self):
        model = identity_scorer([[9.0, 5.0, 1.0]])
        seen = make_event_log([0], [0], [1], n_users=1, n_items=3)
        test = make_event_log([0], [1], [2], n_users=1, n_items=3)
        with_seen = recall_precision_at(model, test, 1)
        without = recall_precision_at(model, test, 1, seen=seen)
        assert with_seen.recall[0] == 0.0  # item 0 crowds out the hit
        assert without.recall[0] == 1.0

    def test_micro_vs_macro(self):
        # user 0: 1 relevant, hit at rank 1; user 1: 2 relevant, 1 hit
        model = identity_scorer([[9.0, 0.0, 0.0, 0.0], [9.0, 0.0, 0.1, 0.0]])
        test = make_event_log([0, 1, 1], [0, 0, 3], [1, 2, 3], n_users=2, n_items=4)
        macro = recall_precision_at(model, test, 1)
        micro = recall_precision_at(model, test, 1, average="micro")
        assert macro.recall[0] == pytest.approx((1.0 + 0.5) / 2)
        assert micro.recall[0] == pytest.approx(2.0 / 3.0)
        assert macro.precision[0] == pytest.approx(1.0)
        assert micro.precision[0] == pytest.approx(1.0)

    def test_request_states_mapping_and_missing(self):
        user = np.ones((1, 2))
        items = np.ones((1, 3))
        ctx = np.ones((1, 2))
        model = scoring_model(user, items, ctx)
        test = make_event_log([0, 1], [0, 1], [1, 2], n_users=2, n_items=3)
        report = recall_precision_at(model, test, 2, request_states={0: 0, 1: 1})
        assert report.n_users == 2
        with pytest.raises(EvalError, match="no request context"):
            recall_precision_at(model, test, 2, request_states={0: 0})

    def test_empty_test_rejected(self):
        model = identity_scorer([[1.0]])
        empty = make_event_log([], [], [], n_users=1, n_items=1)
        with pytest.raises(EvalError, match="empty"):
            recall_precision_at(model, empty, 1)


class TestPrCurve:
    def test_row_count_and_header(self):
        report = RankingReport(
            n_max=50,
            recall=np.linspace(0.01, 0.5, 50),
            precision=np.linspace(0.5, 0.01, 50),
            n_users=10,
        )
        text = emit_pr_curve(report)
        lines = text.strip().split("\n")
        assert lines[0] == "N,recall,precision"
        assert len(lines) == 51
        first = lines[1].split(",")
        assert first[0] == "1"

    def test_writes_file(self, tmp_path):
        report = RankingReport(2, np.array([0.1, 0.2]), np.array([0.1, 0.1]), 3)
        path = tmp_path / "curve.csv"
        emit_pr_curve(report, path)
        assert path.read_text().startswith("N,recall,precision")

    def test_perfect_ranker_curve_reaches_one(self):
        model = identity_scorer([[5.0, 1.0]])
        test = make_event_log([0], [0], [1], n_users=1, n_items=2)
        report = recall_precision_at(model, test, 2)
        text = emit_pr_curve(report)
        last = text.strip().split("\n")[-1].split(",")
        assert float(last[1]) == 1.0
