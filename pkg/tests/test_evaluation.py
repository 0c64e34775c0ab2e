"""Point adjustment, PRF, ROC/AUC and the contrast statistic."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adformer.detection import ScoreSeries
from adformer.errors import ContractError
from adformer.evaluation import (
    DEFAULT_R_GRID,
    EvalReport,
    RocPoint,
    contrast_statistic,
    point_adjust,
    prf,
    roc_auc,
)
from adformer.rng import XorShift64Star


def naive_point_adjust(pred, truth):
    """Independent segment-scan oracle."""
    pred = list(pred)
    n = len(pred)
    i = 0
    while i < n:
        if truth[i] == 1:
            j = i
            while j < n and truth[j] == 1:
                j += 1
            if any(pred[k] for k in range(i, j)):
                for k in range(i, j):
                    pred[k] = 1
            i = j
        else:
            i += 1
    return np.asarray(pred)


binary = st.lists(st.integers(min_value=0, max_value=1), min_size=1, max_size=60)


class TestPointAdjust:
    def test_rule_application(self):
        truth = np.asarray([0, 1, 1, 1, 0])
        pred = np.asarray([0, 0, 1, 0, 0])
        np.testing.assert_array_equal(point_adjust(pred, truth), [0, 1, 1, 1, 0])

    def test_all_zero_pred_unchanged(self):
        truth = np.asarray([0, 1, 1, 0])
        pred = np.zeros(4, dtype=int)
        np.testing.assert_array_equal(point_adjust(pred, truth), pred)

    def test_predictions_outside_runs_untouched(self):
        truth = np.asarray([0, 0, 1, 1, 0, 0])
        pred = np.asarray([1, 0, 0, 1, 0, 1])
        np.testing.assert_array_equal(point_adjust(pred, truth), [1, 0, 1, 1, 0, 1])

    @given(binary, binary)
    @settings(max_examples=120, deadline=None)
    def test_matches_naive_oracle(self, pred, truth):
        n = min(len(pred), len(truth))
        pred = np.asarray(pred[:n])
        truth = np.asarray(truth[:n])
        np.testing.assert_array_equal(
            point_adjust(pred, truth), naive_point_adjust(pred, truth)
        )

    @given(binary, binary)
    @settings(max_examples=60, deadline=None)
    def test_idempotent_and_recall_not_reduced(self, pred, truth):
        n = min(len(pred), len(truth))
        pred = np.asarray(pred[:n])
        truth = np.asarray(truth[:n])
        adj = point_adjust(pred, truth)
        np.testing.assert_array_equal(point_adjust(adj, truth), adj)
        assert prf(adj, truth).recall >= prf(pred, truth).recall

    def test_monotone_in_predictions(self):
        truth = np.asarray([1, 1, 0, 1, 1, 1])
        pred_small = np.asarray([1, 0, 0, 0, 0, 0])
        pred_big = np.asarray([1, 0, 0, 0, 1, 0])
        adj_small = point_adjust(pred_small, truth)
        adj_big = point_adjust(pred_big, truth)
        assert (adj_big >= adj_small).all()

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            point_adjust(np.zeros(3), np.zeros(4))


class TestPRF:
    def test_hand_case(self):
        out = prf(np.asarray([1, 1, 0, 0]), np.asarray([1, 0, 1, 0]))
        assert out.precision == 0.5 and out.recall == 0.5 and out.f1 == 0.5
        assert not out.degenerate

    def test_perfect(self):
        out = prf(np.asarray([1, 0, 1]), np.asarray([1, 0, 1]))
        assert (out.precision, out.recall, out.f1) == (1.0, 1.0, 1.0)

    def test_zero_division_flagged(self):
        out = prf(np.zeros(4, dtype=int), np.asarray([1, 0, 0, 0]))
        assert out == (0.0, 0.0, 0.0, True)


class TestRocAuc:
    def test_perfect_separation(self):
        truth = np.asarray([0] * 90 + [1] * 10)
        scores = np.concatenate([np.linspace(0, 0.4, 90), np.linspace(2, 3, 10)])
        val = np.linspace(0, 1.0, 200)
        _, auc = roc_auc(scores, truth, val, DEFAULT_R_GRID)
        assert auc == pytest.approx(1.0)

    def test_constant_scores_degenerate_curve(self):
        truth = np.asarray([0, 1, 0, 1])
        scores = np.full(4, 0.5)
        val = np.full(100, 0.5)
        points, auc = roc_auc(scores, truth, val, DEFAULT_R_GRID)
        # strict > against delta = 0.5 flags nothing at every r
        assert all(p.fpr == 0.0 and p.tpr == 0.0 for p in points)
        assert auc == pytest.approx(0.5)  # (0,0) -> (1,1) diagonal

    def test_random_scores_near_half(self):
        rng = XorShift64Star(123)
        m = 4000
        truth = (rng.uniform((m,)) < 0.05).astype(int)
        scores = rng.uniform((m,))
        val = rng.uniform((m,))
        grid = (0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9)
        _, auc = roc_auc(scores, truth, val, grid)
        assert abs(auc - 0.5) < 0.1

    def test_rates_monotone_in_r(self):
        rng = XorShift64Star(5)
        m = 1000
        truth = (rng.uniform((m,)) < 0.1).astype(int)
        scores = rng.uniform((m,)) + truth * 0.3
        val = rng.uniform((m,))
        points, _ = roc_auc(scores, truth, val, DEFAULT_R_GRID)
        by_r = sorted(points, key=lambda p: p.r)
        for a, b in zip(by_r, by_r[1:]):
            assert a.fpr <= b.fpr + 1e-12
            assert a.tpr <= b.tpr + 1e-12

    def test_auc_invariant_under_monotone_transform(self):
        rng = XorShift64Star(9)
        m = 500
        truth = (rng.uniform((m,)) < 0.1).astype(int)
        scores = rng.uniform((m,)) + truth * 0.5
        val = rng.uniform((m,))
        _, auc_raw = roc_auc(scores, truth, val, DEFAULT_R_GRID)
        _, auc_exp = roc_auc(np.exp(3 * scores), truth, np.exp(3 * val),
                             DEFAULT_R_GRID)
        assert auc_raw == pytest.approx(auc_exp, abs=1e-12)

    def test_empty_grid_rejected(self):
        with pytest.raises(ContractError):
            roc_auc(np.zeros(3), np.zeros(3, dtype=int), np.zeros(3), ())

    def test_default_grid_matches_protocol(self):
        assert DEFAULT_R_GRID == (0.005, 0.01, 0.015, 0.02, 0.10, 0.20, 0.30)


def make_score_series(maps, starts, m):
    window_id = np.zeros(m, dtype=int)
    for wid, start in enumerate(starts):
        n = maps[wid].shape[0]
        window_id[start : start + n] = wid
    return ScoreSeries(
        scores=np.zeros(m),
        recon_component=np.zeros(m),
        assdis_component=np.zeros(m),
        window_id=window_id,
        sigma=np.ones(m),
        window_starts=list(starts),
        series_maps=list(maps),
    )


class TestContrast:
    def test_uniform_maps_ratio_near_one(self):
        n = 30
        uniform = np.full((n, n), 1.0 / n)
        ss = make_score_series([uniform], [0], n)
        truth = np.zeros(n, dtype=int)
        truth[10:13] = 1
        out = contrast_statistic(ss, truth, adj_width=5)
        assert out.abnormal_mean == pytest.approx(1.0 / n)
        assert out.normal_mean == pytest.approx(1.0 / n)
        assert out.ratio == pytest.approx(1.0)

    def test_all_normal_reports_absent_abnormal(self):
        n = 10
        ss = make_score_series([np.full((n, n), 0.1)], [0], n)
        out = contrast_statistic(ss, np.zeros(n, dtype=int), adj_width=2)
        assert out.abnormal_mean is None
        assert out.ratio is None

    def test_hand_built_map_vs_loop_oracle(self):
        smap = np.arange(16, dtype=np.float64).reshape(4, 4)
        smap /= smap.sum(axis=1, keepdims=True)
        ss = make_score_series([smap], [0], 4)
        truth = np.asarray([0, 1, 0, 0])
        out = contrast_statistic(ss, truth, adj_width=1)
        # loop oracle: neighbours within distance 1, excluding self
        expected = []
        for i in range(4):
            vals = [smap[i, j] for j in range(4) if 0 < abs(j - i) <= 1]
            expected.append(np.mean(vals))
        assert out.abnormal_mean == pytest.approx(expected[1])
        assert out.normal_mean == pytest.approx(
            np.mean([expected[0], expected[2], expected[3]])
        )

    def test_width_shrinks_with_warning(self):
        n = 5
        ss = make_score_series([np.full((n, n), 0.2)], [0], n)
        with pytest.warns(UserWarning):
            contrast_statistic(ss, np.zeros(n, dtype=int), adj_width=10)

    def test_requires_maps(self):
        ss = make_score_series([np.full((4, 4), 0.25)], [0], 4)
        ss.series_maps = None
        with pytest.raises(ContractError):
            contrast_statistic(ss, np.zeros(4, dtype=int))


class TestEvalReport:
    def test_json_roundtrip(self):
        report = EvalReport(
            precision=0.9, recall=0.8, f1=0.85, degenerate=False, delta=0.12,
            criterion="multiplication",
            roc=[RocPoint(r=0.01, delta=0.5, fpr=0.0, tpr=0.4)],
            auc=0.93,
        )
        again = EvalReport.from_json(report.to_json())
        assert again == report

    def test_table_contains_metrics(self):
        report = EvalReport(
            precision=1.0, recall=1.0, f1=1.0, degenerate=False, delta=0.5,
            criterion="multiplication",
        )
        table = report.table()
        assert "f1" in table and "1.0000" in table
