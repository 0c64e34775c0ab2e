"""Window scoring, series stitching, thresholds and prediction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adformer import tensor as T
from adformer.attention import AttentionOutput
from adformer.detection import (
    ScoreSeries,
    ThresholdSpec,
    predict,
    score_series,
    select_threshold,
    window_score,
)
from adformer.discrepancy import DiscrepancyConfig
from adformer.errors import ConfigError, ContractError
from adformer.model import ForwardResult, init_params
from adformer.rng import XorShift64Star
from conftest import tiny_model_config


def fake_forward_result(n, d, assdis_rows, x_hat):
    """Build a ForwardResult whose discrepancy equals a chosen vector.

    With one head and series = uniform rows, choosing the prior rows
    controls the per-point discrepancy directly.
    """
    uniform = np.full((n, n), 1.0 / n)
    prior = (T.Tensor(assdis_rows),)
    series = (T.Tensor(uniform),)
    out = AttentionOutput(
        z_hat=T.Tensor(np.zeros((n, 1))),
        prior=prior,
        series=series,
        sigma=T.Tensor(np.ones((n, 1))),
    )
    return ForwardResult(x_hat=T.Tensor(x_hat), layers=[out])


class TestWindowScore:
    def test_uniform_assdis_gives_error_over_n(self):
        n, d = 4, 2
        x = XorShift64Star(0).normal((n, d))
        x_hat = np.zeros((n, d))
        uniform = np.full((n, n), 1.0 / n)
        fr = fake_forward_result(n, d, uniform, x_hat)
        scores, c_recon, c_ad = window_score(fr, x, DiscrepancyConfig())
        np.testing.assert_allclose(c_ad, 1.0 / n, atol=1e-12)
        np.testing.assert_allclose(scores, c_recon / n, atol=1e-12)

    def test_two_point_softmax_hand_case(self):
        # AssDis = [0, ln 3], recon = [1, 1] -> c_ad = [0.75, 0.25]
        n = 2
        x = np.zeros((n, 1))
        x_hat = np.ones((n, 1))  # recon error 1 per point

        def symkl_vs_uniform(a):
            p = np.asarray([a, 1 - a])
            return float((p * np.log(p / 0.5)).sum() + (0.5 * np.log(0.5 / p)).sum())

        # bisect for the row whose divergence against uniform is ln 3
        lo, hi = 0.5, 1.0 - 1e-9
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if symkl_vs_uniform(mid) < np.log(3.0):
                lo = mid
            else:
                hi = mid
        rows = np.asarray([[0.5, 0.5], [lo, 1 - lo]])
        fr = fake_forward_result(n, 1, rows, x_hat)
        scores, c_recon, c_ad = window_score(fr, x, DiscrepancyConfig())
        np.testing.assert_allclose(c_ad, [0.75, 0.25], atol=1e-7)
        np.testing.assert_allclose(scores, [0.75, 0.25], atol=1e-7)

    def test_criterion_variants(self):
        n, d = 5, 2
        rng = XorShift64Star(1)
        x = rng.normal((n, d))
        x_hat = rng.normal((n, d))
        rows = np.abs(rng.normal((n, n))) + 0.1
        rows = rows / rows.sum(axis=1, keepdims=True)
        fr = fake_forward_result(n, d, rows, x_hat)
        mult, c_recon, c_ad = window_score(fr, x, DiscrepancyConfig(), "multiplication")
        add, _, _ = window_score(fr, x, DiscrepancyConfig(), "addition")
        only_ad, _, _ = window_score(fr, x, DiscrepancyConfig(), "assdis_only")
        only_recon, _, _ = window_score(fr, x, DiscrepancyConfig(), "recon_only")
        np.testing.assert_allclose(mult, c_ad * c_recon, atol=1e-12)
        np.testing.assert_allclose(add, c_ad + c_recon, atol=1e-12)
        np.testing.assert_allclose(only_ad, c_ad, atol=1e-12)
        np.testing.assert_allclose(only_recon, ((x - x_hat) ** 2).mean(axis=1),
                                   atol=1e-12)

    def test_unknown_criterion(self):
        fr = fake_forward_result(3, 1, np.full((3, 3), 1 / 3), np.zeros((3, 1)))
        with pytest.raises(ConfigError):
            window_score(fr, np.zeros((3, 1)), DiscrepancyConfig(), "geometric")

    def test_lower_assdis_raises_score(self):
        """Anti-correlation: decreasing one point's discrepancy increases
        its multiplication score, for fixed reconstruction errors."""
        n = 6
        x = np.zeros((n, 1))
        x_hat = np.ones((n, 1))
        base_rows = np.full((n, n), 1.0 / n)
        concentrated = base_rows.copy()
        concentrated[2] = np.asarray([0.05, 0.05, 0.75, 0.05, 0.05, 0.05])
        fr_base = fake_forward_result(n, 1, base_rows, x_hat)
        fr_low = fake_forward_result(n, 1, concentrated, x_hat)
        s_base, _, _ = window_score(fr_base, x, DiscrepancyConfig())
        s_low, _, _ = window_score(fr_low, x, DiscrepancyConfig())
        # point 2 now has HIGHER discrepancy; its score must DROP
        assert s_low[2] < s_base[2]
        # and the others, whose discrepancy is now relatively lower, rise
        assert (np.delete(s_low, 2) > np.delete(s_base, 2)).all()

    def test_permutation_equivariance(self):
        n = 5
        rng = XorShift64Star(2)
        x = rng.normal((n, 1))
        x_hat = rng.normal((n, 1))
        rows = np.abs(rng.normal((n, n))) + 0.1
        rows /= rows.sum(axis=1, keepdims=True)
        fr = fake_forward_result(n, 1, rows, x_hat)
        scores, _, _ = window_score(fr, x, DiscrepancyConfig())
        perm = np.asarray([3, 1, 4, 0, 2])
        fr_p = fake_forward_result(n, 1, rows[perm][:, perm], x_hat[perm])
        scores_p, _, _ = window_score(fr_p, x[perm], DiscrepancyConfig())
        np.testing.assert_allclose(scores_p, scores[perm], atol=1e-12)


@pytest.fixture(scope="module")
def trained():
    cfg = tiny_model_config(window=100, input_dim=1, d_model=8, heads=2,
                            layers=1, d_ff=16)
    params = init_params(cfg, seed=0)
    return cfg, params


class TestScoreSeries:

    @pytest.mark.parametrize("m,n_windows", [(200, 2), (100, 1)])
    def test_exact_multiple_window_count(self, trained, m, n_windows):
        cfg, params = trained
        values = XorShift64Star(3).normal((m, 1))
        ss = score_series(values, params, cfg)
        assert len(ss) == m
        assert len(ss.window_starts) == n_windows
        assert (np.bincount(ss.window_id) > 0).all()

    def test_tail_window_rule(self, trained):
        cfg, params = trained
        values = XorShift64Star(4).normal((250, 1))
        ss = score_series(values, params, cfg)
        assert len(ss) == 250
        assert ss.window_starts == [0, 100, 150]
        # points 200..249 come from the extra window starting at 150
        assert (ss.window_id[200:] == 2).all()
        assert (ss.window_id[100:200] == 1).all()
        # every point scored exactly once is structural: arrays are full
        assert np.isfinite(ss.scores).all()

    def test_tail_scores_match_window_scores(self, trained):
        """Tail points carry the scores computed inside the extra window."""
        cfg, params = trained
        values = XorShift64Star(5).normal((130, 1))
        ss = score_series(values, params, cfg)
        from adformer.model import forward
        from adformer.tensor import no_grad

        with no_grad():
            fr = forward(values[30:130], params, cfg)
        expected, _, _ = window_score(fr, values[30:130], DiscrepancyConfig())
        np.testing.assert_allclose(ss.scores[100:], expected[70:], atol=1e-12)

    def test_too_short_series_rejected(self, trained):
        cfg, params = trained
        with pytest.raises(ContractError):
            score_series(np.zeros((50, 1)), params, cfg)

    def test_scores_nonnegative(self, trained):
        cfg, params = trained
        values = XorShift64Star(6).normal((150, 1))
        for criterion in ("multiplication", "addition", "assdis_only", "recon_only"):
            ss = score_series(values, params, cfg, criterion=criterion)
            assert (ss.scores >= 0).all()

    def test_keep_series_maps(self, trained):
        cfg, params = trained
        values = XorShift64Star(7).normal((150, 1))
        ss = score_series(values, params, cfg, keep_series_maps=True)
        assert len(ss.series_maps) == len(ss.window_starts)
        for m in ss.series_maps:
            np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-6)


class TestThreshold:
    def test_ratio_rule_by_hand(self):
        scores = np.arange(1.0, 11.0)  # 1..10
        delta = select_threshold(scores, ThresholdSpec(mode="ratio_r", r=0.2))
        assert delta == 8.0
        flagged = predict(scores, delta)
        assert flagged.sum() == 2
        assert set(scores[flagged == 1]) == {9.0, 10.0}

    def test_tiny_r_flags_nothing(self):
        scores = np.arange(1.0, 11.0)
        delta = select_threshold(scores, ThresholdSpec(mode="ratio_r", r=0.05))
        assert delta == 10.0
        assert predict(scores, delta).sum() == 0

    def test_fixed_delta_verbatim(self):
        spec = ThresholdSpec(mode="fixed_delta", r=None, delta=0.1)
        assert select_threshold(np.asarray([5.0]), spec) == 0.1
        np.testing.assert_array_equal(predict(np.asarray([0.05, 0.2]), 0.1), [0, 1])

    @given(
        st.lists(st.floats(min_value=0, max_value=100), min_size=2, max_size=50)
        .map(np.asarray),
        st.floats(min_value=0.01, max_value=0.99),
    )
    @settings(max_examples=80, deadline=None)
    def test_ratio_flag_count(self, scores, r):
        delta = select_threshold(scores, ThresholdSpec(mode="ratio_r", r=r))
        k = int(np.floor(r * scores.size))
        flagged = int(predict(scores, delta).sum())
        distinct = np.unique(scores).size == scores.size
        if distinct:
            assert flagged == min(k, scores.size - 1)
        else:
            assert flagged <= min(k, scores.size - 1)

    def test_invalid_specs(self):
        with pytest.raises(ConfigError):
            ThresholdSpec(mode="ratio_r", r=1.5).validate()
        with pytest.raises(ConfigError):
            ThresholdSpec(mode="fixed_delta", r=0.1, delta=0.5).validate()
        with pytest.raises(ConfigError):
            ThresholdSpec(mode="quantile", r=0.1).validate()
        with pytest.raises(ContractError):
            select_threshold(np.asarray([]), ThresholdSpec(mode="ratio_r", r=0.5))


class TestPredict:
    def test_all_below(self):
        np.testing.assert_array_equal(predict(np.asarray([0.1, 0.2]), 1.0), [0, 0])

    def test_strictness(self):
        np.testing.assert_array_equal(predict(np.asarray([0.1, 0.1001]), 0.1), [0, 1])

    def test_monotone_in_delta(self):
        scores = XorShift64Star(8).uniform((100,))
        flags_low = predict(scores, 0.3).sum()
        flags_high = predict(scores, 0.6).sum()
        assert flags_high <= flags_low


def test_score_csv_format():
    ss = ScoreSeries(
        scores=np.asarray([0.5]),
        recon_component=np.asarray([0.25]),
        assdis_component=np.asarray([2.0]),
        window_id=np.asarray([0]),
        sigma=np.asarray([1.0]),
        window_starts=[0],
    )
    lines = ss.to_csv().strip().split("\n")
    assert lines[0] == "index,score,recon_component,assdis_component"
    assert lines[1] == "0,0.5,0.25,2"
