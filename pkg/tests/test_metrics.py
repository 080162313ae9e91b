import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import kendall_pairs
from ramp.metrics import DegenerateCorrelationWarning, evaluate, ktau, lcc, mse, srcc, system_aggregate

# six utterances, two systems; truths come from the tiny_set fixture
FIXTURE_PRED = {"a1": 2.5, "a2": 3.0, "a3": 3.5, "b1": 1.5, "b2": 2.5, "b3": 4.0}


def preds_for(mapping):
    return [{"id": k, "score": v} for k, v in mapping.items()]


class TestMse:
    def test_identical(self):
        assert mse([1.0, 2.0], [1.0, 2.0]) == 0

    def test_hand(self):
        assert mse([1, 2], [1, 3]) == 0.5

    def test_unit(self):
        assert mse([0, 0, 0], [1, 1, 1]) == 1

    @pytest.mark.parametrize("a,b", [([1], [1, 2]), ([], [])])
    def test_errors(self, a, b):
        with pytest.raises(ValueError):
            mse(a, b)


class TestCorrelations:
    @pytest.mark.parametrize("fn", [lcc, srcc])
    def test_perfect_and_inverse(self, fn):
        assert fn([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-15)
        assert fn([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-15)

    def test_lcc_hand(self):
        assert abs(lcc([1, 2, 3, 4], [1, 3, 2, 4]) - 0.8) < 1e-12

    def test_srcc_hand(self):
        assert abs(srcc([1, 2, 3, 4], [1, 3, 2, 4]) - 0.8) < 1e-12

    def test_srcc_monotone_transform(self):
        x = np.array([0.3, 1.7, 2.2, 4.0, 4.9])
        assert srcc(np.exp(x), x) == pytest.approx(1.0, abs=1e-15)

    def test_ktau_hand(self):
        # C = 5, D = 1 by pair enumeration
        assert abs(ktau([1, 2, 3, 4], [1, 3, 2, 4]) - 4 / 6) < 1e-12

    def test_ktau_identical(self):
        assert ktau([1, 5, 2, 8], [1, 5, 2, 8]) == 1.0

    @pytest.mark.parametrize("fn", [lcc, srcc, ktau])
    def test_zero_variance_flags_and_returns_zero(self, fn):
        with pytest.warns(DegenerateCorrelationWarning):
            assert fn([3.0, 3.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    @pytest.mark.parametrize("fn", [lcc, srcc, ktau])
    def test_too_short(self, fn):
        with pytest.raises(ValueError):
            fn([1.0], [1.0])

    @settings(max_examples=100)
    @given(st.lists(st.integers(0, 6), min_size=2, max_size=60), st.integers(0, 2**31))
    def test_ktau_matches_pair_enumeration(self, xs, seed):
        y = np.random.default_rng(seed).integers(0, 6, size=len(xs))
        x = np.array(xs, dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateCorrelationWarning)
            assert ktau(x, y) == kendall_pairs(x.tolist(), y.astype(float).tolist())

    @settings(max_examples=60)
    @given(st.integers(0, 2**31))
    def test_invariances(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=30)
        y = x + rng.normal(size=30)
        assert lcc(3.0 * x + 2.0, y) == pytest.approx(lcc(x, y), abs=1e-12)
        assert srcc(np.exp(x), y) == pytest.approx(srcc(x, y), abs=1e-12)
        assert ktau(x**3, y) == ktau(x, y)
        assert lcc(x, x) == pytest.approx(1.0, abs=1e-15)
        assert srcc(x, x) == pytest.approx(1.0, abs=1e-15) and ktau(x, x) == 1.0

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=40))
    def test_ranges(self, xs):
        y = np.arange(len(xs), dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateCorrelationWarning)
            for fn in (lcc, srcc, ktau):
                assert -1.0 <= fn(xs, y) <= 1.0


class TestSystemAggregate:
    def test_means(self, tiny_set):
        systems, pm, tm = system_aggregate(preds_for(FIXTURE_PRED), tiny_set)
        assert systems == ["A", "B"]
        np.testing.assert_allclose(pm, [3.0, 8 / 3], rtol=1e-15)
        np.testing.assert_allclose(tm, [3.0, 8 / 3], rtol=1e-15)

    def test_single_system_mean(self, tiny_set):
        # A: truths {2, 3, 4}; predictions {4, 3, 2} -> both means 3
        _, pm, tm = system_aggregate(preds_for({"a1": 4.0, "a2": 3.0, "a3": 2.0}), tiny_set)
        assert list(pm) == [3.0] and list(tm) == [3.0]

    def test_singleton_systems_equal_utterances(self):
        from ramp.dataio import LabeledSample, SampleSet

        truth = SampleSet([LabeledSample(f"u{i}", f"s{2 - i}", np.zeros(1), 1.0 + i) for i in range(3)], 1)
        _, pm, tm = system_aggregate(preds_for({"u0": 1.5, "u1": 2.5, "u2": 3.5}), truth)
        assert list(pm) == [3.5, 2.5, 1.5] and list(tm) == [3.0, 2.0, 1.0]

    def test_unknown_id(self, tiny_set):
        with pytest.raises(KeyError):
            system_aggregate(preds_for({"zz": 1.0}), tiny_set)


class TestEvaluate:
    def test_perfect(self, tiny_set):
        report = evaluate(preds_for({s.id: s.score for s in tiny_set}), tiny_set)
        assert report.as_tuple() == pytest.approx((0, 1, 1, 1, 0, 1, 1, 1), abs=1e-15)
        assert report.warnings == []

    def test_constant_predictions(self, tiny_set):
        report = evaluate(preds_for({s.id: 3.0 for s in tiny_set}), tiny_set)
        assert report.u_mse > 0
        assert (report.u_lcc, report.u_srcc, report.u_ktau) == (0.0, 0.0, 0.0)
        assert report.s_lcc == 0.0 and any("u_lcc" in w for w in report.warnings)

    def test_hand_fixture(self, tiny_set):
        r = evaluate(preds_for(FIXTURE_PRED), tiny_set)
        # exact rationals: sum(dx*dy) = 67/12, sxx*syy = 575/18 (values);
        # ranks give 17 and 595/2; pairs C=14, D=0, T_pred=1, T_truth=0
        assert r.u_mse == pytest.approx(1 / 6, abs=1e-15)
        assert r.u_lcc == pytest.approx((67 / 12) / math.sqrt(575 / 18), abs=1e-12)
        assert r.u_srcc == pytest.approx(17 / math.sqrt(595 / 2), abs=1e-12)
        assert r.u_ktau == pytest.approx(14 / math.sqrt(15 * 14), abs=1e-12)
        assert (r.s_mse, r.s_lcc, r.s_srcc, r.s_ktau) == pytest.approx((0, 1, 1, 1), abs=1e-12)

    def test_permutation_invariant(self, tiny_set, rng):
        preds = preds_for(FIXTURE_PRED)
        a = evaluate(preds, tiny_set)
        for _ in range(5):
            b = evaluate([preds[i] for i in rng.permutation(len(preds))], tiny_set)
            assert a.as_tuple() == b.as_tuple()

    def test_unknown_ids(self, tiny_set):
        with pytest.raises(KeyError):
            evaluate(preds_for({"nope": 3.0}), tiny_set)

    def test_serialisation(self, tiny_set):
        r = evaluate(preds_for(FIXTURE_PRED), tiny_set)
        doc = r.to_dict()
        assert set(doc) == {"utterance", "system", "warnings"}
        assert set(doc["utterance"]) == {"mse", "lcc", "srcc", "ktau"}
        lines = r.table().splitlines()
        assert lines[0].split() == ["U_MSE", "U_LCC", "U_SRCC", "U_KTAU", "S_MSE", "S_LCC", "S_SRCC", "S_KTAU"]
        assert len(lines[1].split()) == 8
