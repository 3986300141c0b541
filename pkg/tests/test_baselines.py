import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echoml.baselines import (
    METHOD_KMEANS,
    METHOD_RAW_PEAKS,
    METHODS,
    evaluate_methods,
    find_peaks,
    scoreboard,
    scoreboard_csv,
    scoreboard_text,
    threshold_peak_search,
    window_average,
    window_max,
)
from echoml.cli import storage_traces
from echoml.config import RunConfig
from echoml.recognition import ProbabilityTrace, infer_bits, post_select, slide_classify
from echoml.simulate import BitSequence, SequenceTiming, SignalModel, retrieval_windows

TIMING = SequenceTiming()
WINDOWS = retrieval_windows(TIMING)


def brute_prominence(y, p):
    """Height above the higher of the deepest dips before higher ground on each side."""
    left = [y[k] for k in range(p - 1, -1, -1)]
    right = [y[k] for k in range(p + 1, len(y))]
    mins = []
    for side in (left, right):
        low = y[p]
        for v in side:
            if v > y[p]:
                break
            low = min(low, v)
        mins.append(low)
    return y[p] - max(mins)


class TestFindPeaks:
    def test_simple(self):
        np.testing.assert_array_equal(find_peaks([0, 1, 0, 2, 0]), [1, 3])

    def test_plateau_first_index(self):
        np.testing.assert_array_equal(find_peaks([0, 2, 2, 2, 0]), [1])
        assert find_peaks([0, 2, 2, 3]).size == 0

    def test_ends_are_not_peaks(self):
        assert find_peaks([5, 1, 5]).size == 0

    def test_infinite_height(self):
        assert find_peaks([0, 1, 0, 2, 0], min_height=np.inf).size == 0

    def test_distance_keeps_tallest(self):
        np.testing.assert_array_equal(find_peaks([0, 1, 0, 2, 0], min_distance=3), [3])

    def test_negative_filter(self):
        with pytest.raises(ValueError):
            find_peaks([0, 1, 0], min_prominence=-1)

    @given(st.lists(st.integers(-1000, 1000), max_size=50, unique=True))
    @settings(max_examples=200, deadline=None)
    def test_strict_local_maxima(self, values):
        y = np.array(values, dtype=float)
        expect = [k for k in range(1, len(y) - 1) if y[k - 1] < y[k] > y[k + 1]]
        np.testing.assert_array_equal(find_peaks(y), expect)

    @given(st.lists(st.integers(0, 20), max_size=50), st.integers(0, 10))
    @settings(max_examples=300, deadline=None)
    def test_prominence_oracle(self, values, prom):
        y = np.array(values, dtype=float)
        kept = set(find_peaks(y, min_prominence=prom).tolist()) if prom else None
        for p in find_peaks(y):
            if kept is not None:
                assert (p in kept) == (brute_prominence(y, p) >= prom)


class TestThreshold:
    def test_extremes(self, default_traces):
        for j, tr in default_traces.items():
            top = np.abs(tr.samples).max()
            assert not np.any(threshold_peak_search(tr, top))
            # with noise present every window has some nonzero sample
            assert np.all(threshold_peak_search(tr, 1e-12) == 1)

    def test_invalid(self, default_traces):
        with pytest.raises(ValueError):
            threshold_peak_search(default_traces[0], 0.0)
        with pytest.raises(ValueError):
            threshold_peak_search(default_traces[0], 0.1, envelope="hilbert")

    @pytest.mark.slow
    def test_no_single_threshold_is_error_free(self, trained_classifier):
        sets = [storage_traces(RunConfig(seed=s)) for s in range(1, 11)]
        truth = {j: np.array(BitSequence.from_decimal(j).bits) for j in range(16)}
        best = None
        for thr in np.linspace(0.05, 0.4, 71):
            errors = np.zeros(4, dtype=int)
            for traces in sets:
                for j, tr in traces.items():
                    errors += threshold_peak_search(tr, thr)[::-1] != truth[j]
            if best is None or errors.sum() < best.sum():
                best = errors
        assert best.sum() >= 1
        for traces in sets:
            for j, tr in traces.items():
                probs = post_select(slide_classify(trained_classifier, tr), WINDOWS)
                assert infer_bits(probs)[0].bits == tuple(truth[j])


def ptrace_from(p, stride=16, window_len=128, t0=3260.0):
    p = np.asarray(p, dtype=float)
    return ProbabilityTrace(t0 + stride * np.arange(p.size), p, window_len, stride)


class TestWindowStatistics:
    def test_constant(self):
        pt = ptrace_from(np.ones(100))
        np.testing.assert_array_equal(window_average(pt, WINDOWS), [1, 1, 1, 1])

    def test_average_of_half_plateau(self):
        centers = np.arange(3300, 4900, 16.0)
        lo, hi = WINDOWS[2]
        p = np.where((centers >= lo) & (centers < (lo + hi) / 2), 1.0, 0.0)
        pt = ProbabilityTrace(centers - 63.5, p, 128, 16)
        np.testing.assert_allclose(window_average(pt, WINDOWS), [0, 0, 0.5, 0], atol=0.05)

    def test_max_catches_spike(self):
        centers = np.arange(3300, 4900, 16.0)
        p = np.zeros(centers.size)
        lo, hi = WINDOWS[2]
        p[np.nonzero((centers >= lo) & (centers < hi))[0][3]] = 0.9
        pt = ProbabilityTrace(centers - 63.5, p, 128, 16)
        np.testing.assert_allclose(window_max(pt, WINDOWS), [0, 0, 0.9, 0])

    def test_empty_window(self):
        pt = ptrace_from(np.zeros(5))
        with pytest.raises(ValueError, match="no probability points"):
            window_average(pt, WINDOWS)


class TestScoreboard:
    def test_rows_and_ordering(self, trained_classifier, default_traces):
        scores = scoreboard(trained_classifier, default_traces)
        assert [s.method for s in scores] == list(METHODS)
        best = scores[0].success_percent
        assert all(best >= s.success_percent for s in scores)

    def test_noiseless_all_perfect(self, noiseless_classifier, noiseless_traces):
        scores = scoreboard(noiseless_classifier, noiseless_traces,
                            signal=SignalModel(noise_sigma=0.0))
        assert [s.success_percent for s in scores] == [100.0] * 5

    def test_formats(self, trained_classifier, default_traces):
        scores = scoreboard(trained_classifier, default_traces)
        rows = scoreboard_csv(scores).splitlines()
        assert rows[0] == "method,success_percent,F1_avg,F1_std,F2_avg,F2_std,F3_avg,F3_std,F4_avg,F4_std"
        assert len(rows) == 6 and rows[1].startswith(METHOD_KMEANS + ",")
        text = scoreboard_text(scores)
        assert METHOD_RAW_PEAKS in text and "±" in text

    def test_unknown_method(self, trained_classifier, default_traces):
        with pytest.raises(ValueError):
            evaluate_methods(trained_classifier, default_traces, TIMING, SignalModel(),
                             methods=("Oracle",))

    def test_missing_trace(self, trained_classifier, default_traces):
        partial = {j: t for j, t in default_traces.items() if j != 7}
        with pytest.raises(KeyError, match="7"):
            scoreboard(trained_classifier, partial)

    def test_repeatable(self, trained_classifier, default_traces):
        a = evaluate_methods(trained_classifier, default_traces, TIMING, SignalModel(), seed=3)
        b = evaluate_methods(trained_classifier, default_traces, TIMING, SignalModel(), seed=3)
        for name in METHODS:
            np.testing.assert_array_equal(a[name].f_avg, b[name].f_avg)
