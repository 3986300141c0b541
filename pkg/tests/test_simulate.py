import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echoml.datasets import gen_classifier_dataset, gen_phase_dataset
from echoml.phase import extract_echo_window, oracle_phase
from echoml.simulate import (
    SUPPORT_WIDTHS,
    BitSequence,
    HahnTiming,
    SequenceTiming,
    SignalModel,
    echo_phase,
    echo_schedule,
    retrieval_windows,
    storage_trace_span,
    synth_hahn,
    synth_storage_retrieval,
)

TIMING = SequenceTiming()
QUIET = SignalModel(noise_sigma=0.0)


def seq(bits):
    return BitSequence.from_string(bits)


def envelope_peak(trace, center, half=100):
    t = trace.times
    sel = np.abs(t - center) <= half
    return np.max(np.abs(trace.samples[sel])), t[sel][np.argmax(np.abs(trace.samples[sel]))]


class TestTiming:
    def test_hand_computed_timeline(self):
        # pulses centered at 20, 360, 700, 1040; pi centered at 1060 + 1200 + 95
        assert TIMING.pi_center == 2355
        assert [TIMING.echo_center(i) for i in (4, 3, 2, 1)] == [3670, 4010, 4350, 4690]

    def test_rejects_nonpositive_durations(self):
        with pytest.raises(ValueError):
            SequenceTiming(t_p=0)
        with pytest.raises(ValueError):
            HahnTiming(tau=-1)

    def test_hahn_echo_at_twice_tau(self):
        assert HahnTiming().echo_center == 1500


class TestSignalModel:
    @pytest.mark.parametrize("kwargs", [{"amp0": 0}, {"t_m": -1}, {"noise_sigma": -0.1},
                                        {"dt": 0}, {"carrier_mhz": 300.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SignalModel(**kwargs)

    def test_samples_per_period(self):
        assert SignalModel().samples_per_period == pytest.approx(11.11, abs=0.01)


class TestBitSequence:
    def test_msb_first(self):
        s = BitSequence.from_decimal(13)
        assert str(s) == "1101" and s.bits[0] == 1 and s.decimal == 13

    @pytest.mark.parametrize("j", range(16))
    def test_decimal_round_trip(self, j):
        assert BitSequence.from_decimal(j).decimal == j

    def test_rejects_bad_bits(self):
        with pytest.raises(ValueError):
            BitSequence((0, 2, 1, 0))
        with pytest.raises(ValueError):
            BitSequence.from_decimal(16)


class TestEchoSchedule:
    def test_empty(self):
        assert echo_schedule(seq("0000"), TIMING) == []

    def test_all_on_is_time_reversed(self):
        sched = echo_schedule(seq("1111"), TIMING)
        assert [e.source for e in sched] == [4, 3, 2, 1]
        assert [e.center for e in sched] == sorted(e.center for e in sched)

    def test_first_slot_echoes_last(self):
        (echo,) = echo_schedule(seq("1000"), TIMING)
        assert echo.source == 1
        assert echo.center == max(TIMING.echo_center(i) for i in range(1, 5))
        assert echo.precession == echo.center - TIMING.pulse_center(1)

    @given(st.integers(1, 15))
    def test_sources_strictly_decreasing(self, j):
        sources = [e.source for e in echo_schedule(BitSequence.from_decimal(j), TIMING)]
        assert all(a > b for a, b in zip(sources, sources[1:]))


class TestStorageTrace:
    def test_silent_sequence_is_zero(self):
        assert not np.any(synth_storage_retrieval(seq("0000"), TIMING, QUIET).samples)

    def test_span_margin(self):
        t0, n = storage_trace_span(TIMING, QUIET)
        windows = retrieval_windows(TIMING)
        assert windows[0][0] - t0 >= SUPPORT_WIDTHS * QUIET.env_sigma
        assert t0 + n - 1 - windows[-1][1] >= SUPPORT_WIDTHS * QUIET.env_sigma - 1

    def test_decaying_train(self):
        trace = synth_storage_retrieval(seq("1111"), TIMING, QUIET)
        peaks = [envelope_peak(trace, e.center)[0] for e in echo_schedule(seq("1111"), TIMING)]
        assert all(a > b for a, b in zip(peaks, peaks[1:]))
        expected = [QUIET.decay(e.precession) for e in echo_schedule(seq("1111"), TIMING)]
        np.testing.assert_allclose(peaks, expected, rtol=0.02)

    def test_energy_only_inside_supports(self):
        trace = synth_storage_retrieval(seq("0101"), TIMING, QUIET)
        sched = echo_schedule(seq("0101"), TIMING)
        inside = np.zeros(len(trace), dtype=bool)
        for e in sched:
            inside |= np.abs(trace.times - e.center) <= SUPPORT_WIDTHS * QUIET.env_sigma
            # the carrier crest nearest the center is within half a period
            _, t_peak = envelope_peak(trace, e.center, half=6)
            assert abs(t_peak - e.center) <= QUIET.samples_per_period / 2
        assert not np.any(trace.samples[~inside])
        assert np.any(trace.samples[inside])

    def test_same_seed_same_trace(self):
        a = synth_storage_retrieval(seq("1011"), TIMING, SignalModel(), rng_seed=7)
        b = synth_storage_retrieval(seq("1011"), TIMING, SignalModel(), rng_seed=7)
        c = synth_storage_retrieval(seq("1011"), TIMING, SignalModel(), rng_seed=8)
        assert np.array_equal(a.samples, b.samples)
        assert not np.array_equal(a.samples, c.samples)

    @given(st.integers(0, 15))
    @settings(max_examples=16, deadline=None)
    def test_linearity(self, j):
        s = BitSequence.from_decimal(j)
        total = synth_storage_retrieval(s, TIMING, QUIET).samples
        parts = np.zeros_like(total)
        for i, bit in enumerate(s.bits):
            if bit:
                single = tuple(int(k == i) for k in range(4))
                parts += synth_storage_retrieval(BitSequence(single), TIMING, QUIET).samples
        np.testing.assert_allclose(total, parts, atol=1e-12)


class TestHahn:
    def test_zero_phases(self):
        tr = synth_hahn(0.0, 0.0, HahnTiming(), QUIET)
        k = int(np.argmin(np.abs(tr.times - 1500)))
        amp = QUIET.decay(1500)
        # at t = 1500 the carrier completes 135 whole cycles
        assert tr.i_samples[k] == pytest.approx(amp)
        assert tr.q_samples[k] == pytest.approx(0.0, abs=1e-9)
        # Q follows I a quarter period later: I + iQ = A exp(i(wt + phi))
        z = (tr.i_samples + 1j * tr.q_samples) * np.exp(-2j * np.pi * QUIET.carrier_ghz * tr.times)
        assert np.allclose(np.angle(z[np.abs(z) > 1e-3]), 0.0, atol=1e-9)

    @pytest.mark.parametrize("a,b,expected", [(0, 90, 180), (40, 0, 320), (0, 0, 0)])
    def test_phase_relation(self, a, b, expected):
        assert echo_phase(a, b) == expected
        window = extract_echo_window(synth_hahn(a, b, HahnTiming(), QUIET), 90.0)
        got = oracle_phase(window, 90.0)
        assert min(abs(got - expected), 360 - abs(got - expected)) < 0.5

    def test_independent_channel_noise(self):
        tr = synth_hahn(0, 0, HahnTiming(), SignalModel(noise_sigma=1.0), rng_seed=3)
        assert abs(np.corrcoef(tr.i_samples, tr.q_samples)[0, 1]) < 0.2


class TestClassifierDataset:
    def test_empty(self):
        X, y = gen_classifier_dataset(0)
        assert X.shape == (0, 128) and y.shape == (0,)

    def test_balanced(self):
        X, y = gen_classifier_dataset(500, rng_seed=1)
        assert X.shape == (1000, 128)
        assert np.count_nonzero(y == 1) == 500 and np.count_nonzero(y == 0) == 500
        assert X.min() >= 0 and X.max() <= 1

    def test_noiseless_echo_windows_have_range(self):
        X, y = gen_classifier_dataset(50, model=QUIET, normalize=False, rng_seed=2)
        span = X.max(axis=1) - X.min(axis=1)
        assert np.all(span[y == 1] > 0)
        # noise windows sit between echoes, so at most a faint tail reaches in
        assert np.all(span[y == 0] < 0.1)

    def test_deterministic(self):
        a = gen_classifier_dataset(20, rng_seed=5)
        b = gen_classifier_dataset(20, rng_seed=5)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_window_shorter_than_period(self):
        with pytest.raises(ValueError):
            gen_classifier_dataset(5, window_len=8)

    def test_window_longer_than_trace(self):
        with pytest.raises(ValueError):
            gen_classifier_dataset(5, window_len=5000)


class TestPhaseDataset:
    def test_single(self):
        data = gen_phase_dataset([0.0])
        assert len(data) == 1 and data.targets[0] == 0
        assert data.X.shape == (1, 160)

    def test_two_degree_sweep(self):
        data = gen_phase_dataset(np.arange(0, 360, 2))
        assert len(data) == 180

    def test_oracle_of_ninety(self):
        data = gen_phase_dataset([90.0], model=QUIET)
        assert data.targets[0] == 270
        assert oracle_phase(data.windows[0], 90.0) == pytest.approx(270, abs=0.5)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            gen_phase_dataset([360.0])
