import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sinv import dsp
from sinv.dsp import Waveform
from sinv.errors import EmptyInputError, InvalidParameterError

from conftest import FS, interior, tone


def butterworth_hp_gain(f, fc, order):
    # Analytic |H(f)| of an N-th order Butterworth high-pass.
    return 1.0 / np.sqrt(1.0 + (fc / f) ** (2 * order))


class TestHighpass:
    def test_dc_removed(self):
        w = Waveform(np.full(int(FS), 0.7), FS)
        out = dsp.highpass(w, 20.0).samples
        assert np.max(np.abs(interior(out))) < 0.01

    def test_passband_rms_matches_analytic_response(self):
        w = tone(1000.0)
        out = dsp.highpass(w, 20.0).samples
        # forward-backward filtering squares the magnitude response
        expected = butterworth_hp_gain(1000.0, 20.0, dsp.HIGHPASS_ORDER) ** 2
        ratio = np.sqrt(np.mean(interior(out) ** 2)) / np.sqrt(np.mean(interior(w.samples) ** 2))
        assert ratio == pytest.approx(expected, rel=1e-2)

    def test_stopband_attenuation_at_half_cutoff(self):
        w = tone(10.0, seconds=4.0)
        out = dsp.highpass(w, 20.0).samples
        gain = np.sqrt(np.mean(interior(out, 0.25) ** 2) / np.mean(interior(w.samples, 0.25) ** 2))
        assert 20 * np.log10(gain) <= -40.0

    def test_zero_phase(self):
        w = tone(200.0, seconds=0.5)
        out = dsp.highpass(w, 20.0).samples
        lag = np.argmax(np.correlate(interior(out), interior(w.samples), "full")) - (len(interior(out)) - 1)
        assert lag == 0

    def test_cutoff_above_nyquist(self):
        with pytest.raises(InvalidParameterError):
            dsp.highpass(tone(100.0, 0.1), 30000.0)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            dsp.highpass(Waveform(np.zeros(0), FS))

    @settings(max_examples=20, deadline=None)
    @given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 1000))
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(4000)
        y = rng.standard_normal(4000)
        fs = 8000.0
        lhs = dsp.highpass(Waveform(a * x + b * y, fs)).samples
        rhs = a * dsp.highpass(Waveform(x, fs)).samples + b * dsp.highpass(Waveform(y, fs)).samples
        scale = max(1.0, np.max(np.abs(rhs)))
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale


class TestEnergyAndSmoothing:
    def test_rms_energy_constant(self):
        out = dsp.rms_energy(Waveform(np.full(100, -0.4), 1000.0)).samples
        np.testing.assert_array_equal(out, np.full(100, 0.4))

    def test_rectified_sine_mean(self):
        w = tone(100.0)
        smooth = dsp.moving_average(dsp.rms_energy(w), 25.0).samples
        # mean of |sin| over whole periods is 2/pi
        np.testing.assert_allclose(interior(smooth), 2 / np.pi, atol=1e-3)

    def test_all_zero(self):
        out = dsp.rms_energy(Waveform(np.zeros(50), 100.0)).samples
        assert not out.any()

    def test_window_length(self):
        assert dsp.window_samples(25.0, 51200.0) == 1280

    def test_impulse(self):
        x = np.zeros(11)
        x[5] = 1.0
        out = dsp.moving_average(Waveform(x, 1000.0), 5.0).samples
        expected = np.zeros(11)
        expected[3:8] = 0.2
        np.testing.assert_allclose(out, expected, atol=1e-15)

    def test_window_longer_than_signal(self):
        with pytest.raises(InvalidParameterError):
            dsp.moving_average(Waveform(np.ones(10), 1000.0), 25.0)

    @settings(max_examples=30, deadline=None)
    @given(c=st.floats(-1e3, 1e3, allow_subnormal=False), n=st.integers(1, 400), win=st.floats(1.0, 60.0))
    def test_constant_is_exact(self, c, n, win):
        w = Waveform(np.full(400, c), 1000.0)
        k = dsp.window_samples(win, 1000.0)
        if k < 1:
            return
        out = dsp.moving_average(w, win).samples
        assert np.all(out == c)

    def test_windowed_rms_of_sine(self):
        out = dsp.windowed_rms(tone(400.0, amp=0.5), 25.0).samples
        np.testing.assert_allclose(interior(out), 0.5 / np.sqrt(2), rtol=1e-3)


class TestHilbert:
    def test_pure_tone(self):
        out = dsp.hilbert_envelope(tone(100.0, amp=0.5)).samples
        np.testing.assert_allclose(interior(out), 0.5, atol=1e-3)

    def test_zero(self):
        assert not dsp.hilbert_envelope(Waveform(np.zeros(256), FS)).samples.any()

    def test_am_tone(self):
        t = np.arange(int(FS)) / FS
        env = 1 + 0.5 * np.cos(2 * np.pi * 5 * t)
        out = dsp.hilbert_envelope(Waveform(env * np.sin(2 * np.pi * 500 * t), FS)).samples
        np.testing.assert_allclose(interior(out), interior(env), atol=2e-2)

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            dsp.hilbert_envelope(Waveform(np.zeros(0), FS))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_envelope_bounds_signal(self, seed):
        x = np.random.default_rng(seed).standard_normal(512)
        x -= x.mean()
        env = dsp.hilbert_envelope(Waveform(x, 1000.0)).samples
        assert np.all(env >= np.abs(x) - 1e-9)


class TestResample:
    def test_length(self):
        assert len(dsp.resample_to(tone(50.0), 100.0)) == 100

    def test_constant(self):
        out = dsp.resample_to(Waveform(np.full(int(FS), 0.3), FS), 100.0).samples
        np.testing.assert_allclose(out, 0.3, atol=1e-9)

    def test_slow_sinusoid(self):
        w = tone(2.0)
        out = dsp.resample_to(w, 100.0).samples
        ref = np.sin(2 * np.pi * 2.0 * np.arange(100) / 100.0)
        assert np.max(np.abs(out - ref)) < 1e-2

    def test_upsampling_rejected(self):
        with pytest.raises(InvalidParameterError):
            dsp.resample_to(Waveform(np.ones(10), 50.0), 100.0)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(200, 5000), fs=st.sampled_from([1000.0, 8000.0, 16000.0, 44100.0]))
    def test_duration_preserved(self, n, fs):
        w = Waveform(np.sin(np.arange(n) * 0.01), fs)
        if w.duration_s * 100 < 0.5:
            return
        out = dsp.resample_to(w, 100.0)
        assert abs(len(out) / 100.0 - w.duration_s) <= 1 / 100.0


class TestNormalize:
    @pytest.mark.parametrize("v,expected", [(0.5, 0.0), (1.0, 1.0), (0.0, -1.0)])
    def test_fixed_mode(self, v, expected):
        assert dsp.normalize_pm1([v])[0] == expected

    def test_minmax(self):
        np.testing.assert_array_equal(dsp.normalize_pm1([2, 4, 6], "minmax"), [-1, 0, 1])

    def test_constant_minmax_is_zero(self):
        assert not dsp.normalize_pm1([3.0, 3.0, 3.0], "minmax").any()

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=2, max_size=50))
    def test_fixed_is_affine_and_preserves_extrema(self, vals):
        v = np.array(vals)
        out = dsp.normalize_pm1(v)
        np.testing.assert_array_equal(out, 2 * v - 1)
        assert out[np.argmax(v)] == out.max() and out[np.argmin(v)] == out.min()

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=50))
    def test_minmax_range_and_extrema(self, vals):
        v = np.array(vals)
        out = dsp.normalize_pm1(v, "minmax")
        assert np.all((out >= -1) & (out <= 1))
        assert out[np.argmax(v)] == out.max() and out[np.argmin(v)] == out.min()


def test_determinism():
    w = tone(123.0, 0.3)
    a = dsp.resample_to(dsp.highpass(w)).samples
    b = dsp.resample_to(dsp.highpass(w)).samples
    assert a.tobytes() == b.tobytes()
