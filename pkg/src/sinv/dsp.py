"""Deterministic 1-D DSP primitives for the ground-truth and feature chains."""

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .errors import EmptyInputError, InvalidParameterError

TRAJECTORY_RATE_HZ = 100.0
HIGHPASS_ORDER = 4
ANTIALIAS_ORDER = 4
ANTIALIAS_FRACTION = 0.45


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled channel (audio, EGG, or an intermediate stream)."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidParameterError(f"waveform must be 1-D, got shape {samples.shape}")
        if not self.sample_rate_hz > 0:
            raise InvalidParameterError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise InvalidParameterError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self):
        return len(self) / self.sample_rate_hz

    def with_samples(self, samples):
        return Waveform(samples, self.sample_rate_hz)


@dataclass(frozen=True)
class Trajectory:
    """Named time series, canonically at 100 Hz."""

    name: str
    values: np.ndarray
    rate_hz: float = TRAJECTORY_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __len__(self):
        return self.values.shape[0]


def _require_samples(w):
    if len(w) == 0:
        raise EmptyInputError("waveform has no samples")


def highpass(w, cutoff_hz=20.0, order=HIGHPASS_ORDER):
    """Zero-phase Butterworth high-pass (forward-backward, so the net order doubles)."""
    _require_samples(w)
    nyquist = w.sample_rate_hz / 2
    if not 0 < cutoff_hz < nyquist:
        raise InvalidParameterError(
            f"cutoff {cutoff_hz} Hz must lie in (0, Nyquist={nyquist} Hz)"
        )
    sos = signal.butter(order, cutoff_hz, btype="highpass", fs=w.sample_rate_hz, output="sos")
    return w.with_samples(_filtfilt(sos, w.samples, w.sample_rate_hz / cutoff_hz))


def _filtfilt(sos, x, period_samples):
    # Odd extension over a few periods of the band edge keeps the start-up
    # transient outside the returned samples.
    padlen = min(x.shape[0] - 1, int(np.ceil(3 * period_samples)))
    return signal.sosfiltfilt(sos, x, padtype="odd", padlen=padlen)


def rms_energy(w):
    """Pointwise magnitude stream; RMS character comes from the smoothing window."""
    _require_samples(w)
    return w.with_samples(np.abs(w.samples))


def window_samples(window_ms, sample_rate_hz):
    return int(round(window_ms / 1000.0 * sample_rate_hz))


def moving_average(w, window_ms):
    """Centered rectangular mean with shrinking windows at the edges."""
    _require_samples(w)
    n = window_samples(window_ms, w.sample_rate_hz)
    if n < 1:
        raise InvalidParameterError(f"{window_ms} ms window is shorter than one sample")
    if n > len(w):
        raise InvalidParameterError(
            f"window of {n} samples exceeds signal length {len(w)}"
        )
    return w.with_samples(_centered_mean(w.samples, n))


def _centered_mean(x, n):
    # Deviations from x[0] keep constant inputs exact and limit cumsum drift.
    ref = x[0]
    csum = np.concatenate(([0.0], np.cumsum(x - ref)))
    idx = np.arange(x.shape[0])
    lo = np.maximum(idx - n // 2, 0)
    hi = np.minimum(idx - n // 2 + n, x.shape[0])
    return (csum[hi] - csum[lo]) / (hi - lo) + ref


def windowed_rms(w, window_ms=25.0):
    """sqrt of the centered moving average of x**2."""
    power = moving_average(w.with_samples(w.samples ** 2), window_ms)
    return power.with_samples(np.sqrt(np.maximum(power.samples, 0.0)))


def hilbert_envelope(w):
    """Magnitude of the analytic signal, computed over the whole utterance."""
    _require_samples(w)
    return w.with_samples(np.abs(signal.hilbert(w.samples)))


def resample_to(w, target_hz=TRAJECTORY_RATE_HZ):
    """Decimate to ``target_hz``: zero-phase anti-alias low-pass, then linear interpolation.

    The output has ``round(duration_s * target_hz)`` samples taken at ``k / target_hz``.
    """
    _require_samples(w)
    if not target_hz > 0:
        raise InvalidParameterError(f"target rate must be positive, got {target_hz}")
    if target_hz > w.sample_rate_hz:
        raise InvalidParameterError(
            f"resample_to only decimates ({w.sample_rate_hz} Hz -> {target_hz} Hz requested)"
        )
    n_out = int(round(w.duration_s * target_hz))
    if n_out < 1:
        raise EmptyInputError("signal shorter than one output frame")
    x = w.samples
    if target_hz < w.sample_rate_hz:
        sos = signal.butter(
            ANTIALIAS_ORDER, ANTIALIAS_FRACTION * target_hz, fs=w.sample_rate_hz, output="sos"
        )
        x = _filtfilt(sos, x, w.sample_rate_hz / (ANTIALIAS_FRACTION * target_hz))
    t_in = np.arange(len(w)) / w.sample_rate_hz
    t_out = np.arange(n_out) / target_hz
    return Waveform(np.interp(t_out, t_in, x), target_hz)


def normalize_pm1(values, mode="fixed", flat_tol=0.0):
    """Affine map onto [-1, 1].

    ``mode="fixed"`` is ``2v - 1`` for quantities bounded in [0, 1].
    ``mode="minmax"`` maps the per-sequence [min, max] onto [-1, 1]; a sequence
    whose span is at most ``flat_tol * max|v|`` is treated as constant and
    mapped to zeros.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise EmptyInputError("cannot normalize an empty sequence")
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError("cannot normalize non-finite values")
    if mode == "fixed":
        return 2.0 * v - 1.0
    if mode != "minmax":
        raise InvalidParameterError(f"unknown normalization mode {mode!r}")
    lo, hi = v.min(), v.max()
    span = hi - lo
    if span == 0.0 or span <= flat_tol * np.max(np.abs(v)):
        return np.zeros_like(v)
    return np.clip(2.0 * (v - lo) / span - 1.0, -1.0, 1.0)
