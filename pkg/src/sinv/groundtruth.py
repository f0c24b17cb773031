"""Nasalance (VP) and EGG-envelope ground-truth trajectories."""

from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .channels import EGG_ENV, VP, TVSet
from .dsp import Trajectory, Waveform
from .errors import AlignmentError, EmptyInputError, InvalidInputError

MIN_DURATION_S = 0.1
ENERGY_FLOOR = 1e-8
EGG_FLAT_TOL = 0.05


@dataclass(frozen=True)
class DualMicRecording:
    oral: Waveform
    nasal: Waveform

    def __post_init__(self):
        if self.oral.sample_rate_hz != self.nasal.sample_rate_hz:
            raise InvalidInputError(
                f"oral ({self.oral.sample_rate_hz} Hz) and nasal "
                f"({self.nasal.sample_rate_hz} Hz) sample rates differ"
            )
        n_oral, n_nasal = len(self.oral), len(self.nasal)
        if abs(n_oral - n_nasal) > 1:
            raise InvalidInputError(
                f"oral and nasal lengths differ by {abs(n_oral - n_nasal)} samples"
            )
        n = min(n_oral, n_nasal)
        object.__setattr__(self, "oral", self.oral.with_samples(self.oral.samples[:n]))
        object.__setattr__(self, "nasal", self.nasal.with_samples(self.nasal.samples[:n]))

    @property
    def sample_rate_hz(self):
        return self.oral.sample_rate_hz


@dataclass
class GroundTruthResult:
    trajectory: Trajectory
    raw: np.ndarray
    metadata: dict = field(default_factory=dict)


def _check_duration(w, what):
    if len(w) == 0:
        raise EmptyInputError(f"{what} channel is empty")
    if w.duration_s < MIN_DURATION_S:
        raise InvalidInputError(
            f"{what} channel is {w.duration_s * 1000:.1f} ms; at least {MIN_DURATION_S * 1000:.0f} ms required"
        )


def nasalance_ratio(ae_nasal, ae_oral, silence="hold", floor=ENERGY_FLOOR):
    """Per-sample AEnasal / (AEnasal + AEoral) with the silence policy applied.

    Returns ``(ratio, silent_mask)``. Samples whose total energy is below
    ``floor * max(total)`` are silent: ``"hold"`` repeats the last valid value
    (0.5 before the first), ``"zero"`` emits 0.5 (0.0 after normalization).
    """
    total = ae_nasal + ae_oral
    peak = total.max() if total.size else 0.0
    silent = total <= floor * peak if peak > 0 else np.ones(total.shape, dtype=bool)
    ratio = np.full(total.shape, 0.5)
    valid = ~silent
    ratio[valid] = ae_nasal[valid] / total[valid]
    if silence == "hold":
        idx = np.where(valid, np.arange(total.size), -1)
        np.maximum.accumulate(idx, out=idx)
        held = idx >= 0
        ratio = np.where(held, ratio[np.maximum(idx, 0)], 0.5)
    elif silence != "zero":
        raise ValueError(f"unknown silence policy {silence!r}")
    return ratio, silent


def compute_nasalance(
    rec,
    cutoff_hz=20.0,
    window_ms=25.0,
    silence="hold",
    floor=ENERGY_FLOOR,
    nasal_gain=1.0,
    target_hz=dsp.TRAJECTORY_RATE_HZ,
):
    """VP trajectory from a dual-microphone recording.

    highpass -> windowed RMS -> nasal/(nasal+oral) -> 100 Hz -> 2v - 1.
    """
    _check_duration(rec.oral, "oral")
    _check_duration(rec.nasal, "nasal")
    ae_oral = dsp.windowed_rms(dsp.highpass(rec.oral, cutoff_hz), window_ms)
    ae_nasal = dsp.windowed_rms(dsp.highpass(rec.nasal, cutoff_hz), window_ms)
    ratio, silent = nasalance_ratio(nasal_gain * ae_nasal.samples, ae_oral.samples, silence, floor)
    raw = dsp.resample_to(Waveform(ratio, rec.sample_rate_hz), target_hz).samples
    raw = np.clip(raw, 0.0, 1.0)
    warnings = []
    if silent.all():
        # no valid frame: emit the exact silence value, free of filter round-off
        raw = np.full(raw.shape, 0.5)
        warnings.append("all-silent")
    metadata = {
        "channel": VP,
        "highpass": {"cutoff_hz": cutoff_hz, "order": dsp.HIGHPASS_ORDER, "family": "butterworth", "zero_phase": True},
        "energy": "sqrt(moving_average(x**2))",
        "window_ms": window_ms,
        "window_samples": dsp.window_samples(window_ms, rec.sample_rate_hz),
        "edge_policy": "shrinking-window",
        "silence_policy": silence,
        "energy_floor": floor,
        "nasal_gain": nasal_gain,
        "silent_fraction": float(silent.mean()),
        "resample": {"target_hz": target_hz, "antialias_cutoff_hz": dsp.ANTIALIAS_FRACTION * target_hz},
        "normalization": "fixed:2v-1",
        "warnings": warnings,
    }
    values = dsp.normalize_pm1(raw, "fixed")
    return GroundTruthResult(Trajectory(VP, values, target_hz), raw, metadata)


def compute_egg_envelope(egg, cutoff_hz=20.0, flat_tol=EGG_FLAT_TOL, target_hz=dsp.TRAJECTORY_RATE_HZ):
    """EGGenv trajectory: highpass -> Hilbert magnitude -> 100 Hz -> per-utterance min-max."""
    _check_duration(egg, "EGG")
    env = dsp.hilbert_envelope(dsp.highpass(egg, cutoff_hz))
    raw = dsp.resample_to(env, target_hz).samples
    values = dsp.normalize_pm1(raw, "minmax", flat_tol=flat_tol)
    warnings = []
    if not np.any(egg.samples):
        warnings.append("silent-input")
    elif not np.any(values):
        warnings.append("flat-envelope")
    metadata = {
        "channel": EGG_ENV,
        "highpass": {"cutoff_hz": cutoff_hz, "order": dsp.HIGHPASS_ORDER, "family": "butterworth", "zero_phase": True},
        "envelope": "abs(analytic signal), full utterance",
        "resample": {"target_hz": target_hz, "antialias_cutoff_hz": dsp.ANTIALIAS_FRACTION * target_hz},
        "normalization": "minmax",
        "flat_tol": flat_tol,
        "warnings": warnings,
    }
    return GroundTruthResult(Trajectory(EGG_ENV, values, target_hz), raw, metadata)


def align_targets(trajs, len_frames, max_rel_diff=0.05):
    """Trim or edge-hold pad every 100 Hz trajectory to ``len_frames``."""
    if len_frames < 1:
        raise AlignmentError("target length must be at least one frame")
    cols, names, lengths = [], [], {}
    for tr in trajs:
        if tr.rate_hz != dsp.TRAJECTORY_RATE_HZ:
            raise AlignmentError(f"{tr.name}: rate {tr.rate_hz} Hz, expected {dsp.TRAJECTORY_RATE_HZ}")
        n = len(tr)
        if n == 0 or abs(n - len_frames) > max_rel_diff * len_frames:
            raise AlignmentError(
                f"{tr.name}: {n} frames vs target {len_frames} exceeds {max_rel_diff:.0%} tolerance"
            )
        v = tr.values[:len_frames]
        if n < len_frames:
            v = np.concatenate([v, np.full(len_frames - n, v[-1])])
        cols.append(v)
        names.append(tr.name)
        lengths[tr.name] = n
    return TVSet(tuple(names), np.stack(cols, axis=1), lengths)
