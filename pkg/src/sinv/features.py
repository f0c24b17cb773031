"""50 Hz frame-level input features: log-mel frontend, FEAT files, layer fusion."""

import struct
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import EmptyInputError, FormatError, ShapeError

FRAME_RATE_HZ = 50.0
MEL_RATE_HZ = 16000
MEL_WIN = 400  # 25 ms at 16 kHz
MEL_HOP = 320  # 20 ms at 16 kHz
MEL_NFFT = 512
MEL_BANDS = 40
LOG_FLOOR = 1e-10

FEAT_MAGIC = b"FEAT"
FEAT_VERSION = 1
_FEAT_HEADER = struct.Struct("<4sIfIII")


def frontend_id(layers, dim):
    if (layers, dim) == (1, MEL_BANDS):
        return "mel40"
    return f"embed({layers},{dim})"


@dataclass
class FeatureSequence:
    """frames x layers x dim tensor at 50 Hz."""

    data: np.ndarray
    frame_rate_hz: float = FRAME_RATE_HZ

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim == 2:
            data = data[:, None, :]
        if data.ndim != 3:
            raise ShapeError(f"feature tensor must be frames x layers x dim, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ShapeError("feature tensor contains non-finite values")
        self.data = data

    @property
    def frames(self):
        return self.data.shape[0]

    @property
    def layers(self):
        return self.data.shape[1]

    @property
    def dim(self):
        return self.data.shape[2]

    @property
    def frontend(self):
        return frontend_id(self.layers, self.dim)


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_band_edges(n_bands=MEL_BANDS, fmin=0.0, fmax=MEL_RATE_HZ / 2):
    """(n_bands + 2) corner frequencies in Hz; band k spans edges[k]..edges[k+2]."""
    return _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_bands + 2))


def mel_filterbank(n_bands=MEL_BANDS, n_fft=MEL_NFFT, sr=MEL_RATE_HZ):
    edges = mel_band_edges(n_bands, 0.0, sr / 2)
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sr)
    fb = np.zeros((n_bands, freqs.size))
    for k in range(n_bands):
        lo, mid, hi = edges[k], edges[k + 1], edges[k + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[k] = np.maximum(0.0, np.minimum(up, down))
    return fb


def log_mel(w):
    """Unnormalized log-mel energies (frames x 40) at 50 Hz."""
    if w.duration_s < 0.04:
        raise EmptyInputError(f"audio of {w.duration_s * 1000:.1f} ms is shorter than 40 ms")
    x = w.samples
    sr = int(round(w.sample_rate_hz))
    if sr != MEL_RATE_HZ:
        g = gcd(MEL_RATE_HZ, sr)
        x = signal.resample_poly(x, MEL_RATE_HZ // g, sr // g)
    n_frames = x.shape[0] // MEL_HOP
    if n_frames < 1:
        raise EmptyInputError("audio too short for one 20 ms frame")
    padded = np.pad(x, (MEL_WIN // 2, MEL_WIN // 2))
    idx = np.arange(n_frames)[:, None] * MEL_HOP + np.arange(MEL_WIN)[None, :]
    frames = padded[idx] * np.hanning(MEL_WIN)[None, :]
    power = np.abs(np.fft.rfft(frames, n=MEL_NFFT, axis=1)) ** 2
    return np.log(power @ mel_filterbank().T + LOG_FLOOR)


def mel_frontend(w):
    """40-band log-mel features with per-utterance mean/variance normalization per band."""
    feats = log_mel(w)
    std = feats.std(axis=0)
    std[std < 1e-8] = 1.0
    feats = (feats - feats.mean(axis=0)) / std
    return FeatureSequence(feats[:, None, :].astype(np.float32))


def write_feat(path, fs):
    data = np.ascontiguousarray(fs.data, dtype="<f4")
    frames, layers, dim = data.shape
    header = _FEAT_HEADER.pack(FEAT_MAGIC, FEAT_VERSION, fs.frame_rate_hz, frames, layers, dim)
    Path(path).write_bytes(header + data.tobytes())


def load_embeddings(path):
    """Read a FEAT file, validating header fields against the payload size."""
    raw = Path(path).read_bytes()
    if len(raw) < _FEAT_HEADER.size:
        raise FormatError(
            f"{path}: header needs {_FEAT_HEADER.size} bytes, file has {len(raw)}", len(raw)
        )
    magic, version, rate, frames, layers, dim = _FEAT_HEADER.unpack_from(raw)
    if magic != FEAT_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}", 0)
    if version != FEAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}", 4)
    if not rate > 0:
        raise FormatError(f"{path}: frame rate {rate} must be positive", 8)
    if frames == 0:
        raise FormatError(f"{path}: empty sequence (frames=0)", 12)
    if layers == 0 or dim == 0:
        raise FormatError(f"{path}: layers and dim must be positive", 16)
    expected = frames * layers * dim * 4
    actual = len(raw) - _FEAT_HEADER.size
    if actual != expected:
        raise FormatError(
            f"{path}: payload has {actual} bytes, header implies {expected}", _FEAT_HEADER.size + min(actual, expected)
        )
    data = np.frombuffer(raw, dtype="<f4", offset=_FEAT_HEADER.size).reshape(frames, layers, dim)
    try:
        return FeatureSequence(data.astype(np.float32), float(rate))
    except ShapeError as exc:
        raise FormatError(f"{path}: {exc}", _FEAT_HEADER.size) from exc


def fusion_weights(logits, mode="softmax"):
    logits = np.asarray(logits)
    if mode == "raw":
        return logits
    e = np.exp(logits - logits.max())
    return e / e.sum()


def fuse_layers(f, logits, mode="softmax"):
    """Weighted sum over the layer axis: out[t, d] = sum_l w[l] * f[t, l, d].

    Use :class:`sinv.neural.LayerFusion` when gradients are needed.
    """
    data = f.data if isinstance(f, FeatureSequence) else np.asarray(f)
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (data.shape[-2],):
        raise ShapeError(f"{logits.shape[0]} fusion weights for {data.shape[-2]} layers")
    w = fusion_weights(logits, mode)
    return np.einsum("...ld,l->...d", data, w.astype(data.dtype, copy=False))
