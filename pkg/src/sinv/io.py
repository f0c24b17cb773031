"""WAV input and trajectory CSV read/write."""

import csv
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import TRAJECTORY_RATE_HZ, Trajectory, Waveform
from .errors import FormatError, InvalidInputError


def read_wav(path, channel=0):
    """Read one channel of a PCM WAV file as a float Waveform.

    16-bit integer samples are scaled to [-1, 1); float files pass through.
    """
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"{path}: not a readable WAV file: {exc}") from exc
    if data.dtype == np.int16:
        data = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.uint8:
        data = (data.astype(np.float64) - 128.0) / 128.0
    else:
        data = data.astype(np.float64)
    if data.ndim == 2:
        if not 0 <= channel < data.shape[1]:
            raise InvalidInputError(f"{path}: channel {channel} out of range ({data.shape[1]} channels)")
        data = data[:, channel]
    return Waveform(data, float(rate))


def write_wav(path, w, dtype="float32"):
    if dtype == "int16":
        data = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = w.samples.astype(np.float32)
    wavfile.write(path, int(round(w.sample_rate_hz)), data)


def _fmt(v):
    # repr is the shortest string that round-trips a float64 exactly.
    return repr(float(v))


def write_trajectory_csv(path, trajectories):
    """Write one or more equal-rate trajectories as ``time_s,<name>,...`` rows."""
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    if not trajectories:
        raise InvalidInputError("no trajectories to write")
    rate = trajectories[0].rate_hz
    n = len(trajectories[0])
    for tr in trajectories:
        if tr.rate_hz != rate or len(tr) != n:
            raise InvalidInputError("trajectories in one CSV must share rate and length")
    lines = ["time_s," + ",".join(tr.name for tr in trajectories)]
    cols = [tr.values for tr in trajectories]
    for i in range(n):
        lines.append(f"{i / rate:.6f}," + ",".join(_fmt(c[i]) for c in cols))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path, rate_hz=TRAJECTORY_RATE_HZ):
    """Read a trajectory CSV into a list of Trajectory objects (one per column)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not rows[0] or rows[0][0] != "time_s":
        raise FormatError(f"{path}: missing 'time_s' header")
    names = rows[0][1:]
    try:
        data = np.array([[float(x) for x in row[1:]] for row in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric value: {exc}") from exc
    if data.size == 0:
        data = np.zeros((0, len(names)))
    if data.shape[1] != len(names):
        raise FormatError(f"{path}: row width does not match header")
    return [Trajectory(name, data[:, j].copy(), rate_hz) for j, name in enumerate(names)]
