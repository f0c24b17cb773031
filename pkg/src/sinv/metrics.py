"""Pearson correlation, the PC + RMSE training loss, and segmentation."""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError

DEFAULT_ALPHA = 0.8
VAR_FLOOR = 1e-12


class ConstantChannelWarning(UserWarning):
    """A correlation was requested on a zero-variance channel; it counts as 0."""


def pearson(x, y, warn=True):
    """Product-moment correlation; 0.0 (with a warning) when either input is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"pearson needs equal-length 1-D inputs, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ShapeError("pearson needs at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx <= VAR_FLOOR * x.size or syy <= VAR_FLOOR * y.size:
        if warn:
            warnings.warn("constant channel: PPMC set to 0", ConstantChannelWarning, stacklevel=2)
        return 0.0
    return float(np.clip((xc @ yc) / np.sqrt(sxx * syy), -1.0, 1.0))


@dataclass
class LossValue:
    loss: float
    pc: float
    rmse: float
    grad: np.ndarray


def combined_loss(pred, target, mask=None, alpha=DEFAULT_ALPHA):
    """alpha * (1 - mean PC) + (1 - alpha) * RMSE, with the gradient w.r.t. ``pred``.

    ``pred``/``target`` are (B, T, C) or (T, C). PC is computed per utterance and
    channel over valid frames, then averaged; a constant channel contributes
    PC = 0. RMSE pools all valid frame-channel pairs.
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    squeeze = pred.ndim == 2
    if squeeze:
        pred, target = pred[None], target[None]
        mask = None if mask is None else np.asarray(mask)[None]
    if pred.shape != target.shape or pred.ndim != 3:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} must match as (B, T, C)")
    B, T, C = pred.shape
    m = np.ones((B, T), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != (B, T):
        raise ShapeError(f"mask {m.shape} does not match (B, T) = {(B, T)}")
    if not m.any():
        raise InvalidInputError("all frames masked: loss undefined")
    p = pred.astype(np.float64)
    t = target.astype(np.float64)
    mf = m[..., None].astype(np.float64)
    n_valid = m.sum(axis=1).astype(np.float64)[:, None, None]  # (B,1,1)
    used = m.any(axis=1)

    pm = (p * mf).sum(axis=1, keepdims=True) / np.maximum(n_valid, 1)
    tm = (t * mf).sum(axis=1, keepdims=True) / np.maximum(n_valid, 1)
    pc_ = (p - pm) * mf
    tc_ = (t - tm) * mf
    sxx = (pc_ * pc_).sum(axis=1)  # (B, C)
    syy = (tc_ * tc_).sum(axis=1)
    sxy = (pc_ * tc_).sum(axis=1)
    floor = VAR_FLOOR * n_valid[:, :, 0]
    ok = (sxx > floor) & (syy > floor) & (n_valid[:, :, 0] >= 2)
    denom = np.sqrt(np.where(ok, sxx * syy, 1.0))
    r = np.where(ok, sxy / denom, 0.0)
    n_pairs = int(used.sum()) * C
    pc_mean = float(r[used].sum() / n_pairs)

    # dr/dp = tc / sqrt(sxx syy) - r * pc / sxx  (only for well-defined channels)
    inv_d = np.where(ok, 1.0 / denom, 0.0)[:, None, :]
    inv_sxx = np.where(ok, 1.0 / np.where(ok, sxx, 1.0), 0.0)[:, None, :]
    dr = (tc_ * inv_d - r[:, None, :] * pc_ * inv_sxx) * mf
    d_pc = -alpha * dr / n_pairs

    diff = (p - t) * mf
    n_el = float(m.sum()) * C
    rmse = float(np.sqrt((diff * diff).sum() / n_el))
    d_rmse = (1 - alpha) * diff / (n_el * rmse) if rmse > 0 else np.zeros_like(diff)

    loss = alpha * (1.0 - pc_mean) + (1.0 - alpha) * rmse
    grad = (d_pc + d_rmse).astype(pred.dtype)
    if squeeze:
        grad = grad[0]
    return LossValue(float(loss), pc_mean, rmse, grad)


def loss_from_parts(pc_mean, rmse, alpha=DEFAULT_ALPHA):
    return alpha * (1.0 - pc_mean) + (1.0 - alpha) * rmse


def segment_bounds(n_frames, segment_frames=200, min_frames=None):
    """[start, stop) frame ranges of fixed-length segments.

    A trailing piece shorter than ``min_frames`` (default half a segment) is dropped.
    """
    if min_frames is None:
        min_frames = segment_frames // 2
    bounds = []
    for start in range(0, n_frames, segment_frames):
        stop = min(start + segment_frames, n_frames)
        if stop - start >= min_frames:
            bounds.append((start, stop))
    return bounds
