"""Differentiable layers with hand-written backward passes.

Every layer works on batched, padded sequences ``(B, T, ...)`` and receives a
:class:`Context` carrying the valid lengths, the train/eval flag and the
dropout RNG. ``forward`` caches what ``backward`` needs; ``backward(dout)``
fills ``self.grads`` (same keys as ``self.params``) and returns ``dx``.
"""

import zlib
from dataclasses import dataclass

import numpy as np

from ..errors import NumericError, ShapeError
from . import kernels


@dataclass
class Context:
    lengths: np.ndarray
    training: bool = False
    rng: np.random.Generator = None

    @property
    def mask(self):
        T = int(self.lengths.max()) if self.lengths.size else 0
        return np.arange(T)[None, :] < self.lengths[:, None]

    def upsampled(self):
        return Context(self.lengths * 2, self.training, self.rng)

    @classmethod
    def full(cls, batch, frames, training=False, rng=None):
        return cls(np.full(batch, frames, dtype=np.int64), training, rng)


def layer_rng(seed, name):
    """Per-layer init stream; adding or renaming other layers does not shift it."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(name.encode())]))


def lecun_uniform(rng, fan_in, shape, dtype):
    limit = np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def orthogonal(rng, n, dtype):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * np.sign(np.diag(r))).astype(dtype)


class Layer:
    def __init__(self, name):
        self.name = name
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self._cache = None

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}


class Dense(Layer):
    """``x @ W + b`` over the last axis."""

    def __init__(self, name, in_dim, out_dim, seed=0, dtype=np.float32):
        super().__init__(name)
        rng = layer_rng(seed, name)
        self.params = {
            "W": lecun_uniform(rng, in_dim, (in_dim, out_dim), dtype),
            "b": np.zeros(out_dim, dtype),
        }

    def forward(self, x, ctx=None):
        W = self.params["W"]
        if x.shape[-1] != W.shape[0]:
            raise ShapeError(f"{self.name}: input dim {x.shape[-1]} != {W.shape[0]}")
        self._cache = x
        return x @ W + self.params["b"]

    def backward(self, dout):
        x = self._cache
        W = self.params["W"]
        x2 = x.reshape(-1, x.shape[-1])
        d2 = dout.reshape(-1, dout.shape[-1])
        self.grads = {"W": x2.T @ d2, "b": d2.sum(axis=0)}
        return dout @ W.T


class Dropout(Layer):
    """Inverted dropout; identity in eval mode or when ``rate == 0``."""

    def __init__(self, name, rate=0.3):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate {rate} outside [0, 1)")
        self.rate = rate

    def forward(self, x, ctx):
        if not ctx.training or self.rate == 0.0:
            self._cache = None
            return x
        if ctx.rng is None:
            raise ValueError(f"{self.name}: training-mode dropout needs an RNG")
        keep = ctx.rng.random(x.shape) >= self.rate
        scale = np.asarray(1.0 / (1.0 - self.rate), dtype=x.dtype)
        self._cache = keep * scale
        return x * self._cache

    def backward(self, dout):
        self.grads = {}
        return dout if self._cache is None else dout * self._cache


class BatchNorm(Layer):
    """Per-channel normalization over valid (batch, time) positions.

    Running statistics follow ``running = momentum * running + (1 - momentum) * batch``
    and replace batch statistics in eval mode.
    """

    def __init__(self, name, dim, momentum=0.99, eps=1e-5, dtype=np.float32):
        super().__init__(name)
        self.momentum = momentum
        self.eps = eps
        self.params = {"gamma": np.ones(dim, dtype), "beta": np.zeros(dim, dtype)}
        self.buffers = {"running_mean": np.zeros(dim, dtype), "running_var": np.ones(dim, dtype)}

    def forward(self, x, ctx):
        gamma, beta = self.params["gamma"], self.params["beta"]
        if not ctx.training:
            xhat = (x - self.buffers["running_mean"]) / np.sqrt(self.buffers["running_var"] + self.eps)
            self._cache = ("eval", xhat)
            return gamma * xhat + beta
        m = ctx.mask[..., None].astype(x.dtype)
        count = m.sum()
        mean = (x * m).sum(axis=(0, 1)) / count
        xc = (x - mean) * m
        var = (xc * xc).sum(axis=(0, 1)) / count
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = xc * inv
        mom = self.momentum
        self.buffers["running_mean"] = (mom * self.buffers["running_mean"] + (1 - mom) * mean).astype(x.dtype)
        self.buffers["running_var"] = (mom * self.buffers["running_var"] + (1 - mom) * var).astype(x.dtype)
        self._cache = ("train", xhat, inv, m, count)
        return (gamma * xhat + beta) * m

    def backward(self, dout):
        gamma = self.params["gamma"]
        if self._cache[0] == "eval":
            xhat = self._cache[1]
            d2 = dout.reshape(-1, dout.shape[-1])
            self.grads = {"gamma": (d2 * xhat.reshape(d2.shape)).sum(0), "beta": d2.sum(0)}
            return dout * gamma / np.sqrt(self.buffers["running_var"] + self.eps)
        _, xhat, inv, m, count = self._cache
        dout_m = dout * m
        dbeta = dout_m.sum(axis=(0, 1))
        dgamma = (dout_m * xhat).sum(axis=(0, 1))
        dxhat = dout_m * gamma
        dx = inv / count * (count * dxhat - dxhat.sum(axis=(0, 1)) - xhat * (dxhat * xhat).sum(axis=(0, 1)))
        self.grads = {"gamma": dgamma, "beta": dbeta}
        return dx * m


class Upsample2x(Layer):
    """Doubles the frame rate.

    ``linear``: out[2i] = x[i], out[2i+1] = (x[i] + x[i+1]) / 2, with the last
    valid frame of each sequence repeated. ``repeat``: out[2i] = out[2i+1] = x[i].
    """

    def __init__(self, name, mode="linear"):
        super().__init__(name)
        if mode not in ("linear", "repeat"):
            raise ValueError(f"unknown upsample mode {mode!r}")
        self.mode = mode

    def _next_index(self, T, lengths):
        nxt = np.minimum(np.arange(T)[None, :] + 1, T - 1).repeat(lengths.size, axis=0)
        last = np.clip(lengths - 1, 0, T - 1)
        nxt[np.arange(lengths.size), last] = last
        return nxt

    def forward(self, x, ctx):
        B, T = x.shape[:2]
        if T < 1:
            raise ShapeError(f"{self.name}: need at least one frame")
        out = np.empty((B, 2 * T) + x.shape[2:], x.dtype)
        out[:, 0::2] = x
        if self.mode == "repeat":
            out[:, 1::2] = x
            self._cache = None
            return out
        nxt = self._next_index(T, ctx.lengths)
        rows = np.arange(B)[:, None]
        out[:, 1::2] = 0.5 * (x + x[rows, nxt])
        self._cache = nxt
        return out

    def backward(self, dout):
        self.grads = {}
        even, odd = dout[:, 0::2], dout[:, 1::2]
        if self.mode == "repeat":
            return even + odd
        nxt = self._cache
        dx = even + 0.5 * odd
        rows = np.broadcast_to(np.arange(dout.shape[0])[:, None], nxt.shape)
        np.add.at(dx, (rows, nxt), 0.5 * odd)
        return dx


class SelfAttention(Layer):
    """Single-head scaled dot-product self-attention with a residual connection.

    out = x + softmax(Q K^T / sqrt(d)) V, padded keys excluded.
    """

    def __init__(self, name, dim, seed=0, dtype=np.float32):
        super().__init__(name)
        rng = layer_rng(seed, name)
        self.params = {k: lecun_uniform(rng, dim, (dim, dim), dtype) for k in ("Wq", "Wk", "Wv")}
        self.scale = 1.0 / np.sqrt(dim)

    def forward(self, x, ctx):
        p = self.params
        with np.errstate(invalid="ignore", over="ignore"):
            q, k, v = x @ p["Wq"], x @ p["Wk"], x @ p["Wv"]
            logits = (q @ k.transpose(0, 2, 1)) * np.asarray(self.scale, x.dtype)
        bad = ~np.isfinite(logits)
        if bad.any():
            b, t, _ = np.argwhere(bad)[0]
            raise NumericError(f"{self.name}: non-finite attention logit at batch {b}, frame {t}")
        key_mask = ctx.mask[:, None, :]
        logits = np.where(key_mask, logits, -np.inf)
        logits -= logits.max(axis=-1, keepdims=True)
        a = np.exp(logits)
        a /= a.sum(axis=-1, keepdims=True)
        self._cache = (x, q, k, v, a)
        return x + a @ v

    def attention(self):
        return self._cache[4]

    def backward(self, dout):
        x, q, k, v, a = self._cache
        p = self.params
        dv = a.transpose(0, 2, 1) @ dout
        da = dout @ v.transpose(0, 2, 1)
        ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) * np.asarray(self.scale, x.dtype)
        dq = ds @ k
        dk = ds.transpose(0, 2, 1) @ q
        x2 = x.reshape(-1, x.shape[-1])
        self.grads = {
            "Wq": x2.T @ dq.reshape(x2.shape[0], -1),
            "Wk": x2.T @ dk.reshape(x2.shape[0], -1),
            "Wv": x2.T @ dv.reshape(x2.shape[0], -1),
        }
        return dout + dq @ p["Wq"].T + dk @ p["Wk"].T + dv @ p["Wv"].T


class LayerFusion(Layer):
    """Learned weighted sum over the layer axis: (B, T, L, D) -> (B, T, D).

    ``softmax`` mode normalizes the logits; ``raw`` uses them directly.
    """

    def __init__(self, name, n_layers, mode="softmax", dtype=np.float32):
        super().__init__(name)
        if mode not in ("softmax", "raw"):
            raise ValueError(f"unknown fusion mode {mode!r}")
        self.mode = mode
        init = np.zeros(n_layers) if mode == "softmax" else np.full(n_layers, 1.0 / n_layers)
        self.params = {"logits": init.astype(dtype)}

    def weights(self):
        lg = self.params["logits"]
        if self.mode == "raw":
            return lg
        e = np.exp(lg - lg.max())
        return e / e.sum()

    def forward(self, x, ctx=None):
        if x.shape[-2] != self.params["logits"].shape[0]:
            raise ShapeError(
                f"{self.name}: {self.params['logits'].shape[0]} weights for {x.shape[-2]} layers"
            )
        w = self.weights().astype(x.dtype, copy=False)
        self._cache = (x, w)
        return np.einsum("btld,l->btd", x, w)

    def backward(self, dout):
        x, w = self._cache
        dw = np.einsum("btld,btd->l", x, dout)
        if self.mode == "raw":
            dlogits = dw
        else:
            dlogits = w * (dw - (w * dw).sum())
        self.grads = {"logits": dlogits}
        return w[None, None, :, None] * dout[:, :, None, :]


def _reverse_index(T, lengths):
    """Per-sequence time reversal of the valid prefix; padding stays in place."""
    t = np.arange(T)[None, :]
    L = lengths[:, None]
    return np.where(t < L, L - 1 - t, t)


class GRU(Layer):
    """One-direction GRU over padded batches.

    Gate convention: h_t = (1 - z) * h_{t-1} + z * n, with
    n = tanh(x W_n + b_n + r * (h_{t-1} U_n)). Initial state is zero.
    """

    def __init__(self, name, in_dim, hidden, seed=0, reverse=False, dtype=np.float32):
        super().__init__(name)
        rng = layer_rng(seed, name)
        self.hidden = hidden
        self.reverse = reverse
        self.params = {
            "W": lecun_uniform(rng, in_dim, (in_dim, 3 * hidden), dtype),
            "U": np.concatenate([orthogonal(rng, hidden, dtype) for _ in range(3)], axis=1),
            "b": np.zeros(3 * hidden, dtype),
        }

    def forward(self, x, ctx):
        p = self.params
        if x.ndim != 3 or x.shape[-1] != p["W"].shape[0]:
            raise ShapeError(f"{self.name}: expected (B, T, {p['W'].shape[0]}), got {x.shape}")
        B, T, _ = x.shape
        rows = np.arange(B)[:, None]
        rev = _reverse_index(T, ctx.lengths) if self.reverse else None
        if rev is not None:
            x = x[rows, rev]
        gx = np.ascontiguousarray((x @ p["W"] + p["b"]).transpose(1, 0, 2))
        hs, z, r, n, ghn = kernels.gru_forward(gx, p["U"])
        self._cache = (x, rev, hs, z, r, n, ghn)
        out = hs.transpose(1, 0, 2)
        if rev is not None:
            out = out[rows, rev]
        return out

    def backward(self, dout):
        x, rev, hs, z, r, n, ghn = self._cache
        p = self.params
        B, T, _ = x.shape
        H = self.hidden
        rows = np.arange(B)[:, None]
        if rev is not None:
            dout = dout[rows, rev]
        dhs = np.ascontiguousarray(dout.transpose(1, 0, 2), dtype=hs.dtype)
        dgx, dgh = kernels.gru_backward(dhs, hs, z, r, n, ghn, p["U"])
        hprev = np.concatenate([np.zeros((1, B, H), hs.dtype), hs[:-1]], axis=0)
        dU = hprev.reshape(-1, H).T @ dgh.reshape(-1, 3 * H)
        dgx_bt = dgx.transpose(1, 0, 2)
        x2 = x.reshape(-1, x.shape[-1])
        self.grads = {
            "W": x2.T @ dgx_bt.reshape(-1, 3 * H),
            "b": dgx.sum(axis=(0, 1)),
            "U": dU,
        }
        dx = dgx_bt @ p["W"].T
        if rev is not None:
            dx = dx[rows, rev]
        return dx


class BiGRU(Layer):
    """Forward and reverse GRUs concatenated along features (2 * hidden)."""

    def __init__(self, name, in_dim, hidden, seed=0, dtype=np.float32):
        super().__init__(name)
        self.fwd = GRU(f"{name}.fwd", in_dim, hidden, seed, reverse=False, dtype=dtype)
        self.bwd = GRU(f"{name}.bwd", in_dim, hidden, seed, reverse=True, dtype=dtype)
        self.hidden = hidden

    @property
    def sublayers(self):
        return (self.fwd, self.bwd)

    def forward(self, x, ctx):
        return np.concatenate([self.fwd.forward(x, ctx), self.bwd.forward(x, ctx)], axis=-1)

    def backward(self, dout):
        H = self.hidden
        return self.fwd.backward(dout[..., :H]) + self.bwd.backward(dout[..., H:])
