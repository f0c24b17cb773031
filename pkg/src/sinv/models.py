"""Nasal-SI, STL-SI and MTL-SI assemblies plus binary checkpoints."""

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .channels import NASAL_SI_CHANNELS, ORAL_TVS, SI_CHANNELS, SOURCE_FEATURES, VP
from .errors import CompatibilityError, ConfigError, FormatError, ShapeError
from .features import frontend_id
from .neural import kernels
from .neural.layers import (
    BatchNorm,
    BiGRU,
    Context,
    Dense,
    Dropout,
    LayerFusion,
    SelfAttention,
    Upsample2x,
)

ARCHS = ("nasal-si", "stl-si", "mtl-si")

GRU_CONVENTION = "h=(1-z)*h_prev+z*n; n=tanh(xW_n+b_n+r*(h_prev U_n))"

DEFAULT_HEADS = {
    "nasal-si": (NASAL_SI_CHANNELS,),
    "stl-si": (SI_CHANNELS,),
    "mtl-si": (ORAL_TVS, (VP,) + SOURCE_FEATURES),
}


@dataclass
class ModelSpec:
    arch: str
    width_scale: float = 1.0
    input_layers: int = 1
    input_dim: int = 40
    heads: tuple = None
    seed: int = 0
    dropout: float = 0.3
    fusion: str = "softmax"
    upsample: str = "linear"
    head_weights: tuple = None

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ConfigError(f"unknown architecture {self.arch!r}; expected one of {ARCHS}")
        if self.heads is None:
            self.heads = DEFAULT_HEADS[self.arch]
        self.heads = tuple(tuple(h) for h in self.heads)
        if self.arch != "mtl-si" and len(self.heads) != 1:
            raise ConfigError(f"{self.arch} has a single output head")
        if any(len(h) == 0 for h in self.heads):
            raise ConfigError("output heads must be non-empty")
        if self.head_weights is None:
            self.head_weights = tuple(1.0 / len(self.heads) for _ in self.heads)
        self.head_weights = tuple(float(w) for w in self.head_weights)
        if len(self.head_weights) != len(self.heads):
            raise ConfigError("one loss weight per head required")
        try:
            scale = float(self.width_scale)
        except (TypeError, ValueError):
            raise ConfigError(f"width_scale {self.width_scale!r} is not a number") from None
        if not (math.isfinite(scale) and scale > 0):
            raise ConfigError(f"width_scale must be positive and finite, got {self.width_scale}")
        if self.input_layers < 1 or self.input_dim < 1:
            raise ConfigError("input layers and dim must be positive")

    @property
    def output_channels(self):
        return tuple(c for h in self.heads for c in h)

    @property
    def frontend(self):
        return frontend_id(self.input_layers, self.input_dim)

    def width(self, base):
        units = int(round(base * self.width_scale))
        if units < 1:
            raise ConfigError(f"width_scale {self.width_scale} leaves {base}-unit layer empty")
        return units

    def to_dict(self):
        d = asdict(self)
        d["heads"] = [list(h) for h in self.heads]
        d["head_weights"] = list(self.head_weights)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _leaves(layer):
    subs = getattr(layer, "sublayers", None)
    if subs:
        for s in subs:
            yield from _leaves(s)
    else:
        yield layer


class Model:
    """Trunk layers followed by one or more dense heads.

    ``forward`` maps features (B, T, layers, dim) at 50 Hz to a dict of head
    outputs (B, 2T, channels) at 100 Hz.
    """

    def __init__(self, spec, trunk, heads, dtype):
        self.spec = spec
        self.trunk = trunk
        self.heads = heads
        self.dtype = np.dtype(dtype)
        self.metadata = {}
        self._upsample_at = next(i for i, l in enumerate(trunk) if isinstance(l, Upsample2x))

    def leaves(self):
        for layer in list(self.trunk) + list(self.heads):
            yield from _leaves(layer)

    def params(self):
        return {f"{l.name}.{k}": v for l in self.leaves() for k, v in l.params.items()}

    def grads(self):
        return {f"{l.name}.{k}": v for l in self.leaves() for k, v in l.grads.items()}

    def buffers(self):
        return {f"{l.name}.{k}": v for l in self.leaves() for k, v in l.buffers.items()}

    def set_buffer(self, full_name, value):
        for l in self.leaves():
            for k in l.buffers:
                if f"{l.name}.{k}" == full_name:
                    l.buffers[k] = value
                    return
        raise KeyError(full_name)

    def param_count(self):
        return int(sum(v.size for v in self.params().values()))

    def head_names(self):
        return [h.name for h in self.heads]

    def set_dropout(self, rate):
        for l in self.leaves():
            if isinstance(l, Dropout):
                l.rate = rate

    def _prepare(self, x):
        x = np.asarray(x)
        self._input_shape = x.shape
        if x.ndim == 3:
            x = x[:, :, None, :]
        if x.ndim != 4:
            raise ShapeError(f"input must be (B, T, layers, dim), got {x.shape}")
        if x.shape[2:] != (self.spec.input_layers, self.spec.input_dim):
            raise CompatibilityError(
                f"model expects {self.spec.frontend} features, got {frontend_id(*x.shape[2:])}"
            )
        x = x.astype(self.dtype, copy=False)
        if self.spec.input_layers == 1:
            x = x[:, :, 0, :]
        return x

    def forward(self, x, lengths=None, training=False, rng=None):
        x = self._prepare(x)
        B, T = x.shape[:2]
        if lengths is None:
            lengths = np.full(B, T, dtype=np.int64)
        ctx = Context(np.asarray(lengths, dtype=np.int64), training, rng)
        h = x
        for i, layer in enumerate(self.trunk):
            h = layer.forward(h, ctx)
            if i == self._upsample_at:
                ctx = ctx.upsampled()
        return {head.name: head.forward(h, ctx) for head in self.heads}

    def backward(self, dheads):
        dh = None
        for head in self.heads:
            d = head.backward(dheads[head.name])
            dh = d if dh is None else dh + d
        for layer in reversed(self.trunk):
            dh = layer.backward(dh)
        return dh.reshape(self._input_shape)

    def predict(self, features):
        """Eval-mode forward on one utterance; returns (2T, channels) in spec channel order."""
        data = features.data if hasattr(features, "data") else features
        out = self.forward(np.asarray(data)[None], training=False)
        return np.concatenate([out[h.name][0] for h in self.heads], axis=-1).astype(np.float64)


def _input_stage(spec, dtype):
    layers = []
    if spec.input_layers > 1:
        layers.append(LayerFusion("fusion", spec.input_layers, spec.fusion, dtype))
    return layers


def _heads(spec, in_dim, dtype):
    return [Dense(f"head{i + 1}", in_dim, len(h), spec.seed, dtype) for i, h in enumerate(spec.heads)]


def build_nasal_si(spec, dtype=np.float32):
    """fusion? -> BiGRU(128) -> dropout -> BiGRU(128) -> dropout -> attention -> dense(128) -> 2x -> dense(5)."""
    if spec.arch != "nasal-si":
        raise ConfigError(f"build_nasal_si needs arch nasal-si, got {spec.arch}")
    h = spec.width(128)
    d = spec.width(128)
    s = spec.seed
    trunk = _input_stage(spec, dtype) + [
        BiGRU("bigru1", spec.input_dim, h, s, dtype),
        Dropout("drop1", spec.dropout),
        BiGRU("bigru2", 2 * h, h, s, dtype),
        Dropout("drop2", spec.dropout),
        SelfAttention("attention", 2 * h, s, dtype),
        Dense("dense", 2 * h, d, s, dtype),
        Upsample2x("upsample", spec.upsample),
    ]
    return Model(spec, trunk, _heads(spec, d, dtype), dtype)


def _build_si_trunk(spec, dtype):
    h1, h3, d = spec.width(512), spec.width(256), spec.width(128)
    s = spec.seed
    return _input_stage(spec, dtype) + [
        BiGRU("bigru1", spec.input_dim, h1, s, dtype),
        Dropout("drop1", spec.dropout),
        BiGRU("bigru2", 2 * h1, h1, s, dtype),
        Dropout("drop2", spec.dropout),
        BiGRU("bigru3", 2 * h1, h3, s, dtype),
        Dropout("drop3", spec.dropout),
        Dense("dense", 2 * h3, d, s, dtype),
        Upsample2x("upsample", spec.upsample),
        BatchNorm("batchnorm", d, dtype=dtype),
        Dropout("drop4", spec.dropout),
    ], d


def build_stl_si(spec, dtype=np.float32):
    """Shared SI trunk with a single dense head (10 channels by default)."""
    if spec.arch != "stl-si":
        raise ConfigError(f"build_stl_si needs arch stl-si, got {spec.arch}")
    trunk, d = _build_si_trunk(spec, dtype)
    return Model(spec, trunk, _heads(spec, d, dtype), dtype)


def build_mtl_si(spec, dtype=np.float32):
    """Shared SI trunk with one dense head per task (6 oral TVs + VP/SF by default)."""
    if spec.arch != "mtl-si":
        raise ConfigError(f"build_mtl_si needs arch mtl-si, got {spec.arch}")
    trunk, d = _build_si_trunk(spec, dtype)
    return Model(spec, trunk, _heads(spec, d, dtype), dtype)


def build_model(spec, dtype=np.float32):
    return {"nasal-si": build_nasal_si, "stl-si": build_stl_si, "mtl-si": build_mtl_si}[spec.arch](spec, dtype)


# -- checkpoints --------------------------------------------------------------

CKPT_MAGIC = b"SINV"
CKPT_VERSION = 1


def design_flags(spec):
    return {
        "gru_gates": GRU_CONVENTION,
        "attention": "single-head, residual, no positional encoding",
        "fusion": spec.fusion,
        "upsample": spec.upsample,
        "init": "orthogonal recurrent, lecun-uniform input/dense, zero bias",
        "batchnorm": {"momentum": 0.99, "eps": 1e-5},
        "kernel_backend": kernels.BACKEND,
    }


def save_checkpoint(model, path, optimizer=None, metadata=None):
    """Write the SINV binary: header, spec JSON, then named f32 tensors."""
    meta = dict(model.metadata)
    if metadata:
        meta.update(metadata)
    header = {
        "spec": model.spec.to_dict(),
        "frontend": model.spec.frontend,
        "design": {k: v for k, v in design_flags(model.spec).items() if k != "kernel_backend"},
        "meta": meta,
    }
    tensors = [(f"param/{k}", v) for k, v in model.params().items()]
    tensors += [(f"buffer/{k}", v) for k, v in model.buffers().items()]
    if optimizer is not None:
        header["optimizer"] = optimizer.state_dict()
        tensors += [(f"adam.m/{k}", v) for k, v in optimizer.m.items()]
        tensors += [(f"adam.v/{k}", v) for k, v in optimizer.v.items()]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [CKPT_MAGIC, struct.pack("<II", CKPT_VERSION, len(blob)), blob, struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, raw, path):
        self.raw = raw
        self.pos = 0
        self.path = path

    def take(self, n, what):
        if self.pos + n > len(self.raw):
            raise FormatError(
                f"{self.path}: truncated while reading {what} (need {n} bytes, {len(self.raw) - self.pos} left)",
                self.pos,
            )
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def read_checkpoint(path):
    """Parse a checkpoint into ``(header, tensors)`` without building a model."""
    rd = _Reader(Path(path).read_bytes(), path)
    if rd.take(4, "magic") != CKPT_MAGIC:
        raise FormatError(f"{path}: not a SINV checkpoint (bad magic)", 0)
    version, jlen = rd.unpack("<II", "header")
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}", 4)
    try:
        header = json.loads(rd.take(jlen, "spec JSON").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt spec JSON: {exc}", 12) from exc
    (count,) = rd.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        start = rd.pos
        (nlen,) = rd.unpack("<H", "tensor name length")
        try:
            name = rd.take(nlen, "tensor name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{path}: corrupt tensor name", start) from exc
        (rank,) = rd.unpack("<B", f"rank of {name}")
        dims = rd.unpack(f"<{rank}I", f"dims of {name}") if rank else ()
        n = int(np.prod(dims)) if rank else 1
        payload = rd.take(4 * n, f"payload of {name}")
        if name in tensors:
            raise FormatError(f"{path}: duplicate tensor {name!r}", start)
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if rd.pos != len(rd.raw):
        raise FormatError(f"{path}: {len(rd.raw) - rd.pos} trailing bytes after tensor table", rd.pos)
    return header, tensors


def load_checkpoint(path, expect_frontend=None, with_optimizer=False):
    """Rebuild a float32 model from a checkpoint.

    ``expect_frontend`` (e.g. ``"mel40"``) guards against evaluating on
    mismatched features. With ``with_optimizer=True`` returns ``(model, adam)``.
    """
    header, tensors = read_checkpoint(path)
    try:
        spec = ModelSpec.from_dict(header["spec"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: checkpoint spec is incomplete: {exc}") from exc
    if expect_frontend is not None and spec.frontend != expect_frontend:
        raise CompatibilityError(
            f"{path}: checkpoint built for {spec.frontend} features, data is {expect_frontend}"
        )
    stored = header.get("design", {})
    current = {k: v for k, v in design_flags(spec).items() if k != "kernel_backend"}
    if stored and stored != current:
        raise CompatibilityError(f"{path}: design flags {stored} differ from this build {current}")
    model = build_model(spec, np.float32)
    params = model.params()
    for name, arr in params.items():
        key = f"param/{name}"
        if key not in tensors:
            raise FormatError(f"{path}: missing tensor {key!r}")
        if tensors[key].shape != arr.shape:
            raise ShapeError(f"{path}: tensor {key!r} has shape {tensors[key].shape}, spec implies {arr.shape}")
        arr[...] = tensors[key]
    for name, arr in model.buffers().items():
        key = f"buffer/{name}"
        if key not in tensors or tensors[key].shape != arr.shape:
            raise FormatError(f"{path}: missing or mis-shaped buffer {key!r}")
        model.set_buffer(name, tensors[key].copy())
    extra = set(tensors) - {f"param/{k}" for k in params} - {f"buffer/{k}" for k in model.buffers()}
    extra = {k for k in extra if not k.startswith("adam.")}
    if extra:
        raise FormatError(f"{path}: tensors {sorted(extra)} do not belong to a {spec.arch} model")
    model.metadata = header.get("meta", {})
    if not with_optimizer:
        return model
    from .neural.optim import Adam

    opt_meta = header.get("optimizer")
    opt = Adam(params, **({k: opt_meta[k] for k in ("lr", "beta1", "beta2", "eps")} if opt_meta else {}))
    if opt_meta:
        opt.load_state(
            opt_meta,
            {k: tensors[f"adam.m/{k}"] for k in params},
            {k: tensors[f"adam.v/{k}"] for k in params},
        )
    return model, opt
