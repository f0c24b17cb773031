"""Central finite-difference verification of analytic gradients."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple
    per_tensor: dict = field(default_factory=dict)

    def __str__(self):
        name, idx = self.worst
        return f"max relative error {self.max_rel_error:.3e} at {name}{[int(i) for i in idx]}"


def rel_error(analytic, numeric, atol=1e-6):
    """Elementwise |a - n| / max(|a|, |n|, atol)."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), atol)


def grad_check(forward, backward, params, x, h=1e-5, seed=0, atol=1e-6, check_input=True, max_entries=None):
    """Compare analytic and central-difference gradients of a random projection.

    ``forward(x)`` returns an array or a dict of arrays and must be
    deterministic; ``backward(dout)`` receives matching upstream gradients and
    returns ``(dx, grads)`` with ``grads`` keyed like ``params``. Parameters are
    perturbed in place and restored. Arrays should be float64. With
    ``max_entries`` only that many randomly chosen entries per tensor are probed.
    """
    out = forward(x)
    rng = np.random.default_rng(seed)
    if isinstance(out, dict):
        probes = {k: rng.standard_normal(v.shape) for k, v in sorted(out.items())}
    else:
        probes = rng.standard_normal(out.shape)

    def objective():
        o = forward(x)
        if isinstance(o, dict):
            return sum(float(np.sum(o[k] * probes[k])) for k in probes)
        return float(np.sum(o * probes))

    forward(x)
    dx, grads = backward(probes)
    targets = dict(params)
    analytic = {k: grads[k] for k in params}
    if check_input:
        targets["<input>"] = x
        analytic["<input>"] = dx

    report = GradCheckReport(0.0, ("", ()))
    for name, arr in targets.items():
        num = np.zeros(arr.shape)
        flat = arr.reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            probe_idx = np.sort(rng.choice(flat.size, max_entries, replace=False))
        else:
            probe_idx = range(flat.size)
        for i in probe_idx:
            old = flat[i]
            flat[i] = old + h
            fp = objective()
            flat[i] = old - h
            fm = objective()
            flat[i] = old
            num.reshape(-1)[i] = (fp - fm) / (2 * h)
        err = rel_error(np.asarray(analytic[name], dtype=np.float64), num, atol)
        if max_entries is not None and flat.size > max_entries:
            keep = np.zeros(flat.size, dtype=bool)
            keep[probe_idx] = True
            err = np.where(keep.reshape(err.shape), err, 0.0)
        worst = float(err.max()) if err.size else 0.0
        report.per_tensor[name] = worst
        if worst >= report.max_rel_error:
            report.max_rel_error = worst
            report.worst = (name, np.unravel_index(int(err.argmax()), err.shape) if err.size else ())
    return report


def check_layer(layer, x, ctx_factory, h=1e-5, seed=0, atol=1e-6):
    """grad_check for a single layer; ``ctx_factory()`` must return a fresh Context."""

    def forward(inp):
        return layer.forward(inp, ctx_factory())

    def backward(dout):
        dx = layer.backward(dout)
        return dx, layer.grads

    return grad_check(forward, backward, layer.params, x, h=h, seed=seed, atol=atol)


def check_model(model, x, lengths=None, training=True, h=1e-5, seed=0, atol=1e-6, max_entries=None):
    """grad_check for a whole model (dropout should be 0 for a deterministic forward)."""

    def forward(inp):
        return model.forward(inp, lengths, training=training)

    def backward(dout):
        dx = model.backward(dout)
        return dx, model.grads()

    return grad_check(forward, backward, model.params(), x, h=h, seed=seed, atol=atol,
                      max_entries=max_entries)
