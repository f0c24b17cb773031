"""Mini-batch training with Adam, dev-loss early stopping and seeded batching."""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import load_split
from .errors import CompatibilityError, ConfigError, NumericError
from .metrics import DEFAULT_ALPHA, combined_loss, pearson
from .channels import ORAL_TVS
from .neural.optim import Adam


@dataclass
class TrainConfig:
    lr: float = 5e-4
    batch_size: int = 8
    max_epochs: int = 50
    patience: int = 8
    alpha: float = DEFAULT_ALPHA
    seed: int = 0

    def __post_init__(self):
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, max_epochs and patience must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")


class EarlyStopping:
    """Track the best dev loss; stop after ``patience`` epochs without strict improvement."""

    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch, loss):
        """Return ``(improved, should_stop)`` after recording ``loss`` for ``epoch``."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True, False
        self.bad_epochs += 1
        return False, self.bad_epochs >= self.patience


@dataclass
class TrainResult:
    model: object
    optimizer: Adam
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_dev_loss: float = math.inf
    stopped_early: bool = False


def pad_batch(utts):
    """Stack utterances into zero-padded (B, T, L, D) features and (B, 2T, C) targets."""
    lengths = np.array([u.features.shape[0] for u in utts], dtype=np.int64)
    T = int(lengths.max())
    L, D = utts[0].features.shape[1:]
    C = utts[0].targets.shape[1]
    x = np.zeros((len(utts), T, L, D), dtype=np.float32)
    y = np.zeros((len(utts), 2 * T, C), dtype=np.float64)
    for i, u in enumerate(utts):
        x[i, : lengths[i]] = u.features
        y[i, : 2 * lengths[i]] = u.targets
    mask = np.arange(2 * T)[None, :] < 2 * lengths[:, None]
    return x, y, lengths, mask


def head_slices(spec):
    out, start = [], 0
    for h in spec.heads:
        out.append(slice(start, start + len(h)))
        start += len(h)
    return out


def batch_loss(model, outputs, y, mask, alpha):
    """Head-weighted loss and per-head upstream gradients."""
    total = 0.0
    grads = {}
    for name, sl, w in zip(model.head_names(), head_slices(model.spec), model.spec.head_weights):
        lv = combined_loss(outputs[name], y[..., sl], mask, alpha)
        total += w * lv.loss
        grads[name] = (w * lv.grad).astype(outputs[name].dtype)
    return total, grads


def _batches(n, size, rng=None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    return [order[i:i + size] for i in range(0, n, size)]


def evaluate_loss(model, utts, alpha, batch_size=8):
    """Utterance-weighted dev loss plus per-channel mean PPMC (whole utterances)."""
    total, count = 0.0, 0
    per_channel = np.zeros(len(model.spec.output_channels))
    for idx in _batches(len(utts), batch_size):
        batch = [utts[i] for i in idx]
        x, y, lengths, mask = pad_batch(batch)
        out = model.forward(x, lengths, training=False)
        loss, _ = batch_loss(model, out, y, mask, alpha)
        total += loss * len(batch)
        count += len(batch)
        pred = np.concatenate([out[h] for h in model.head_names()], axis=-1)
        for i, n in enumerate(lengths):
            for c in range(pred.shape[-1]):
                per_channel[c] += pearson(pred[i, : 2 * n, c], y[i, : 2 * n, c], warn=False)
    return total / count, per_channel / count


def train(model, manifest, cfg=None, log=None):
    """Fit ``model`` on the manifest's train split, early-stopping on dev loss.

    Returns a :class:`TrainResult` whose model carries the best-dev-loss weights.
    The run is fully determined by ``cfg.seed`` and the model's init seed.
    """
    cfg = cfg or TrainConfig()
    manifest.validate()
    if manifest.frontend is not None and manifest.frontend != model.spec.frontend:
        raise CompatibilityError(
            f"manifest features are {manifest.frontend}, model expects {model.spec.frontend}"
        )
    channels = model.spec.output_channels
    train_set = load_split(manifest, "train", channels)
    dev_set = load_split(manifest, "dev", channels)
    if not train_set or not dev_set:
        raise ConfigError("training needs non-empty train and dev splits")

    opt = Adam(model.params(), lr=cfg.lr)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    dropout_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    stopper = EarlyStopping(cfg.patience)
    result = TrainResult(model, opt)
    best_state = None

    for epoch in range(1, cfg.max_epochs + 1):
        losses = []
        for b, idx in enumerate(_batches(len(train_set), cfg.batch_size, shuffle_rng), start=1):
            x, y, lengths, mask = pad_batch([train_set[i] for i in idx])
            out = model.forward(x, lengths, training=True, rng=dropout_rng)
            loss, dheads = batch_loss(model, out, y, mask, cfg.alpha)
            if not math.isfinite(loss):
                raise NumericError(f"loss diverged at epoch {epoch}, batch {b}")
            model.backward(dheads)
            try:
                opt.step(model.grads())
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from None
            losses.append(loss)
        dev_loss, dev_pc = evaluate_loss(model, dev_set, cfg.alpha, cfg.batch_size)
        if not math.isfinite(dev_loss):
            raise NumericError(f"dev loss diverged at epoch {epoch}")
        oral = [dev_pc[i] for i, c in enumerate(channels) if c in ORAL_TVS]
        record = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "dev_loss": float(dev_loss),
            "dev_ppmc": {c: float(v) for c, v in zip(channels, dev_pc)},
        }
        if oral:
            record["dev_mean_oral"] = float(np.mean(oral))
        result.history.append(record)
        improved, stop = stopper.update(epoch, dev_loss)
        if improved:
            best_state = _snapshot(model, opt)
        if log is not None:
            log(record, improved)
        if stop:
            result.stopped_early = True
            break

    _restore(model, opt, best_state)
    result.best_epoch = stopper.best_epoch
    result.best_dev_loss = float(stopper.best)
    model.metadata = {
        "train_config": asdict(cfg),
        "best_epoch": result.best_epoch,
        "best_dev_loss": result.best_dev_loss,
        "epochs_run": len(result.history),
        "stopped_early": result.stopped_early,
        "history": result.history,
        "frontend": model.spec.frontend,
    }
    return result


def _snapshot(model, opt):
    return {
        "params": {k: v.copy() for k, v in model.params().items()},
        "buffers": {k: v.copy() for k, v in model.buffers().items()},
        "m": {k: v.copy() for k, v in opt.m.items()},
        "v": {k: v.copy() for k, v in opt.v.items()},
        "step": opt.step_count,
    }


def _restore(model, opt, state):
    if state is None:
        return
    for k, arr in model.params().items():
        arr[...] = state["params"][k]
    for k, arr in state["buffers"].items():
        model.set_buffer(k, arr.copy())
    opt.m = {k: v.copy() for k, v in state["m"].items()}
    opt.v = {k: v.copy() for k, v in state["v"].items()}
    opt.step_count = state["step"]
