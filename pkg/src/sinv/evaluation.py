"""Held-out PPMC evaluation under the segmented and unsegmented protocols."""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .channels import ORAL_TVS
from .corpus import load_split
from .errors import CompatibilityError, ConfigError
from .metrics import ConstantChannelWarning, pearson, segment_bounds

PROTOCOLS = ("segmented", "unsegmented")
TRAJECTORY_RATE_HZ = 100


@dataclass
class EvalReport:
    ppmc: dict
    protocol: str
    split: str
    n_utterances: int
    n_units: int
    segment_frames: int = None
    min_segment_frames: int = None
    constant_channels: int = 0
    per_utterance: dict = field(default_factory=dict, repr=False)

    @property
    def mean_oral(self):
        vals = [self.ppmc[c] for c in ORAL_TVS if c in self.ppmc]
        return float(np.mean(vals)) if len(vals) == len(ORAL_TVS) else None

    def to_dict(self):
        return {
            "protocol": self.protocol,
            "split": self.split,
            "segment_frames": self.segment_frames,
            "min_segment_frames": self.min_segment_frames,
            "n_utterances": self.n_utterances,
            "n_units": self.n_units,
            "constant_channels": self.constant_channels,
            "ppmc": self.ppmc,
            "mean_oral": self.mean_oral,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def table(self):
        rows = [f"{c:>8s}  {v:6.3f}" for c, v in self.ppmc.items()]
        if self.mean_oral is not None:
            rows.append(f"{'oral':>8s}  {self.mean_oral:6.3f}")
        head = f"protocol={self.protocol} split={self.split} units={self.n_units}"
        return "\n".join([head] + rows)


def score_pairs(pairs, channels, protocol="unsegmented", segment_frames=200, split="test"):
    """PPMC per channel, averaged over utterances or fixed-length segments.

    ``pairs`` is a sequence of ``(utt_id, pred, target)`` with (frames, C)
    arrays at 100 Hz in ``channels`` order.
    """
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    if segment_frames < 2:
        raise ConfigError("segments must span at least two frames")
    sums = np.zeros(len(channels))
    units = 0
    constant = 0
    per_utt = {}
    min_frames = segment_frames // 2 if protocol == "segmented" else None
    for uid, pred, target in pairs:
        if pred.shape != target.shape:
            raise CompatibilityError(f"{uid}: prediction {pred.shape} vs target {target.shape}")
        n = pred.shape[0]
        spans = segment_bounds(n, segment_frames, min_frames) if protocol == "segmented" else [(0, n)]
        utt_vals = []
        for a, b in spans:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", ConstantChannelWarning)
                vals = [pearson(pred[a:b, c], target[a:b, c]) for c in range(len(channels))]
            constant += len(caught)
            sums += vals
            units += 1
            utt_vals.append(vals)
        if utt_vals:
            per_utt[uid] = dict(zip(channels, np.mean(utt_vals, axis=0).tolist()))
    if units == 0:
        raise ConfigError(f"no {protocol} evaluation units in split {split!r}")
    return EvalReport(
        ppmc={c: float(v) for c, v in zip(channels, sums / units)},
        protocol=protocol,
        split=split,
        n_utterances=len(per_utt),
        n_units=units,
        segment_frames=segment_frames if protocol == "segmented" else None,
        min_segment_frames=min_frames,
        constant_channels=constant,
        per_utterance=per_utt,
    )


def evaluate(predictor, manifest, split="test", protocol=None, segment_seconds=None, channels=None):
    """Score ``predictor`` on one manifest split.

    ``predictor`` is a :class:`~sinv.models.Model` or any callable mapping a
    (T, layers, dim) feature array to (2T, C) predictions; for a bare callable
    ``channels`` names its outputs. The protocol must be chosen explicitly.
    """
    if protocol is None:
        raise ConfigError("choose an evaluation protocol: 'segmented' or 'unsegmented'")
    if protocol == "segmented":
        if segment_seconds is None or segment_seconds <= 0:
            raise ConfigError("segmented evaluation needs a positive segment length in seconds")
        segment_frames = int(round(segment_seconds * TRAJECTORY_RATE_HZ))
    else:
        segment_frames = 200
    manifest.validate()
    spec = getattr(predictor, "spec", None)
    if spec is not None:
        if manifest.frontend is not None and manifest.frontend != spec.frontend:
            raise CompatibilityError(
                f"model expects {spec.frontend} features, manifest provides {manifest.frontend}"
            )
        channels = spec.output_channels
        fn = predictor.predict
    else:
        if channels is None:
            raise ConfigError("a bare predictor needs its output channel names")
        fn = predictor
    channels = tuple(channels)
    utts = load_split(manifest, split, channels)
    if not utts:
        raise ConfigError(f"split {split!r} is empty")
    pairs = ((u.id, np.asarray(fn(u.features), dtype=np.float64), u.targets) for u in utts)
    return score_pairs(pairs, channels, protocol, segment_frames, split)
