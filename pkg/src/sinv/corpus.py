"""Manifests, utterance loading, and the synthetic inversion corpus."""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channels import SI_CHANNELS
from .dsp import Trajectory
from .errors import ConfigError, FormatError, SplitError
from .features import FeatureSequence, frontend_id, load_embeddings, write_feat
from .groundtruth import align_targets
from .io import read_trajectory_csv, write_trajectory_csv

SPLITS = ("train", "dev", "test")


@dataclass
class UtteranceEntry:
    id: str
    speaker: str
    split: str
    features: str
    targets: str


@dataclass
class Manifest:
    utterances: list
    frontend: str = None
    channels: tuple = SI_CHANNELS
    root: Path = field(default=Path("."), repr=False)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid manifest JSON: {exc}") from exc
        try:
            utts = [UtteranceEntry(**u) for u in doc["utterances"]]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{path}: malformed utterance entry: {exc}") from exc
        return cls(utts, doc.get("frontend"), tuple(doc.get("channels", SI_CHANNELS)), path.parent)

    def save(self, path):
        doc = {
            "version": 1,
            "frontend": self.frontend,
            "channels": list(self.channels),
            "utterances": [asdict(u) for u in self.utterances],
        }
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")

    def validate(self):
        """Reject unknown split names and any speaker present in two splits."""
        seen = {}
        for u in self.utterances:
            if u.split not in SPLITS:
                raise ConfigError(f"utterance {u.id}: unknown split {u.split!r}")
            prev = seen.setdefault(u.speaker, u.split)
            if prev != u.split:
                raise SplitError(
                    f"speaker {u.speaker!r} appears in both {prev!r} and {u.split!r} splits"
                )

    def split(self, name):
        return [u for u in self.utterances if u.split == name]

    def resolve(self, rel):
        p = Path(rel)
        return p if p.is_absolute() else self.root / p


@dataclass
class Utterance:
    id: str
    speaker: str
    features: np.ndarray  # (T, layers, dim) at 50 Hz
    targets: np.ndarray  # (2T, C) at 100 Hz
    channels: tuple


def load_utterance(manifest, entry, channels=None):
    feats = load_embeddings(manifest.resolve(entry.features))
    trajs = read_trajectory_csv(manifest.resolve(entry.targets))
    if channels is not None:
        by_name = {t.name: t for t in trajs}
        missing = [c for c in channels if c not in by_name]
        if missing:
            raise ConfigError(f"{entry.targets}: missing target channels {missing}")
        trajs = [by_name[c] for c in channels]
    tv = align_targets(trajs, 2 * feats.frames)
    return Utterance(entry.id, entry.speaker, feats.data, tv.values, tv.names)


def load_split(manifest, split, channels=None):
    manifest.validate()
    return [load_utterance(manifest, u, channels) for u in manifest.split(split)]


# -- synthetic corpus ---------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Desk-scale stand-in for the private corpora.

    Targets are smooth latent trajectories (sums of low-frequency sinusoids
    with a per-speaker amplitude/phase/tempo signature) mixed into the 10 SI
    channels; features are a fixed random affine + tanh projection of the
    50 Hz targets plus Gaussian noise, so inversion is well posed.
    """

    n_speakers: int = 24
    utts_per_speaker: int = 10
    duration_s: tuple = (3.0, 5.0)
    seed: int = 1
    latent_dim: int = 6
    noise_std: float = 0.05
    feature_layers: int = 4
    feature_dim: int = 32
    split_sizes: tuple = (20, 2, 2)
    n_sinusoids: int = 3
    freq_range_hz: tuple = (0.4, 3.0)

    def __post_init__(self):
        if sum(self.split_sizes) != self.n_speakers:
            raise ConfigError(
                f"split sizes {self.split_sizes} do not add up to {self.n_speakers} speakers"
            )
        if self.utts_per_speaker < 1 or self.latent_dim < 1:
            raise ConfigError("need at least one utterance per speaker and one latent dimension")
        lo, hi = self.duration_s
        if not 0 < lo <= hi:
            raise ConfigError(f"invalid duration range {self.duration_s}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")

    def speaker_split(self, spk):
        n_train, n_dev, _ = self.split_sizes
        if spk < n_train:
            return "train"
        return "dev" if spk < n_train + n_dev else "test"


def _rng(*key):
    return np.random.default_rng(np.random.SeedSequence(list(key)))


class SyntheticMapping:
    """The fixed random target -> feature projection shared by all speakers."""

    def __init__(self, spec, n_channels=len(SI_CHANNELS)):
        rng = _rng(spec.seed, 0)
        self.spec = spec
        self.mix = rng.normal(size=(spec.latent_dim, n_channels)) / np.sqrt(spec.latent_dim)
        self.proj = rng.normal(size=(spec.feature_layers, n_channels, spec.feature_dim)) / np.sqrt(n_channels)
        self.bias = rng.normal(scale=0.3, size=(spec.feature_layers, spec.feature_dim))

    def features(self, targets_50hz, rng):
        """(T, C) targets -> (T, layers, dim) noisy features."""
        clean = np.tanh(np.einsum("tc,lcd->tld", targets_50hz, self.proj) + self.bias[None])
        if self.spec.noise_std > 0:
            clean = clean + rng.normal(scale=self.spec.noise_std, size=clean.shape)
        return clean


def synth_utterance(spec, mapping, spk, utt):
    """Return (targets at 100 Hz, features at 50 Hz) for one synthetic utterance."""
    srng = _rng(spec.seed, 1, spk)
    amp = srng.uniform(0.6, 1.4, size=spec.latent_dim)
    phase = srng.uniform(0, 2 * np.pi, size=spec.latent_dim)
    tempo = srng.uniform(0.8, 1.2)
    offset = srng.normal(scale=0.1, size=len(SI_CHANNELS))

    urng = _rng(spec.seed, 2, spk, utt)
    n50 = int(round(urng.uniform(*spec.duration_s) * 50))
    t = np.arange(2 * n50) / 100.0
    k = spec.n_sinusoids
    freqs = urng.uniform(*spec.freq_range_hz, size=(spec.latent_dim, k)) * tempo
    amps = urng.uniform(0.3, 1.0, size=(spec.latent_dim, k)) * amp[:, None]
    phases = urng.uniform(0, 2 * np.pi, size=(spec.latent_dim, k)) + phase[:, None]
    latent = np.einsum("lk,lkt->tl", amps, np.sin(2 * np.pi * freqs[..., None] * t + phases[..., None]))
    latent /= np.sqrt(k / 2.0)
    targets = np.tanh(latent @ mapping.mix + offset)
    feats = mapping.features(targets[0::2], urng)
    return targets, feats


def synth_corpus(spec, out_dir):
    """Write FEAT features, target CSVs and ``manifest.json`` under ``out_dir``."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    (out / "targets").mkdir(parents=True, exist_ok=True)
    mapping = SyntheticMapping(spec)
    entries = []
    for spk in range(spec.n_speakers):
        for utt in range(spec.utts_per_speaker):
            uid = f"spk{spk:02d}_utt{utt:02d}"
            targets, feats = synth_utterance(spec, mapping, spk, utt)
            fpath = Path("features") / f"{uid}.feat"
            tpath = Path("targets") / f"{uid}.csv"
            write_feat(out / fpath, FeatureSequence(feats.astype(np.float32)))
            write_trajectory_csv(
                out / tpath, [Trajectory(name, targets[:, j]) for j, name in enumerate(SI_CHANNELS)]
            )
            entries.append(
                UtteranceEntry(uid, f"spk{spk:02d}", spec.speaker_split(spk), fpath.as_posix(), tpath.as_posix())
            )
    manifest = Manifest(entries, frontend_id(spec.feature_layers, spec.feature_dim), SI_CHANNELS, out)
    manifest.save(out / "manifest.json")
    spec_doc = asdict(spec)
    (out / "synth_spec.json").write_text(json.dumps(spec_doc, indent=1, sort_keys=True) + "\n")
    return manifest
