import numpy as np
import pytest

from sinv.corpus import SyntheticSpec, synth_corpus
from sinv.dsp import Waveform

FS = 51200.0


def tone(freq, seconds=1.0, amp=1.0, fs=FS, phase=0.0):
    t = np.arange(int(round(seconds * fs))) / fs
    return Waveform(amp * np.sin(2 * np.pi * freq * t + phase), fs)


def interior(x, frac=0.1):
    n = len(x)
    k = int(n * frac)
    return x[k:n - k]


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """6 speakers (4/1/1), 3 utterances each, 2-3 s, 2x8 features."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    spec = SyntheticSpec(
        n_speakers=6, utts_per_speaker=3, duration_s=(2.0, 3.0), seed=5,
        feature_layers=2, feature_dim=8, split_sizes=(4, 1, 1),
    )
    return synth_corpus(spec, out)
