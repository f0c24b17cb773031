import json

import numpy as np
import pytest

from sinv.channels import SI_CHANNELS
from sinv.corpus import (
    Manifest,
    SyntheticMapping,
    SyntheticSpec,
    UtteranceEntry,
    load_split,
    synth_corpus,
    synth_utterance,
)
from sinv.errors import ConfigError, FormatError, SplitError


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def small_spec(**kw):
    base = dict(n_speakers=3, utts_per_speaker=2, duration_s=(1.0, 1.5), split_sizes=(1, 1, 1), seed=9)
    base.update(kw)
    return SyntheticSpec(**base)


def test_same_seed_byte_identical(tmp_path):
    synth_corpus(small_spec(), tmp_path / "a")
    synth_corpus(small_spec(), tmp_path / "b")
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_different_seed_differs(tmp_path):
    synth_corpus(small_spec(), tmp_path / "a")
    synth_corpus(small_spec(seed=10), tmp_path / "b")
    assert tree(tmp_path / "a") != tree(tmp_path / "b")


def test_targets_in_range_and_rates(tiny_corpus):
    utts = load_split(tiny_corpus, "train")
    for u in utts:
        assert u.targets.shape == (2 * u.features.shape[0], 10)
        assert np.all(np.abs(u.targets) < 1)
        assert u.channels == SI_CHANNELS


def test_split_sizes(tiny_corpus):
    spk = {s: {u.speaker for u in tiny_corpus.split(s)} for s in ("train", "dev", "test")}
    assert [len(spk[s]) for s in ("train", "dev", "test")] == [4, 1, 1]
    assert not (spk["train"] & spk["dev"]) and not (spk["train"] & spk["test"])


def test_default_spec_duration():
    spec = SyntheticSpec()
    assert spec.split_sizes == (20, 2, 2)
    # 24 x 10 utterances averaging 4 s
    assert spec.n_speakers * spec.utts_per_speaker * np.mean(spec.duration_s) / 60 == pytest.approx(16.0)


def test_noise_free_features_determine_targets():
    spec = small_spec(noise_std=0.0)
    mapping = SyntheticMapping(spec)
    targets, feats = synth_utterance(spec, mapping, 0, 0)
    np.testing.assert_allclose(feats, mapping.features(targets[0::2], None), atol=0)
    # the projection is injective on the targets: least squares on atanh recovers them
    lin = np.arctanh(np.clip(feats, -1 + 1e-12, 1 - 1e-12)) - mapping.bias[None]
    A = mapping.proj.transpose(1, 0, 2).reshape(10, -1)
    recovered = np.linalg.lstsq(A.T, lin.reshape(len(lin), -1).T, rcond=None)[0].T
    np.testing.assert_allclose(recovered, targets[0::2], atol=1e-8)


def test_invalid_spec():
    with pytest.raises(ConfigError):
        SyntheticSpec(n_speakers=5)
    with pytest.raises(ConfigError):
        small_spec(duration_s=(2.0, 1.0))


def test_manifest_roundtrip(tmp_path, tiny_corpus):
    tiny_corpus.save(tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["frontend"] == "embed(2,8)" and doc["version"] == 1
    back = Manifest.load(tmp_path / "m.json")
    assert back.utterances == tiny_corpus.utterances


def test_speaker_crossing_splits_rejected():
    m = Manifest([
        UtteranceEntry("a", "s1", "train", "a.feat", "a.csv"),
        UtteranceEntry("b", "s1", "test", "b.feat", "b.csv"),
    ])
    with pytest.raises(SplitError):
        m.validate()


def test_unknown_split():
    with pytest.raises(ConfigError):
        Manifest([UtteranceEntry("a", "s1", "holdout", "a.feat", "a.csv")]).validate()


def test_bad_manifest_json(tmp_path):
    (tmp_path / "m.json").write_text("{not json")
    with pytest.raises(FormatError):
        Manifest.load(tmp_path / "m.json")
