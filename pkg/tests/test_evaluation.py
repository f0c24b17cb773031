import numpy as np
import pytest

from sinv.channels import ORAL_TVS, SI_CHANNELS
from sinv.corpus import Manifest, UtteranceEntry
from sinv.errors import CompatibilityError, ConfigError, SplitError
from sinv.evaluation import evaluate, score_pairs
from sinv.models import ModelSpec, build_model


def ramp_pair(uid, frames, r_target):
    """Prediction whose PPMC with the target is exactly ``r_target``."""
    rng = np.random.default_rng(frames)
    t = rng.standard_normal(frames)
    t -= t.mean()
    noise = rng.standard_normal(frames)
    noise -= noise.mean()
    noise -= (noise @ t) / (t @ t) * t
    p = r_target * t / np.linalg.norm(t) + np.sqrt(1 - r_target ** 2) * noise / np.linalg.norm(noise)
    return uid, p[:, None], t[:, None]


def test_unweighted_mean_over_utterances():
    pairs = [ramp_pair("a", 150, 0.8), ramp_pair("b", 400, 0.6)]
    rep = score_pairs(pairs, ("VP",))
    assert rep.ppmc["VP"] == pytest.approx(0.7, abs=1e-12)
    assert rep.n_utterances == 2 and rep.n_units == 2


def test_six_and_half_seconds_gives_three_segments():
    t = np.sin(np.arange(650) / 17.0)[:, None]
    rep = score_pairs([("u", t, t)], ("LA",), "segmented", 200)
    assert rep.n_units == 3
    assert rep.min_segment_frames == 100


def test_short_utterance_protocols_agree():
    rng = np.random.default_rng(0)
    p, t = rng.standard_normal((180, 2)), rng.standard_normal((180, 2))
    seg = score_pairs([("u", p, t)], ("LA", "VP"), "segmented", 200)
    whole = score_pairs([("u", p, t)], ("LA", "VP"), "unsegmented")
    assert seg.ppmc == whole.ppmc


@pytest.mark.parametrize("protocol", ["segmented", "unsegmented"])
def test_identity_oracle(tiny_corpus, protocol):
    from sinv.corpus import load_split

    targets = {u.id: u.targets for u in load_split(tiny_corpus, "test")}
    order = iter(sorted(targets))

    def oracle(features):
        return targets[next(order)]

    rep = evaluate(oracle, tiny_corpus, "test", protocol, 2.0 if protocol == "segmented" else None,
                   channels=SI_CHANNELS)
    for v in rep.ppmc.values():
        assert v == pytest.approx(1.0, abs=1e-12)
    assert rep.mean_oral == pytest.approx(1.0, abs=1e-12)


def test_report_fields(tiny_corpus):
    model = build_model(ModelSpec("mtl-si", 0.0625, input_layers=2, input_dim=8))
    rep = evaluate(model, tiny_corpus, "dev", "segmented", 2.0)
    d = rep.to_dict()
    assert d["protocol"] == "segmented" and d["segment_frames"] == 200
    assert set(d["ppmc"]) == set(SI_CHANNELS)
    assert all(-1 <= v <= 1 for v in d["ppmc"].values())
    assert d["mean_oral"] == pytest.approx(np.mean([d["ppmc"][c] for c in ORAL_TVS]))


def test_protocol_required(tiny_corpus):
    model = build_model(ModelSpec("mtl-si", 0.0625, input_layers=2, input_dim=8))
    with pytest.raises(ConfigError):
        evaluate(model, tiny_corpus, "test")


def test_empty_split(tiny_corpus):
    empty = Manifest([u for u in tiny_corpus.utterances if u.split != "dev"], tiny_corpus.frontend,
                     tiny_corpus.channels, tiny_corpus.root)
    model = build_model(ModelSpec("mtl-si", 0.0625, input_layers=2, input_dim=8))
    with pytest.raises(ConfigError, match="empty"):
        evaluate(model, empty, "dev", "unsegmented")


def test_speaker_leak_rejected(tiny_corpus):
    leak = list(tiny_corpus.utterances)
    first = leak[0]
    leak.append(UtteranceEntry("leak", first.speaker, "test", first.features, first.targets))
    m = Manifest(leak, tiny_corpus.frontend, tiny_corpus.channels, tiny_corpus.root)
    model = build_model(ModelSpec("mtl-si", 0.0625, input_layers=2, input_dim=8))
    with pytest.raises(SplitError):
        evaluate(model, m, "test", "unsegmented")


def test_frontend_mismatch(tiny_corpus):
    model = build_model(ModelSpec("mtl-si", 0.0625))
    with pytest.raises(CompatibilityError):
        evaluate(model, tiny_corpus, "test", "unsegmented")
