import json

import numpy as np
import pytest

from sinv.cli import main
from sinv.dsp import Waveform
from sinv.io import read_trajectory_csv, write_wav

from conftest import tone


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def wavs(tmp_path):
    w = tone(250.0, seconds=0.6, amp=0.3, fs=16000.0)
    write_wav(tmp_path / "oral.wav", w)
    write_wav(tmp_path / "nasal.wav", w)
    write_wav(tmp_path / "egg.wav", Waveform(w.samples * np.linspace(0, 1, len(w)), 16000.0))
    return tmp_path


@pytest.fixture(scope="module")
def cli_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    code = main(["synth-corpus", "--speakers", "6", "--utts", "2", "--seed", "2", "--layers", "2",
                 "--dim", "6", "--min-seconds", "2", "--max-seconds", "2.5", "-o", str(root / "corpus")])
    assert code == 0
    ck = root / "ck.sinv"
    assert main(["train", "--arch", "mtl-si", "--manifest", str(root / "corpus" / "manifest.json"),
                 "--scale", "0.0625", "--epochs", "2", "--seed", "3", "-q", "--out", str(ck)]) == 0
    return root


def test_nasalance_equal_channels(wavs, capsys):
    out = wavs / "vp.csv"
    code, _, _ = run(["nasalance", "--oral", wavs / "oral.wav", "--nasal", wavs / "nasal.wav", "-o", out], capsys)
    assert code == 0
    vp = read_trajectory_csv(out)[0]
    assert vp.name == "VP" and len(vp) == 60
    np.testing.assert_allclose(vp.values[6:-6], 0.0, atol=1e-3)
    record = json.loads((wavs / "vp.csv.run.json").read_text())
    assert record["command"] == "nasalance"
    assert record["pipeline"]["silence_policy"] == "hold"
    assert record["pipeline"]["highpass"]["order"] == 4


def test_silence_zero_flag(wavs, capsys):
    out = wavs / "vp.csv"
    run(["nasalance", "--oral", wavs / "oral.wav", "--nasal", wavs / "nasal.wav", "-o", out, "--silence-zero"], capsys)
    assert json.loads((wavs / "vp.csv.run.json").read_text())["pipeline"]["silence_policy"] == "zero"


def test_conflicting_silence_flags(wavs, capsys):
    code, _, err = run(["nasalance", "--oral", wavs / "oral.wav", "--nasal", wavs / "nasal.wav",
                        "-o", wavs / "x.csv", "--silence-zero", "--silence-hold"], capsys)
    assert code == 2 and err.startswith("error: usage:")


def test_missing_file(tmp_path, capsys):
    code, _, err = run(["nasalance", "--oral", tmp_path / "no.wav", "--nasal", tmp_path / "no.wav",
                        "-o", tmp_path / "vp.csv"], capsys)
    assert code == 3
    assert err.count("\n") == 1 and err.startswith("error: missing-file:")
    assert list(tmp_path.iterdir()) == []


def test_eggenv_and_featurize(wavs, capsys):
    assert run(["eggenv", "--egg", wavs / "egg.wav", "-o", wavs / "egg.csv"], capsys)[0] == 0
    assert read_trajectory_csv(wavs / "egg.csv")[0].name == "EGGenv"
    assert run(["featurize", "--wav", wavs / "oral.wav", "-o", wavs / "x.feat"], capsys)[0] == 0
    from sinv.features import load_embeddings

    assert load_embeddings(wavs / "x.feat").data.shape == (30, 1, 40)


def test_synth_corpus_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert run(["synth-corpus", "--speakers", "3", "--utts", "1", "--seed", "1", "-o", tmp_path / name], capsys)[0] == 0

    def tree(root):
        return {p.relative_to(root).as_posix(): p.read_bytes() for p in root.rglob("*") if p.is_file()}

    assert tree(tmp_path / "a") == tree(tmp_path / "b")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a", "a.run.json", "b", "b.run.json"]


def test_eval_requires_protocol(cli_corpus, capsys):
    code, _, err = run(["eval", "--ckpt", cli_corpus / "ck.sinv", "--manifest", cli_corpus / "corpus" / "manifest.json",
                        "-o", cli_corpus / "r.json"], capsys)
    assert code == 2 and "--unsegmented" in err
    assert not (cli_corpus / "r.json").exists()


@pytest.mark.parametrize("flags", [["--unsegmented"], ["--segment-seconds", "2"]])
def test_eval_report(cli_corpus, capsys, flags):
    out = cli_corpus / "report.json"
    code, stdout, _ = run(["eval", "--ckpt", cli_corpus / "ck.sinv", "--manifest",
                           cli_corpus / "corpus" / "manifest.json", "-o", out] + flags, capsys)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["protocol"] == ("unsegmented" if flags[0] == "--unsegmented" else "segmented")
    assert len(rep["ppmc"]) == 10 and "oral" in stdout


def test_infer_plot_idempotent(cli_corpus, capsys):
    feat = sorted((cli_corpus / "corpus" / "features").iterdir())[0]
    outs = []
    for name in ("p1.csv", "p2.csv"):
        assert run(["infer", "--ckpt", cli_corpus / "ck.sinv", "--input", feat, "-o", cli_corpus / name], capsys)[0] == 0
        outs.append((cli_corpus / name).read_bytes())
    assert outs[0] == outs[1]
    pred = read_trajectory_csv(cli_corpus / "p1.csv")
    assert [t.name for t in pred][:2] == ["LA", "LP"] and len(pred) == 10
    ref = cli_corpus / "corpus" / "targets" / (feat.stem + ".csv")
    svgs = []
    for name in ("f1.svg", "f2.svg"):
        assert run(["plot", "--csv", cli_corpus / "p1.csv", "--csv-ref", ref, "-o", cli_corpus / name], capsys)[0] == 0
        svgs.append((cli_corpus / name).read_text())
    assert svgs[0] == svgs[1] and svgs[0].startswith("<svg") and svgs[0].count("<polyline") == 20


def test_train_run_record_has_history(cli_corpus):
    rec = json.loads((cli_corpus / "ck.sinv.run.json").read_text())
    assert rec["command"] == "train" and len(rec["history"]) == 2
    assert rec["config"]["seed"] == 3 and "gru_gates" in rec["design"]


def test_format_error_exit(tmp_path, cli_corpus, capsys):
    bad = tmp_path / "bad.feat"
    bad.write_bytes(b"NOPE" + bytes(20))
    code, _, err = run(["infer", "--ckpt", cli_corpus / "ck.sinv", "--input", bad, "-o", tmp_path / "p.csv"], capsys)
    assert code == 4 and err.startswith("error: format:") and "offset 0" in err


def test_compatibility_exit(tmp_path, cli_corpus, capsys):
    from sinv.features import FeatureSequence, write_feat

    mel = tmp_path / "mel.feat"
    write_feat(mel, FeatureSequence(np.zeros((10, 1, 40), np.float32)))
    code, _, err = run(["infer", "--ckpt", cli_corpus / "ck.sinv", "--input", mel, "-o", tmp_path / "p.csv"], capsys)
    assert code == 5 and err.startswith("error: compatibility:")


def test_unknown_flag(capsys):
    code, _, err = run(["train", "--bogus"], capsys)
    assert code == 2 and err.startswith("error: usage:")


def test_gradcheck_command(tmp_path, capsys):
    code, out, _ = run(["gradcheck", "--arch", "nasal-si", "--seed", "1", "--max-entries", "4",
                        "-o", tmp_path / "g.json"], capsys)
    assert code == 0 and out.startswith("PASS")
    assert json.loads((tmp_path / "g.json").read_text())["passed"] is True


def test_help_documents_exit_codes(capsys):
    code, out, _ = run(["--help"], capsys)
    assert code == 0 and "exit codes" in out
