"""``sinv`` command-line entry point.

Exit codes:
  0  success
  1  unexpected internal error
  2  usage error (bad or missing flags)
  3  missing file or other I/O failure
  4  malformed input file (FEAT, checkpoint, WAV, CSV, manifest)
  5  configuration, frontend compatibility or speaker-split error
  6  numeric failure (divergence, non-finite values)
  7  invalid input data (empty, too short, misaligned, wrong shape)

Errors are reported as one line on stderr: ``error: <category>: <message>``.
Every command writes ``<output>.run.json`` next to its primary output.
"""

import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    AlignmentError,
    ConfigError,
    EmptyInputError,
    FormatError,
    InvalidInputError,
    InvalidParameterError,
    NumericError,
    ShapeError,
    SinvError,
)

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INPUT = range(8)


class UsageError(Exception):
    category = "usage"


def _exit_code(exc):
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, FormatError):
        return EXIT_FORMAT
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, (InvalidInputError, EmptyInputError, ShapeError, AlignmentError, InvalidParameterError)):
        return EXIT_INPUT
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_INTERNAL


def _category(exc):
    if isinstance(exc, (SinvError, UsageError)):
        return exc.category
    if isinstance(exc, FileNotFoundError):
        return "missing-file"
    if isinstance(exc, OSError):
        return "io"
    return "internal"


def _run_record_path(out):
    out = Path(str(out).rstrip("/"))
    return out.with_name(out.name + ".run.json")


def write_run_record(args, out, extra=None):
    from .models import design_flags, ModelSpec
    from .neural import kernels

    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}
    record = {
        "command": args.command,
        "config": config,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "design": {k: v for k, v in design_flags(ModelSpec("mtl-si")).items() if k not in ("fusion", "upsample")},
    }
    if extra:
        record.update(extra)
    _run_record_path(out).write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")


def _require_file(path, what):
    if not Path(path).is_file():
        raise FileNotFoundError(f"{what} {path} not found")


def _frontend_dims(frontend):
    if frontend == "mel40":
        return 1, 40
    m = re.fullmatch(r"embed\((\d+),(\d+)\)", frontend or "")
    if not m:
        raise ConfigError(f"unrecognised frontend id {frontend!r}")
    return int(m.group(1)), int(m.group(2))


def _load_features(path):
    """FEAT file, or a WAV file passed through the mel frontend."""
    from .features import load_embeddings, mel_frontend
    from .io import read_wav

    _require_file(path, "feature input")
    if Path(path).suffix.lower() == ".wav":
        return mel_frontend(read_wav(path))
    return load_embeddings(path)


# -- commands -----------------------------------------------------------------


def cmd_nasalance(args):
    from .groundtruth import DualMicRecording, compute_nasalance
    from .io import read_wav, write_trajectory_csv

    _require_file(args.oral, "oral recording")
    _require_file(args.nasal, "nasal recording")
    rec = DualMicRecording(read_wav(args.oral), read_wav(args.nasal))
    res = compute_nasalance(rec, args.cutoff_hz, args.window_ms, args.silence, nasal_gain=args.nasal_gain)
    write_trajectory_csv(args.output, [res.trajectory])
    write_run_record(args, args.output, {"pipeline": res.metadata})
    for w in res.metadata["warnings"]:
        print(f"warning: {w}", file=sys.stderr)


def cmd_eggenv(args):
    from .groundtruth import compute_egg_envelope
    from .io import read_wav, write_trajectory_csv

    _require_file(args.egg, "EGG recording")
    res = compute_egg_envelope(read_wav(args.egg), args.cutoff_hz)
    write_trajectory_csv(args.output, [res.trajectory])
    write_run_record(args, args.output, {"pipeline": res.metadata})
    for w in res.metadata["warnings"]:
        print(f"warning: {w}", file=sys.stderr)


def cmd_featurize(args):
    from .features import mel_frontend, write_feat
    from .io import read_wav

    _require_file(args.wav, "audio")
    fs = mel_frontend(read_wav(args.wav))
    write_feat(args.output, fs)
    write_run_record(args, args.output, {"frontend": fs.frontend, "frames": fs.frames})


def _synth_splits(n):
    if n < 3:
        raise ConfigError("a synthetic corpus needs at least 3 speakers (train/dev/test)")
    held = max(1, round(n / 12))
    if n - 2 * held < 1:
        held = 1
    return (n - 2 * held, held, held)


def cmd_synth_corpus(args):
    from .corpus import SyntheticSpec, synth_corpus

    spec = SyntheticSpec(
        n_speakers=args.speakers,
        utts_per_speaker=args.utts,
        duration_s=(args.min_seconds, args.max_seconds),
        seed=args.seed,
        latent_dim=args.latent_dim,
        noise_std=args.noise_std,
        feature_layers=args.layers,
        feature_dim=args.dim,
        split_sizes=_synth_splits(args.speakers),
    )
    manifest = synth_corpus(spec, args.output)
    write_run_record(args, args.output, {"utterances": len(manifest.utterances), "frontend": manifest.frontend})


def _load_manifest(path):
    from .corpus import Manifest

    _require_file(path, "manifest")
    m = Manifest.load(path)
    m.validate()
    return m


def _train_config(args):
    from .training import TrainConfig

    return TrainConfig(
        lr=args.lr, batch_size=args.batch_size, max_epochs=args.epochs,
        patience=args.patience, alpha=args.alpha, seed=args.seed,
    )


def _base_spec(args, manifest, arch):
    from .models import ModelSpec

    layers, dim = _frontend_dims(manifest.frontend)
    return ModelSpec(
        arch, width_scale=args.scale, input_layers=layers, input_dim=dim, seed=args.seed,
        dropout=args.dropout, fusion=args.fusion, upsample=args.upsample,
    )


def _epoch_logger(quiet):
    def log(rec, improved):
        if quiet:
            return
        oral = rec.get("dev_mean_oral")
        tail = f" dev_oral={oral:.4f}" if oral is not None else ""
        mark = " *" if improved else ""
        print(f"epoch {rec['epoch']:3d} train={rec['train_loss']:.4f} dev={rec['dev_loss']:.4f}{tail}{mark}",
              file=sys.stderr)

    return log


def cmd_train(args):
    from .models import build_model, save_checkpoint
    from .training import train

    manifest = _load_manifest(args.manifest)
    spec = _base_spec(args, manifest, args.arch)
    model = build_model(spec)
    result = train(model, manifest, _train_config(args), log=_epoch_logger(args.quiet))
    save_checkpoint(model, args.output)
    write_run_record(args, args.output, {
        "spec": spec.to_dict(),
        "best_epoch": result.best_epoch,
        "best_dev_loss": result.best_dev_loss,
        "history": result.history,
    })


def _protocol(args):
    if args.unsegmented:
        return "unsegmented", None
    if args.segment_seconds is None:
        raise UsageError("choose --segment-seconds S or --unsegmented")
    return "segmented", args.segment_seconds


def cmd_eval(args):
    from .evaluation import evaluate
    from .models import load_checkpoint

    protocol, seconds = _protocol(args)
    _require_file(args.ckpt, "checkpoint")
    manifest = _load_manifest(args.manifest)
    model = load_checkpoint(args.ckpt, expect_frontend=manifest.frontend)
    report = evaluate(model, manifest, args.split, protocol, seconds)
    Path(args.output).write_text(report.to_json() + "\n")
    write_run_record(args, args.output, {"mean_oral": report.mean_oral})
    print(report.table())


def cmd_infer(args):
    from .dsp import Trajectory
    from .io import write_trajectory_csv
    from .models import load_checkpoint

    _require_file(args.ckpt, "checkpoint")
    feats = _load_features(args.input)
    model = load_checkpoint(args.ckpt, expect_frontend=feats.frontend)
    pred = model.predict(feats)
    trajs = [Trajectory(c, pred[:, j]) for j, c in enumerate(model.spec.output_channels)]
    write_trajectory_csv(args.output, trajs)
    write_run_record(args, args.output, {"frames": int(pred.shape[0]), "channels": list(model.spec.output_channels)})


def cmd_ablate(args):
    from .ablation import ablate, comparison_table, rows_to_json

    protocol, seconds = ("unsegmented", None) if args.segment_seconds is None else ("segmented", args.segment_seconds)
    manifest = _load_manifest(args.manifest)
    base = _base_spec(args, manifest, "mtl-si")
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    rows = ablate(base, manifest, args.exclude, _train_config(args), protocol, seconds, log=log)
    Path(args.output).write_text(rows_to_json(rows) + "\n")
    table = comparison_table(rows)
    write_run_record(args, args.output, {"table": table.splitlines()})
    print(table)


def cmd_gradcheck(args):
    from .models import ModelSpec, build_model
    from .neural import check_model

    layers, dim = _frontend_dims(args.frontend)
    spec = ModelSpec(args.arch, width_scale=args.scale, input_layers=layers, input_dim=dim,
                     seed=args.seed, dropout=0.0)
    model = build_model(spec, np.float64)
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((2, args.frames, layers, dim))
    lengths = np.array([args.frames, max(1, args.frames - 2)])
    report = check_model(model, x, lengths, seed=args.seed, max_entries=args.max_entries)
    ok = report.max_rel_error <= args.tolerance
    doc = {
        "arch": args.arch,
        "max_rel_error": report.max_rel_error,
        "worst": [report.worst[0], [int(i) for i in report.worst[1]]],
        "per_tensor": report.per_tensor,
        "tolerance": args.tolerance,
        "passed": ok,
    }
    if args.output:
        Path(args.output).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        write_run_record(args, args.output, {"passed": ok})
    print(f"{'PASS' if ok else 'FAIL'} {args.arch}: {report}")
    if not ok:
        raise NumericError(f"gradient check failed: {report}")


def cmd_plot(args):
    from .io import read_trajectory_csv
    from .plot import render_svg

    _require_file(args.csv, "trajectory CSV")
    trajs = read_trajectory_csv(args.csv)
    ref = None
    if args.csv_ref:
        _require_file(args.csv_ref, "reference CSV")
        ref = read_trajectory_csv(args.csv_ref)
    if args.channels:
        trajs = [t for t in trajs if t.name in args.channels]
    Path(args.output).write_text(render_svg(trajs, ref))
    write_run_record(args, args.output)


# -- parser -------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _training_flags(p, seed_default=0):
    p.add_argument("--manifest", required=True, type=Path, help="corpus manifest JSON")
    p.add_argument("--scale", type=float, default=0.125, help="width scale (1.0 = full size)")
    p.add_argument("--seed", type=int, default=seed_default, help="init, shuffling and dropout seed")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=8)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--alpha", type=float, default=0.8, help="PC weight in the loss")
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--fusion", choices=("softmax", "raw"), default="softmax")
    p.add_argument("--upsample", choices=("linear", "repeat"), default="linear")
    p.add_argument("-q", "--quiet", action="store_true", help="no per-epoch progress")


def build_parser():
    parser = _Parser(
        prog="sinv",
        description="Speech inversion toolkit: ground truth, features, training, evaluation.",
        epilog="exit codes: 0 ok, 1 internal, 2 usage, 3 missing file/io, 4 format, "
               "5 config/compatibility/speaker-split, 6 numeric, 7 invalid input",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"sinv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("nasalance", help="VP trajectory from oral/nasal recordings")
    p.add_argument("--oral", required=True, type=Path)
    p.add_argument("--nasal", required=True, type=Path)
    p.add_argument("-o", "--output", required=True, type=Path)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--silence-hold", dest="silence", action="store_const", const="hold",
                   help="hold the last ratio through silence (default)")
    g.add_argument("--silence-zero", dest="silence", action="store_const", const="zero",
                   help="emit 0.0 (ratio 0.5) during silence")
    p.add_argument("--cutoff-hz", type=float, default=20.0)
    p.add_argument("--window-ms", type=float, default=25.0)
    p.add_argument("--nasal-gain", type=float, default=1.0)
    p.set_defaults(func=cmd_nasalance, silence="hold")

    p = sub.add_parser("eggenv", help="EGG envelope trajectory")
    p.add_argument("--egg", required=True, type=Path)
    p.add_argument("-o", "--output", required=True, type=Path)
    p.add_argument("--cutoff-hz", type=float, default=20.0)
    p.set_defaults(func=cmd_eggenv)

    p = sub.add_parser("featurize", help="40-band log-mel features as a FEAT file")
    p.add_argument("--wav", required=True, type=Path)
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("synth-corpus", help="write the synthetic inversion corpus")
    p.add_argument("--speakers", type=int, default=24)
    p.add_argument("--utts", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--min-seconds", type=float, default=3.0)
    p.add_argument("--max-seconds", type=float, default=5.0)
    p.add_argument("--latent-dim", type=int, default=6)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--layers", type=int, default=4, help="feature layers per frame")
    p.add_argument("--dim", type=int, default=32, help="feature dimension per layer")
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--arch", required=True, choices=("nasal-si", "stl-si", "mtl-si"))
    _training_flags(p)
    p.add_argument("-o", "--out", "--output", dest="output", required=True, type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PPMC report on a manifest split")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--split", default="test", choices=("train", "dev", "test"))
    g = p.add_mutually_exclusive_group()
    g.add_argument("--segment-seconds", type=float)
    g.add_argument("--unsegmented", action="store_true")
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="predict trajectories for one utterance")
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--input", required=True, type=Path, help="FEAT file or WAV (mel frontend)")
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("ablate", help="train output-subset variants of the multi-task model")
    _training_flags(p)
    p.add_argument("--exclude", nargs="*", default=["VP", "3SF"], help="groups to ablate: VP, 3SF")
    p.add_argument("--segment-seconds", type=float, help="segmented protocol (default unsegmented)")
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference check of a whole model")
    p.add_argument("--arch", required=True, choices=("nasal-si", "stl-si", "mtl-si"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=0.125)
    p.add_argument("--frontend", default="mel40", help="mel40 or embed(L,D)")
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--max-entries", type=int, default=None, help="probe at most this many entries per tensor")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot", help="SVG of trajectories, optionally over a reference")
    p.add_argument("--csv", required=True, type=Path)
    p.add_argument("--csv-ref", type=Path)
    p.add_argument("--channels", nargs="*")
    p.add_argument("-o", "--output", required=True, type=Path)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except Exception as exc:  # noqa: BLE001 - every failure becomes one error line
        msg = " ".join(str(exc).split())
        print(f"error: {_category(exc)}: {msg}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
