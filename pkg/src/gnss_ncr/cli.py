"""Command-line entry point: extract, train, ablate, eval, stream, synth."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import dataset, evaluation, gru, svm, synthetic
from .features import FeatureMode, feature_matrix, write_feature_csv
from .nmea import read_epochs, write_epochs_jsonl

log = logging.getLogger("gnss_ncr")


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, mode=True):
    p.add_argument("--seed", type=int, default=0)
    if mode:
        p.add_argument("--mode", "--features", dest="mode", choices=[m.value for m in FeatureMode], default="zt")


def _training(p: argparse.ArgumentParser):
    d = gru.TrainConfig()
    p.add_argument("--epochs", type=int, default=d.max_epochs)
    p.add_argument("--batch", type=int, default=d.batch_size)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--window", type=int, default=6)
    p.add_argument("--hidden", type=int, default=d.hidden)
    p.add_argument("--holdout-sets", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gnss-ncr", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="NMEA logs -> feature CSVs")
    p.add_argument("--in", dest="inp", required=True, help="NMEA file, '-' for stdin, or dataset root")
    p.add_argument("--out", required=True)
    p.add_argument("--jsonl", action="store_true", help="also dump epochs as JSON lines")
    _common(p)

    p = sub.add_parser("train", help="train a GRU (or SVM-TF) on a dataset root")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", "--model", dest="out", required=True, help="model file to write")
    p.add_argument("--baseline", choices=["gru", "svmtf"], default="gru")
    _common(p)
    _training(p)

    p = sub.add_parser("ablate", help="train yt and zt arms on the same split and compare")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--seed", type=int, default=0)
    _training(p)

    p = sub.add_parser("eval", help="evaluate a model on a dataset root or a labeled trace")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="report JSON; matrix/trace CSVs are written beside it")
    p.add_argument("--baseline", choices=["gru", "svmtf"], default="gru")
    p.add_argument("--holdout-sets", type=int, default=None,
                   help="evaluate only the held-out sets of the seeded split used for training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rate", type=float, default=5.0)
    p.add_argument("--window", type=int, default=6)

    p = sub.add_parser("stream", help="classify NMEA from stdin, print t,label,confidence")
    p.add_argument("--model", required=True)
    p.add_argument("--baseline", choices=["gru", "svmtf"], default="gru")
    p.add_argument("--window", type=int, default=6)

    p = sub.add_parser("synth", help="write a synthetic dataset root or a scripted trace")
    p.add_argument("--out", required=True)
    p.add_argument("--script", help="JSON list of {class, seconds}; without it a dataset root is written")
    p.add_argument("--rate", type=float, default=5.0)
    p.add_argument("--windows-per-class", type=int, default=2000)
    p.add_argument("--sets", type=int, default=7)
    _common(p)
    return ap


def _echo(args) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "verbose"}
    print("config " + json.dumps(cfg, sort_keys=True), file=sys.stderr)


def _validate(args) -> None:
    for name in ("epochs", "batch", "window", "hidden"):
        v = getattr(args, name, None)
        if v is not None and v <= 0:
            raise UsageError(f"--{name} must be positive")
    if getattr(args, "lr", 1.0) <= 0:
        raise UsageError("--lr must be positive")
    if getattr(args, "rate", 1.0) <= 0:
        raise UsageError("--rate must be positive")
    h = getattr(args, "holdout_sets", None)
    if h is not None and h < 0:
        raise UsageError("--holdout-sets must be >= 0")
    if args.command == "synth" and not args.script:
        if args.windows_per_class <= 0 or args.sets <= 0:
            raise UsageError("--windows-per-class and --sets must be positive")
    if args.command == "extract" and args.inp == "-" and args.out == "-":
        raise UsageError("extract: --out must be a file when reading stdin")


def _config(args) -> gru.TrainConfig:
    return gru.TrainConfig(max_epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
                           seed=args.seed, hidden=args.hidden)


# ---- subcommands ----

def cmd_extract(args) -> None:
    inp, out = args.inp, Path(args.out)
    if inp != "-" and Path(inp).is_dir():
        root = Path(inp)
        class_dirs = [c for c in gru.CLASS_NAMES if (root / c).is_dir()]
        jobs = []
        if class_dirs:
            for label, name in enumerate(gru.CLASS_NAMES):
                if (root / name).is_dir():
                    jobs += [(f, label, out / name) for f in dataset._recording_files(root / name)
                             if f.suffix.lower() != ".csv"]
        else:
            jobs = [(f, -1, out) for f in dataset._recording_files(root) if f.suffix.lower() != ".csv"]
        for f, label, odir in jobs:
            odir.mkdir(parents=True, exist_ok=True)
            _extract_one(f, label, odir / (f.stem + ".csv"), args)
        print(f"extracted {len(jobs)} recordings into {out}", file=sys.stderr)
        return
    src = sys.stdin if inp == "-" else inp
    _extract_one(src, -1, out, args)


def _extract_one(src, label, out: Path, args) -> None:
    epochs = read_epochs(src)
    X = feature_matrix(epochs, args.mode)
    labels = np.full(len(epochs), label)
    if isinstance(src, (str, Path)):
        sidecar = Path(src).with_suffix(".labels.csv")
        if sidecar.exists():
            labels = dataset._read_label_sidecar(sidecar, len(epochs))
    write_feature_csv(out, [e.timestamp for e in epochs], labels, X)
    if args.jsonl:
        with open(out.with_suffix(".jsonl"), "w") as fh:
            write_epochs_jsonl(epochs, fh)


def _load_split(args):
    recs = dataset.load_labeled_dataset(args.inp)
    if args.holdout_sets:
        return dataset.split_by_sets(recs, args.holdout_sets, args.seed)
    return recs, []


def cmd_train(args) -> None:
    train, test = _load_split(args)
    out = Path(args.out)
    if args.baseline == "svmtf":
        m = evaluation.train_svm_on(train, args.mode, seed=args.seed)
        svm.save_svm(m, out)
        if test:
            cm = evaluation.evaluate_svmtf(test, m, args.window)
            print(f"held-out SVM-TF accuracy {evaluation.overall_accuracy(cm):.4f}", file=sys.stderr)
        return
    model, metrics = evaluation.train_gru_on(train, args.mode, _config(args), val=test or None,
                                             window=args.window)
    gru.save_model(model, out)
    gru.write_metrics_csv(metrics, out.with_suffix(".metrics.csv"))
    if test:
        cm = evaluation.evaluate_gru(test, model)
        print(f"held-out GRU accuracy {evaluation.overall_accuracy(cm):.4f}", file=sys.stderr)


def cmd_ablate(args) -> None:
    recs = dataset.load_labeled_dataset(args.inp)
    cfg = _config(args)
    rep = evaluation.ablation_run(recs, ("yt", "zt"), cfg, max(args.holdout_sets, 1), args.seed, args.window)
    evaluation.write_json(evaluation.ablation_report_dict(rep), args.out)
    for arm in rep["arms"]:
        print(f"{arm.mode}: overall {arm.overall:.4f}, viaduct-down/shallow-indoor confusions "
              f"{arm.viaduct_shallow_confusion}", file=sys.stderr)


def _load_any_model(args):
    if args.baseline == "svmtf":
        return svm.load_svm(args.model)
    return gru.load_model(args.model)


def _series(rec, model, window):
    F = rec.features(model.mode)
    if isinstance(model, gru.GruModel):
        pred = evaluation.gru_predict_series(F, model)
        return pred, pred, model.window
    raw, filt = evaluation.svmtf_predict_series(F, model, window)
    return raw, filt, window


def cmd_eval(args) -> None:
    model = _load_any_model(args)
    out = Path(args.out)
    inp = Path(args.inp)
    if inp.is_dir():
        recs = dataset.load_labeled_dataset(inp)
        if args.holdout_sets:
            recs = dataset.split_by_sets(recs, args.holdout_sets, args.seed)[1]
        if isinstance(model, gru.GruModel):
            cm = evaluation.evaluate_gru(recs, model)
        else:
            cm = evaluation.evaluate_svmtf(recs, model, args.window)
        cm.write_csv(out.with_suffix(".matrix.csv"))
        evaluation.write_json({"recordings": [r.set_id for r in recs], "confusion": cm.to_dict()}, out)
        print(f"overall accuracy {evaluation.overall_accuracy(cm):.4f}", file=sys.stderr)
        return
    rec = dataset.load_recording(inp)
    raw, filt, w = _series(rec, model, args.window)
    truth = rec.epoch_labels()
    if (truth < 0).any():
        raise ValueError(f"{inp} has no truth labels (label column or .labels.csv sidecar)")
    times = rec.epoch_times()
    sl = slice(w - 1, None)
    report = evaluation.transition_delays(filt[sl], truth[sl], args.rate, times=times[sl])
    cm = evaluation.confusion_matrix(filt[sl], truth[sl], len(gru.CLASS_NAMES))
    evaluation.write_trace_csv(out.with_suffix(".trace.csv"), times, truth, raw, filt)
    cm.write_csv(out.with_suffix(".matrix.csv"))
    evaluation.write_json({"trace": str(inp), "transitions": report.to_dict(), "confusion": cm.to_dict()}, out)
    print(f"trace accuracy {report.accuracy:.4f}, mean delay {report.mean_delay:.2f} s, "
          f"missed {report.missed}", file=sys.stderr)


def cmd_stream(args) -> None:
    from .stream import StreamClassifier
    clf = StreamClassifier(_load_any_model(args), args.window)
    out = sys.stdout
    for t, label, conf in clf.run(sys.stdin):
        out.write(f"{'' if t is None else f'{t:.2f}'},{label},{conf:.4f}\n")
        out.flush()


def cmd_synth(args) -> None:
    out = Path(args.out)
    if not args.script:
        recs = synthetic.generate_dataset(args.windows_per_class, args.sets, args.seed, rate=args.rate)
        synthetic.write_dataset(recs, out)
        print(f"wrote {len(recs)} recordings to {out}", file=sys.stderr)
        return
    script = synthetic.ScenarioScript.from_json(args.script, rate=args.rate, seed=args.seed)
    trace = synthetic.generate_trace(script)
    suffix = out.suffix.lower()
    if suffix == ".csv":
        write_feature_csv(out, trace.times, trace.labels, feature_matrix(trace.epochs, args.mode))
        return
    if suffix == ".jsonl":
        with open(out, "w") as fh:
            write_epochs_jsonl(trace.epochs, fh)
    else:
        out.write_text(synthetic.epochs_to_nmea(trace.epochs), newline="")
    synthetic.write_labels_csv(out.with_suffix(".labels.csv"), trace.times, trace.labels)


COMMANDS = {"extract": cmd_extract, "train": cmd_train, "ablate": cmd_ablate,
            "eval": cmd_eval, "stream": cmd_stream, "synth": cmd_synth}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _validate(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"gnss-ncr: error: {e}", file=sys.stderr)
        return 2
    _echo(args)
    try:
        COMMANDS[args.command](args)
    except (OSError, ValueError, KeyError, FloatingPointError) as e:
        print(f"gnss-ncr {args.command}: {e}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
