"""Command-line entry point: ``gmacn <command> [flags]``.

Every artifact-producing command writes ``<output>.manifest.json`` next to
its main output. Exit status is 0 on success, 1 on a runtime or data error
and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .benchmark import run_planted
from .dataset import SyntheticSpec, generate, load_epochs, save_epochs
from .errors import CompatibilityError, GmacnError
from .evaluation import evaluate, format_table
from .explain import explain_epochs, mean_report, render_scalp_svg, save_report
from .model import (
    GmacnConfig,
    build_model,
    calibrate,
    count_cost,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .montage import builtin_64, load_montage
from .preprocess import epochs_from_recording, load_recording
from .spatial_graph import build_threshold, build_topk, load_graph, save_graph


class UsageError(Exception):
    pass


# -- manifest --------------------------------------------------------------


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _timestamp():
    # SOURCE_DATE_EPOCH pins the clock for reproducible manifests
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = time.gmtime(int(epoch)) if epoch else time.gmtime()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", t)


def write_manifest(args, inputs, outputs, seeds=None):
    """Write the run manifest beside the first output and return its path."""
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "argv", "command")}
    if args.config:
        inputs = [*inputs, args.config]
    doc = {
        "command": args.command,
        "argv": ["gmacn", *args.argv],
        "flags": flags,
        "seeds": seeds if seeds is not None else [args.seed],
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "tool": {"name": "eeg-gmacn", "version": __version__},
        "timestamp": _timestamp(),
    }
    path = Path(str(outputs[0]) + ".manifest.json")
    path.write_text(json.dumps(doc, indent=1, default=str) + "\n", encoding="utf-8")
    return path


# -- shared helpers --------------------------------------------------------


def _montage(args):
    if args.builtin_64 and args.montage:
        raise UsageError("give either --montage or --builtin-64, not both")
    if args.builtin_64:
        return builtin_64()
    if args.montage:
        return load_montage(args.montage)
    return None


def _require(args, *names):
    for name in names:
        if getattr(args, name) in (None, ""):
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _out(args):
    _require(args, "out")
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True)
    return out


def _sibling(path, suffix):
    path = Path(path)
    return path.with_name(path.stem + suffix)


# -- commands --------------------------------------------------------------


def cmd_graph(args):
    if (args.threshold is None) == (args.topk is None):
        raise UsageError("exactly one of --threshold or --topk is required")
    montage = _montage(args)
    if montage is None:
        raise UsageError("a montage is required: --montage FILE or --builtin-64")
    if args.threshold is not None:
        graph = build_threshold(montage, args.threshold)
    else:
        graph = build_topk(montage, args.topk)
    out = _out(args)
    csv_path, sidecar = save_graph(graph, out)
    inputs = [args.montage] if args.montage else []
    write_manifest(args, inputs, [csv_path, sidecar])
    print(f"{graph.tag}: {graph.size} nodes, {graph.edge_count()} edges -> {csv_path}")


def _parse_planted(text):
    """``"0:1,2,3;1:4,5"`` -> ``{0: (1, 2, 3), 1: (4, 5)}``."""
    planted = {}
    try:
        for part in text.split(";"):
            if part.strip():
                c, idx = part.split(":")
                planted[int(c)] = tuple(int(i) for i in idx.split(","))
    except ValueError:
        raise UsageError(f"--planted expects 'class:i,j;class:k,...', got {text!r}") from None
    return planted


def cmd_synth(args):
    montage = _montage(args) or builtin_64()
    planted = _parse_planted(args.planted) if args.planted else None
    spec = SyntheticSpec(montage, classes=args.classes, epochs_per_class=args.epochs_per_class,
                         planted=planted, signal_gain=args.signal_gain,
                         noise_sigma=args.noise_sigma, seed=args.seed,
                         features=args.features, planted_per_class=args.planted_per_class)
    data = generate(spec)
    out = _out(args)
    save_epochs(data, out)
    write_manifest(args, [args.montage] if args.montage else [], [out])
    print(f"{len(data)} epochs ({spec.classes} classes, {len(montage)} electrodes) -> {out}")


def _parse_label_map(text):
    try:
        pairs = [item.split("=") for item in text.split(",") if item.strip()]
        return {k.strip(): int(v) for k, v in pairs}
    except ValueError:
        raise UsageError(f"--label-map expects 'event=class,...', got {text!r}") from None


def cmd_preprocess(args):
    _require(args, "signal", "markers", "rate", "label_map")
    montage = _montage(args)
    rec = load_recording(args.signal, args.markers, args.rate)
    if montage is not None and tuple(rec.channels) != montage.names:
        raise CompatibilityError(
            f"recording channels {len(rec.channels)} do not match montage order "
            f"({len(montage)} electrodes)"
        )
    data = epochs_from_recording(
        rec, _parse_label_map(args.label_map), band=tuple(args.band),
        target_rate=args.target_rate, window=tuple(args.window), wavelet=args.wavelet,
        levels=args.levels, montage_hash=montage.fingerprint() if montage else "",
    )
    out = _out(args)
    save_epochs(data, out)
    inputs = [args.signal, args.markers] + ([args.montage] if args.montage else [])
    write_manifest(args, inputs, [out])
    print(f"{len(data)} epochs, {data.meta['dropped_markers']} markers dropped -> {out}")


def _train_config(args, classes):
    return GmacnConfig.uniform(
        layers=args.layers, width=args.gcn_width, attention_width=args.attention_width,
        head_hidden=args.head_hidden, classes=classes, focal_gamma=args.focal_gamma,
        loss_mix=args.loss_mix, learning_rate=args.learning_rate, epochs=args.epochs,
        seed=args.seed, attention=not args.no_attention,
        scaled_attention=args.scaled_attention,
        grad_clip=args.grad_clip if args.grad_clip > 0 else None,
    )


def cmd_train(args):
    _require(args, "epochs_file", "graph_file")
    graph = load_graph(args.graph_file)
    data = load_epochs(args.epochs_file)
    if data.montage_hash != graph.montage_hash:
        raise CompatibilityError(
            f"epochs built for montage {data.montage_hash}, graph for {graph.montage_hash}"
        )
    cfg = _train_config(args, args.classes or data.classes)
    model = calibrate(build_model(cfg, graph, data.shape[1]), data.features)
    report = train(model, data, cfg)
    out = _out(args)
    save_checkpoint(report.model, out)
    losses = _sibling(out, ".losses.csv")
    with losses.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "train_accuracy"])
        for i, (v, a) in enumerate(zip(report.losses, report.accuracies)):
            w.writerow([i, repr(v), repr(a)])
    write_manifest(args, [args.epochs_file, args.graph_file], [out, losses])
    flag = " (ablated: no attention)" if report.model.ablated else ""
    print(f"final loss {report.losses[-1]:.6f}, train acc {report.accuracies[-1]:.3f}"
          f"{flag} -> {out}")


def cmd_eval(args):
    _require(args, "checkpoint", "epochs_file")
    data = load_epochs(args.epochs_file)
    model = load_checkpoint(args.checkpoint, expected_montage_hash=data.montage_hash)
    report = evaluate(model, data, bins=args.bins)
    table = format_table(report)
    print(table)
    if args.out:
        out = _out(args)
        report.save(out)
        txt = _sibling(out, ".txt")
        txt.write_text(table + "\n", encoding="utf-8")
        write_manifest(args, [args.checkpoint, args.epochs_file], [out, txt])


def cmd_explain(args):
    _require(args, "checkpoint", "epochs_file")
    data = load_epochs(args.epochs_file)
    model = load_checkpoint(args.checkpoint, expected_montage_hash=data.montage_hash)
    montage = _montage(args) or builtin_64()
    if montage.fingerprint() != model.graph.montage_hash:
        raise CompatibilityError(
            "scalp map needs the montage the model was built on; pass --montage FILE"
        )
    reports = explain_epochs(model, data.features, score=args.score)
    mean = mean_report(reports)
    out = _out(args)
    save_report(reports, out, mean)
    svg = Path(args.svg) if args.svg else _sibling(out, ".svg")
    render_scalp_svg(mean, svg, montage, title=f"mean IEGW over {len(reports)} epochs")
    inputs = [args.checkpoint, args.epochs_file] + ([args.montage] if args.montage else [])
    write_manifest(args, inputs, [out, svg])
    top = ", ".join(mean.names[i] for i in mean.ranking()[:8])
    print(f"top electrodes: {top} -> {out}, {svg}")


SWEEP_FIELDS = ["table", "strategy", "parameter", "attention", "seed", "acc", "pre", "rec",
                "f1", "ece", "flops", "params"]


def _sweep_row(job):
    table, strategy, parameter, attention, seed, kw = job
    run = run_planted(seed=seed, attention=attention, strategy=strategy, parameter=parameter,
                      **kw)
    e = run.evaluation
    flops, params = count_cost(run.model)
    return {"table": table, "strategy": strategy, "parameter": parameter,
            "attention": attention, "seed": seed, "acc": e.accuracy, "pre": e.precision,
            "rec": e.recall, "f1": e.f1, "ece": e.ece, "flops": flops, "params": params}


def cmd_sweep(args):
    seeds = args.seeds if args.seeds else [args.seed]
    kw = {"epochs": args.epochs, "learning_rate": args.learning_rate,
          "data_seed": args.data_seed, "epochs_per_class": args.epochs_per_class,
          "train_fraction": args.train_fraction}
    jobs = []
    for seed in seeds:
        jobs += [("strategy", "threshold", float(t), False, seed, kw) for t in args.thresholds]
        jobs += [("strategy", "topk", int(k), False, seed, kw) for k in args.topks]
        jobs += [("attention", "threshold", 20.0, a, seed, kw) for a in (False, True)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    out = _out(args)
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SWEEP_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    write_manifest(args, [], [out], seeds=seeds)
    print(f"{len(rows)} runs -> {out}")


# -- parser ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--config", help="JSON file of flag values; command-line flags win")


def _montage_flags(p):
    p.add_argument("--montage", help="CSV with header name,x,y,z")
    p.add_argument("--builtin-64", action="store_true", help="built-in 64-channel montage")


def build_parser():
    parser = _Parser(prog="gmacn", description="Graph mutual-attention EEG toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("graph", help="build an electrode graph")
    _common(p)
    _montage_flags(p)
    p.add_argument("--threshold", type=float)
    p.add_argument("--topk", type=int)
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("synth", help="generate a planted-electrode epoch set")
    _common(p)
    _montage_flags(p)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--epochs-per-class", type=int, default=100)
    p.add_argument("--planted", help="explicit subsets, e.g. '0:1,2,3;1:4,5'")
    p.add_argument("--planted-per-class", type=int, default=8)
    p.add_argument("--signal-gain", type=float, default=5.0)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--features", type=int, default=7)
    p.set_defaults(func=cmd_synth, seed=7)

    p = sub.add_parser("preprocess", help="raw CSV recording to wavelet epoch features")
    _common(p)
    _montage_flags(p)
    p.add_argument("--signal")
    p.add_argument("--markers")
    p.add_argument("--rate", type=float, help="sampling rate of the recording (Hz)")
    p.add_argument("--label-map", help="event=class pairs, e.g. 'target=1,nontarget=0'")
    p.add_argument("--band", type=float, nargs=2, default=[0.05, 200.0])
    p.add_argument("--target-rate", type=float, default=100.0)
    p.add_argument("--window", type=float, nargs=2, default=[0.0, 600.0],
                   metavar=("PRE_MS", "POST_MS"))
    p.add_argument("--wavelet", default="db4")
    p.add_argument("--levels", type=int, default=4)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _common(p)
    p.add_argument("--epochs-file")
    p.add_argument("--graph-file")
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--gcn-width", type=int, default=16)
    p.add_argument("--attention-width", type=int, default=8)
    p.add_argument("--head-hidden", type=int, default=64)
    p.add_argument("--classes", type=int, help="defaults to the epoch file's class count")
    p.add_argument("--focal-gamma", type=float, default=2.0)
    p.add_argument("--loss-mix", type=float, default=0.5)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--grad-clip", type=float, default=1.0, help="0 disables clipping")
    p.add_argument("--no-attention", action="store_true", help="plain GCN stack")
    p.add_argument("--scaled-attention", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics and calibration of a checkpoint")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--epochs-file")
    p.add_argument("--bins", type=int, default=15)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="per-electrode importance and scalp map")
    _common(p)
    _montage_flags(p)
    p.add_argument("--checkpoint")
    p.add_argument("--epochs-file")
    p.add_argument("--svg")
    p.add_argument("--score", choices=["logit", "probability"], default="logit")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("sweep", help="graph-strategy and attention ablations as one CSV")
    _common(p)
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--thresholds", type=float, nargs="+", default=[10.0, 20.0, 30.0])
    p.add_argument("--topks", type=int, nargs="+", default=[3, 5, 7])
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--data-seed", type=int, default=7)
    p.add_argument("--epochs-per-class", type=int, default=100)
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_sweep)
    return parser, sub


def parse(argv):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a command is required: " + ", ".join(sub.choices))
    if args.config:
        try:
            values = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read --config: {exc}") from None
        if not isinstance(values, dict):
            raise UsageError("--config must hold a JSON object")
        sp = sub.choices[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(k.replace("-", "_") for k in values) - known)
        if unknown:
            raise UsageError(f"unknown keys in --config: {', '.join(unknown)}")
        sp.set_defaults(**{k.replace("-", "_"): v for k, v in values.items()})
        args = parser.parse_args(argv)
    args.argv = list(argv)
    return args


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse(argv)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (GmacnError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
