"""Command-line entry point: ``headerq <subcommand> ...``.

Exit codes: 0 success, 1 runtime error, 2 usage error. Config files are JSON
objects (the same single-object format as the service bodies); flags given
on the command line override values from a file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

log = logging.getLogger("headerq")


class CliError(Exception):
    pass


def _load_json(path) -> dict:
    if path is None:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise CliError(f"config {path} must hold a JSON object")
    return obj


def _overrides(args, names) -> dict:
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


# -- subcommands -----------------------------------------------------------


def cmd_gen_data(args):
    from .corpus import GenConfig, campaigns_path_for, generate_corpus, write_campaigns, write_corpus

    conf = _load_json(args.config)
    conf.update(_overrides(args, ["seed", "n_messages", "spam_fraction"]))
    g = GenConfig.from_dict(conf)
    records = generate_corpus(g)
    write_corpus(records, args.out)
    camp_path = campaigns_path_for(args.out)
    write_campaigns(g.resolved_campaigns(), camp_path)
    n_spam = sum(r.label for r in records)
    print(f"wrote {len(records)} records to {args.out}")
    print(f"campaigns: {camp_path}")
    print(f"spam: {n_spam} ham: {len(records) - n_spam} spam_fraction: {n_spam / len(records):.4f}")


def _split_model_config(conf: dict):
    from .model import ModelConfig
    from .pipeline import FeatureConfig

    feature_keys = {f.name for f in dataclasses.fields(FeatureConfig)}
    feats = {k: conf.pop(k) for k in list(conf) if k in feature_keys}
    return ModelConfig.from_dict(conf), FeatureConfig(**feats)


def cmd_train(args):
    from .corpus import read_corpus
    from .model import TrainConfig, save_model
    from .pipeline import train_from_corpus

    model_cfg, feature_cfg = _split_model_config(_load_json(args.model_config))
    tconf = _load_json(args.train_config)
    tconf.update(_overrides(args, ["epochs", "seed", "lr_initial", "batch_size"]))
    train_cfg = TrainConfig.from_dict(tconf)
    corpus = read_corpus(args.corpus)
    run = train_from_corpus(
        corpus, model_cfg, train_cfg, feature_cfg, split=args.split,
        holdout=args.holdout, target_precision=args.target_precision,
    )
    for rec in run.history:
        print(f"epoch {rec['epoch']}: lr={rec['lr']:.6g} loss={rec['loss']:.6f} "
              f"accuracy={rec['accuracy']:.4f}")
    cal = run.calibration
    print(f"calibration ({len(run.holdout)} held-out messages): threshold={run.model.threshold!r} "
          f"precision={cal.achieved_precision:.4f} recall={cal.achieved_recall:.4f} "
          f"feasible={str(cal.feasible).lower()}")
    save_model(run.model, args.out)
    print(f"model {run.model.version} saved to {args.out}")


def cmd_eval(args):
    from .corpus import read_corpus
    from .metrics import evaluate
    from .model import load_model
    from .pipeline import split_three

    model = load_model(args.model)
    fit, hold, test = split_three(read_corpus(args.corpus), args.split, args.holdout)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, records in (("train", fit), ("test", test)):
        if not records:
            raise CliError(f"{name} split is empty")
        rep = evaluate(model, records, args.target_precision, model.threshold, name)
        (out / f"{name}_pr.csv").write_text(rep.points_csv(), encoding="utf-8")
        (out / f"{name}_summary.txt").write_text(rep.summary(), encoding="utf-8")
        print(rep.summary(), end="")
    print(f"reports written to {out}")


def cmd_calibrate(args):
    from .corpus import read_corpus
    from .model import load_model, save_model
    from .pipeline import calibrate_on, clamp_threshold, split_three

    model = load_model(args.model)
    fit, hold, test = split_three(read_corpus(args.corpus), args.split, args.holdout)
    records = {"holdout": hold, "test": test}[args.on]
    cal = calibrate_on(model, records, args.target_precision)
    print(f"target_precision: {args.target_precision}")
    print(f"threshold: {cal.threshold!r}")
    print(f"precision: {cal.achieved_precision:.6f}")
    print(f"recall: {cal.achieved_recall:.6f}")
    print(f"feasible: {str(cal.feasible).lower()}")
    if args.out:
        save_model(model.with_threshold(clamp_threshold(cal.threshold)), args.out)
        print(f"calibrated model saved to {args.out}")


def cmd_serve(args):
    from .service import ServiceConfig, serve

    cfg = ServiceConfig.from_env(
        host=args.host, port=args.port, model_path=args.model, threshold=args.threshold,
        deadline_ms=args.deadline_ms, max_concurrent=args.max_concurrent,
    )
    serve(cfg)


def cmd_simulate(args):
    from .replay import SimConfig, report_write, simulate

    cfg = SimConfig(
        quarantine_duration=args.quarantine_duration, threshold=args.threshold,
        corpus_path=args.corpus, model_path=args.model, campaigns_path=args.campaigns,
        ham_fp_rate=args.ham_fp_rate,
    )
    rep = simulate(cfg)
    print(rep.summary(), end="")
    if args.out:
        report_write(rep, args.out)
        print(f"report written to {args.out}")


def cmd_plot(args):
    import csv

    with open(args.csv, newline="", encoding="utf-8") as fh:
        rows = [(float(r["recall"]), float(r["precision"])) for r in csv.DictReader(fh)]
    out = Path(args.out)
    if out.suffix.lower() in (".png", ".pdf", ".svg"):
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot([r for r, _ in rows], [p for _, p in rows], lw=1.5)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(out, metadata={"Software": None} if out.suffix.lower() == ".png" else None)
        plt.close(fig)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("# recall precision\n")
            for r, p in rows:
                fh.write(f"{r!r} {p!r}\n")
    print(f"wrote {out}")


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(
        prog="headerq", formatter_class=fmt,
        description="Header-based spam quarantine: data, training, evaluation, serving, replay.",
    )
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("gen-data", help="generate a synthetic corpus", formatter_class=fmt)
    s.add_argument("--config", help="JSON generator config (n_messages, spam_fraction, ...)")
    s.add_argument("--out", required=True, help="corpus file to write (JSON lines)")
    s.add_argument("--seed", type=int, help="generator seed (config value or 0)")
    s.add_argument("--n-messages", dest="n_messages", type=int,
                   help="number of messages (config value or 60000)")
    s.add_argument("--spam-fraction", dest="spam_fraction", type=float,
                   help="spam share (config value or 0.4)")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("train", help="build vocabularies, train, calibrate, save",
                       formatter_class=fmt)
    s.add_argument("--corpus", required=True, help="corpus file")
    s.add_argument("--split", type=float, default=0.75, help="training share of the time span")
    s.add_argument("--holdout", type=float, default=0.1,
                   help="share of the training period held out for calibration")
    s.add_argument("--model-config", help="JSON model/feature config")
    s.add_argument("--train-config", help="JSON training config")
    s.add_argument("--epochs", type=int, help="override epochs (default 9)")
    s.add_argument("--seed", type=int, help="override training seed (default 0)")
    s.add_argument("--lr-initial", dest="lr_initial", type=float,
                   help="override initial learning rate (default 0.01)")
    s.add_argument("--batch-size", dest="batch_size", type=int,
                   help="override batch size (default 128)")
    s.add_argument("--target-precision", type=float, default=0.99,
                   help="precision target for the threshold")
    s.add_argument("--out", required=True, help="model file to write")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="PR curves and summaries for train and test splits",
                       formatter_class=fmt)
    s.add_argument("--model", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--split", type=float, default=0.75)
    s.add_argument("--holdout", type=float, default=0.1)
    s.add_argument("--target-precision", type=float, default=0.99)
    s.add_argument("--out-dir", required=True, help="directory for CSV and summary files")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("calibrate", help="pick the threshold for a precision target",
                       formatter_class=fmt)
    s.add_argument("--model", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--split", type=float, default=0.75)
    s.add_argument("--holdout", type=float, default=0.1)
    s.add_argument("--on", choices=("holdout", "test"), default="holdout",
                   help="slice to calibrate on")
    s.add_argument("--target-precision", type=float, default=0.998)
    s.add_argument("--out", help="write a copy of the model with the new threshold")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("serve", help="run the HTTP quarantine service", formatter_class=fmt)
    s.add_argument("--model", help="model file (env HEADERQ_MODEL, default model.hq)")
    s.add_argument("--host", help="bind address (env HEADERQ_HOST, default 127.0.0.1)")
    s.add_argument("--port", type=int, help="bind port (env HEADERQ_PORT, default 8080)")
    s.add_argument("--threshold", type=float,
                   help="threshold override (env HEADERQ_THRESHOLD, default: model's)")
    s.add_argument("--deadline-ms", type=int,
                   help="default request deadline (env HEADERQ_DEADLINE_MS, default 10)")
    s.add_argument("--max-concurrent", type=int,
                   help="scoring workers (env HEADERQ_MAX_CONCURRENT, default 4)")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("simulate", help="replay a corpus with quarantine", formatter_class=fmt)
    s.add_argument("--corpus", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--campaigns", help="campaign file (default: next to the corpus)")
    s.add_argument("--quarantine-duration", type=float, default=3600.0, help="seconds")
    s.add_argument("--threshold", type=float, help="threshold override (default: model's)")
    s.add_argument("--ham-fp-rate", type=float, default=0.0,
                   help="baseline false-positive rate on ham")
    s.add_argument("--out", help="report CSV (a .txt summary is written alongside)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("plot", help="PR curve image or gnuplot data from an eval CSV",
                       formatter_class=fmt)
    s.add_argument("--csv", required=True, help="*_pr.csv written by eval")
    s.add_argument("--out", required=True,
                   help=".png/.pdf/.svg renders an image; anything else gets two-column data")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except (CliError, OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
