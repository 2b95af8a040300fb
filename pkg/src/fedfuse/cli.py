"""``fedfuse`` command line: the full pipeline plus one subcommand per stage.

Stage commands use the same seed derivation as ``fedfuse run``. A run with
``--seed M`` trains its r-th run from seed ``M + r``, so e.g.
``fedfuse train DATA --name olid --seed M+1`` reproduces that client's
run-1 checkpoint bit for bit.

Exit codes: 0 ok, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .data import ADAPTERS, DEFAULT_CORPORA, ingest, read_tsv, stats_markdown, write_canonical, write_fixture_corpora
from .errors import ConfigError, FedFuseError
from .evaluation import APPROACHES, EvaluationReport, RowKey, arbitrate, f1_report
from .model import ModelArchitecture, ModelState, init_base, predict_proba, tokenize
from .pipeline import RunConfig, finetune_seed, paper_faithful, report_notes, run_pipeline, train_seed
from .report import render_report
from .tensor import elementwise_mean
from .train import finetune_fused, train_local

log = logging.getLogger("fedfuse")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one line, not the full usage dump
        self.exit(2, f"{self.prog}: error: {message}\n")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "paper_faithful", False):
        cfg = paper_faithful(cfg)
    if getattr(args, "lr_decay", None):
        cfg = replace(cfg, training=replace(cfg.training, lr_decay=args.lr_decay))
    return cfg


def _dataset(path, adapter, name=None):
    return ingest(path, adapter, name=name)


def _test_rows(path):
    path = Path(path)
    if path.is_dir():
        return ingest(path, "canonical").test
    return read_tsv(path)


def _state(path, arch: ModelArchitecture) -> ModelState:
    return ModelState(arch, checkpoint.load(path))


def _trainlog_path(out) -> Path:
    return Path(out).with_suffix(".trainlog.jsonl")


# -- subcommands ---------------------------------------------------------------------

def cmd_ingest(args) -> int:
    if args.fixtures:
        dirs = write_fixture_corpora(Path(args.out) / "native", seed=args.seed or 0)
        sets = [ingest(d, c, name=c) for c, d in dirs.items()]
    else:
        if not args.path:
            raise ConfigError("ingest needs a PATH (or --fixtures)")
        sets = [ingest(args.path, args.adapter, name=args.name)]
    for ds in sets:
        target = Path(args.out) / ds.name if args.fixtures or len(sets) > 1 else Path(args.out)
        write_canonical(ds, target)
    print(stats_markdown(sets), end="")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    arch = cfg.architecture
    ds = _dataset(args.data, args.adapter, args.name)
    if args.base:
        base = _state(args.base, arch)
    else:
        base = init_base(arch, args.seed)
        if args.save_base:
            checkpoint.save(base.params, args.save_base)
    state, trainlog = train_local(base, ds, cfg.training.with_seed(train_seed(args.seed, ds.name)))
    checkpoint.save(state.params, args.output)
    trainlog.write(_trainlog_path(args.output))
    print(f"{ds.name}: {trainlog.stop_reason}, best eval loss {trainlog.best_eval_loss}")
    return 0


def cmd_fuse(args) -> int:
    params = [checkpoint.load(p) for p in args.checkpoints]
    checkpoint.save(elementwise_mean(params), args.output)
    return 0


def cmd_finetune(args) -> int:
    cfg = _load_config(args)
    arch = cfg.architecture
    ds = _dataset(args.data, args.adapter, args.name)
    fused = _state(args.checkpoint, arch)
    state, trainlog = finetune_fused(fused, ds, cfg.training.with_seed(finetune_seed(args.seed, ds.name)))
    checkpoint.save(state.params, args.output)
    trainlog.write(_trainlog_path(args.output))
    return 0


def _record(args, cfg, approach, models, finetune, gold, pred) -> float:
    score = f1_report(gold, pred)["macro_f1"]
    if args.results:
        path = Path(args.results)
        report = EvaluationReport.read(path) if path.exists() else EvaluationReport()
        if args.config:
            report.datasets = [s.name for s in cfg.datasets]
            report.notes = report_notes(cfg)
        test = args.test_name or Path(args.test).stem
        if test not in report.datasets:
            report.datasets.append(test)
        report.add(RowKey(approach, tuple(models), finetune, test), gold, pred)
        report.runs = max(report.runs, max(len(r.scores) for r in report.rows.values()))
        report.write(path)
    return score


def _models_arg(args, default):
    return tuple(args.models.split(",")) if args.models else default


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    arch = cfg.architecture
    rows = _test_rows(args.test)
    probs = predict_proba(_state(args.checkpoint, arch), [tokenize(x.text, arch) for x in rows])
    pred = probs.argmax(axis=1).tolist()
    models = _models_arg(args, (Path(args.checkpoint).stem,))
    score = _record(args, cfg, args.approach, models, args.finetune, [x.label for x in rows], pred)
    print(f"macro_f1\t{score:.6f}")
    return 0


def cmd_ensemble(args) -> int:
    cfg = _load_config(args)
    arch = cfg.architecture
    rows = _test_rows(args.test)
    seqs = [tokenize(x.text, arch) for x in rows]
    probs = np.stack([predict_proba(_state(p, arch), seqs) for p in args.checkpoints])
    labels, _, _ = arbitrate(probs)
    models = _models_arg(args, tuple(Path(p).stem for p in args.checkpoints))
    score = _record(args, cfg, "ensemble", models, None, [x.label for x in rows], labels.tolist())
    print(f"macro_f1\t{score:.6f}")
    return 0


def cmd_report(args) -> int:
    report = EvaluationReport.read(args.results)
    out = Path(args.output) if args.output else Path(args.results).parent
    written = render_report(report, out, figures=not args.no_figures)
    for p in written.values():
        print(p)
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = args.out or os.environ.get("FEDFUSE_OUT")
    updates = {}
    if out:
        updates["output_dir"] = out
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.fixtures:
        updates["fixtures"] = True
    if args.runs is not None:
        updates["runs"] = args.runs
    if args.dump_predictions:
        updates["dump_predictions"] = True
    cfg = replace(cfg, **updates)
    report = run_pipeline(cfg, workers=args.jobs)
    report_dir = Path(cfg.output_dir) / "reports" / cfg.run_id
    print((report_dir / "summary.md").read_text(encoding="utf-8"), end="")
    print(f"reports written to {report_dir} ({len(report.rows)} rows)")
    return 0


# -- parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (architecture and training settings)")
    common.add_argument("--paper-faithful", action="store_true",
                        help="use the original hyperparameters instead of the desk-scale defaults")
    common.add_argument("--lr-decay", choices=("constant", "linear"),
                        help="learning rate after warmup (default: constant)")
    common.add_argument("-v", "--verbose", action="store_true")

    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, default=0, help="run seed (pipeline run r uses master seed + r)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("data", help="dataset file or directory")
    data.add_argument("--adapter", default="canonical", choices=ADAPTERS)
    data.add_argument("--name", help="client name; defaults to the dataset directory name")

    results = argparse.ArgumentParser(add_help=False)
    results.add_argument("--results", help="append the score to this results.json")
    results.add_argument("--models", help="comma-separated model names for the results row")
    results.add_argument("--test-name", help="test dataset name for the results row")

    p = _Parser(prog="fedfuse", description="Federated model fusion simulator for offensive language detection.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", parents=[common], help="harmonize a corpus into canonical TSV")
    s.add_argument("path", nargs="?")
    s.add_argument("--adapter", default="canonical", choices=ADAPTERS)
    s.add_argument("--name")
    s.add_argument("--fixtures", action="store_true", help=f"generate synthetic {', '.join(DEFAULT_CORPORA)}")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("train", parents=[common, seeded, data], help="train one client from the base model")
    s.add_argument("--base", help="base checkpoint; default initializes from --seed")
    s.add_argument("--save-base", help="also write the freshly initialized base checkpoint here")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("fuse", parents=[common], help="average two or more checkpoints")
    s.add_argument("checkpoints", nargs="+")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("finetune", parents=[common, seeded], help="finetune a fused checkpoint on client data")
    s.add_argument("checkpoint")
    s.add_argument("data")
    s.add_argument("--adapter", default="canonical", choices=ADAPTERS)
    s.add_argument("--name")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_finetune)

    s = sub.add_parser("evaluate", parents=[common, results], help="Macro F1 of a checkpoint on a test set")
    s.add_argument("checkpoint")
    s.add_argument("test", help="canonical TSV file or dataset directory")
    s.add_argument("--approach", default="non-fused", choices=[a for a in APPROACHES if a != "ensemble"])
    s.add_argument("--finetune", help="finetune client for a fused+FT row")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ensemble", parents=[common, results], help="max-probability ensemble on a test set")
    s.add_argument("checkpoints", nargs="+")
    s.add_argument("--test", required=True)
    s.set_defaults(func=cmd_ensemble)

    s = sub.add_parser("report", parents=[common], help="render Markdown tables and figures from results.json")
    s.add_argument("results")
    s.add_argument("-o", "--output")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("run", parents=[common], help="run the full pipeline")
    s.add_argument("--jobs", type=int, default=1, help="worker processes for client training")
    s.add_argument("--seed", type=int, help="master seed")
    s.add_argument("--out", help="output directory (default: $FEDFUSE_OUT or the config value)")
    s.add_argument("--fixtures", action="store_true", help="use the synthetic corpora")
    s.add_argument("--runs", type=int)
    s.add_argument("--dump-predictions", action="store_true")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "fixtures", False) and args.command == "ingest" and args.path:
        parser.error("ingest takes either PATH or --fixtures, not both")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fedfuse: config error: {exc}", file=sys.stderr)
        return 2
    except (FedFuseError, OSError, ValueError) as exc:
        print(f"fedfuse: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
