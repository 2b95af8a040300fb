"""End-to-end experiment: ingest, train clients, fuse, finetune, evaluate, report.

Seeds: run ``r`` (1-based) uses ``seed = master_seed + r``. The shared base
model is initialized from that seed, client ``c`` trains with
``derive_seed(seed, "train", c)`` and finetunes with
``derive_seed(seed, "finetune", c)``. The standalone CLI stages use the
same derivation, so they reproduce the pipeline's checkpoints exactly.
"""

from __future__ import annotations

import hashlib
import json
import logging
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .coordinator import AuditLog, Client, ClientRecord, Coordinator, FusionJob, enumerate_fusion_jobs
from .data import ADAPTERS, DEFAULT_CORPORA, CanonicalDataset, ingest, write_canonical, write_fixture_corpora
from .errors import ConfigError
from .evaluation import APPROACHES, EvaluationReport, RowKey, arbitrate
from .model import LABEL_NAMES, ModelArchitecture, ModelState, init_base, predict_proba, tokenize
from .report import render_report
from .seeding import derive_seed
from .train import ORIGINAL_LEARNING_RATE, TrainingConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    path: str | None = None
    adapter: str = "canonical"


@dataclass
class RunConfig:
    datasets: list = field(default_factory=list)
    architecture: ModelArchitecture = field(default_factory=ModelArchitecture)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    jobs: object = "all"
    approaches: tuple = APPROACHES
    runs: int = 1
    output_dir: str = "fedfuse-out"
    master_seed: int = 0
    fixtures: bool = False
    fixture_seed: int = 0
    dump_predictions: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "datasets" in d:
                d["datasets"] = [DatasetSpec(**x) if isinstance(x, dict) else x for x in d["datasets"]]
            if "architecture" in d:
                d["architecture"] = ModelArchitecture.from_dict(d["architecture"])
            if "training" in d:
                d["training"] = TrainingConfig.from_dict(d["training"])
            if "approaches" in d:
                d["approaches"] = tuple(d["approaches"])
            cfg = cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["approaches"] = list(self.approaches)
        return d

    def resolved(self) -> "RunConfig":
        """Fill in the synthetic corpora when running on fixtures."""
        if not self.fixtures:
            return self
        fixture_dir = Path(self.output_dir) / "fixtures"
        if not self.datasets:
            specs = [DatasetSpec(c, str(fixture_dir / c), c) for c in DEFAULT_CORPORA]
        else:
            specs = [s if s.path else replace(s, path=str(fixture_dir / s.adapter)) for s in self.datasets]
        return replace(self, datasets=specs)

    def validate(self) -> None:
        if not self.datasets:
            raise ConfigError("no datasets configured (pass --fixtures for the synthetic corpora)")
        names = [s.name for s in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError(f"dataset names must be unique: {names}")
        for s in self.datasets:
            if s.adapter not in ADAPTERS:
                raise ConfigError(f"dataset {s.name!r}: unknown adapter {s.adapter!r}")
            if not s.path:
                raise ConfigError(f"dataset {s.name!r} has no path")
        if int(self.runs) < 1:
            raise ConfigError("runs must be >= 1")
        bad = set(self.approaches) - set(APPROACHES)
        if bad or not self.approaches:
            raise ConfigError(f"approaches must be a non-empty subset of {APPROACHES}")
        if set(self.approaches) - {"non-fused"} and len(names) < 2:
            raise ConfigError("fusion and ensemble approaches need at least two datasets")
        if self.jobs != "all":
            if not isinstance(self.jobs, (list, tuple)):
                raise ConfigError('jobs must be "all" or a list of client-name lists')
            for job in self.jobs:
                if len(job) < 2 or set(job) - set(names):
                    raise ConfigError(f"invalid fusion job {job}")

    @property
    def run_id(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("dump_predictions")
        digest = hashlib.sha256(json.dumps(d, sort_keys=True).encode("utf-8")).hexdigest()
        return f"run-{digest[:12]}"

    def fusion_jobs(self) -> list[FusionJob]:
        names = [s.name for s in self.datasets]
        if self.jobs == "all":
            return enumerate_fusion_jobs(names)
        jobs = [FusionJob(tuple(sorted(j))) for j in self.jobs]
        return sorted(set(jobs), key=lambda j: (len(j.clients), j.clients))


def checkpoint_path(out_dir, run: int, owner: str, stage: str, arch_hash: str) -> Path:
    return Path(out_dir) / "checkpoints" / f"run-{run:02d}" / owner / f"{stage}-{arch_hash[:8]}.ckpt"


def run_seed(master_seed: int, run: int) -> int:
    return int(master_seed) + int(run)


def train_seed(seed: int, client: str) -> int:
    return derive_seed(seed, "train", client)


def finetune_seed(seed: int, client: str) -> int:
    return derive_seed(seed, "finetune", client)


def _train_task(args):
    client, base, seed = args
    return client.train(base, seed)


def _pool_map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def paper_faithful(cfg: RunConfig) -> RunConfig:
    """Force the original hyperparameters (learning rate 4e-5 and friends)."""
    training = replace(cfg.training, batch_size=16, learning_rate=ORIGINAL_LEARNING_RATE, warmup_fraction=0.10,
                       epochs=3, patience=3, eval_split_fraction=0.20, finetune_fraction=0.20,
                       lr_decay="constant")
    return replace(cfg, training=training)


def report_notes(cfg: RunConfig) -> list[str]:
    t = cfg.training
    notes = [
        f"Training: batch {t.batch_size}, Adam, linear warmup over {t.warmup_fraction:.0%} of steps then "
        f"{t.lr_decay} rate, {t.epochs} epochs, early stopping patience {t.patience}, "
        f"eval split {t.eval_split_fraction:.0%}, finetuning on {t.finetune_fraction:.0%} of the client's data.",
        f"Each run re-seeds the model initialization, training order and data splits (seed = {cfg.master_seed} + run).",
    ]
    if t.learning_rate != ORIGINAL_LEARNING_RATE:
        notes.append(f"Desk-scale override (not the original setting): learning rate {t.learning_rate:g} "
                     f"instead of {ORIGINAL_LEARNING_RATE:g}.")
    return notes


class _TestSet:
    def __init__(self, client: Client, arch: ModelArchitecture):
        rows = client.test_instances()
        self.ids = [x.id for x in rows]
        self.gold = [x.label for x in rows]
        self.seqs = [tokenize(x.text, arch) for x in rows]


def _dump_predictions(path: Path, test: _TestSet, probs, labels, winners=None):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for i, id_ in enumerate(test.ids):
            rec = {"id": id_, "gold": LABEL_NAMES[test.gold[i]], "pred": LABEL_NAMES[int(labels[i])],
                   "probabilities": np.asarray(probs)[..., i, :].tolist()}
            if winners is not None:
                rec["winning_model"] = int(winners[i])
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def run_pipeline(cfg: RunConfig, workers: int = 1) -> EvaluationReport:
    """Run every configured approach for ``cfg.runs`` seeded runs and write the reports."""
    run_id = cfg.run_id  # from the config as given, so it does not depend on output_dir
    cfg = cfg.resolved()
    out = Path(cfg.output_dir)
    if cfg.fixtures:
        write_fixture_corpora(out / "fixtures", seed=cfg.fixture_seed,
                              corpora=tuple(sorted({s.adapter for s in cfg.datasets if s.adapter in DEFAULT_CORPORA},
                                                   key=DEFAULT_CORPORA.index)))
    cfg.validate()
    arch = cfg.architecture
    names = [s.name for s in cfg.datasets]
    approaches = set(cfg.approaches)
    jobs = cfg.fusion_jobs() if approaches - {"non-fused"} else []
    report_dir = out / "reports" / run_id
    audit_path = out / "coordinator" / "audit.jsonl"
    if audit_path.exists():
        audit_path.unlink()
    if report_dir.exists():
        shutil.rmtree(report_dir)

    datasets: dict[str, CanonicalDataset] = {}
    for s in cfg.datasets:
        datasets[s.name] = ingest(s.path, s.adapter, name=s.name)
        write_canonical(datasets[s.name], out / "clients" / s.name / "data")
    clients = {n: Client(n, datasets[n], arch, cfg.training) for n in names}
    tests = {n: _TestSet(clients[n], arch) for n in names}
    for n, t in tests.items():
        if not t.gold:
            raise ConfigError(f"dataset {n!r} has no test split")

    report = EvaluationReport(datasets=names, runs=cfg.runs, notes=report_notes(cfg))
    audit = AuditLog(audit_path)
    written: list[str] = []

    def save(params, run, owner, stage):
        path = checkpoint.save(params, checkpoint_path(out, run, owner, stage, arch.arch_hash))
        written.append(str(path.relative_to(out)))
        return params

    def evaluate(run, approach, models, finetune, params=None, probs_by_test=None):
        for t in names:
            test = tests[t]
            if probs_by_test is not None:
                probs, labels, winners = probs_by_test[t]
            else:
                probs = predict_proba(ModelState(arch, params), test.seqs)
                labels, winners = probs.argmax(axis=1), None
            report.add(RowKey(approach, tuple(models), finetune, t), test.gold, labels.tolist())
            if cfg.dump_predictions:
                fname = f"{approach}__{'+'.join(models)}__{finetune or '-'}__{t}.jsonl"
                _dump_predictions(report_dir / "predictions" / f"run-{run:02d}" / fname, test, probs, labels, winners)

    try:
        for run in range(1, cfg.runs + 1):
            seed = run_seed(cfg.master_seed, run)
            log.info("run %d/%d (seed %d)", run, cfg.runs, seed)
            base = save(init_base(arch, seed).params, run, "base", "base")
            results = _pool_map(_train_task, [(clients[n], base, train_seed(seed, n)) for n in names], workers)
            coord = Coordinator(base, audit)
            local = {}
            for n, (params, trainlog) in zip(names, results):
                local[n] = save(params, run, n, "local")
                trainlog.write(checkpoint_path(out, run, n, "local", arch.arch_hash).with_suffix(".trainlog.jsonl"))
                coord.register(ClientRecord(n, n, params, f"run-{run:02d}/{n}/local"),
                               finetune=lambda p, _n=n, _s=seed: clients[_n].finetune(p, finetune_seed(_s, _n))[0])
            local_probs = {n: {t: predict_proba(ModelState(arch, local[n]), tests[t].seqs) for t in names}
                           for n in names}
            if "non-fused" in approaches:
                for n in names:
                    evaluate(run, "non-fused", (n,), None,
                             probs_by_test={t: (p, p.argmax(axis=1), None) for t, p in local_probs[n].items()})
            if "ensemble" in approaches:
                for job in jobs:
                    per_test = {}
                    for t in names:
                        stacked = np.stack([local_probs[c][t] for c in job.clients])
                        labels, winners, _ = arbitrate(stacked)
                        per_test[t] = (stacked, labels, winners)
                    evaluate(run, "ensemble", job.clients, None, probs_by_test=per_test)
            if approaches & {"fused", "fused+FT"}:
                for job in jobs:
                    fused = save(coord.run_fusion(job), run, job.name, "fused")
                    if "fused" in approaches:
                        evaluate(run, "fused", job.clients, None, params=fused)
                    if "fused+FT" not in approaches:
                        continue
                    for c in job.clients:
                        tuned = save(coord.run_fusion(replace(job, finetune=c)), run, job.name, f"ft-{c}")
                        evaluate(run, "fused+FT", job.clients, c, params=tuned)
    except Exception as exc:
        manifest = {"run_id": run_id, "error": f"{type(exc).__name__}: {exc}", "checkpoints": written}
        out.mkdir(parents=True, exist_ok=True)
        (out / "partial_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        raise

    if audit.instance_transfers:
        raise RuntimeError("audit log recorded labeled instances crossing a client boundary")
    render_report(report, report_dir)
    (report_dir / "manifest.json").write_text(
        json.dumps({"run_id": run_id, "config": cfg.to_dict(), "checkpoints": written},
                   indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return report
