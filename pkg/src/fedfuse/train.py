"""Client-side training: warmup schedule, Adam, early stopping, finetuning."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data.corpus import CanonicalDataset, stratified_split
from .errors import EmptyDataset
from .model import ModelState, loss_and_grad_arrays, pad_batch, tokenize
from .seeding import derive_seed
from .tensor import DTYPE, ParameterSet

log = logging.getLogger(__name__)

ORIGINAL_LEARNING_RATE = 4e-5
DESK_LEARNING_RATE = 1e-3


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int = 16
    learning_rate: float = DESK_LEARNING_RATE
    warmup_fraction: float = 0.10
    epochs: int = 3
    patience: int = 3
    eval_split_fraction: float = 0.20
    eval_every: int | None = None  # batches between evaluations; None means once per epoch
    seed: int = 0
    finetune_fraction: float = 0.20
    lr_decay: str = "constant"

    def __post_init__(self):
        if not 0 < self.warmup_fraction < 1:
            raise ValueError("warmup_fraction must lie in (0, 1)")
        if not 0 < self.eval_split_fraction < 1:
            raise ValueError("eval_split_fraction must lie in (0, 1)")
        if not 0 < self.finetune_fraction <= 1:
            raise ValueError("finetune_fraction must lie in (0, 1]")
        if self.patience < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("patience and batch_size must be >= 1, epochs >= 0")
        if self.eval_every is not None and self.eval_every < 1:
            raise ValueError("eval_every must be a positive number of batches")
        if self.lr_decay not in ("constant", "linear"):
            raise ValueError("lr_decay must be 'constant' or 'linear'")

    def with_seed(self, seed: int) -> "TrainingConfig":
        return replace(self, seed=int(seed))

    @classmethod
    def from_dict(cls, d) -> "TrainingConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def warmup_steps(total_steps: int, cfg: TrainingConfig) -> int:
    # round() guards against 0.1 * 30 == 3.0000000000000004 pushing ceil up
    return max(1, math.ceil(round(cfg.warmup_fraction * total_steps, 9)))


def lr_at_step(step: int, total_steps: int, cfg: TrainingConfig) -> float:
    """Linear warmup to the base rate over the first ceil(warmup_fraction * total) steps."""
    w = warmup_steps(total_steps, cfg)
    if step <= w:
        return cfg.learning_rate * step / w
    if cfg.lr_decay == "linear":
        return cfg.learning_rate * max(0.0, (total_steps - step) / max(1, total_steps - w))
    return cfg.learning_rate


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls({n: np.zeros(params[n].shape) for n in params},
                   {n: np.zeros(params[n].shape) for n in params})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """One in-place Adam update of ``params`` (float32 arrays) from float64 ``grads``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        params[name][...] = (params[name] - update).astype(DTYPE)


class EarlyStopping:
    """Stop once the monitored loss fails to strictly improve ``patience`` times in a row."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.bad_evals = 0

    def update(self, loss: float) -> tuple[bool, bool]:
        """Record one evaluation; return (improved, should_stop)."""
        if loss < self.best:
            self.best = loss
            self.bad_evals = 0
            return True, False
        self.bad_evals += 1
        return False, self.bad_evals >= self.patience


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    stop_reason: str = "completed_epochs"
    best_eval_loss: float | None = None
    best_step: int | None = None

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        lines.append(json.dumps({"summary": True, "stop_reason": self.stop_reason,
                                 "best_eval_loss": self.best_eval_loss, "best_step": self.best_step},
                                sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "TrainLog":
        rows = [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]
        summary = rows.pop() if rows and rows[-1].get("summary") else {}
        return cls(rows, summary.get("stop_reason", "completed_epochs"),
                   summary.get("best_eval_loss"), summary.get("best_step"))


# -- loops ------------------------------------------------------------------------

def encode(instances, arch):
    return [tokenize(x.text, arch) for x in instances], np.array([x.label for x in instances], dtype=np.int64)


def evaluate_loss(params: dict, arch, seqs, labels, batch_size: int = 256) -> float:
    """Mean cross-entropy of float32 ``params`` over an encoded set."""
    p = {n: a.astype(np.float64) for n, a in params.items()}
    total = 0.0
    for start in range(0, len(seqs), batch_size):
        ids, mask = pad_batch(seqs[start:start + batch_size])
        loss, _ = loss_and_grad_arrays(p, arch, ids, mask, labels[start:start + batch_size], need_grad=False)
        total += loss * len(ids)
    return total / len(seqs)


def _instances(train_set):
    return list(train_set.train if isinstance(train_set, CanonicalDataset) else train_set)


def train_local(base: ModelState, train_set, cfg: TrainingConfig) -> tuple[ModelState, TrainLog]:
    """Fine-tune ``base`` on a client's training rows.

    One eval-split fraction of the rows (stratified, seeded) is held out to
    monitor loss. Training runs for ``cfg.epochs`` epochs of shuffled
    mini-batches with Adam and the warmup schedule, evaluates every
    ``cfg.eval_every`` batches, stops early on stalled eval loss and returns
    the best evaluated checkpoint.
    """
    instances = _instances(train_set)
    if not instances:
        raise EmptyDataset("cannot train on an empty training set")
    if not base.params.all_finite():
        raise ValueError("base model has non-finite parameters")
    if len({x.label for x in instances}) < 2:
        log.warning("training set has a single class; training proceeds")
    trainlog = TrainLog()
    if cfg.epochs == 0:
        return base, trainlog

    arch = base.arch
    held_out, fit_rows = (stratified_split(instances, cfg.eval_split_fraction, derive_seed(cfg.seed, "eval-split"))
                          if len(instances) > 1 else ([], instances))
    if not fit_rows:
        fit_rows = instances
    if not held_out:
        log.warning("eval split is empty; monitoring loss on the training rows")
        held_out = fit_rows
    seqs, labels = encode(fit_rows, arch)
    eval_seqs, eval_labels = encode(held_out, arch)

    n = len(seqs)
    per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * per_epoch
    eval_every = cfg.eval_every or per_epoch

    params = base.params.to_dict()
    best = {k: a.copy() for k, a in params.items()}
    adam = AdamState.zeros_like(params)
    stopper = EarlyStopping(cfg.patience)
    rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    step, losses = 0, []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            step += 1
            lr = lr_at_step(step, total_steps, cfg)
            ids, mask = pad_batch([seqs[i] for i in idx])
            loss, grads = loss_and_grad_arrays({k: a.astype(np.float64) for k, a in params.items()},
                                               arch, ids, mask, labels[idx])
            adam_step(params, grads, adam, lr)
            losses.append(loss)
            if step % eval_every and step != total_steps:
                continue
            eval_loss = evaluate_loss(params, arch, eval_seqs, eval_labels)
            improved, stop = stopper.update(eval_loss)
            trainlog.records.append({"step": step, "epoch": epoch + 1, "train_loss": float(np.mean(losses)),
                                     "eval_loss": eval_loss, "lr": lr})
            losses = []
            if improved:
                best = {k: a.copy() for k, a in params.items()}
                trainlog.best_eval_loss, trainlog.best_step = eval_loss, step
            if stop:
                trainlog.stop_reason = "early_stopped"
                break
        if trainlog.stop_reason == "early_stopped":
            break
    out = ParameterSet(best, base.params.base_id, base.params.arch_hash)
    return ModelState(arch, out), trainlog


def finetune_subsample(train_set, cfg: TrainingConfig) -> list:
    instances = _instances(train_set)
    if cfg.finetune_fraction >= 1.0 or len(instances) < 2:
        return instances
    part, _ = stratified_split(instances, cfg.finetune_fraction, derive_seed(cfg.seed, "finetune-subsample"))
    return part


def finetune_fused(fused: ModelState, train_set, cfg: TrainingConfig) -> tuple[ModelState, TrainLog]:
    """Further train a fused model on a stratified ``finetune_fraction`` of one client's rows."""
    subsample = finetune_subsample(train_set, cfg)
    if not subsample:
        raise EmptyDataset("finetuning subsample is empty")
    return train_local(fused, subsample, cfg)
