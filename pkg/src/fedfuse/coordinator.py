"""Federated coordinator: client registry, fusion jobs and the privacy boundary.

Clients own their data and do all training. The coordinator only ever
handles parameter sets: it receives client checkpoints, averages them and
ships the fused parameters back to the client that finetunes them. Every
crossing of the boundary goes through :func:`check_payload` and is written
to the audit log.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .data.corpus import CanonicalDataset, LabeledInstance
from .errors import IncompatibleParameterSets, PrivacyViolation, TooFewClients, UnknownClient
from .model import ModelArchitecture, ModelState
from .tensor import ParameterSet, elementwise_mean, incompatibility
from .train import TrainingConfig, TrainLog, finetune_fused, train_local

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClientRecord:
    client_id: str
    dataset_name: str
    checkpoint: ParameterSet
    train_log_ref: str | None = None


@dataclass(frozen=True)
class FusionJob:
    clients: tuple[str, ...]
    finetune: str | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "clients", tuple(self.clients))
        if len(self.clients) < 2:
            raise TooFewClients("a fusion job needs at least two clients; one client is the non-fused baseline")
        if len(set(self.clients)) != len(self.clients):
            raise ValueError(f"duplicate client in fusion job {self.clients}")
        if self.finetune is not None and self.finetune not in self.clients:
            raise ValueError(f"finetune client {self.finetune!r} is not part of job {self.clients}")

    @property
    def name(self) -> str:
        return "+".join(self.clients)


def enumerate_fusion_jobs(client_ids, seed: int = 0) -> list[FusionJob]:
    """Every subset of two or more clients, by size and then lexicographically."""
    ids = sorted(client_ids)
    if len(ids) < 2:
        raise TooFewClients(f"need at least two clients to fuse, got {len(ids)}")
    return [FusionJob(combo, None, seed)
            for size in range(2, len(ids) + 1)
            for combo in itertools.combinations(ids, size)]


def check_payload(obj) -> str:
    """Name of the payload type, or PrivacyViolation if it could carry data."""
    if isinstance(obj, ModelState):
        obj = obj.params
    if isinstance(obj, ParameterSet):
        return "ParameterSet"
    if isinstance(obj, (LabeledInstance, CanonicalDataset)):
        raise PrivacyViolation(f"refusing to move {type(obj).__name__} across a client boundary")
    if isinstance(obj, (list, tuple)) and any(isinstance(x, (LabeledInstance, CanonicalDataset)) for x in obj):
        raise PrivacyViolation("refusing to move labeled instances across a client boundary")
    raise PrivacyViolation(f"only parameter sets may cross a client boundary, got {type(obj).__name__}")


class AuditLog:
    """Append-only record of boundary crossings, optionally mirrored to JSON lines."""

    def __init__(self, path=None):
        self.events: list[dict] = []
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def record(self, event: str, **fields) -> dict:
        entry = {"seq": len(self.events), "event": event, **fields}
        with self._lock:
            self.events.append(entry)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return entry

    def transfer(self, payload, source: str, dest: str, **fields) -> dict:
        kind = check_payload(payload)
        return self.record("transfer", source=source, dest=dest, payload=kind, instances=0, **fields)

    @property
    def instance_transfers(self) -> int:
        return sum(e.get("instances", 0) for e in self.events)


class Client:
    """A data-holding participant. Its dataset never leaves this object."""

    def __init__(self, client_id: str, dataset: CanonicalDataset, arch: ModelArchitecture,
                 cfg: TrainingConfig):
        self.client_id = client_id
        self._dataset = dataset
        self.arch = arch
        self.cfg = cfg

    @property
    def dataset_name(self) -> str:
        return self._dataset.name

    def train(self, base: ParameterSet, seed: int) -> tuple[ParameterSet, TrainLog]:
        state, trainlog = train_local(ModelState(self.arch, base), self._dataset, self.cfg.with_seed(seed))
        return state.params, trainlog

    def finetune(self, fused: ParameterSet, seed: int) -> tuple[ParameterSet, TrainLog]:
        state, trainlog = finetune_fused(ModelState(self.arch, fused), self._dataset, self.cfg.with_seed(seed))
        return state.params, trainlog

    def test_instances(self):
        """Test rows, for evaluation that happens on the client's side."""
        return self._dataset.test


FinetuneEndpoint = Callable[[ParameterSet], ParameterSet]


def run_fusion(job: FusionJob, registry, base: ParameterSet | None = None,
               finetune: Mapping[str, FinetuneEndpoint] | None = None,
               audit: AuditLog | None = None) -> ParameterSet:
    """Average the checkpoints of ``job.clients``; finetune at ``job.finetune`` if set.

    ``registry`` maps client ids to :class:`ClientRecord` (a list of records
    is accepted too). ``finetune`` maps client ids to callables that take
    the fused parameters and return finetuned parameters; it is only
    consulted when the job names a finetune client.
    """
    if not isinstance(registry, Mapping):
        registry = {r.client_id: r for r in registry}
    missing = [c for c in job.clients if c not in registry]
    if missing:
        raise UnknownClient(f"unknown client(s) {missing}")
    checkpoints = [registry[c].checkpoint for c in job.clients]
    if base is not None:
        for cid, ckpt in zip(job.clients, checkpoints):
            reason = incompatibility(base, ckpt)
            if reason:
                raise IncompatibleParameterSets(f"client {cid!r} does not descend from the base model: {reason}")
    fused = elementwise_mean(checkpoints)
    if audit is not None:
        audit.record("fuse", job=job.name, clients=list(job.clients), instances=0)
    if job.finetune is None:
        return fused
    if not finetune or job.finetune not in finetune:
        raise UnknownClient(f"no finetune endpoint for client {job.finetune!r}")
    if audit is not None:
        audit.transfer(fused, "coordinator", job.finetune, job=job.name, stage="fused")
    tuned = finetune[job.finetune](fused)
    if audit is not None:
        audit.transfer(tuned, job.finetune, "coordinator", job=job.name, stage="fused+FT")
    reason = incompatibility(fused, tuned)
    if reason:
        raise IncompatibleParameterSets(f"finetuned model lost its lineage: {reason}")
    return tuned


@dataclass
class Coordinator:
    """In-process coordinator holding the registered base and client checkpoints."""

    base: ParameterSet
    audit: AuditLog = field(default_factory=AuditLog)
    records: dict = field(default_factory=dict)
    endpoints: dict = field(default_factory=dict)

    def __post_init__(self):
        self._lock = threading.Lock()

    def register(self, record: ClientRecord, finetune: FinetuneEndpoint | None = None) -> None:
        self.audit.transfer(record.checkpoint, record.client_id, "coordinator", stage="local")
        reason = incompatibility(self.base, record.checkpoint)
        if reason:
            raise IncompatibleParameterSets(f"client {record.client_id!r}: {reason}")
        with self._lock:
            self.records[record.client_id] = record
            if finetune is not None:
                self.endpoints[record.client_id] = finetune

    def jobs(self, seed: int = 0) -> list[FusionJob]:
        return enumerate_fusion_jobs(self.records, seed)

    def run_fusion(self, job: FusionJob) -> ParameterSet:
        return run_fusion(job, self.records, self.base, self.endpoints, self.audit)
