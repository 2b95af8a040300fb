"""Canonical labeled corpora, TSV interchange, stratified splits and statistics."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DatasetError, EmptyInput, MalformedRow

log = logging.getLogger(__name__)

NOT, OFF = 0, 1
LABELS = {"NOT": NOT, "OFF": OFF}
LABEL_NAMES = {NOT: "NOT", OFF: "OFF"}

TSV_HEADER = ("id", "text", "label", "source")


@dataclass(frozen=True)
class LabeledInstance:
    id: str
    text: str
    label: int
    source: str

    def __post_init__(self):
        if self.label not in (NOT, OFF):
            raise ValueError(f"label must be NOT(0) or OFF(1), got {self.label!r}")


@dataclass(frozen=True)
class CanonicalDataset:
    name: str
    train: tuple[LabeledInstance, ...] = field(default_factory=tuple)
    test: tuple[LabeledInstance, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))
        for split in ("train", "test"):
            ids = [x.id for x in getattr(self, split)]
            if len(set(ids)) != len(ids):
                raise DatasetError(f"{self.name}: duplicate instance ids in {split} split")
        overlap = {x.id for x in self.train} & {x.id for x in self.test}
        if overlap:
            raise DatasetError(f"{self.name}: {len(overlap)} ids appear in both train and test")

    def label_counts(self, split: str = "train") -> dict[str, int]:
        labels = [x.label for x in getattr(self, split)]
        return {"NOT": labels.count(NOT), "OFF": labels.count(OFF)}


def make_instance(id, text, label, source, line=None) -> LabeledInstance | None:
    """Build an instance, or log and return None when the text is blank."""
    text = (text or "").strip()
    if not text:
        log.warning("%s: rejecting instance %s%s: empty text", source, id,
                    f" (line {line})" if line is not None else "")
        return None
    return LabeledInstance(str(id), text, label, source)


# -- canonical TSV ----------------------------------------------------------------

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {v[1]: k for k, v in _ESCAPES.items()}
_ESCAPE_RE = re.compile(r"[\\\t\n\r]")
_UNESCAPE_RE = re.compile(r"\\(.)")


def escape_field(s: str) -> str:
    return _ESCAPE_RE.sub(lambda m: _ESCAPES[m.group(0)], s)


def unescape_field(s: str) -> str:
    def sub(m):
        try:
            return _UNESCAPES[m.group(1)]
        except KeyError:
            raise ValueError(f"bad escape sequence \\{m.group(1)}") from None
    return _UNESCAPE_RE.sub(sub, s)


def write_tsv(instances, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(TSV_HEADER) + "\n")
        for x in instances:
            fh.write("\t".join((escape_field(x.id), escape_field(x.text),
                                LABEL_NAMES[x.label], escape_field(x.source))) + "\n")
    return path


def read_tsv(path) -> list[LabeledInstance]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != TSV_HEADER:
            raise MalformedRow(1, f"expected header {TSV_HEADER}, got {tuple(header)}")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise MalformedRow(lineno, f"expected 4 columns, got {len(cols)}")
            id_, text, label, source = cols
            if label not in LABELS:
                raise MalformedRow(lineno, f"label must be NOT or OFF, got {label!r}")
            try:
                inst = make_instance(unescape_field(id_), unescape_field(text), LABELS[label],
                                     unescape_field(source), line=lineno)
            except ValueError as exc:
                raise MalformedRow(lineno, str(exc)) from None
            if inst is not None:
                out.append(inst)
    return out


def write_canonical(ds: CanonicalDataset, directory) -> Path:
    directory = Path(directory)
    write_tsv(ds.train, directory / "train.tsv")
    write_tsv(ds.test, directory / "test.tsv")
    return directory


def read_canonical(directory, name: str | None = None) -> CanonicalDataset:
    directory = Path(directory)
    if directory.is_file():
        return CanonicalDataset(name or directory.stem, (), read_tsv(directory))
    train = read_tsv(directory / "train.tsv") if (directory / "train.tsv").exists() else []
    test = read_tsv(directory / "test.tsv") if (directory / "test.tsv").exists() else []
    if not train and not test and not (directory / "train.tsv").exists():
        raise DatasetError(f"{directory}: no train.tsv or test.tsv found")
    return CanonicalDataset(name or directory.name, train, test)


# -- splitting ----------------------------------------------------------------------

def largest_remainder(quotas: list[float], total: int) -> list[int]:
    """Integer apportionment of ``total`` following fractional ``quotas``."""
    counts = [math.floor(q) for q in quotas]
    leftover = total - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def stratified_split(instances, fraction: float, seed: int):
    """Split into (part_a, part_b) with ``part_a`` holding ``fraction`` of each class.

    Per-class counts follow largest-remainder rounding of the proportional
    quotas; which rows are chosen is a seeded shuffle within each class.
    Both parts keep the input order.
    """
    instances = list(instances)
    if not instances:
        raise EmptyInput("stratified_split on an empty collection")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    by_class = {label: [i for i, x in enumerate(instances) if x.label == label] for label in (NOT, OFF)}
    total = math.floor(fraction * len(instances) + 0.5)
    counts = largest_remainder([fraction * len(by_class[c]) for c in (NOT, OFF)], total)
    rng = np.random.default_rng(seed)
    chosen = set()
    for c, k in zip((NOT, OFF), counts):
        idx = by_class[c]
        if not idx:
            continue
        perm = rng.permutation(len(idx))
        chosen.update(idx[j] for j in perm[:k])
    part_a = [x for i, x in enumerate(instances) if i in chosen]
    part_b = [x for i, x in enumerate(instances) if i not in chosen]
    return part_a, part_b


# -- statistics -----------------------------------------------------------------------

def stats(ds: CanonicalDataset) -> dict:
    def off_fraction(split):
        return round(sum(x.label for x in split) / len(split), 2) if split else 0.0

    return {
        "name": ds.name,
        "train_count": len(ds.train),
        "test_count": len(ds.test),
        "train_off_fraction": off_fraction(ds.train),
        "test_off_fraction": off_fraction(ds.test),
        "empty": not ds.train and not ds.test,
    }


def stats_markdown(datasets) -> str:
    lines = [
        "| Dataset | Train Inst. | Train OFF % | Test Inst. | Test OFF % |",
        "|---|---:|---:|---:|---:|",
    ]
    for ds in datasets:
        s = stats(ds)
        flag = " (empty)" if s["empty"] else ""
        lines.append(f"| {s['name']}{flag} | {s['train_count']:,} | {s['train_off_fraction']:.2f} "
                     f"| {s['test_count']:,} | {s['test_off_fraction']:.2f} |")
    return "\n".join(lines) + "\n"
