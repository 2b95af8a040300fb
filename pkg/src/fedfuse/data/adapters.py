"""Readers for the native layouts of each corpus, harmonized to OLID level A.

Every adapter reads a directory holding a training and a testing file (or a
single file, which becomes the training split) and maps the corpus' own
taxonomy onto NOT/OFF. Mappings are total over the published taxonomy; any
other label value is an :class:`~fedfuse.errors.UnknownLabel` error.

Layouts
-------
ahsd
    ``train.csv`` / ``test.csv`` in the Davidson et al. release layout:
    ``,count,hate_speech,offensive_language,neither,class,tweet`` where
    ``class`` is 0 (hate), 1 (offensive) or 2 (neither). Label names are
    accepted in place of the codes.
olid
    ``train.tsv`` / ``test.tsv`` with ``id, tweet, subtask_a[, subtask_b, subtask_c]``.
    The official file names ``olid-training-v1.0.tsv`` and
    ``testset-levela.tsv`` + ``labels-levela.csv`` are also recognized.
hasoc
    ``train.csv`` / ``test.csv`` (or ``.tsv``) with ``tweet_id, text, task1[, task2, ID]``;
    ``task_1`` is accepted for the 2019 release. ``task1`` is HOF or NOT.
hatexplain
    ``train.csv`` / ``test.csv`` with ``post_id, text, label`` where label is
    hatespeech, offensive or normal; or the original ``dataset.json`` plus
    ``post_id_divisions.json``, labelled by annotator majority (posts with no
    majority are skipped, as in the original release).
offendes
    ``train.csv`` / ``test.csv`` with ``comment_id, comment, label`` where
    label is OFP, OFG, OFO, NOE or NO.
canonical
    ``train.tsv`` / ``test.tsv`` in the canonical ``id, text, label, source`` format.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError, DatasetError, MalformedRow, MissingColumn, UnknownLabel
from .corpus import NOT, OFF, CanonicalDataset, make_instance, read_canonical

log = logging.getLogger(__name__)

AHSD_CLASS_CODES = {"0": "hate", "1": "offensive", "2": "neither"}

LABEL_MAPPINGS: dict[str, dict[str, int]] = {
    "ahsd": {"hate": OFF, "offensive": OFF, "neither": NOT},
    "olid": {"OFF": OFF, "NOT": NOT},
    "hasoc": {"HOF": OFF, "NOT": NOT},
    "hatexplain": {"hatespeech": OFF, "offensive": OFF, "normal": NOT},
    "offendes": {"OFP": OFF, "OFG": OFF, "OFO": OFF, "NOE": OFF, "NO": NOT},
}


def map_label(adapter: str, raw: str) -> int:
    mapping = LABEL_MAPPINGS[adapter]
    key = raw.strip()
    if adapter == "ahsd":
        key = AHSD_CLASS_CODES.get(key, key).lower()
    elif adapter == "hatexplain":
        key = key.lower().replace(" ", "")
        key = {"hatespeech": "hatespeech", "hate": "hatespeech"}.get(key, key)
    else:
        key = key.upper()
    if key not in mapping:
        raise UnknownLabel(raw, adapter)
    return mapping[key]


@dataclass(frozen=True)
class TableLayout:
    text: tuple[str, ...]
    label: tuple[str, ...]
    id: tuple[str, ...] = ()


LAYOUTS = {
    "ahsd": TableLayout(text=("tweet",), label=("class",), id=("", "id")),
    "olid": TableLayout(text=("tweet",), label=("subtask_a",), id=("id",)),
    "hasoc": TableLayout(text=("text",), label=("task1", "task_1"), id=("tweet_id", "text_id", "id")),
    "hatexplain": TableLayout(text=("text",), label=("label",), id=("post_id", "id")),
    "offendes": TableLayout(text=("comment",), label=("label",), id=("comment_id", "id")),
}

SPLIT_FILES = {
    "ahsd": {"train": ("train.csv",), "test": ("test.csv",)},
    "olid": {"train": ("train.tsv", "olid-training-v1.0.tsv"), "test": ("test.tsv",)},
    "hasoc": {"train": ("train.csv", "train.tsv"), "test": ("test.csv", "test.tsv")},
    "hatexplain": {"train": ("train.csv",), "test": ("test.csv",)},
    "offendes": {"train": ("train.csv",), "test": ("test.csv",)},
}

ADAPTERS = tuple(LABEL_MAPPINGS) + ("canonical",)


def _pick(fieldnames, candidates, what, path):
    for c in candidates:
        if c in fieldnames:
            return c
    if what == "id":
        return None
    raise MissingColumn(f"{path}: none of the columns {candidates} present (have {fieldnames})")


def _delimiter(path: Path) -> str:
    return "\t" if path.suffix.lower() == ".tsv" else ","


def read_table(path, adapter: str, split: str) -> list:
    """Read one native CSV/TSV file into canonical instances."""
    path = Path(path)
    layout = LAYOUTS[adapter]
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=_delimiter(path), quoting=csv.QUOTE_MINIMAL)
        fields = reader.fieldnames or []
        text_col = _pick(fields, layout.text, "text", path)
        label_col = _pick(fields, layout.label, "label", path)
        id_col = _pick(fields, layout.id, "id", path)
        for row_no, row in enumerate(reader, start=1):
            line = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise MalformedRow(line, "column count does not match header")
            label = map_label(adapter, row[label_col])
            ident = row[id_col].strip() if id_col is not None and row[id_col].strip() else f"{split}-{row_no:06d}"
            inst = make_instance(ident, row[text_col], label, adapter, line=line)
            if inst is not None:
                out.append(inst)
    return out


def _olid_official_test(directory: Path) -> list | None:
    tweets, labels = directory / "testset-levela.tsv", directory / "labels-levela.csv"
    if not (tweets.exists() and labels.exists()):
        return None
    gold = {}
    with open(labels, encoding="utf-8", newline="") as fh:
        for line, row in enumerate(csv.reader(fh), start=1):
            if len(row) != 2:
                raise MalformedRow(line, f"{labels.name}: expected id,label")
            gold[row[0].strip()] = map_label("olid", row[1])
    out = []
    with open(tweets, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        _pick(reader.fieldnames or [], ("id",), "label", tweets)
        for row in reader:
            if row["id"] not in gold:
                raise MalformedRow(reader.line_num, f"no level-A label for id {row['id']}")
            inst = make_instance(row["id"], row["tweet"], gold[row["id"]], "olid", line=reader.line_num)
            if inst is not None:
                out.append(inst)
    return out


def _hatexplain_json(directory: Path) -> tuple[list, list] | None:
    data_path, div_path = directory / "dataset.json", directory / "post_id_divisions.json"
    if not (data_path.exists() and div_path.exists()):
        return None
    data = json.loads(data_path.read_text(encoding="utf-8"))
    divisions = json.loads(div_path.read_text(encoding="utf-8"))

    def build(ids):
        out = []
        for pid in ids:
            post = data[pid]
            votes = Counter(a["label"] for a in post["annotators"])
            (top, n), *rest = votes.most_common()
            if rest and rest[0][1] == n:
                log.info("hatexplain: skipping %s, no majority label", pid)
                continue
            inst = make_instance(pid, " ".join(post["post_tokens"]), map_label("hatexplain", top), "hatexplain")
            if inst is not None:
                out.append(inst)
        return out

    # validation posts are folded into training; the eval split is carved out later
    return build(divisions["train"] + divisions.get("val", [])), build(divisions["test"])


def ingest(path, adapter: str, name: str | None = None) -> CanonicalDataset:
    """Load a corpus in its native layout and harmonize labels to NOT/OFF."""
    if adapter not in ADAPTERS:
        raise ConfigError(f"unknown adapter {adapter!r}; choose from {', '.join(ADAPTERS)}")
    path = Path(path)
    name = name or (path.stem if path.is_file() else path.name)
    if adapter == "canonical":
        ds = read_canonical(path, name)
    elif path.is_file():
        ds = CanonicalDataset(name, read_table(path, adapter, "train"), ())
    elif path.is_dir():
        splits = {}
        if adapter == "hatexplain":
            pair = _hatexplain_json(path)
            if pair is not None:
                splits["train"], splits["test"] = pair
        for split, candidates in SPLIT_FILES[adapter].items():
            if split in splits:
                continue
            found = next((path / c for c in candidates if (path / c).exists()), None)
            if found is not None:
                splits[split] = read_table(found, adapter, split)
            elif adapter == "olid" and split == "test":
                splits[split] = _olid_official_test(path) or []
            else:
                splits[split] = []
        if not splits["train"] and not splits["test"]:
            raise DatasetError(f"{path}: no {adapter} files found (expected {SPLIT_FILES[adapter]})")
        ds = CanonicalDataset(name, splits["train"], splits["test"])
    else:
        raise DatasetError(f"{path}: no such file or directory")
    log.info("ingested %s via %s: train %s, test %s", name, adapter,
             ds.label_counts("train"), ds.label_counts("test"))
    return ds
