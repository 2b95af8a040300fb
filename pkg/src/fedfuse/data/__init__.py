from .adapters import ADAPTERS, LABEL_MAPPINGS, ingest, map_label
from .corpus import (
    LABEL_NAMES,
    LABELS,
    NOT,
    OFF,
    CanonicalDataset,
    LabeledInstance,
    read_canonical,
    read_tsv,
    stats,
    stats_markdown,
    stratified_split,
    write_canonical,
    write_tsv,
)
from .synthetic import DEFAULT_CORPORA, FixtureSpec, write_fixture_corpora

__all__ = [
    "ADAPTERS", "LABEL_MAPPINGS", "ingest", "map_label",
    "LABEL_NAMES", "LABELS", "NOT", "OFF", "CanonicalDataset", "LabeledInstance",
    "read_canonical", "read_tsv", "stats", "stats_markdown", "stratified_split",
    "write_canonical", "write_tsv",
    "DEFAULT_CORPORA", "FixtureSpec", "write_fixture_corpora",
]
