"""Synthetic stand-ins for the four English corpora (plus OffendES).

The real corpora sit behind platform agreements, so CI runs on generated
text that mimics each corpus' file layout, label taxonomy and class
balance. Texts are bags of pseudo-words drawn from:

* a neutral vocabulary shared by every corpus,
* a neutral topic vocabulary specific to each corpus,
* an offensive lexicon shared by every corpus,
* an offensive lexicon specific to each corpus,
* a "contested" lexicon of mild profanity whose label depends on the
  annotation guideline: strict corpora only ever use it in offensive
  posts, lenient corpora also use it in non-offensive ones.

Offensive posts carry one to three offensive words, usually from their
own corpus' lexicon and sometimes from the shared one or another corpus'.
A model trained on one corpus therefore misses much of what is offensive
in another, which is the situation fusion is meant to help with.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..seeding import derive_seed

# (train OFF fraction, test OFF fraction), matching the published class balance
OFF_FRACTIONS = {
    "ahsd": (0.83, 0.82),
    "hasoc": (0.36, 0.35),
    "hatexplain": (0.59, 0.58),
    "olid": (0.33, 0.27),
    "offendes": (0.30, 0.30),
}
DEFAULT_CORPORA = ("ahsd", "olid", "hasoc", "hatexplain")

# chance that a non-offensive post contains contested profanity
CONTESTED_IN_NOT = {"ahsd": 0.0, "hatexplain": 0.0, "olid": 0.35, "hasoc": 0.35, "offendes": 0.35}

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh", "tr", "pl"]
_VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]


@dataclass(frozen=True)
class FixtureSpec:
    n_train: int = 1600
    n_test: int = 400
    common_words: int = 400
    topic_words: int = 120
    shared_offensive: int = 20
    own_offensive: int = 30
    contested_words: int = 20
    p_contested_offensive: float = 0.25
    p_shared_offensive: float = 0.3
    p_foreign_offensive: float = 0.1
    label_noise: float = 0.03
    min_len: int = 6
    max_len: int = 16


def _pseudo_words(rng, n, taken):
    words = []
    while len(words) < n:
        k = int(rng.integers(2, 4))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))] for _ in range(k))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def build_lexicons(seed: int, corpora=DEFAULT_CORPORA, spec: FixtureSpec = FixtureSpec()):
    rng = np.random.default_rng(derive_seed(seed, "lexicon"))
    taken: set[str] = set()
    lex = {
        "common": _pseudo_words(rng, spec.common_words, taken),
        "shared_off": _pseudo_words(rng, spec.shared_offensive, taken),
        "contested": _pseudo_words(rng, spec.contested_words, taken),
    }
    for c in corpora:
        lex[f"topic:{c}"] = _pseudo_words(rng, spec.topic_words, taken)
        lex[f"off:{c}"] = _pseudo_words(rng, spec.own_offensive, taken)
    return lex


def _sentence(rng, corpus, offensive, lex, others, spec):
    n = int(rng.integers(spec.min_len, spec.max_len + 1))
    topic = lex[f"topic:{corpus}"]
    words = [topic[rng.integers(len(topic))] if rng.random() < 0.3 else lex["common"][rng.integers(len(lex["common"]))]
             for _ in range(n)]
    inserts = []
    if offensive:
        for _ in range(int(rng.integers(1, 4))):
            r = rng.random()
            if r < spec.p_contested_offensive:
                pool = lex["contested"]
            elif r < spec.p_contested_offensive + spec.p_shared_offensive:
                pool = lex["shared_off"]
            elif r < spec.p_contested_offensive + spec.p_shared_offensive + spec.p_foreign_offensive and others:
                pool = lex[f"off:{others[rng.integers(len(others))]}"]
            else:
                pool = lex[f"off:{corpus}"]
            inserts.append(pool[rng.integers(len(pool))])
    elif rng.random() < CONTESTED_IN_NOT[corpus]:
        inserts.append(lex["contested"][rng.integers(len(lex["contested"]))])
    for w in inserts:
        words.insert(int(rng.integers(len(words) + 1)), w)
    return " ".join(words)


def generate_rows(corpus: str, split: str, n: int, off_fraction: float, seed: int, lex,
                  corpora=DEFAULT_CORPORA, spec: FixtureSpec = FixtureSpec()):
    """Return (text, is_offensive) pairs with exactly ``round(off_fraction * n)`` offensive labels.

    Annotation noise swaps the labels of equally many rows from each class,
    so it leaves the class balance intact.
    """
    rng = np.random.default_rng(derive_seed(seed, corpus, split))
    others = [c for c in corpora if c != corpus]
    n_off = round(off_fraction * n)
    labels = np.array([1] * n_off + [0] * (n - n_off))
    rng.shuffle(labels)
    texts = [_sentence(rng, corpus, bool(y), lex, others, spec) for y in labels]
    k = min(round(spec.label_noise * n / 2), n_off, n - n_off)
    if k:
        flip = np.concatenate([rng.choice(np.flatnonzero(labels == 1), k, replace=False),
                               rng.choice(np.flatnonzero(labels == 0), k, replace=False)])
        labels[flip] = 1 - labels[flip]
    return [(t, int(y)) for t, y in zip(texts, labels)]


def _write_csv(path, header, rows, delimiter=","):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _native_rows(corpus, split, rows, rng, offset=0):
    """Render (text, label) rows in the corpus' own schema and taxonomy."""
    if corpus == "ahsd":
        header = ["", "count", "hate_speech", "offensive_language", "neither", "class", "tweet"]
        out = []
        for i, (text, y) in enumerate(rows):
            cls = (0 if rng.random() < 0.07 else 1) if y else 2
            votes = [0, 0, 0]
            votes[cls] = 3
            out.append([offset + i, 3, *votes, cls, text])
        return header, out, ","
    if corpus == "olid":
        header = ["id", "tweet", "subtask_a", "subtask_b", "subtask_c"]
        out = []
        for i, (text, y) in enumerate(rows):
            if y:
                b = "TIN" if rng.random() < 0.88 else "UNT"
                c = ["IND", "GRP", "OTH"][rng.integers(3)] if b == "TIN" else "NULL"
                out.append([f"{split}{10000 + i}", text, "OFF", b, c])
            else:
                out.append([f"{split}{10000 + i}", text, "NOT", "NULL", "NULL"])
        return header, out, "\t"
    if corpus == "hasoc":
        header = ["tweet_id", "text", "task1", "task2", "ID"]
        out = [[f"{split}_{i:05d}", text, "HOF" if y else "NOT",
                (["HATE", "OFFN", "PRFN"][rng.integers(3)] if y else "NONE"), f"hasoc_en_{i}"]
               for i, (text, y) in enumerate(rows)]
        return header, out, ","
    if corpus == "hatexplain":
        header = ["post_id", "text", "label"]
        out = [[f"{split}_{i:05d}_gab", text, ("hatespeech" if rng.random() < 0.5 else "offensive") if y else "normal"]
               for i, (text, y) in enumerate(rows)]
        return header, out, ","
    if corpus == "offendes":
        header = ["comment_id", "influencer", "comment", "label"]
        out = [[f"{split}-{i}", "inf", text,
                (["OFP", "OFG", "OFO", "NOE"][rng.integers(4)] if y else "NO")]
               for i, (text, y) in enumerate(rows)]
        return header, out, ","
    raise ValueError(f"no synthetic layout for {corpus!r}")


FILE_NAMES = {
    "ahsd": ("train.csv", "test.csv"),
    "olid": ("train.tsv", "test.tsv"),
    "hasoc": ("train.csv", "test.csv"),
    "hatexplain": ("train.csv", "test.csv"),
    "offendes": ("train.csv", "test.csv"),
}


def write_fixture_corpora(out_dir, seed: int = 0, corpora=DEFAULT_CORPORA,
                          spec: FixtureSpec = FixtureSpec()) -> dict[str, Path]:
    """Write one directory per corpus in its native layout; return name -> directory."""
    out_dir = Path(out_dir)
    lex = build_lexicons(seed, corpora, spec)
    written = {}
    for corpus in corpora:
        d = out_dir / corpus
        d.mkdir(parents=True, exist_ok=True)
        fr_train, fr_test = OFF_FRACTIONS[corpus]
        for split, n, frac, fname in (("train", spec.n_train, fr_train, FILE_NAMES[corpus][0]),
                                      ("test", spec.n_test, fr_test, FILE_NAMES[corpus][1])):
            rows = generate_rows(corpus, split, n, frac, seed, lex, corpora, spec)
            rng = np.random.default_rng(derive_seed(seed, corpus, split, "schema"))
            header, native, delim = _native_rows(corpus, split, rows, rng, 0 if split == "train" else spec.n_train)
            _write_csv(d / fname, header, native, delim)
        written[corpus] = d
    (out_dir / "fixtures.json").write_text(
        json.dumps({"seed": seed, "corpora": list(corpora), "n_train": spec.n_train, "n_test": spec.n_test},
                   sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return written
