"""Abstract-title corpus handling: ingestion, filtering, tokenization and
constrained train/dev/test splitting.

Records arrive as JSONL (one object per line) or CSV with a header row,
carrying the keys id, title, abstract, venue, year, source, humor_label,
humor_label_origin. All operations here are pure functions over immutable
inputs.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
import random
import re
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path

from .errors import DataFormatError, InfeasibleSpecError

NOT_FUNNY = 0
MEDIUM_FUNNY = 1
FUNNY = 2

VALID_HUMOR_LABELS = (NOT_FUNNY, MEDIUM_FUNNY, FUNNY)

STOPWORDS_VERSION = "1"

# Venues counted as "main conference" when FilterConfig.main_conference_only
# is set and no explicit allow-list is given. This list is a toolkit config
# default, not a ground truth.
DEFAULT_MAIN_VENUES = (
    "ACL",
    "EMNLP",
    "NAACL",
    "EACL",
    "COLING",
    "CONLL",
    "NEURIPS",
    "NIPS",
    "ICML",
    "ICLR",
    "AAAI",
    "IJCAI",
)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class LabelOrigin(str, Enum):
    HUMAN = "Human"
    CLASSIFIER = "Classifier"
    NONE = "None"


@dataclass(frozen=True)
class PaperRecord:
    """One abstract-title pair with venue/year/source metadata."""

    id: str
    title: str
    abstract: str
    venue: str
    year: int
    source: str  # "NLP" or "ML"
    humor_label: int | None = None
    humor_label_origin: LabelOrigin = LabelOrigin.NONE

    def __post_init__(self):
        if not self.id:
            raise DataFormatError("record id must be non-empty")
        if not self.title:
            raise DataFormatError(f"record {self.id}: title must be non-empty")
        if not self.abstract:
            raise DataFormatError(f"record {self.id}: abstract must be non-empty")
        if self.source not in ("NLP", "ML"):
            raise DataFormatError(
                f"record {self.id}: source must be 'NLP' or 'ML', got {self.source!r}"
            )
        if self.humor_label is not None and self.humor_label not in VALID_HUMOR_LABELS:
            raise DataFormatError(
                f"record {self.id}: humor_label must be one of {VALID_HUMOR_LABELS} "
                f"or null, got {self.humor_label!r}"
            )

    @property
    def funny_binary(self) -> int | None:
        """Binary collapse: medium-funny and funny -> 1, not-funny -> 0."""
        if self.humor_label is None:
            return None
        return 1 if self.humor_label in (MEDIUM_FUNNY, FUNNY) else 0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "abstract": self.abstract,
            "venue": self.venue,
            "year": self.year,
            "source": self.source,
            "humor_label": self.humor_label,
            "humor_label_origin": self.humor_label_origin.value,
        }


@dataclass(frozen=True)
class FilterConfig:
    max_abstract_words: int = 400
    min_year: int = 2001
    main_conference_only: bool = False
    allowed_venues: tuple[str, ...] = DEFAULT_MAIN_VENUES

    def __post_init__(self):
        if self.max_abstract_words <= 0:
            raise ValueError("max_abstract_words must be positive")


@dataclass(frozen=True)
class SplitSpec:
    """Constraints for the final train/dev/test split.

    dev and test each get `dev_size`/`test_size` records whose source and
    binary humor-label composition follow the two ratios exactly (quotas
    rounded to integers before sampling). Human-annotated records never
    leave the train set when `pin_human_annotated_to_train` is set.
    """

    dev_size: int = 600
    test_size: int = 600
    devtest_source_ratio: float = 0.8  # fraction of dev/test drawn from NLP
    devtest_funny_ratio: float = 1 / 3  # fraction of dev/test with funny titles
    pin_human_annotated_to_train: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.devtest_source_ratio <= 1:
            raise ValueError("devtest_source_ratio must be in [0, 1]")
        if not 0 <= self.devtest_funny_ratio <= 1:
            raise ValueError("devtest_funny_ratio must be in [0, 1]")
        if self.dev_size < 0 or self.test_size < 0:
            raise ValueError("split sizes must be nonnegative")


@dataclass
class CorpusSplit:
    train: list[PaperRecord]
    dev: list[PaperRecord]
    test: list[PaperRecord]
    spec: SplitSpec | None = None


# ── ingestion ────────────────────────────────────────────────────────────────


def _record_from_mapping(obj: dict, where: str) -> PaperRecord:
    try:
        label = obj.get("humor_label")
        if label in ("", None):
            label = None
        else:
            label = int(label)
        origin = obj.get("humor_label_origin") or "None"
        return PaperRecord(
            id=str(obj["id"]),
            title=str(obj["title"]),
            abstract=str(obj["abstract"]),
            venue=str(obj.get("venue", "")),
            year=int(obj["year"]),
            source=str(obj["source"]),
            humor_label=label,
            humor_label_origin=LabelOrigin(origin),
        )
    except DataFormatError as exc:
        raise DataFormatError(f"{where}: {exc}") from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise DataFormatError(f"{where}: malformed record ({exc})") from exc


def load_corpus(path: str | Path, format: str = "JSONL") -> list[PaperRecord]:
    """Load records from a JSONL or CSV file.

    Raises DataFormatError naming the offending line for malformed records
    and the offending id for duplicates.
    """
    path = Path(path)
    fmt = format.upper()
    records: list[PaperRecord] = []
    if fmt == "JSONL":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
                records.append(_record_from_mapping(obj, f"{path}:{lineno}"))
    elif fmt == "CSV":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            # DictReader counts from the first data row; header is line 1
            for rowno, row in enumerate(reader, start=2):
                records.append(_record_from_mapping(row, f"{path}:{rowno}"))
    else:
        raise ValueError(f"unknown corpus format {format!r} (use JSONL or CSV)")

    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            raise DataFormatError(f"duplicate record id {rec.id!r} in {path}")
        seen.add(rec.id)
    return records


def write_corpus(records: list[PaperRecord], path: str | Path) -> None:
    """Write records as JSONL, one object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


# ── filtering ────────────────────────────────────────────────────────────────


def abstract_word_count(record: PaperRecord) -> int:
    # whitespace tokens of the raw abstract; the reproducible "word" rule
    return len(record.abstract.split())


def filter_corpus(records: list[PaperRecord], cfg: FilterConfig) -> list[PaperRecord]:
    """Keep records with abstract word-count strictly below the maximum,
    year at or above the minimum, and (optionally) an allowed venue."""
    allowed = {v.upper() for v in cfg.allowed_venues}
    out = []
    for rec in records:
        if abstract_word_count(rec) >= cfg.max_abstract_words:
            continue
        if rec.year < cfg.min_year:
            continue
        if cfg.main_conference_only and rec.venue.upper() not in allowed:
            continue
        out.append(rec)
    return out


# ── tokenization ─────────────────────────────────────────────────────────────


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; hyphens split too."""
    return _TOKEN_RE.findall(text.lower())


def load_stopwords() -> frozenset[str]:
    data = (
        importlib.resources.files("a2teval")
        .joinpath("data/stopwords.txt")
        .read_text(encoding="utf-8")
    )
    words = {
        line.strip()
        for line in data.splitlines()
        if line.strip() and not line.startswith("#")
    }
    return frozenset(words)


def content_words(text: str, stopword_list: frozenset[str] | set[str] | None = None) -> list[str]:
    """Tokens that survive stopword removal (punctuation is already dropped
    by the tokenizer)."""
    if stopword_list is None:
        stopword_list = load_stopwords()
    return [tok for tok in tokenize(text) if tok not in stopword_list]


# ── constrained splitting ────────────────────────────────────────────────────


def _floor_pair(size: int, ratio: float) -> tuple[int, int]:
    """Split `size` into (ratio-share, rest) by flooring both shares and
    assigning the leftover unit, if any, to the larger one.

    The ratio is snapped to the nearest small rational so that quotas like
    600 * 0.2 come out exact instead of flooring to 119.
    """
    frac = Fraction(ratio).limit_denominator(10**9)
    a = int(size * frac)
    b = int(size * (1 - frac))
    leftover = size - a - b
    if leftover:
        if a > b:
            a += leftover
        else:
            b += leftover
    return a, b


def _cell_quotas(size: int, funny_ratio: float, nlp_ratio: float) -> dict[tuple[int, str], int]:
    """Integer quotas per (binary label, source) cell for one split part.

    Marginals are floored with the remainder going to the largest class;
    the single free joint cell is floored and clamped so both marginals
    hold exactly.
    """
    n_funny, n_not = _floor_pair(size, funny_ratio)
    n_nlp, n_ml = _floor_pair(size, nlp_ratio)
    free = int(n_funny * n_nlp / size) if size else 0
    free = max(free, n_funny - n_ml)
    free = min(free, n_funny, n_nlp)
    return {
        (1, "NLP"): free,
        (1, "ML"): n_funny - free,
        (0, "NLP"): n_nlp - free,
        (0, "ML"): n_not - (n_nlp - free),
    }


def make_constrained_split(records: list[PaperRecord], spec: SplitSpec) -> CorpusSplit:
    """Partition records into train/dev/test under the spec's quotas.

    dev and test are sampled per (label, source) cell from the pool of
    records that are not human-annotated (when pinning is on) and carry a
    humor label; everything else stays in train. Deterministic per seed.
    """
    if spec.dev_size + spec.test_size >= len(records):
        raise InfeasibleSpecError(
            f"dev+test ({spec.dev_size + spec.test_size}) must be smaller than "
            f"the corpus ({len(records)} records)"
        )

    pools: dict[tuple[int, str], list[PaperRecord]] = {}
    for rec in records:
        if spec.pin_human_annotated_to_train and rec.humor_label_origin == LabelOrigin.HUMAN:
            continue
        binary = rec.funny_binary
        if binary is None:
            continue  # unlabeled records cannot satisfy label quotas
        pools.setdefault((binary, rec.source), []).append(rec)
    for pool in pools.values():
        pool.sort(key=lambda r: r.id)

    rng = random.Random(spec.seed)
    picked: dict[str, set[str]] = {"dev": set(), "test": set()}
    ordered: dict[str, list[PaperRecord]] = {"dev": [], "test": []}
    shortfalls = []
    for part, size in (("dev", spec.dev_size), ("test", spec.test_size)):
        quotas = _cell_quotas(size, spec.devtest_funny_ratio, spec.devtest_source_ratio)
        for cell in sorted(quotas, key=lambda c: (c[0], c[1])):
            want = quotas[cell]
            pool = [r for r in pools.get(cell, []) if r.id not in picked["dev"] | picked["test"]]
            if len(pool) < want:
                label = "funny" if cell[0] == 1 else "not-funny"
                shortfalls.append(
                    f"{part} quota for ({label}, {cell[1]}) needs {want}, "
                    f"pool has {len(pool)} (short by {want - len(pool)})"
                )
                continue
            chosen = rng.sample(pool, want)
            picked[part].update(r.id for r in chosen)
            ordered[part].extend(chosen)
    if shortfalls:
        raise InfeasibleSpecError("infeasible split: " + "; ".join(shortfalls))

    taken = picked["dev"] | picked["test"]
    train = [r for r in records if r.id not in taken]
    return CorpusSplit(train=train, dev=ordered["dev"], test=ordered["test"], spec=spec)


def export_split(split: CorpusSplit, out_dir: str | Path, manifest_name: str = "split_manifest.json") -> None:
    """Write train/dev/test JSONL files plus a manifest with the seed and spec."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", split.train), ("dev", split.dev), ("test", split.test)):
        write_corpus(part, out_dir / f"{name}.jsonl")
    spec = split.spec
    manifest = {
        "seed": spec.seed if spec else None,
        "spec": {
            "dev_size": spec.dev_size,
            "test_size": spec.test_size,
            "devtest_source_ratio": spec.devtest_source_ratio,
            "devtest_funny_ratio": spec.devtest_funny_ratio,
            "pin_human_annotated_to_train": spec.pin_human_annotated_to_train,
        }
        if spec
        else None,
        "sizes": {"train": len(split.train), "dev": len(split.dev), "test": len(split.test)},
    }
    with open(out_dir / manifest_name, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def relabel(record: PaperRecord, label: int, origin: LabelOrigin) -> PaperRecord:
    """Return a copy of the record with a new humor label."""
    return replace(record, humor_label=label, humor_label_origin=origin)
