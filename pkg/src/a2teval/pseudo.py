"""Humor-constrained pseudo-training data pipeline.

Externally generated titles arrive with the humor constraint they were
produced under; the pipeline keeps those whose classifier-assigned label
confirms the constraint, drops funny titles carrying overly frequent
n-grams (the telltale artefact patterns), and pairs each surviving pseudo
title with the original so every merged abstract contributes one funny and
one not-funny title.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import tokenize
from .errors import DataFormatError


@dataclass(frozen=True)
class GeneratedTitle:
    abstract_id: str
    constraint: int  # binary humor constraint given to the generator
    text: str
    assigned_label: int | None = None  # binary label from the humor classifier

    def __post_init__(self):
        if self.constraint not in (0, 1):
            raise DataFormatError(f"constraint must be 0 or 1, got {self.constraint!r}")
        if self.assigned_label not in (None, 0, 1):
            raise DataFormatError(f"assigned_label must be 0/1/None, got {self.assigned_label!r}")


class CorpusScope(str, Enum):
    FUNNY_PSEUDO_ONLY = "FunnyPseudoOnly"
    ALL_PSEUDO = "AllPseudo"


@dataclass(frozen=True)
class NgramFilterConfig:
    n_values: tuple[int, ...] = (2, 3)
    max_corpus_frequency: int = 10
    corpus_scope: CorpusScope = CorpusScope.FUNNY_PSEUDO_ONLY

    def __post_init__(self):
        if any(n < 1 for n in self.n_values):
            raise ValueError("n-gram sizes must be >= 1")
        if self.max_corpus_frequency < 1:
            raise ValueError("max_corpus_frequency must be >= 1")


def keep_label_consistent(generated: Iterable[GeneratedTitle]) -> list[GeneratedTitle]:
    """Retain exactly the titles whose assigned label equals the constraint."""
    out = []
    for g in generated:
        if g.assigned_label is None:
            raise DataFormatError(
                f"generated title for abstract {g.abstract_id!r} has no assigned label"
            )
        if g.assigned_label == g.constraint:
            out.append(g)
    return out


def _ngrams(tokens: Sequence[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


@dataclass
class NgramRemoval:
    title: GeneratedTitle
    ngram: tuple[str, ...]
    frequency: int


def ngram_frequency_filter(
    funny_titles: Sequence[GeneratedTitle],
    cfg: NgramFilterConfig,
    all_pseudo: Sequence[GeneratedTitle] | None = None,
) -> tuple[list[GeneratedTitle], list[NgramRemoval]]:
    """Drop titles containing any n-gram whose corpus frequency exceeds the
    threshold; report each removal with its triggering n-gram.

    Frequencies are counted over the funny titles themselves or, with the
    AllPseudo scope, over the supplied full pseudo pool. Counting happens
    once up front, so the pass is idempotent: survivors only ever contain
    at-threshold n-grams.
    """
    if cfg.corpus_scope == CorpusScope.ALL_PSEUDO:
        if all_pseudo is None:
            raise ValueError("AllPseudo scope needs the full pseudo pool")
        scope = all_pseudo
    else:
        scope = funny_titles

    counts: Counter[tuple[str, ...]] = Counter()
    for title in scope:
        tokens = tokenize(title.text)
        for n in cfg.n_values:
            counts.update(_ngrams(tokens, n))

    kept: list[GeneratedTitle] = []
    removed: list[NgramRemoval] = []
    for title in funny_titles:
        tokens = tokenize(title.text)
        offender = None
        for n in sorted(cfg.n_values):
            for gram in _ngrams(tokens, n):
                if counts[gram] > cfg.max_corpus_frequency:
                    offender = NgramRemoval(title=title, ngram=gram, frequency=counts[gram])
                    break
            if offender:
                break
        if offender:
            removed.append(offender)
        else:
            kept.append(title)
    return kept, removed


# ── merging ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class OriginalTitle:
    abstract_id: str
    text: str
    label: int  # binary

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataFormatError(f"label must be binary, got {self.label!r}")


@dataclass(frozen=True)
class TrainingTitle:
    abstract_id: str
    text: str
    label: int
    provenance: str  # "original" | "pseudo"

    def to_dict(self) -> dict:
        return {
            "abstract_id": self.abstract_id,
            "text": self.text,
            "label": self.label,
            "provenance": self.provenance,
        }


@dataclass
class MergeReport:
    instances: list[TrainingTitle]
    excluded_abstracts: list[str] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (abstract_id, reason)

    @property
    def pseudo_share(self) -> float:
        if not self.instances:
            return 0.0
        return sum(1 for t in self.instances if t.provenance == "pseudo") / len(self.instances)

    def render(self) -> str:
        return (
            f"{len(self.instances)} instances total, "
            f"{100 * self.pseudo_share:.0f}% are pseudo ones"
        )


def merge_pseudo(
    originals: Sequence[OriginalTitle], pseudo_kept: Sequence[GeneratedTitle]
) -> MergeReport:
    """Pair each original with one surviving opposite-label pseudo title.

    Abstracts without such a pseudo title are excluded; pseudo titles whose
    label matches the original's are rejected with a reason. The merged set
    therefore groups into abstract pairs with labels {0, 1} and is exactly
    half pseudo.
    """
    by_abstract: dict[str, list[GeneratedTitle]] = {}
    for p in pseudo_kept:
        by_abstract.setdefault(p.abstract_id, []).append(p)

    instances: list[TrainingTitle] = []
    excluded: list[str] = []
    rejected: list[tuple[str, str]] = []
    for orig in originals:
        match = None
        for p in by_abstract.get(orig.abstract_id, []):
            if p.assigned_label is None:
                rejected.append((orig.abstract_id, "pseudo title has no classifier label"))
                continue
            if p.assigned_label == orig.label:
                rejected.append(
                    (
                        orig.abstract_id,
                        f"pseudo label {p.assigned_label} equals the original's; "
                        f"an opposite-label pair is required",
                    )
                )
                continue
            if match is None:
                match = p
        if match is None:
            excluded.append(orig.abstract_id)
            continue
        instances.append(
            TrainingTitle(orig.abstract_id, orig.text, orig.label, provenance="original")
        )
        instances.append(
            TrainingTitle(match.abstract_id, match.text, match.assigned_label, provenance="pseudo")
        )
    return MergeReport(instances=instances, excluded_abstracts=excluded, rejected=rejected)


# ── ingestion / emission ─────────────────────────────────────────────────────


def load_generated_titles(path: str | Path) -> list[GeneratedTitle]:
    """JSONL of {abstract_id, constraint, text[, assigned_label]}."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(
                    GeneratedTitle(
                        abstract_id=str(obj["abstract_id"]),
                        constraint=int(obj["constraint"]),
                        text=str(obj["text"]),
                        assigned_label=(
                            None if obj.get("assigned_label") is None else int(obj["assigned_label"])
                        ),
                    )
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed generated title ({exc})") from exc
    return out


def attach_labels(
    generated: Sequence[GeneratedTitle], labels: dict[tuple[str, int], int]
) -> list[GeneratedTitle]:
    """Join classifier labels keyed by (abstract_id, constraint)."""
    out = []
    for g in generated:
        key = (g.abstract_id, g.constraint)
        if key not in labels:
            raise DataFormatError(f"no classifier label for {key}")
        out.append(GeneratedTitle(g.abstract_id, g.constraint, g.text, labels[key]))
    return out


def write_training_set(instances: Sequence[TrainingTitle], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_dict(), ensure_ascii=False) + "\n")
