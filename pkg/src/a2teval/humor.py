"""Humor-label aggregation and evaluation.

Titles carry three-way labels (0 = not funny, 1 = medium funny, 2 = funny).
A pool of K per-classifier labelings is combined either by majority vote
(not-funny wins on a strict majority of 0s, otherwise funny iff funny votes
outnumber medium votes) or by thresholding the sum of label values at i
(medium) and j (funny). The threshold pair is picked by exhaustive grid
search on macro F1.
"""

from __future__ import annotations

import csv
import io
import random
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DataFormatError, InfeasibleSpecError

THREE_WAY_CLASSES = (0, 1, 2)
BINARY_CLASSES = (0, 1)


def merge_annotations(label_a: int, label_b: int) -> int:
    """Resolve a doubly-annotated title to the maximal label value."""
    for lab in (label_a, label_b):
        if lab not in THREE_WAY_CLASSES:
            raise ValueError(f"labels must be in {THREE_WAY_CLASSES}, got {lab!r}")
    return max(label_a, label_b)


def collapse_binary(labels: Sequence[int]) -> list[int]:
    """Three-way to binary: medium funny and funny merge into 1."""
    return [1 if lab in (1, 2) else 0 for lab in labels]


@dataclass
class LabelMatrix:
    classifier_ids: list[str]
    title_ids: list[str]
    labels: list[list[int]]  # K rows (classifiers) x N columns (titles)

    def __post_init__(self):
        k, n = len(self.classifier_ids), len(self.title_ids)
        if len(self.labels) != k or any(len(row) != n for row in self.labels):
            raise DataFormatError(f"label matrix must be {k}x{n}")
        for row in self.labels:
            for v in row:
                if v not in THREE_WAY_CLASSES:
                    raise DataFormatError(f"label values must be in {THREE_WAY_CLASSES}, got {v!r}")

    @property
    def n_classifiers(self) -> int:
        return len(self.classifier_ids)

    @property
    def n_titles(self) -> int:
        return len(self.title_ids)

    def column(self, j: int) -> list[int]:
        return [row[j] for row in self.labels]

    def sums(self) -> list[int]:
        return [sum(self.column(j)) for j in range(self.n_titles)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["classifier_id"] + self.title_ids)
        for cid, row in zip(self.classifier_ids, self.labels):
            writer.writerow([cid] + list(row))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "LabelMatrix":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if not header or header[0] != "classifier_id":
            raise DataFormatError("label matrix CSV must start with a classifier_id header")
        title_ids = header[1:]
        classifier_ids, labels = [], []
        for row in reader:
            if not row:
                continue
            classifier_ids.append(row[0])
            try:
                labels.append([int(v) for v in row[1:]])
            except ValueError as exc:
                raise DataFormatError(f"classifier {row[0]!r}: non-integer label ({exc})") from exc
        return cls(classifier_ids=classifier_ids, title_ids=title_ids, labels=labels)


# ── balanced training splits ─────────────────────────────────────────────────


@dataclass(frozen=True)
class BalancedSplitSpec:
    """Per-split class counts for ensemble training.

    Stage 1 uses 100 funny-or-medium + 200 not-funny per train set with the
    held-out funny titles (plus as many not-funny) as dev; stage 2 scales to
    400 + 800 under the same dev rule.
    """

    n_splits: int = 11
    train_funny_or_medium: int = 100
    train_not_funny: int = 200
    seed: int = 0


STAGE1_SPLIT_SPEC = BalancedSplitSpec(n_splits=11, train_funny_or_medium=100, train_not_funny=200)
STAGE2_SPLIT_SPEC = BalancedSplitSpec(n_splits=11, train_funny_or_medium=400, train_not_funny=800)


@dataclass
class BalancedSplit:
    train: list[str]
    dev: list[str]


def make_balanced_splits(
    pool: Sequence[tuple[str, int]], spec: BalancedSplitSpec
) -> list[BalancedSplit]:
    """Randomly draw n_splits balanced train sets from a labeled title pool.

    pool holds (title_id, three-way label) pairs. Each split's train set has
    exactly the configured class counts; its dev set holds every funny-or-
    medium title left out of that split's train plus an equal number of
    left-out not-funny titles. All draws come from one seeded stream.
    """
    funny = [tid for tid, lab in pool if lab in (1, 2)]
    not_funny = [tid for tid, lab in pool if lab == 0]
    if len(funny) < spec.train_funny_or_medium:
        raise InfeasibleSpecError(
            f"need {spec.train_funny_or_medium} funny-or-medium titles, pool has {len(funny)}"
        )
    dev_funny_count = len(funny) - spec.train_funny_or_medium
    need_nf = spec.train_not_funny + dev_funny_count
    if len(not_funny) < need_nf:
        raise InfeasibleSpecError(
            f"need {need_nf} not-funny titles (train {spec.train_not_funny} "
            f"+ dev {dev_funny_count}), pool has {len(not_funny)}"
        )

    rng = random.Random(spec.seed)
    splits = []
    for _ in range(spec.n_splits):
        train_f = rng.sample(funny, spec.train_funny_or_medium)
        train_nf = rng.sample(not_funny, spec.train_not_funny)
        dev_f = [t for t in funny if t not in set(train_f)]
        remaining_nf = [t for t in not_funny if t not in set(train_nf)]
        dev_nf = rng.sample(remaining_nf, len(dev_f))
        splits.append(BalancedSplit(train=train_f + train_nf, dev=dev_f + dev_nf))
    return splits


# ── ensemble aggregation ─────────────────────────────────────────────────────


def ens_mv(matrix: LabelMatrix) -> list[int]:
    """Majority-vote ensemble label per title."""
    k = matrix.n_classifiers
    if k % 2 == 0:
        warnings.warn(f"majority vote with an even classifier count ({k}) can be ambiguous")
    majority = (k + 2) // 2  # strict majority
    out = []
    for j in range(matrix.n_titles):
        col = matrix.column(j)
        n0 = col.count(0)
        if n0 >= majority:
            out.append(0)
        else:
            out.append(2 if col.count(2) > col.count(1) else 1)
    return out


def ens_sum(matrix: LabelMatrix, i: int, j: int) -> list[int]:
    """Label-sum ensemble: sum < i -> 0, i <= sum < j -> 1, sum >= j -> 2."""
    upper = 2 * matrix.n_classifiers
    if not 0 <= i < j <= upper:
        raise ValueError(f"thresholds must satisfy 0 <= i < j <= {upper}, got ({i}, {j})")
    out = []
    for total in matrix.sums():
        if total < i:
            out.append(0)
        elif total < j:
            out.append(1)
        else:
            out.append(2)
    return out


def macro_f1(pred: Sequence[int], gold: Sequence[int], mode: str = "ThreeWay") -> float:
    """Unweighted mean of per-class F1 over the mode's full class set.

    A class absent from both pred and gold still counts with F1 = 0, which
    matters on tiny label sets.
    """
    if len(pred) != len(gold):
        raise ValueError("pred and gold must be aligned")
    if not pred:
        raise ValueError("macro_f1 needs at least one example")
    if mode == "Binary":
        pred = collapse_binary(pred)
        gold = collapse_binary(gold)
        classes = BINARY_CLASSES
    elif mode == "ThreeWay":
        classes = THREE_WAY_CLASSES
    else:
        raise ValueError(f"unknown mode {mode!r}")

    scores = []
    for c in classes:
        tp = sum(1 for p, g in zip(pred, gold) if p == c and g == c)
        fp = sum(1 for p, g in zip(pred, gold) if p == c and g != c)
        fn = sum(1 for p, g in zip(pred, gold) if p != c and g == c)
        if tp == 0:
            scores.append(0.0)
            continue
        precision = tp / (tp + fp)
        recall = tp / (tp + fn)
        scores.append(2 * precision * recall / (precision + recall))
    return sum(scores) / len(scores)


def search_thresholds(
    matrix: LabelMatrix, gold: Sequence[int], mode: str = "ThreeWay"
) -> tuple[int, int, float]:
    """Exhaustive (i, j) grid search maximizing macro F1.

    Ties break toward the smaller i, then the smaller j, so the result is
    deterministic.
    """
    if len(gold) != matrix.n_titles:
        raise ValueError("gold labels must align with the matrix titles")
    if len(set(gold)) == 1:
        warnings.warn("single-class gold labels: the objective is degenerate")
    upper = 2 * matrix.n_classifiers
    sums = matrix.sums()
    best = None
    for i in range(0, upper):
        for j in range(i + 1, upper + 1):
            pred = [0 if s < i else (1 if s < j else 2) for s in sums]
            score = macro_f1(pred, gold, mode=mode)
            if best is None or score > best[2]:
                best = (i, j, score)
    assert best is not None
    return best


# ── generation-control metrics ───────────────────────────────────────────────


@dataclass
class ControlMetrics:
    f1_macro: float
    acc_funny: float
    acc_not_funny: float
    ratio_same: float
    excluded_from_ratio: list[str] = field(default_factory=list)

    def render(self) -> str:
        return (
            f"F1_macro {self.f1_macro:.3f} | "
            f"ACC_notFUNNY {100 * self.acc_not_funny:.1f}% | "
            f"ACC_FUNNY {100 * self.acc_funny:.1f}% | "
            f"Ratio_SAME {100 * self.ratio_same:.1f}%"
        )


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def generation_control_metrics(generated: Iterable) -> ControlMetrics:
    """How well constrained generations hit their humor target.

    `generated` yields records with abstract_id, constraint (0/1),
    assigned_label (0/1) and text attributes. Accuracy is per constraint
    side; Ratio_SAME is the fraction of abstracts whose two constraint
    variants are whitespace-identical (lower is better). Abstracts missing
    a variant are excluded from the ratio and reported.
    """
    records = list(generated)
    if not records:
        raise ValueError("no generations to evaluate")
    constraints = [r.constraint for r in records]
    assigned = [r.assigned_label for r in records]
    f1 = macro_f1(assigned, constraints, mode="Binary")

    def side_acc(side: int) -> float:
        member = [(c, a) for c, a in zip(constraints, assigned) if c == side]
        if not member:
            return float("nan")
        return sum(1 for c, a in member if a == c) / len(member)

    variants: dict[str, dict[int, str]] = {}
    for r in records:
        variants.setdefault(r.abstract_id, {})[r.constraint] = _normalize_ws(r.text)
    excluded = sorted(aid for aid, v in variants.items() if set(v) != {0, 1})
    comparable = {aid: v for aid, v in variants.items() if set(v) == {0, 1}}
    if comparable:
        same = sum(1 for v in comparable.values() if v[0] == v[1])
        ratio = same / len(comparable)
    else:
        ratio = float("nan")
    return ControlMetrics(
        f1_macro=f1,
        acc_funny=side_acc(1),
        acc_not_funny=side_acc(0),
        ratio_same=ratio,
        excluded_from_ratio=excluded,
    )


# ── optional built-in baseline classifier ────────────────────────────────────


class BaselineClassifier:
    """Regularized linear classifier over title embeddings.

    Exists so the ensemble pipeline can run end-to-end without external
    models; per-classifier label files remain the primary ingestion path
    and nothing downstream depends on this baseline's accuracy.
    """

    def __init__(self, model):
        self._model = model

    def predict(self, embeddings) -> list[int]:
        return [int(v) for v in self._model.predict(embeddings)]


def train_baseline_classifier(embeddings, labels: Sequence[int], l2: float = 1.0, seed: int = 0) -> BaselineClassifier:
    from sklearn.linear_model import LogisticRegression

    clf = LogisticRegression(C=1.0 / l2, max_iter=2000, random_state=seed)
    clf.fit(embeddings, list(labels))
    return BaselineClassifier(clf)
