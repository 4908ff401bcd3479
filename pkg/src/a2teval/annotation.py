"""Annotation campaigns and judgments.

Three task kinds are supported: best-worst selection (pick the 2 best and
2 worst of 6 titles), five-title ranking with ties, and pairwise choice
with an explicit "equal" option. Judgments are validated at write time and
persisted through an append-only log (see storage.py); the effective
campaign state is a pure function of that log, with a resubmission by the
same annotator replacing the earlier judgment.

System tags are never exposed to annotators: presentation orders are
pre-generated per annotator from the campaign seed, and the annotator
export view strips the tag column.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from . import stats
from .errors import (
    DataFormatError,
    InfeasibleSpecError,
    JudgmentValidationError,
    UndefinedStatisticError,
)

ARITY = {"BestWorst": 6, "Ranking": 5, "Pairwise": 2}


class CampaignKind(str, Enum):
    BEST_WORST = "BestWorst"
    RANKING = "Ranking"
    PAIRWISE = "Pairwise"


class PairOption(str, Enum):
    FIRST = "First"
    SECOND = "Second"
    EQUAL = "Equal"


@dataclass(frozen=True)
class Candidate:
    candidate_id: str
    title: str
    system: str  # hidden from annotators


@dataclass(frozen=True)
class TaskInstance:
    id: str
    abstract_id: str
    candidates: tuple[Candidate, ...]
    abstract_text: str = ""

    def candidate_ids(self) -> set[str]:
        return {c.candidate_id for c in self.candidates}


@dataclass(frozen=True)
class AssignmentPolicy:
    """How instances are handed to annotators.

    per_instance annotators are chosen for every instance, either by cycling
    through the annotator list (round_robin) or by seeded sampling (random).
    """

    annotators: tuple[str, ...]
    per_instance: int = 2
    strategy: str = "round_robin"  # or "random"


@dataclass
class Campaign:
    id: str
    kind: CampaignKind
    instances: list[TaskInstance]
    min_annotators_per_instance: int = 2
    max_annotators_per_instance: int = 5
    seed: int = 0
    # criteria collected per Ranking task; other kinds ignore this
    ranking_criteria: tuple[str, ...] = ("quality", "humor")
    # annotator -> instance ids, in the annotator's working order
    assignments: dict[str, list[str]] = field(default_factory=dict)
    # (annotator, instance) -> candidate ids in presentation order
    presentation: dict[tuple[str, str], list[str]] = field(default_factory=dict)

    def instance(self, instance_id: str) -> TaskInstance:
        for inst in self.instances:
            if inst.id == instance_id:
                return inst
        raise KeyError(f"unknown instance {instance_id!r}")

    def annotators_for(self, instance_id: str) -> list[str]:
        return [a for a, ids in sorted(self.assignments.items()) if instance_id in ids]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "min_annotators_per_instance": self.min_annotators_per_instance,
            "max_annotators_per_instance": self.max_annotators_per_instance,
            "seed": self.seed,
            "ranking_criteria": list(self.ranking_criteria),
            "instances": [
                {
                    "id": inst.id,
                    "abstract_id": inst.abstract_id,
                    "abstract_text": inst.abstract_text,
                    "candidates": [
                        {"candidate_id": c.candidate_id, "title": c.title, "system": c.system}
                        for c in inst.candidates
                    ],
                }
                for inst in self.instances
            ],
            "assignments": self.assignments,
            "presentation": {f"{a}|{i}": order for (a, i), order in self.presentation.items()},
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Campaign":
        instances = [
            TaskInstance(
                id=inst["id"],
                abstract_id=inst["abstract_id"],
                abstract_text=inst.get("abstract_text", ""),
                candidates=tuple(
                    Candidate(c["candidate_id"], c["title"], c["system"])
                    for c in inst["candidates"]
                ),
            )
            for inst in obj["instances"]
        ]
        presentation = {}
        for key, order in obj.get("presentation", {}).items():
            annotator, instance_id = key.split("|", 1)
            presentation[(annotator, instance_id)] = list(order)
        return cls(
            id=obj["id"],
            kind=CampaignKind(obj["kind"]),
            instances=instances,
            min_annotators_per_instance=obj.get("min_annotators_per_instance", 2),
            max_annotators_per_instance=obj.get("max_annotators_per_instance", 5),
            seed=obj.get("seed", 0),
            ranking_criteria=tuple(obj.get("ranking_criteria", ("quality", "humor"))),
            assignments={a: list(ids) for a, ids in obj.get("assignments", {}).items()},
            presentation=presentation,
        )


# ── judgment types ───────────────────────────────────────────────────────────


@dataclass(frozen=True)
class BwsSelection:
    instance_id: str
    annotator_id: str
    best: frozenset[str]
    worst: frozenset[str]
    timestamp: float = 0.0

    kind = "BestWorst"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "instance_id": self.instance_id,
            "annotator_id": self.annotator_id,
            "best": sorted(self.best),
            "worst": sorted(self.worst),
            "timestamp": self.timestamp,
        }


@dataclass(frozen=True)
class RankAnnotation:
    """Competition-style ranking of an instance's candidates.

    Ties share a rank and the sequence stays tie-compressed: after a block
    of k candidates at rank r, the next distinct rank is r + k. The
    criterion distinguishes the two ranking dimensions collected per task
    (e.g. "quality" and "humor").
    """

    instance_id: str
    annotator_id: str
    rank_of: dict[str, int]
    criterion: str = "quality"
    timestamp: float = 0.0

    kind = "Ranking"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "instance_id": self.instance_id,
            "annotator_id": self.annotator_id,
            "rank_of": dict(sorted(self.rank_of.items())),
            "criterion": self.criterion,
            "timestamp": self.timestamp,
        }


@dataclass(frozen=True)
class PairChoice:
    instance_id: str
    annotator_id: str
    choice: PairOption
    timestamp: float = 0.0

    kind = "Pairwise"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "instance_id": self.instance_id,
            "annotator_id": self.annotator_id,
            "choice": self.choice.value,
            "timestamp": self.timestamp,
        }


Judgment = BwsSelection | RankAnnotation | PairChoice


def judgment_from_dict(obj: dict) -> Judgment:
    kind = obj.get("kind")
    if kind == "BestWorst":
        return BwsSelection(
            instance_id=obj["instance_id"],
            annotator_id=obj["annotator_id"],
            best=frozenset(obj["best"]),
            worst=frozenset(obj["worst"]),
            timestamp=obj.get("timestamp", 0.0),
        )
    if kind == "Ranking":
        return RankAnnotation(
            instance_id=obj["instance_id"],
            annotator_id=obj["annotator_id"],
            rank_of={k: int(v) for k, v in obj["rank_of"].items()},
            criterion=obj.get("criterion", "quality"),
            timestamp=obj.get("timestamp", 0.0),
        )
    if kind == "Pairwise":
        return PairChoice(
            instance_id=obj["instance_id"],
            annotator_id=obj["annotator_id"],
            choice=PairOption(obj["choice"]),
            timestamp=obj.get("timestamp", 0.0),
        )
    raise DataFormatError(f"unknown judgment kind {kind!r}")


# ── ranks ────────────────────────────────────────────────────────────────────


def is_tie_compressed(ranks: Sequence[int]) -> bool:
    """True iff the multiset of ranks is a valid competition ranking."""
    counts: dict[int, int] = {}
    for r in ranks:
        counts[r] = counts.get(r, 0) + 1
    expected = 1
    for r in sorted(counts):
        if r != expected:
            return False
        expected += counts[r]
    return True


def compress_ranks(values: Sequence[float]) -> list[int]:
    """Turn arbitrary scores (smaller = better) into competition ranks."""
    return [1 + sum(1 for w in values if w < v) for v in values]


# ── campaign creation ────────────────────────────────────────────────────────


def create_campaign(
    campaign_id: str,
    kind: CampaignKind | str,
    instances: Sequence[TaskInstance],
    policy: AssignmentPolicy,
    min_annotators: int = 2,
    max_annotators: int = 5,
    seed: int = 0,
    ranking_criteria: Sequence[str] = ("quality", "humor"),
) -> Campaign:
    """Validate instances against the task kind, assign annotators, and
    pre-generate per-annotator presentation orders from the seed."""
    kind = CampaignKind(kind)
    if min_annotators > max_annotators:
        raise ValueError("min_annotators must not exceed max_annotators")
    want = ARITY[kind.value]
    seen_ids: set[str] = set()
    for inst in instances:
        if inst.id in seen_ids:
            raise DataFormatError(f"duplicate instance id {inst.id!r}")
        seen_ids.add(inst.id)
        if len(inst.candidates) != want:
            raise DataFormatError(
                f"instance {inst.id!r}: {kind.value} tasks need exactly {want} "
                f"candidates, got {len(inst.candidates)}"
            )
        ids = [c.candidate_id for c in inst.candidates]
        if len(set(ids)) != len(ids):
            raise DataFormatError(f"instance {inst.id!r}: duplicate candidate ids")

    k = policy.per_instance
    if not min_annotators <= k <= max_annotators:
        raise ValueError(
            f"per_instance={k} outside [{min_annotators}, {max_annotators}]"
        )
    if k > len(policy.annotators):
        raise ValueError("not enough annotators for the per-instance count")

    assignments: dict[str, list[str]] = {a: [] for a in policy.annotators}
    rng = random.Random(seed)
    for idx, inst in enumerate(instances):
        if policy.strategy == "round_robin":
            chosen = [policy.annotators[(idx + j) % len(policy.annotators)] for j in range(k)]
        elif policy.strategy == "random":
            chosen = rng.sample(list(policy.annotators), k)
        else:
            raise ValueError(f"unknown assignment strategy {policy.strategy!r}")
        for a in chosen:
            assignments[a].append(inst.id)

    presentation: dict[tuple[str, str], list[str]] = {}
    for a in policy.annotators:
        for inst_id in assignments[a]:
            inst = next(i for i in instances if i.id == inst_id)
            order = [c.candidate_id for c in inst.candidates]
            random.Random(f"{seed}|{a}|{inst_id}").shuffle(order)
            presentation[(a, inst_id)] = order

    return Campaign(
        id=campaign_id,
        kind=kind,
        instances=list(instances),
        min_annotators_per_instance=min_annotators,
        max_annotators_per_instance=max_annotators,
        seed=seed,
        ranking_criteria=tuple(ranking_criteria),
        assignments=assignments,
        presentation=presentation,
    )


def add_annotators(
    campaign: Campaign,
    annotators: Sequence[str],
    per_instance_extra: int = 1,
    strategy: str = "round_robin",
) -> Campaign:
    """Assign extra annotators to every instance of an existing campaign.

    Used when annotator availability grows after launch (instances may end
    up with anywhere between the campaign minimum and maximum). New
    presentation orders derive from the campaign seed, so re-running is
    reproducible. Raises if any instance would exceed the maximum.
    """
    counts = {
        inst.id: sum(1 for ids in campaign.assignments.values() if inst.id in ids)
        for inst in campaign.instances
    }
    over = [
        iid
        for iid, n in counts.items()
        if n + per_instance_extra > campaign.max_annotators_per_instance
    ]
    if over:
        raise InfeasibleSpecError(
            f"instances {over[:5]} would exceed max_annotators_per_instance="
            f"{campaign.max_annotators_per_instance}"
        )
    assignments = {a: list(ids) for a, ids in campaign.assignments.items()}
    for a in annotators:
        assignments.setdefault(a, [])
    rng = random.Random(f"{campaign.seed}|assign|{','.join(sorted(annotators))}")
    presentation = dict(campaign.presentation)
    for idx, inst in enumerate(campaign.instances):
        eligible = [a for a in annotators if inst.id not in assignments[a]]
        if len(eligible) < per_instance_extra:
            raise InfeasibleSpecError(f"not enough new annotators for instance {inst.id!r}")
        if strategy == "round_robin":
            chosen = [eligible[(idx + j) % len(eligible)] for j in range(per_instance_extra)]
        elif strategy == "random":
            chosen = rng.sample(eligible, per_instance_extra)
        else:
            raise ValueError(f"unknown assignment strategy {strategy!r}")
        for a in chosen:
            assignments[a].append(inst.id)
            order = [c.candidate_id for c in inst.candidates]
            random.Random(f"{campaign.seed}|{a}|{inst.id}").shuffle(order)
            presentation[(a, inst.id)] = order
    return Campaign(
        id=campaign.id,
        kind=campaign.kind,
        instances=campaign.instances,
        min_annotators_per_instance=campaign.min_annotators_per_instance,
        max_annotators_per_instance=campaign.max_annotators_per_instance,
        seed=campaign.seed,
        ranking_criteria=campaign.ranking_criteria,
        assignments=assignments,
        presentation=presentation,
    )


# ── judgment validation and effective state ─────────────────────────────────


def validate_judgment(campaign: Campaign, judgment: Judgment) -> None:
    """Raise JudgmentValidationError unless the judgment is acceptable."""
    try:
        inst = campaign.instance(judgment.instance_id)
    except KeyError as exc:
        raise JudgmentValidationError(str(exc)) from exc
    assigned = campaign.assignments.get(judgment.annotator_id, [])
    if judgment.instance_id not in assigned:
        raise JudgmentValidationError(
            f"annotator {judgment.annotator_id!r} is not assigned to "
            f"instance {judgment.instance_id!r}"
        )
    cand_ids = inst.candidate_ids()

    if isinstance(judgment, BwsSelection):
        if campaign.kind != CampaignKind.BEST_WORST:
            raise JudgmentValidationError("best-worst judgment on a non-BestWorst campaign")
        if len(judgment.best) != 2 or len(judgment.worst) != 2:
            raise JudgmentValidationError("need exactly 2 best and 2 worst candidates")
        if judgment.best & judgment.worst:
            raise JudgmentValidationError("best and worst selections overlap")
        unknown = (judgment.best | judgment.worst) - cand_ids
        if unknown:
            raise JudgmentValidationError(f"unknown candidate ids {sorted(unknown)}")
    elif isinstance(judgment, RankAnnotation):
        if campaign.kind != CampaignKind.RANKING:
            raise JudgmentValidationError("ranking judgment on a non-Ranking campaign")
        if judgment.criterion not in campaign.ranking_criteria:
            raise JudgmentValidationError(
                f"unknown criterion {judgment.criterion!r}; this campaign collects "
                f"{list(campaign.ranking_criteria)}"
            )
        if set(judgment.rank_of) != cand_ids:
            raise JudgmentValidationError("every candidate must be ranked, no extras")
        ranks = list(judgment.rank_of.values())
        if any(r < 1 for r in ranks) or not is_tie_compressed(ranks):
            raise JudgmentValidationError(
                f"ranks must form a tie-compressed sequence starting at 1, got {sorted(ranks)}"
            )
    elif isinstance(judgment, PairChoice):
        if campaign.kind != CampaignKind.PAIRWISE:
            raise JudgmentValidationError("pairwise judgment on a non-Pairwise campaign")
    else:
        raise JudgmentValidationError(f"unsupported judgment type {type(judgment).__name__}")


def _state_key(judgment: Judgment) -> tuple:
    criterion = judgment.criterion if isinstance(judgment, RankAnnotation) else None
    return (judgment.instance_id, judgment.annotator_id, criterion)


def effective_state(entries: Iterable[Judgment]) -> dict[tuple, Judgment]:
    """Latest-wins reduction of a judgment sequence (log replay)."""
    state: dict[tuple, Judgment] = {}
    for j in entries:
        state[_state_key(j)] = j
    return state


def record_judgment(campaign: Campaign, judgment: Judgment, log) -> dict:
    """Validate and durably append a judgment; returns the stored receipt.

    `log` is any object with an append(dict) -> dict method (see
    storage.JudgmentLog). Resubmission by the same annotator for the same
    instance replaces the earlier judgment in the effective state while the
    log keeps both.
    """
    validate_judgment(campaign, judgment)
    entry = log.append(judgment.to_dict())
    return {
        "seq": entry["seq"],
        "instance_id": judgment.instance_id,
        "annotator_id": judgment.annotator_id,
    }


# ── agreement statistics ─────────────────────────────────────────────────────


@dataclass
class AgreementReport:
    per_pair: dict[tuple[str, str], float]
    mean: float | None
    skipped: list[str] = field(default_factory=list)


def percentage_agreement(judgments: Iterable[BwsSelection]) -> AgreementReport:
    """Mean percentage agreement over annotator pairs for best-worst tasks.

    Per co-annotated instance a pair agrees on (|shared best| +
    |shared worst|) / 4; pair scores average over their shared instances,
    the overall mean averages over pairs. Pairs without shared instances
    are excluded.
    """
    by_instance: dict[str, dict[str, BwsSelection]] = {}
    for j in effective_state(judgments).values():
        by_instance.setdefault(j.instance_id, {})[j.annotator_id] = j

    pair_scores: dict[tuple[str, str], list[float]] = {}
    for anns in by_instance.values():
        for a, b in itertools.combinations(sorted(anns), 2):
            ja, jb = anns[a], anns[b]
            agreement = (len(ja.best & jb.best) + len(ja.worst & jb.worst)) / 4
            pair_scores.setdefault((a, b), []).append(agreement)

    per_pair = {pair: sum(vals) / len(vals) for pair, vals in pair_scores.items()}
    mean = sum(per_pair.values()) / len(per_pair) if per_pair else None
    return AgreementReport(per_pair=per_pair, mean=mean)


def cohen_kappa(labels_a: Sequence, labels_b: Sequence, categories: Sequence | None = None) -> float:
    """Cohen's kappa with expected agreement from marginal products."""
    if len(labels_a) != len(labels_b):
        raise ValueError("label lists must be aligned and equal-length")
    if not labels_a:
        raise ValueError("empty label lists")
    if categories is not None:
        cats = set(categories)
        bad = (set(labels_a) | set(labels_b)) - cats
        if bad:
            raise ValueError(f"labels outside the category set: {sorted(bad)}")
    n = len(labels_a)
    p_o = sum(1 for x, y in zip(labels_a, labels_b) if x == y) / n
    cats = sorted(set(labels_a) | set(labels_b), key=repr)
    p_e = sum(
        (sum(1 for x in labels_a if x == c) / n) * (sum(1 for y in labels_b if y == c) / n)
        for c in cats
    )
    if p_e == 1.0:
        if p_o == 1.0:
            return 1.0
        raise UndefinedStatisticError("kappa undefined: expected agreement is 1 but observed is not")
    return (p_o - p_e) / (1 - p_e)


def pairwise_rank_correlation(judgments: Iterable[RankAnnotation]) -> AgreementReport:
    """Mean Spearman over annotator pairs on jointly ranked instances.

    Rank vectors use average-rank tie correction. Instances where either
    annotator gave a zero-variance (all-tied) ranking are skipped for that
    pair and reported.
    """
    by_task: dict[tuple[str, str], dict[str, RankAnnotation]] = {}
    for j in effective_state(judgments).values():
        by_task.setdefault((j.instance_id, j.criterion), {})[j.annotator_id] = j

    pair_scores: dict[tuple[str, str], list[float]] = {}
    skipped: list[str] = []
    for (inst_id, criterion), anns in sorted(by_task.items()):
        for a, b in itertools.combinations(sorted(anns), 2):
            cands = sorted(anns[a].rank_of)
            ra = [anns[a].rank_of[c] for c in cands]
            rb = [anns[b].rank_of[c] for c in cands]
            try:
                rho = stats.spearman(ra, rb)
            except UndefinedStatisticError:
                skipped.append(f"{inst_id}/{criterion}: zero-variance ranking for pair ({a}, {b})")
                continue
            pair_scores.setdefault((a, b), []).append(rho)

    per_pair = {pair: sum(vals) / len(vals) for pair, vals in pair_scores.items()}
    mean = sum(per_pair.values()) / len(per_pair) if per_pair else None
    return AgreementReport(per_pair=per_pair, mean=mean, skipped=skipped)


# ── export ───────────────────────────────────────────────────────────────────

EXPORT_COLUMNS = [
    "instance_id",
    "annotator_id",
    "candidate_id",
    "system_tag",
    "best",
    "worst",
    "rank",
    "criterion",
    "choice",
]


def export_campaign_csv(campaign: Campaign, judgments: Iterable[Judgment], view: str = "analysis") -> str:
    """CSV export of the effective judgments, one row per (judgment,
    candidate). view="annotator" blanks the system_tag column."""
    if view not in ("annotator", "analysis"):
        raise ValueError(f"unknown export view {view!r}")
    rows = [",".join(EXPORT_COLUMNS)]
    state = effective_state(judgments)
    for key in sorted(state, key=repr):
        j = state[key]
        inst = campaign.instance(j.instance_id)
        for pos, cand in enumerate(inst.candidates):
            tag = cand.system if view == "analysis" else ""
            best = worst = rank = criterion = choice = ""
            if isinstance(j, BwsSelection):
                best = "1" if cand.candidate_id in j.best else "0"
                worst = "1" if cand.candidate_id in j.worst else "0"
            elif isinstance(j, RankAnnotation):
                rank = str(j.rank_of[cand.candidate_id])
                criterion = j.criterion
            elif isinstance(j, PairChoice):
                chosen = {"First": 0, "Second": 1, "Equal": -1}[j.choice.value]
                choice = "Equal" if chosen == -1 else ("1" if pos == chosen else "0")
            rows.append(
                ",".join(
                    [j.instance_id, j.annotator_id, cand.candidate_id, tag, best, worst, rank, criterion, choice]
                )
            )
    return "\n".join(rows) + "\n"
