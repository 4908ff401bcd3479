"""Turn raw judgments into scores and report tables.

Best-worst selections become per-candidate scores
(times-best - times-worst) / annotators-for-that-instance, bounded in
[-1, 1]. Unequal score pairs within an abstract become relative-ranking
judgments consumed by metric training and by the segment-level tau.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .annotation import BwsSelection, Campaign, RankAnnotation, effective_state
from .errors import DataFormatError


@dataclass(frozen=True)
class BwsScore:
    instance_id: str
    candidate_id: str
    n_best: int
    n_worst: int
    n_annotators: int
    score: float


@dataclass(frozen=True)
class RelativeRankingJudgment:
    abstract_id: str
    better_candidate_id: str
    worse_candidate_id: str
    score_diff: float

    def __post_init__(self):
        if not self.score_diff > 0:
            raise DataFormatError(
                f"score_diff must be positive, got {self.score_diff} for pair "
                f"({self.better_candidate_id}, {self.worse_candidate_id})"
            )

    def to_dict(self) -> dict:
        return {
            "abstract_id": self.abstract_id,
            "better_candidate_id": self.better_candidate_id,
            "worse_candidate_id": self.worse_candidate_id,
            "score_diff": self.score_diff,
        }


@dataclass
class BwsResult:
    scores: list[BwsScore]
    excluded_instances: list[str] = field(default_factory=list)

    def by_candidate(self) -> dict[str, BwsScore]:
        return {s.candidate_id: s for s in self.scores}


def bws_scores(campaign: Campaign, judgments: Iterable[BwsSelection]) -> BwsResult:
    """Score every (instance, candidate) from the effective judgments.

    Instances judged by fewer annotators than the campaign minimum are
    excluded and reported.
    """
    by_instance: dict[str, list[BwsSelection]] = {}
    for j in effective_state(judgments).values():
        by_instance.setdefault(j.instance_id, []).append(j)

    scores: list[BwsScore] = []
    excluded: list[str] = []
    for inst in campaign.instances:
        selections = by_instance.get(inst.id, [])
        if len(selections) < campaign.min_annotators_per_instance:
            excluded.append(inst.id)
            continue
        n_annotators = len(selections)
        for cand in inst.candidates:
            n_best = sum(1 for s in selections if cand.candidate_id in s.best)
            n_worst = sum(1 for s in selections if cand.candidate_id in s.worst)
            scores.append(
                BwsScore(
                    instance_id=inst.id,
                    candidate_id=cand.candidate_id,
                    n_best=n_best,
                    n_worst=n_worst,
                    n_annotators=n_annotators,
                    score=(n_best - n_worst) / n_annotators,
                )
            )
    return BwsResult(scores=scores, excluded_instances=excluded)


def system_mean_scores(campaign: Campaign, result: BwsResult) -> dict[str, float]:
    """Unweighted per-system mean of the instance-level scores."""
    system_of = {
        c.candidate_id: c.system for inst in campaign.instances for c in inst.candidates
    }
    sums: dict[str, list[float]] = {}
    for s in result.scores:
        sums.setdefault(system_of[s.candidate_id], []).append(s.score)
    return {sys: sum(v) / len(v) for sys, v in sorted(sums.items())}


def to_relative_ranking(
    scores: Sequence[BwsScore],
    abstract_of: Mapping[str, str] | None = None,
) -> list[RelativeRankingJudgment]:
    """One better/worse judgment per unordered candidate pair with unequal
    scores within an abstract; ties yield none.

    abstract_of maps instance ids to abstract ids; by default the instance
    id doubles as the abstract id.
    """
    groups: dict[str, list[BwsScore]] = {}
    for s in scores:
        abstract = abstract_of[s.instance_id] if abstract_of else s.instance_id
        groups.setdefault(abstract, []).append(s)

    judgments = []
    for abstract in sorted(groups):
        for a, b in itertools.combinations(groups[abstract], 2):
            if a.score == b.score:
                continue
            better, worse = (a, b) if a.score > b.score else (b, a)
            judgments.append(
                RelativeRankingJudgment(
                    abstract_id=abstract,
                    better_candidate_id=better.candidate_id,
                    worse_candidate_id=worse.candidate_id,
                    score_diff=better.score - worse.score,
                )
            )
    return judgments


# ── ranking campaigns ────────────────────────────────────────────────────────


@dataclass
class AverageRankTable:
    # (system, criterion, group) -> mean assigned rank; group "" = ungrouped
    means: dict[tuple[str, str, str], float]
    omitted_systems: list[str] = field(default_factory=list)


def average_rank(
    campaign: Campaign,
    judgments: Iterable[RankAnnotation],
    group_of: Mapping[str, str] | None = None,
) -> AverageRankTable:
    """Mean assigned rank per system and criterion; smaller = better.

    group_of optionally buckets instances (e.g. by the original title's
    humor label) into separate columns. Systems present in the campaign but
    never ranked are omitted and reported.
    """
    system_of = {
        c.candidate_id: c.system for inst in campaign.instances for c in inst.candidates
    }
    acc: dict[tuple[str, str, str], list[int]] = {}
    for j in effective_state(judgments).values():
        group = group_of.get(j.instance_id, "") if group_of else ""
        for cand_id, rank in j.rank_of.items():
            acc.setdefault((system_of[cand_id], j.criterion, group), []).append(rank)

    means = {key: sum(v) / len(v) for key, v in sorted(acc.items())}
    ranked_systems = {key[0] for key in means}
    omitted = sorted(set(system_of.values()) - ranked_systems)
    return AverageRankTable(means=means, omitted_systems=omitted)


def render_average_rank_table(
    means: Mapping[tuple[str, str, str], float],
    decimals: int = 2,
) -> str:
    """Text table with systems as rows and (group, criterion) columns."""
    systems = sorted({k[0] for k in means})
    columns = sorted({(k[2], k[1]) for k in means})
    header = ["system"] + [f"{g or 'all'}/{c}" for g, c in columns]
    lines = ["  ".join(header)]
    for sys_name in systems:
        row = [sys_name]
        for g, c in columns:
            v = means.get((sys_name, c, g))
            row.append("-" if v is None else f"{v:.{decimals}f}")
        lines.append("  ".join(row))
    return "\n".join(lines) + "\n"


# ── best/worst distribution ──────────────────────────────────────────────────


@dataclass
class DistributionReport:
    best_share: dict[str, float]
    worst_share: dict[str, float]
    n_best_picks: int
    n_worst_picks: int

    def render(self) -> str:
        systems = sorted(set(self.best_share) | set(self.worst_share))
        lines = ["system  best%  worst%"]
        for s in systems:
            lines.append(
                f"{s}  {100 * self.best_share.get(s, 0.0):.1f}  "
                f"{100 * self.worst_share.get(s, 0.0):.1f}"
            )
        return "\n".join(lines) + "\n"


def distribution_from_counts(
    best_counts: Mapping[str, int], worst_counts: Mapping[str, int]
) -> DistributionReport:
    n_best = sum(best_counts.values())
    n_worst = sum(worst_counts.values())
    return DistributionReport(
        best_share={s: c / n_best for s, c in sorted(best_counts.items())},
        worst_share={s: c / n_worst for s, c in sorted(worst_counts.items())},
        n_best_picks=n_best,
        n_worst_picks=n_worst,
    )


def best_worst_distribution(campaign: Campaign, judgments: Iterable[BwsSelection]) -> DistributionReport:
    """Share of best picks and of worst picks attributed to each system."""
    system_of = {
        c.candidate_id: c.system for inst in campaign.instances for c in inst.candidates
    }
    best_counts: dict[str, int] = {}
    worst_counts: dict[str, int] = {}
    for j in effective_state(judgments).values():
        for cid in j.best:
            best_counts[system_of[cid]] = best_counts.get(system_of[cid], 0) + 1
        for cid in j.worst:
            worst_counts[system_of[cid]] = worst_counts.get(system_of[cid], 0) + 1
    return distribution_from_counts(best_counts, worst_counts)


# ── exports ──────────────────────────────────────────────────────────────────


def scores_csv(campaign: Campaign, result: BwsResult) -> str:
    system_of = {
        c.candidate_id: c.system for inst in campaign.instances for c in inst.candidates
    }
    abstract_of = {inst.id: inst.abstract_id for inst in campaign.instances}
    rows = ["instance_id,abstract_id,candidate_id,system_tag,n_best,n_worst,n_annotators,bws"]
    for s in result.scores:
        rows.append(
            f"{s.instance_id},{abstract_of[s.instance_id]},{s.candidate_id},"
            f"{system_of[s.candidate_id]},{s.n_best},{s.n_worst},{s.n_annotators},{s.score!r}"
        )
    return "\n".join(rows) + "\n"


def write_relative_ranking_jsonl(judgments: Sequence[RelativeRankingJudgment], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for j in judgments:
            fh.write(json.dumps(j.to_dict()) + "\n")


def load_relative_ranking_jsonl(path) -> list[RelativeRankingJudgment]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            out.append(
                RelativeRankingJudgment(
                    abstract_id=obj["abstract_id"],
                    better_candidate_id=obj["better_candidate_id"],
                    worse_candidate_id=obj["worse_candidate_id"],
                    score_diff=obj["score_diff"],
                )
            )
    return out
