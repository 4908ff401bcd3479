"""Correlation and aggregation primitives shared by the evaluation harness.

Coefficients follow the standard definitions; the relative-ranking tau uses
the WMT-style rule where a metric tie on a judged pair counts as discordant.
That rule, like every other formula variant, is pinned in the run manifest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import UndefinedStatisticError

WMT_TAU_TIE_RULE = "metric-tie-counts-as-discordant"


@dataclass(frozen=True)
class SegmentScorePair:
    abstract_id: str
    candidate_id: str
    metric_score: float
    human_score: float


@dataclass
class CorrelationReport:
    level: str  # "System" | "Segment"
    coefficient: str  # "Pearson" | "Spearman" | "KendallWMT"
    value: float | None
    n: int
    per_split: list[float] | None = None

    def summary(self) -> str:
        if self.per_split:
            mean, std = multi_split_summary(self.per_split)
            return f"{self.level}-level {self.coefficient}: {format_mean_std(mean, std)} (n={self.n})"
        return f"{self.level}-level {self.coefficient}: {self.value:.3f} (n={self.n})"


def _check_xy(x: Sequence[float], y: Sequence[float]) -> None:
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 3:
        raise UndefinedStatisticError("correlation needs at least 3 points")


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    _check_xy(x, y)
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        raise UndefinedStatisticError("pearson undefined for zero-variance input")
    return sxy / math.sqrt(sxx * syy)


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks with ties replaced by the mean of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation of tie-corrected (average) ranks."""
    _check_xy(x, y)
    return pearson(average_ranks(x), average_ranks(y))


def kendall_wmt_tau(judgments: Iterable, metric_scores: Mapping[str, float]) -> float:
    """Relative-ranking tau: (concordant - discordant) / total.

    A judgment is concordant iff the metric scores the better title strictly
    higher than the worse one; metric ties count as discordant.
    """
    concordant = 0
    total = 0
    for j in judgments:
        better = metric_scores[j.better_candidate_id]
        worse = metric_scores[j.worse_candidate_id]
        total += 1
        if better > worse:
            concordant += 1
    if total == 0:
        raise UndefinedStatisticError("tau undefined without judgments")
    return (2 * concordant - total) / total


@dataclass
class SystemLevelReport:
    mean_human: dict[str, float]
    mean_metric: dict[str, float]
    pearson_r: float | None
    spearman_rho: float | None
    n_systems: int


def system_level(pairs_by_system: Mapping[str, Sequence[SegmentScorePair]]) -> SystemLevelReport:
    """Unweighted per-system means plus their correlation across systems.

    With fewer than 3 systems only the means are reported.
    """
    mean_human: dict[str, float] = {}
    mean_metric: dict[str, float] = {}
    for system, pairs in pairs_by_system.items():
        if not pairs:
            continue
        mean_human[system] = math.fsum(p.human_score for p in pairs) / len(pairs)
        mean_metric[system] = math.fsum(p.metric_score for p in pairs) / len(pairs)
    systems = sorted(mean_human)
    r = rho = None
    if len(systems) >= 3:
        h = [mean_human[s] for s in systems]
        m = [mean_metric[s] for s in systems]
        r = pearson(m, h)
        rho = spearman(m, h)
    return SystemLevelReport(mean_human, mean_metric, r, rho, len(systems))


def multi_split_summary(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation over per-split values."""
    if len(values) < 2:
        raise ValueError("multi_split_summary needs at least 2 splits")
    if len(set(values)) == 1:
        return values[0], 0.0
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def format_mean_std(mean: float, std: float, mean_decimals: int = 3, std_decimals: int = 2) -> str:
    return f"{mean:.{mean_decimals}f}±{std:.{std_decimals}f}"


# ── report tables ────────────────────────────────────────────────────────────


def render_system_table(
    rows: Sequence[Mapping[str, object]],
    sort_by: str = "bws",
    descending: bool = True,
) -> str:
    """Fixed-width text table of per-system values, sorted by one column.

    Every row must share the same keys; the 'system' column leads.
    """
    if not rows:
        return "(no systems)\n"
    cols = ["system"] + [k for k in rows[0] if k != "system"]
    ordered = sorted(rows, key=lambda r: float(r[sort_by]), reverse=descending)

    def fmt(v: object) -> str:
        return f"{v:.3f}" if isinstance(v, float) else str(v)

    cells = [[fmt(r[c]) for c in cols] for r in ordered]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def system_table_csv(rows: Sequence[Mapping[str, object]], sort_by: str = "bws", descending: bool = True) -> str:
    if not rows:
        return ""
    cols = ["system"] + [k for k in rows[0] if k != "system"]
    ordered = sorted(rows, key=lambda r: float(r[sort_by]), reverse=descending)
    out = [",".join(cols)]
    for r in ordered:
        out.append(",".join(str(r[c]) for c in cols))
    return "\n".join(out) + "\n"
