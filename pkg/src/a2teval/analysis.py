"""Descriptive title/abstract analyses: content-word overlap, title length,
and windowed edit-distance similarity.

The edit-distance overlap has no canonical definition; this module pins a
token-level one (best normalized Levenshtein over abstract windows within
two tokens of the title length) and stamps that variant into every report
header so numbers stay comparable across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import mean, median
from typing import Iterable, Mapping, Sequence

from .corpus import content_words, load_stopwords, tokenize
from .errors import UndefinedStatisticError

EDIT_OVERLAP_VARIANT = "token-levenshtein-window(len±2)"


def lexical_overlap(title: str, abstract: str, stopword_list=None) -> float:
    """Fraction of the title's content-word types present in the abstract."""
    if stopword_list is None:
        stopword_list = load_stopwords()
    title_words = set(content_words(title, stopword_list))
    if not title_words:
        raise UndefinedStatisticError("title has no content words")
    abstract_words = set(content_words(abstract, stopword_list))
    return len(title_words & abstract_words) / len(title_words)


def length_stats(titles: Iterable[str]) -> tuple[float, float]:
    """Mean and median token count."""
    counts = [len(tokenize(t)) for t in titles]
    if not counts:
        raise ValueError("no titles")
    return mean(counts), median(counts)


def _levenshtein(a: Sequence[str], b: Sequence[str]) -> int:
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, tok_a in enumerate(a, start=1):
        cur = [i]
        for j, tok_b in enumerate(b, start=1):
            cost = 0 if tok_a == tok_b else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def edit_overlap(title: str, abstract: str) -> float:
    """Best normalized token-level similarity between the title and any
    abstract window of comparable length.

    Windows range over lengths within +-2 of the title length; when the
    abstract is shorter than title-2 tokens it is compared whole. Returns
    1 - min(editdist / max(len(title), len(window))), in [0, 1].
    """
    t = tokenize(title)
    a = tokenize(abstract)
    if not t:
        raise UndefinedStatisticError("empty title")
    if len(a) < max(len(t) - 2, 1):
        dist = _levenshtein(t, a)
        return 1 - dist / max(len(t), len(a), 1)
    best = 0.0
    for w_len in range(max(1, len(t) - 2), min(len(a), len(t) + 2) + 1):
        for start in range(0, len(a) - w_len + 1):
            window = a[start : start + w_len]
            dist = _levenshtein(t, window)
            sim = 1 - dist / max(len(t), w_len)
            if sim > best:
                best = sim
                if best == 1.0:
                    return best
    return best


@dataclass
class OverlapReport:
    system: str
    mean_lexical_overlap: float
    mean_title_length: float
    mean_edit_overlap: float
    n_titles: int
    n_skipped: int  # titles without content words, excluded from the means


def analyze_system(
    system: str, pairs: Sequence[tuple[str, str]], stopword_list=None
) -> OverlapReport:
    """Aggregate the three analyses over (title, abstract) pairs."""
    if stopword_list is None:
        stopword_list = load_stopwords()
    overlaps = []
    skipped = 0
    for title, abstract in pairs:
        try:
            overlaps.append(lexical_overlap(title, abstract, stopword_list))
        except UndefinedStatisticError:
            skipped += 1
    mean_lex = mean(overlaps) if overlaps else float("nan")
    mean_len, _ = length_stats(t for t, _ in pairs)
    mean_edit = mean(edit_overlap(t, a) for t, a in pairs)
    return OverlapReport(
        system=system,
        mean_lexical_overlap=mean_lex,
        mean_title_length=mean_len,
        mean_edit_overlap=mean_edit,
        n_titles=len(pairs),
        n_skipped=skipped,
    )


def render_overlap_reports(reports: Sequence[OverlapReport]) -> str:
    lines = [
        f"# edit-overlap variant: {EDIT_OVERLAP_VARIANT}",
        "system,mean_lexical_overlap,mean_title_length,mean_edit_overlap,n_titles,n_skipped",
    ]
    for r in sorted(reports, key=lambda r: r.system):
        lines.append(
            f"{r.system},{r.mean_lexical_overlap:.4f},{r.mean_title_length:.2f},"
            f"{r.mean_edit_overlap:.4f},{r.n_titles},{r.n_skipped}"
        )
    return "\n".join(lines) + "\n"


def render_length_comparison(lengths_by_system: Mapping[str, float]) -> str:
    """One-line mean title length comparison, e.g. "14.95 vs. 8.27 tokens"."""
    ordered = sorted(lengths_by_system.items(), key=lambda kv: -kv[1])
    body = " vs. ".join(f"{v:.2f}" for _, v in ordered)
    names = ", ".join(k for k, _ in ordered)
    return f"{body} tokens ({names})"
