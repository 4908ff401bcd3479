import json

import pytest

from a2teval.errors import DataFormatError
from a2teval.pseudo import (
    CorpusScope,
    GeneratedTitle,
    NgramFilterConfig,
    OriginalTitle,
    attach_labels,
    keep_label_consistent,
    load_generated_titles,
    merge_pseudo,
    ngram_frequency_filter,
    write_training_set,
)


def gen(abstract_id, constraint, text, assigned=None):
    return GeneratedTitle(abstract_id, constraint, text, assigned)


# ── label consistency ────────────────────────────────────────────────────────


def test_mismatched_label_dropped():
    assert keep_label_consistent([gen("a0", 1, "x", 0)]) == []


def test_matching_label_kept():
    g = gen("a0", 1, "x", 1)
    assert keep_label_consistent([g]) == [g]


def test_mixed_batch_hand_count():
    batch = [gen(f"a{i}", i % 2, "t", (i % 2) if i >= 4 else 1 - (i % 2)) for i in range(10)]
    assert len(keep_label_consistent(batch)) == 6


def test_unlabeled_input_rejected():
    with pytest.raises(DataFormatError):
        keep_label_consistent([gen("a0", 1, "x", None)])


# ── n-gram filter ────────────────────────────────────────────────────────────


def unique_titles(n):
    return [gen(f"a{i}", 1, f"alpha{i} beta{i} gamma{i}", 1) for i in range(n)]


def test_unique_titles_untouched():
    titles = unique_titles(30)
    kept, removed = ngram_frequency_filter(titles, NgramFilterConfig(max_corpus_frequency=1))
    assert kept == titles
    assert removed == []


def test_planted_frequent_bigram_removed():
    artefact = [
        gen(f"a{i}", 1, f"don't invite trouble number {i}", 1) for i in range(20)
    ]
    clean = [gen(f"b{i}", 1, f"calm{i} study{i} of topic{i}", 1) for i in range(30)]
    cfg = NgramFilterConfig(n_values=(2, 3), max_corpus_frequency=10)
    kept, removed = ngram_frequency_filter(artefact + clean, cfg)
    assert len(removed) == 20
    assert {r.title.abstract_id for r in removed} == {f"a{i}" for i in range(20)}
    assert all(r.ngram in {("don", "t"), ("t", "invite"), ("don", "t", "invite")} for r in removed)
    assert kept == clean


def test_huge_threshold_is_identity():
    titles = [gen(f"a{i}", 1, "same exact text", 1) for i in range(40)]
    kept, removed = ngram_frequency_filter(
        titles, NgramFilterConfig(max_corpus_frequency=10**9)
    )
    assert kept == titles and removed == []


def test_filter_soundness_recheck_and_idempotence():
    titles = [gen(f"a{i}", 1, f"don't invite trouble {i}", 1) for i in range(15)]
    titles += [gen(f"b{i}", 1, f"unique construction {i} here", 1) for i in range(20)]
    cfg = NgramFilterConfig(n_values=(2,), max_corpus_frequency=5)
    kept, removed = ngram_frequency_filter(titles, cfg)

    # soundness: recount n-grams over the survivors; nothing over threshold
    from collections import Counter

    from a2teval.corpus import tokenize

    counts = Counter()
    for t in kept:
        toks = tokenize(t.text)
        counts.update(tuple(toks[i : i + 2]) for i in range(len(toks) - 1))
    assert all(c <= cfg.max_corpus_frequency for c in counts.values())

    # idempotence: a second pass removes nothing
    kept_again, removed_again = ngram_frequency_filter(kept, cfg)
    assert kept_again == kept
    assert removed_again == []


def test_all_pseudo_scope_requires_pool():
    cfg = NgramFilterConfig(corpus_scope=CorpusScope.ALL_PSEUDO)
    with pytest.raises(ValueError):
        ngram_frequency_filter(unique_titles(3), cfg)
    pool = unique_titles(3) + [gen("z", 0, "plain thing", 0)]
    kept, _ = ngram_frequency_filter(unique_titles(3), cfg, all_pseudo=pool)
    assert len(kept) == 3


# ── merge ────────────────────────────────────────────────────────────────────


def test_no_survivors_empty_output():
    originals = [OriginalTitle("a0", "orig", 0)]
    report = merge_pseudo(originals, [])
    assert report.instances == []
    assert report.excluded_abstracts == ["a0"]


def test_pairing_arithmetic_and_share():
    originals = [OriginalTitle(f"a{i}", f"orig {i}", i % 2) for i in range(100)]
    pseudo = [
        gen(f"a{i}", 1 - (i % 2), f"pseudo {i}", 1 - (i % 2)) for i in range(60)
    ]
    report = merge_pseudo(originals, pseudo)
    assert len(report.instances) == 120
    assert report.pseudo_share == 0.5
    by_abstract = {}
    for inst in report.instances:
        by_abstract.setdefault(inst.abstract_id, []).append(inst)
    for group in by_abstract.values():
        assert len(group) == 2
        assert {g.label for g in group} == {0, 1}
    assert len(report.excluded_abstracts) == 40


def test_same_label_pseudo_rejected_with_reason():
    originals = [OriginalTitle("a0", "orig", 1)]
    report = merge_pseudo(originals, [gen("a0", 1, "also funny", 1)])
    assert report.instances == []
    assert report.rejected and "opposite" in report.rejected[0][1]


def test_report_shape_at_study_scale():
    originals = [OriginalTitle(f"a{i}", f"orig {i}", i % 2) for i in range(7737)]
    pseudo = [gen(f"a{i}", 1 - (i % 2), f"pseudo {i}", 1 - (i % 2)) for i in range(7737)]
    report = merge_pseudo(originals, pseudo)
    assert report.render() == "15474 instances total, 50% are pseudo ones"


# ── IO ───────────────────────────────────────────────────────────────────────


def test_load_and_attach_labels(tmp_path):
    path = tmp_path / "gen.jsonl"
    rows = [
        {"abstract_id": "a0", "constraint": 1, "text": "t one"},
        {"abstract_id": "a0", "constraint": 0, "text": "t two"},
    ]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    loaded = load_generated_titles(path)
    assert [g.assigned_label for g in loaded] == [None, None]
    labeled = attach_labels(loaded, {("a0", 1): 1, ("a0", 0): 0})
    assert [g.assigned_label for g in labeled] == [1, 0]
    with pytest.raises(DataFormatError):
        attach_labels(loaded, {})


def test_write_training_set_has_provenance(tmp_path):
    originals = [OriginalTitle("a0", "orig", 0)]
    report = merge_pseudo(originals, [gen("a0", 1, "pseudo", 1)])
    out = tmp_path / "train.jsonl"
    write_training_set(report.instances, out)
    lines = [json.loads(l) for l in out.read_text().splitlines()]
    assert {l["provenance"] for l in lines} == {"original", "pseudo"}
