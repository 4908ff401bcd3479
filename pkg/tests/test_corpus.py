import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from a2teval.corpus import (
    FilterConfig,
    LabelOrigin,
    PaperRecord,
    SplitSpec,
    content_words,
    export_split,
    filter_corpus,
    load_corpus,
    load_stopwords,
    make_constrained_split,
    tokenize,
    write_corpus,
)
from a2teval.errors import DataFormatError, InfeasibleSpecError

from conftest import make_records


def rec(id="p1", year=2010, abstract="some words here", **kw):
    defaults = dict(title="A Title", venue="ACL", source="NLP")
    defaults.update(kw)
    return PaperRecord(id=id, year=year, abstract=abstract, **defaults)


# ── loading ──────────────────────────────────────────────────────────────────


def test_load_empty_file(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text("")
    assert load_corpus(path) == []


def test_load_three_jsonl_lines(tmp_path):
    path = tmp_path / "corpus.jsonl"
    lines = [rec(id=f"p{i}").to_dict() for i in range(3)]
    path.write_text("\n".join(json.dumps(l) for l in lines) + "\n")
    records = load_corpus(path)
    assert [r.id for r in records] == ["p0", "p1", "p2"]


def test_duplicate_id_error_names_id(tmp_path):
    path = tmp_path / "corpus.jsonl"
    rows = [rec(id=i).to_dict() for i in ("p0", "p1", "p2", "p3", "p1")]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    with pytest.raises(DataFormatError, match="'p1'"):
        load_corpus(path)


def test_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(json.dumps(rec().to_dict()) + "\n{not json\n")
    with pytest.raises(DataFormatError, match=":2"):
        load_corpus(path)


def test_csv_roundtrip_via_jsonl(tmp_path):
    csv_path = tmp_path / "corpus.csv"
    csv_path.write_text(
        "id,title,abstract,venue,year,source,humor_label,humor_label_origin\n"
        "p1,T One,Alpha beta gamma,ACL,2015,NLP,2,Human\n"
        "p2,T Two,Delta epsilon,ICML,2018,ML,,None\n"
    )
    records = load_corpus(csv_path, format="CSV")
    assert records[0].humor_label == 2
    assert records[0].humor_label_origin == LabelOrigin.HUMAN
    assert records[1].humor_label is None

    out = tmp_path / "out.jsonl"
    write_corpus(records, out)
    assert load_corpus(out) == records


def test_record_invariants():
    with pytest.raises(DataFormatError):
        rec(abstract="")
    with pytest.raises(DataFormatError):
        rec(title="")
    with pytest.raises(DataFormatError):
        rec(source="OTHER")
    with pytest.raises(DataFormatError):
        rec(humor_label=5)


# ── filtering ────────────────────────────────────────────────────────────────


def test_abstract_at_word_limit_is_excluded():
    exactly_400 = " ".join(f"w{i}" for i in range(400))
    under = " ".join(f"w{i}" for i in range(399))
    cfg = FilterConfig()
    assert filter_corpus([rec(abstract=exactly_400)], cfg) == []
    assert len(filter_corpus([rec(abstract=under)], cfg)) == 1


def test_year_boundary():
    cfg = FilterConfig()
    assert filter_corpus([rec(year=2000)], cfg) == []
    assert len(filter_corpus([rec(year=2001)], cfg)) == 1


def test_empty_input():
    assert filter_corpus([], FilterConfig()) == []


def test_venue_allow_list():
    cfg = FilterConfig(main_conference_only=True, allowed_venues=("ACL", "EMNLP"))
    assert len(filter_corpus([rec(venue="acl")], cfg)) == 1  # case-insensitive
    assert filter_corpus([rec(venue="Workshop on X")], cfg) == []


@given(
    words=st.integers(min_value=1, max_value=60),
    tighter=st.integers(min_value=0, max_value=30),
    year_bump=st.integers(min_value=0, max_value=10),
)
@settings(max_examples=50, deadline=None)
def test_filter_monotonicity(words, tighter, year_bump):
    records = make_records(80, seed=3, n_abstract_words=25)
    base = FilterConfig(max_abstract_words=words + 1, min_year=2000)
    tight = FilterConfig(max_abstract_words=max(1, words + 1 - tighter), min_year=2000 + year_bump)
    kept_base = {r.id for r in filter_corpus(records, base)}
    kept_tight = {r.id for r in filter_corpus(records, tight)}
    assert kept_tight <= kept_base


# ── tokenization ─────────────────────────────────────────────────────────────


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_and_content_words():
    text = "A Study of BERT."
    assert tokenize(text) == ["a", "study", "of", "bert"]
    assert content_words(text, {"a", "of"}) == ["study", "bert"]


def test_hyphens_split():
    assert tokenize("state-of-the-art") == ["state", "of", "the", "art"]


def test_shipped_stopword_list_drops_function_words():
    stopwords = load_stopwords()
    assert content_words("A Study of BERT.", stopwords) == ["study", "bert"]


# ── constrained split ────────────────────────────────────────────────────────


def labeled_corpus(n=3000, seed=11):
    # generous label/source balance so the small-quota split is feasible
    return make_records(n, seed=seed, funny_frac=0.4, nlp_frac=0.55, human_frac=0.02)


def small_spec(seed=7):
    return SplitSpec(dev_size=150, test_size=150, seed=seed)


def recount(part):
    funny = sum(1 for r in part if r.funny_binary == 1)
    nlp = sum(1 for r in part if r.source == "NLP")
    return funny, nlp


def test_split_quotas_exact_by_recount():
    records = labeled_corpus()
    split = make_constrained_split(records, small_spec())
    for part in (split.dev, split.test):
        assert len(part) == 150
        funny, nlp = recount(part)
        assert funny == 50  # 150 * 1/3
        assert nlp == 120  # 150 * 0.8


def test_split_partitions_input():
    records = labeled_corpus(1200)
    split = make_constrained_split(records, small_spec())
    ids = lambda part: {r.id for r in part}
    assert ids(split.train) | ids(split.dev) | ids(split.test) == ids(records)
    assert not ids(split.dev) & ids(split.test)
    assert not ids(split.train) & (ids(split.dev) | ids(split.test))


def test_split_deterministic_and_seed_sensitive(tmp_path):
    records = labeled_corpus(1200)
    split_a = make_constrained_split(records, small_spec(seed=5))
    split_b = make_constrained_split(records, small_spec(seed=5))
    split_c = make_constrained_split(records, small_spec(seed=6))
    assert [r.id for r in split_a.dev] == [r.id for r in split_b.dev]
    assert [r.id for r in split_a.test] == [r.id for r in split_b.test]
    assert [r.id for r in split_a.dev] != [r.id for r in split_c.dev]

    # byte-identical export for equal seeds
    export_split(split_a, tmp_path / "x")
    export_split(split_b, tmp_path / "y")
    for name in ("train.jsonl", "dev.jsonl", "test.jsonl", "split_manifest.json"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_human_annotated_pinned_to_train():
    records = make_records(2000, seed=2, funny_frac=0.4, nlp_frac=0.55, human_frac=0.3)
    split = make_constrained_split(records, small_spec())
    for part in (split.dev, split.test):
        assert all(r.humor_label_origin != LabelOrigin.HUMAN for r in part)


def test_all_human_annotated_is_infeasible():
    records = make_records(1000, seed=4, funny_frac=0.4, human_frac=1.0)
    with pytest.raises(InfeasibleSpecError):
        make_constrained_split(records, small_spec())


def test_infeasibility_reports_quota_and_shortfall():
    # no funny ML records at all
    records = [r for r in labeled_corpus(1500) if not (r.source == "ML" and r.funny_binary == 1)]
    with pytest.raises(InfeasibleSpecError, match=r"funny, ML.*short by"):
        make_constrained_split(records, small_spec())


def test_split_too_large_is_infeasible():
    with pytest.raises(InfeasibleSpecError):
        make_constrained_split(make_records(100), SplitSpec(dev_size=60, test_size=60))
