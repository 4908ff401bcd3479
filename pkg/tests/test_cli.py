import json

import numpy as np
import pytest

from a2teval import cli
from a2teval.a2tmetric import EmbeddingStore
from a2teval.annotation import BwsSelection, record_judgment
from a2teval.storage import CampaignStore

from conftest import make_records
from planted import build_planted, split_judgments
from a2teval.scoring import write_relative_ranking_jsonl
from a2teval.corpus import write_corpus


def run(argv):
    return cli.main(argv)


# ── exit codes ───────────────────────────────────────────────────────────────


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["split", "--bogus-flag"])
    assert exc.value.code == cli.EXIT_USAGE


def test_missing_file_is_data_error(tmp_path):
    code = run(["ingest", "--input", str(tmp_path / "nope.jsonl"), "--output", str(tmp_path / "o")])
    assert code == cli.EXIT_DATA


def test_infeasible_split_exit_code(tmp_path):
    src = tmp_path / "corpus.jsonl"
    write_corpus(make_records(100, human_frac=1.0, funny_frac=0.4), src)
    code = run(
        [
            "split",
            "--input",
            str(src),
            "--out-dir",
            str(tmp_path / "out"),
            "--dev-size",
            "30",
            "--test-size",
            "30",
        ]
    )
    assert code == cli.EXIT_INFEASIBLE


# ── corpus pipeline ──────────────────────────────────────────────────────────


def test_ingest_filter_split_and_manifest(tmp_path):
    src = tmp_path / "raw.jsonl"
    write_corpus(make_records(1500, seed=1, funny_frac=0.4, nlp_frac=0.55), src)

    normalized = tmp_path / "corpus.jsonl"
    assert run(["ingest", "--input", str(src), "--output", str(normalized)]) == 0
    assert (tmp_path / "corpus.jsonl.manifest.json").exists()

    filtered = tmp_path / "filtered.jsonl"
    assert run(["filter", "--input", str(normalized), "--output", str(filtered), "--min-year", "1990"]) == 0

    out_a, out_b = tmp_path / "split_a", tmp_path / "split_b"
    args = ["--input", str(filtered), "--dev-size", "90", "--test-size", "90", "--seed", "7"]
    assert run(["split", *args, "--out-dir", str(out_a)]) == 0
    assert run(["split", *args, "--out-dir", str(out_b)]) == 0
    for name in ("train.jsonl", "dev.jsonl", "test.jsonl"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    manifest = json.loads((out_a / "split.manifest.json").read_text())
    assert manifest["config"]["spec"]["seed"] == 7
    assert manifest["formula_variants"]["stopwords_version"] == "1"
    assert manifest["input_hashes"]


# ── campaign to metric pipeline ──────────────────────────────────────────────


def make_instances_file(tmp_path, n=6):
    items = []
    for i in range(n):
        items.append(
            {
                "id": f"i{i}",
                "abstract_id": f"abs{i}",
                "abstract_text": f"Abstract {i}",
                "candidates": [
                    {"candidate_id": f"i{i}_c{j}", "title": f"T{i}.{j}", "system": f"sys{j}"}
                    for j in range(6)
                ],
            }
        )
    path = tmp_path / "instances.json"
    path.write_text(json.dumps(items))
    return path


def test_campaign_scoring_round_trip(tmp_path):
    instances = make_instances_file(tmp_path)
    data_dir = tmp_path / "data"
    assert (
        run(
            [
                "campaign",
                "create",
                "--id",
                "c1",
                "--kind",
                "BestWorst",
                "--instances",
                str(instances),
                "--annotators",
                "a,b",
                "--data-dir",
                str(data_dir),
            ]
        )
        == 0
    )
    store = CampaignStore(data_dir)
    campaign = store.get_campaign("c1")
    log = store.log_for("c1")
    for annotator, ids in sorted(campaign.assignments.items()):
        for shift, iid in enumerate(ids):
            cands = [c.candidate_id for c in campaign.instance(iid).candidates]
            rotated = cands[shift % 3 :] + cands[: shift % 3]
            record_judgment(
                campaign,
                BwsSelection(iid, annotator, frozenset(rotated[:2]), frozenset(rotated[2:4])),
                log,
            )

    assert (
        run(
            [
                "campaign",
                "assign",
                "--id",
                "c1",
                "--annotators",
                "c,d",
                "--data-dir",
                str(data_dir),
            ]
        )
        == 0
    )
    grown = CampaignStore(data_dir).get_campaign("c1")
    assert set(grown.assignments) == {"a", "b", "c", "d"}

    scores_csv = tmp_path / "scores.csv"
    assert run(["score-bws", "--campaign", "c1", "--data-dir", str(data_dir), "--output", str(scores_csv)]) == 0
    assert scores_csv.read_text().startswith("instance_id,abstract_id,candidate_id,system_tag")

    rr = tmp_path / "rr.jsonl"
    assert run(["rr-convert", "--campaign", "c1", "--data-dir", str(data_dir), "--output", str(rr)]) == 0
    rows = [json.loads(l) for l in rr.read_text().splitlines()]
    assert all(r["score_diff"] > 0 for r in rows)

    export = tmp_path / "export.csv"
    assert run(
        ["campaign", "export", "--id", "c1", "--view", "annotator", "--data-dir", str(data_dir), "--output", str(export)]
    ) == 0
    assert "sys0" not in export.read_text()


def test_train_and_eval_metric_cli(tmp_path):
    store, bws_list, _ = build_planted(0, n_abstracts=40)
    _, parts = split_judgments(bws_list, 0)
    emb_path = tmp_path / "emb.jsonl"
    store.save(emb_path)
    rr_train = tmp_path / "train.jsonl"
    rr_dev = tmp_path / "dev.jsonl"
    rr_test = tmp_path / "test.jsonl"
    write_relative_ranking_jsonl(parts["train"], rr_train)
    write_relative_ranking_jsonl(parts["dev"], rr_dev)
    write_relative_ranking_jsonl(parts["test"], rr_test)

    metric_path = tmp_path / "metric.json"
    assert (
        run(
            [
                "train-metric",
                "--rr",
                str(rr_train),
                "--dev-rr",
                str(rr_dev),
                "--embeddings",
                str(emb_path),
                "--output",
                str(metric_path),
                "--epochs",
                "8",
                "--learning-rate",
                "0.2",
                "--margin",
                "0.02",
            ]
        )
        == 0
    )
    assert metric_path.exists()
    assert run(["eval-metric", "--metric", str(metric_path), "--rr", str(rr_test), "--embeddings", str(emb_path), "--manifest", str(tmp_path / "eval.manifest.json")]) == 0


# ── humor / pseudo / stats / analyze ─────────────────────────────────────────


def test_ensemble_cli(tmp_path, capsys):
    matrix = "classifier_id,t0,t1,t2\n" + "\n".join(f"clf{i},0,1,2" for i in range(5)) + "\n"
    labels = tmp_path / "m.csv"
    labels.write_text(matrix)
    out = tmp_path / "agg.csv"
    assert run(["ensemble", "aggregate", "--labels", str(labels), "--mode", "mv", "--output", str(out)]) == 0
    assert out.read_text() == "title_id,label\nt0,0\nt1,1\nt2,2\n"

    gold = tmp_path / "gold.csv"
    gold.write_text("title_id,label\nt0,0\nt1,1\nt2,2\n")
    assert run(["ensemble", "search", "--labels", str(labels), "--gold", str(gold), "--manifest", str(tmp_path / "search.manifest.json")]) == 0
    printed = capsys.readouterr().out
    assert "macro F1" in printed


def test_humor_metrics_cli(tmp_path, capsys):
    gen = tmp_path / "gen.jsonl"
    rows = []
    for i in range(4):
        rows.append({"abstract_id": f"a{i}", "constraint": 0, "text": f"t{i}", "assigned_label": 0})
        rows.append({"abstract_id": f"a{i}", "constraint": 1, "text": f"f{i}", "assigned_label": 1})
    gen.write_text("\n".join(json.dumps(r) for r in rows))
    assert run(["humor-metrics", "--generations", str(gen), "--manifest", str(tmp_path / "hm.manifest.json")]) == 0
    assert "F1_macro 1.000" in capsys.readouterr().out


def test_pseudo_cli(tmp_path):
    gen = tmp_path / "gen.jsonl"
    rows = []
    for i in range(12):
        rows.append(
            {"abstract_id": f"a{i}", "constraint": 1, "text": f"unique{i} phrase{i}", "assigned_label": 1}
        )
    rows.append({"abstract_id": "bad", "constraint": 1, "text": "mislabeled", "assigned_label": 0})
    gen.write_text("\n".join(json.dumps(r) for r in rows))
    kept = tmp_path / "kept.jsonl"
    assert run(["pseudo", "filter", "--generated", str(gen), "--output", str(kept)]) == 0
    assert len(kept.read_text().splitlines()) == 12

    originals = tmp_path / "orig.jsonl"
    originals.write_text(
        "\n".join(json.dumps({"abstract_id": f"a{i}", "text": f"orig {i}", "label": 0}) for i in range(12))
    )
    merged = tmp_path / "train.jsonl"
    assert run(["pseudo", "merge", "--generated", str(kept), "--originals", str(originals), "--output", str(merged)]) == 0
    lines = [json.loads(l) for l in merged.read_text().splitlines()]
    assert len(lines) == 24
    assert sum(1 for l in lines if l["provenance"] == "pseudo") == 12


def test_stats_cli(tmp_path, capsys):
    pairs = tmp_path / "pairs.csv"
    rows = ["abstract_id,candidate_id,system,metric_score,human_score"]
    rng = np.random.default_rng(0)
    for s in range(4):
        for i in range(5):
            h = rng.uniform(-1, 1)
            rows.append(f"a{i},s{s}_c{i},sys{s},{h + rng.normal(0, 0.05)},{h}")
    pairs.write_text("\n".join(rows) + "\n")
    assert run(["stats", "--pairs", str(pairs), "--manifest", str(tmp_path / "stats.manifest.json")]) == 0
    assert "Pearson" in capsys.readouterr().out


def test_analyze_cli(tmp_path):
    src = tmp_path / "titles.jsonl"
    rows = [
        {"system": "sys_a", "title": "neural parsing", "abstract": "we do neural parsing"},
        {"system": "sys_b", "title": "other topic", "abstract": "completely different words"},
    ]
    src.write_text("\n".join(json.dumps(r) for r in rows))
    out = tmp_path / "overlap.csv"
    assert run(["analyze", "--input", str(src), "--output", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("# edit-overlap variant:")
    assert "sys_a" in text
