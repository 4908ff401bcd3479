"""Command-line entry point.

Every subcommand writes a RunManifest next to its primary artifact so any
output can be traced back to the exact inputs, seeds and formula variants
that produced it.

Exit codes: 0 success, 1 usage error, 2 data error, 3 infeasible constraint.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import a2tmetric, analysis, annotation, corpus, humor, pseudo, scoring, stats
from .errors import DataFormatError, InfeasibleSpecError, JudgmentValidationError
from .service import ServiceConfig, serve
from .storage import CampaignStore, RunManifest, default_formula_variants

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INFEASIBLE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _write_manifest(args, command: str, config: dict, inputs: list, output) -> None:
    manifest = RunManifest(
        command=command, config=config, formula_variants=default_formula_variants()
    )
    for path in inputs:
        if path and Path(path).exists():
            manifest.add_input(path)
    target = getattr(args, "manifest", None)
    if target is None:
        target = f"{output}.manifest.json" if output else f"a2teval-{command}.manifest.json"
    manifest.write(target)


# ── corpus commands ──────────────────────────────────────────────────────────


def cmd_ingest(args) -> int:
    records = corpus.load_corpus(args.input, format=args.format)
    corpus.write_corpus(records, args.output)
    print(f"ingested {len(records)} records -> {args.output}")
    _write_manifest(args, "ingest", {"format": args.format}, [args.input], args.output)
    return EXIT_OK


def cmd_filter(args) -> int:
    records = corpus.load_corpus(args.input)
    cfg = corpus.FilterConfig(
        max_abstract_words=args.max_abstract_words,
        min_year=args.min_year,
        main_conference_only=args.main_conference_only,
        allowed_venues=tuple(args.venues.split(",")) if args.venues else corpus.DEFAULT_MAIN_VENUES,
    )
    kept = corpus.filter_corpus(records, cfg)
    corpus.write_corpus(kept, args.output)
    print(f"kept {len(kept)} of {len(records)} records -> {args.output}")
    _write_manifest(args, "filter", cfg.__dict__ | {"kept": len(kept)}, [args.input], args.output)
    return EXIT_OK


def cmd_split(args) -> int:
    records = corpus.load_corpus(args.input)
    spec = corpus.SplitSpec(
        dev_size=args.dev_size,
        test_size=args.test_size,
        devtest_source_ratio=args.source_ratio,
        devtest_funny_ratio=args.funny_ratio,
        pin_human_annotated_to_train=not args.no_pin_human,
        seed=args.seed,
    )
    split = corpus.make_constrained_split(records, spec)
    corpus.export_split(split, args.out_dir)
    print(
        f"train {len(split.train)} / dev {len(split.dev)} / test {len(split.test)} "
        f"-> {args.out_dir}"
    )
    _write_manifest(
        args, "split", {"spec": spec.__dict__}, [args.input], Path(args.out_dir) / "split"
    )
    return EXIT_OK


# ── campaign commands ────────────────────────────────────────────────────────


def _load_instances(path) -> list[annotation.TaskInstance]:
    with open(path, encoding="utf-8") as fh:
        items = json.load(fh)
    return [
        annotation.TaskInstance(
            id=item["id"],
            abstract_id=item["abstract_id"],
            abstract_text=item.get("abstract_text", ""),
            candidates=tuple(
                annotation.Candidate(c["candidate_id"], c["title"], c["system"])
                for c in item["candidates"]
            ),
        )
        for item in items
    ]


def cmd_campaign_create(args) -> int:
    instances = _load_instances(args.instances)
    policy = annotation.AssignmentPolicy(
        annotators=tuple(args.annotators.split(",")),
        per_instance=args.per_instance,
        strategy=args.strategy,
    )
    campaign = annotation.create_campaign(
        args.id,
        args.kind,
        instances,
        policy,
        min_annotators=args.min_annotators,
        max_annotators=args.max_annotators,
        seed=args.seed,
    )
    store = CampaignStore(args.data_dir)
    store.save_campaign(campaign)
    print(f"campaign {campaign.id!r}: {len(campaign.instances)} instances")
    _write_manifest(
        args,
        "campaign-create",
        {"id": args.id, "kind": args.kind, "seed": args.seed, "policy": policy.__dict__},
        [args.instances],
        Path(args.data_dir) / f"campaign-{args.id}",
    )
    return EXIT_OK


def cmd_campaign_assign(args) -> int:
    store = CampaignStore(args.data_dir)
    campaign = store.get_campaign(args.id)
    updated = annotation.add_annotators(
        campaign,
        args.annotators.split(","),
        per_instance_extra=args.per_instance_extra,
        strategy=args.strategy,
    )
    store.update_campaign(updated)
    print(
        f"campaign {args.id!r}: every instance gained {args.per_instance_extra} annotator(s)"
    )
    _write_manifest(
        args,
        "campaign-assign",
        {"id": args.id, "annotators": args.annotators, "extra": args.per_instance_extra},
        [],
        Path(args.data_dir) / f"campaign-{args.id}-assign",
    )
    return EXIT_OK


def cmd_campaign_export(args) -> int:
    store = CampaignStore(args.data_dir)
    campaign = store.get_campaign(args.id)
    text = annotation.export_campaign_csv(campaign, store.log_for(args.id).judgments(), view=args.view)
    Path(args.output).write_text(text, encoding="utf-8")
    print(f"exported {args.view} view -> {args.output}")
    _write_manifest(args, "campaign-export", {"id": args.id, "view": args.view}, [], args.output)
    return EXIT_OK


def cmd_score_bws(args) -> int:
    store = CampaignStore(args.data_dir)
    campaign = store.get_campaign(args.campaign)
    result = scoring.bws_scores(campaign, store.log_for(args.campaign).judgments())
    Path(args.output).write_text(scoring.scores_csv(campaign, result), encoding="utf-8")
    if result.excluded_instances:
        print(f"excluded below annotator minimum: {', '.join(result.excluded_instances)}")
    means = scoring.system_mean_scores(campaign, result)
    rows = [{"system": s, "bws": v} for s, v in means.items()]
    print(stats.render_system_table(rows), end="")
    _write_manifest(args, "score-bws", {"campaign": args.campaign}, [], args.output)
    return EXIT_OK


def cmd_rr_convert(args) -> int:
    store = CampaignStore(args.data_dir)
    campaign = store.get_campaign(args.campaign)
    result = scoring.bws_scores(campaign, store.log_for(args.campaign).judgments())
    abstract_of = {inst.id: inst.abstract_id for inst in campaign.instances}
    judgments = scoring.to_relative_ranking(result.scores, abstract_of)
    scoring.write_relative_ranking_jsonl(judgments, args.output)
    print(f"{len(judgments)} relative-ranking judgments -> {args.output}")
    _write_manifest(args, "rr-convert", {"campaign": args.campaign}, [], args.output)
    return EXIT_OK


# ── metric commands ──────────────────────────────────────────────────────────


def cmd_train_metric(args) -> int:
    judgments = scoring.load_relative_ranking_jsonl(args.rr)
    dev = scoring.load_relative_ranking_jsonl(args.dev_rr) if args.dev_rr else None
    store = a2tmetric.EmbeddingStore.load(args.embeddings)
    cfg = a2tmetric.TrainConfig(
        margin=args.margin,
        mse_weight=args.mse_weight,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        early_stop_patience=args.patience,
        bws_scale=args.bws_scale,
        hidden_dim=args.hidden_dim,
        output_dim=args.output_dim,
    )
    metric = a2tmetric.train(judgments, store, cfg, dev_judgments=dev)
    metric.save(args.output)
    last_loss = metric.report.epoch_losses[-1] if metric.report.epoch_losses else None
    print(
        f"trained on {len(judgments)} judgments; final loss {last_loss}; "
        f"best epoch {metric.report.best_epoch}"
    )
    _write_manifest(args, "train-metric", cfg.to_dict(), [args.rr, args.dev_rr, args.embeddings], args.output)
    return EXIT_OK


def cmd_eval_metric(args) -> int:
    metric = a2tmetric.TrainedMetric.load(args.metric)
    judgments = scoring.load_relative_ranking_jsonl(args.rr)
    store = a2tmetric.EmbeddingStore.load(args.embeddings)
    tau = a2tmetric.segment_tau(metric.model, judgments, store)
    print(f"segment-level tau: {tau:.3f} over {len(judgments)} judgments")
    if args.scores:
        pairs_by_system: dict[str, list[stats.SegmentScorePair]] = {}
        with open(args.scores, encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                abstract = row.get("abstract_id") or row["instance_id"]
                m = a2tmetric.score(metric, store.get(abstract), store.get(row["candidate_id"]))
                pairs_by_system.setdefault(row["system_tag"], []).append(
                    stats.SegmentScorePair(
                        abstract_id=abstract,
                        candidate_id=row["candidate_id"],
                        metric_score=m,
                        human_score=float(row["bws"]),
                    )
                )
        report = stats.system_level(pairs_by_system)
        if report.pearson_r is not None:
            print(
                f"system-level Pearson {report.pearson_r:.3f}, "
                f"Spearman {report.spearman_rho:.3f} over {report.n_systems} systems"
            )
        else:
            print(f"system-level: means only ({report.n_systems} systems)")
    _write_manifest(
        args, "eval-metric", {"metric": args.metric}, [args.rr, args.embeddings, args.scores], None
    )
    return EXIT_OK


# ── humor commands ───────────────────────────────────────────────────────────


def _load_gold(path) -> tuple[list[str], list[int]]:
    ids, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "title_id":
                continue
            ids.append(row[0])
            labels.append(int(row[1]))
    return ids, labels


def cmd_ensemble(args) -> int:
    matrix = humor.LabelMatrix.from_csv(Path(args.labels).read_text(encoding="utf-8"))
    if args.action == "aggregate":
        if args.mode == "mv":
            labels = humor.ens_mv(matrix)
        else:
            labels = humor.ens_sum(matrix, args.i, args.j)
        lines = ["title_id,label"] + [f"{t},{v}" for t, v in zip(matrix.title_ids, labels)]
        Path(args.output).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"aggregated {matrix.n_titles} titles with {args.mode} -> {args.output}")
        _write_manifest(
            args,
            "ensemble-aggregate",
            {"mode": args.mode, "i": args.i, "j": args.j},
            [args.labels],
            args.output,
        )
    else:  # search
        gold_ids, gold = _load_gold(args.gold)
        if gold_ids != matrix.title_ids:
            raise DataFormatError("gold title ids do not align with the label matrix")
        i, j, score = humor.search_thresholds(matrix, gold)
        print(f"best thresholds (i, j) = ({i}, {j}) with macro F1 {score:.3f}")
        _write_manifest(
            args, "ensemble-search", {"best": [i, j], "macro_f1": score}, [args.labels, args.gold], None
        )
    return EXIT_OK


def cmd_humor_metrics(args) -> int:
    generated = pseudo.load_generated_titles(args.generations)
    metrics = humor.generation_control_metrics(generated)
    print(metrics.render())
    if metrics.excluded_from_ratio:
        print(f"excluded from Ratio_SAME (missing variant): {', '.join(metrics.excluded_from_ratio)}")
    _write_manifest(args, "humor-metrics", {}, [args.generations], None)
    return EXIT_OK


def cmd_pseudo(args) -> int:
    generated = pseudo.load_generated_titles(args.generated)
    if args.action == "filter":
        kept = pseudo.keep_label_consistent(generated)
        funny = [g for g in kept if g.assigned_label == 1]
        not_funny = [g for g in kept if g.assigned_label == 0]
        cfg = pseudo.NgramFilterConfig(
            n_values=tuple(int(n) for n in args.ngram_sizes.split(",")),
            max_corpus_frequency=args.ngram_threshold,
        )
        surviving, removed = pseudo.ngram_frequency_filter(funny, cfg)
        out = not_funny + surviving
        with open(args.output, "w", encoding="utf-8") as fh:
            for g in out:
                fh.write(
                    json.dumps(
                        {
                            "abstract_id": g.abstract_id,
                            "constraint": g.constraint,
                            "text": g.text,
                            "assigned_label": g.assigned_label,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        print(
            f"label-consistent: {len(kept)}/{len(generated)}; "
            f"n-gram filter removed {len(removed)} funny titles -> {args.output}"
        )
        for r in removed:
            print(f"  removed ({' '.join(r.ngram)} x{r.frequency}): {r.title.text}")
        _write_manifest(
            args,
            "pseudo-filter",
            {"ngram_sizes": cfg.n_values, "threshold": cfg.max_corpus_frequency},
            [args.generated],
            args.output,
        )
    else:  # merge
        originals = []
        with open(args.originals, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    originals.append(
                        pseudo.OriginalTitle(obj["abstract_id"], obj["text"], int(obj["label"]))
                    )
        report = pseudo.merge_pseudo(originals, generated)
        pseudo.write_training_set(report.instances, args.output)
        print(report.render())
        if report.excluded_abstracts:
            print(f"excluded (no opposite-label pseudo): {len(report.excluded_abstracts)}")
        _write_manifest(args, "pseudo-merge", {}, [args.originals, args.generated], args.output)
    return EXIT_OK


# ── stats / analysis / serve ─────────────────────────────────────────────────


def cmd_stats(args) -> int:
    pairs_by_system: dict[str, list[stats.SegmentScorePair]] = {}
    with open(args.pairs, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            pairs_by_system.setdefault(row["system"], []).append(
                stats.SegmentScorePair(
                    abstract_id=row["abstract_id"],
                    candidate_id=row["candidate_id"],
                    metric_score=float(row["metric_score"]),
                    human_score=float(row["human_score"]),
                )
            )
    report = stats.system_level(pairs_by_system)
    rows = [
        {"system": s, "bws": report.mean_human[s], "metric": report.mean_metric[s]}
        for s in report.mean_human
    ]
    print(stats.render_system_table(rows), end="")
    if report.pearson_r is not None:
        print(f"system-level Pearson {report.pearson_r:.3f}, Spearman {report.spearman_rho:.3f}")
    _write_manifest(args, "stats", {}, [args.pairs], None)
    return EXIT_OK


def cmd_analyze(args) -> int:
    by_system: dict[str, list[tuple[str, str]]] = {}
    with open(args.input, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                by_system.setdefault(obj["system"], []).append((obj["title"], obj["abstract"]))
    stopwords = corpus.load_stopwords()
    reports = [
        analysis.analyze_system(system, pairs, stopwords)
        for system, pairs in sorted(by_system.items())
    ]
    text = analysis.render_overlap_reports(reports)
    Path(args.output).write_text(text, encoding="utf-8")
    print(text, end="")
    _write_manifest(args, "analyze", {}, [args.input], args.output)
    return EXIT_OK


def cmd_serve(args) -> int:
    config = ServiceConfig.load(args.config)
    if args.port is not None:
        config.port = args.port
    if args.data_dir is not None:
        config.data_dir = args.data_dir
    serve(config)
    return EXIT_OK


# ── parser wiring ────────────────────────────────────────────────────────────


def build_parser() -> _Parser:
    parser = _Parser(prog="a2teval", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and normalize a corpus file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="JSONL", choices=["JSONL", "CSV"])
    p.add_argument("--output", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("filter", help="apply corpus filtering rules")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--max-abstract-words", type=int, default=400)
    p.add_argument("--min-year", type=int, default=2001)
    p.add_argument("--main-conference-only", action="store_true")
    p.add_argument("--venues", help="comma-separated venue allow-list")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("split", help="constrained train/dev/test split")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dev-size", type=int, default=600)
    p.add_argument("--test-size", type=int, default=600)
    p.add_argument("--source-ratio", type=float, default=0.8)
    p.add_argument("--funny-ratio", type=float, default=1 / 3)
    p.add_argument("--no-pin-human", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("campaign", help="create or export annotation campaigns")
    csub = p.add_subparsers(dest="action", required=True)
    pc = csub.add_parser("create")
    pc.add_argument("--id", required=True)
    pc.add_argument("--kind", required=True, choices=["BestWorst", "Ranking", "Pairwise"])
    pc.add_argument("--instances", required=True, help="JSON file of task instances")
    pc.add_argument("--annotators", required=True, help="comma-separated annotator ids")
    pc.add_argument("--per-instance", type=int, default=2)
    pc.add_argument("--strategy", default="round_robin", choices=["round_robin", "random"])
    pc.add_argument("--min-annotators", type=int, default=2)
    pc.add_argument("--max-annotators", type=int, default=5)
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--data-dir", default="data")
    pc.add_argument("--manifest")
    pc.set_defaults(func=cmd_campaign_create)
    pa = csub.add_parser("assign")
    pa.add_argument("--id", required=True)
    pa.add_argument("--annotators", required=True, help="comma-separated annotator ids")
    pa.add_argument("--per-instance-extra", type=int, default=1)
    pa.add_argument("--strategy", default="round_robin", choices=["round_robin", "random"])
    pa.add_argument("--data-dir", default="data")
    pa.add_argument("--manifest")
    pa.set_defaults(func=cmd_campaign_assign)
    pe = csub.add_parser("export")
    pe.add_argument("--id", required=True)
    pe.add_argument("--view", default="analysis", choices=["annotator", "analysis"])
    pe.add_argument("--output", required=True)
    pe.add_argument("--data-dir", default="data")
    pe.add_argument("--manifest")
    pe.set_defaults(func=cmd_campaign_export)

    p = sub.add_parser("score-bws", help="best-worst scores for a campaign")
    p.add_argument("--campaign", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_score_bws)

    p = sub.add_parser("rr-convert", help="scores to relative-ranking judgments")
    p.add_argument("--campaign", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--data-dir", default="data")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_rr_convert)

    p = sub.add_parser("train-metric", help="train the projection metric")
    p.add_argument("--rr", required=True)
    p.add_argument("--dev-rr")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--mse-weight", type=float, default=1.0)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patience", type=int, default=0)
    p.add_argument("--bws-scale", type=float, default=1.0)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--output-dim", type=int, default=16)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_train_metric)

    p = sub.add_parser("eval-metric", help="evaluate a trained metric")
    p.add_argument("--metric", required=True)
    p.add_argument("--rr", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scores", help="bws score CSV for system-level correlation")
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_eval_metric)

    p = sub.add_parser("ensemble", help="aggregate classifier labels or search thresholds")
    esub = p.add_subparsers(dest="action", required=True)
    pa = esub.add_parser("aggregate")
    pa.add_argument("--labels", required=True)
    pa.add_argument("--mode", required=True, choices=["mv", "sum"])
    pa.add_argument("--i", type=int, default=7)
    pa.add_argument("--j", type=int, default=16)
    pa.add_argument("--output", required=True)
    pa.add_argument("--manifest")
    pa.set_defaults(func=cmd_ensemble)
    ps = esub.add_parser("search")
    ps.add_argument("--labels", required=True)
    ps.add_argument("--gold", required=True)
    ps.add_argument("--manifest")
    ps.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("humor-metrics", help="generation-control metrics")
    p.add_argument("--generations", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_humor_metrics)

    p = sub.add_parser("pseudo", help="pseudo-data filtering and merging")
    psub = p.add_subparsers(dest="action", required=True)
    pf = psub.add_parser("filter")
    pf.add_argument("--generated", required=True)
    pf.add_argument("--output", required=True)
    pf.add_argument("--ngram-sizes", default="2,3")
    pf.add_argument("--ngram-threshold", type=int, default=10)
    pf.add_argument("--manifest")
    pf.set_defaults(func=cmd_pseudo)
    pm = psub.add_parser("merge")
    pm.add_argument("--generated", required=True)
    pm.add_argument("--originals", required=True)
    pm.add_argument("--output", required=True)
    pm.add_argument("--manifest")
    pm.set_defaults(func=cmd_pseudo)

    p = sub.add_parser("stats", help="correlation report from a segment-score CSV")
    p.add_argument("--pairs", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("analyze", help="overlap and length analyses")
    p.add_argument("--input", required=True, help="JSONL of {system, title, abstract}")
    p.add_argument("--output", required=True)
    p.add_argument("--manifest")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("serve", help="run the annotation HTTP service")
    p.add_argument("--config")
    p.add_argument("--port", type=int)
    p.add_argument("--data-dir")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, JudgmentValidationError) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except InfeasibleSpecError as exc:
        sys.stderr.write(f"infeasible constraint: {exc}\n")
        return EXIT_INFEASIBLE
    except FileNotFoundError as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except KeyError as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
