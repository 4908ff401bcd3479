"""Shared synthetic-data factories, plus the acceptance-suite reporter that
prints one PASS/FAIL line per criterion."""

import random

import pytest

_acceptance_results = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1]
        _acceptance_results[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in _acceptance_results.items():
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] {name}")

from a2teval.annotation import (
    AssignmentPolicy,
    BwsSelection,
    Candidate,
    TaskInstance,
    create_campaign,
)
from a2teval.corpus import LabelOrigin, PaperRecord

SYSTEMS = ["sys_a", "sys_b", "sys_c", "sys_d", "sys_e", "human"]


def make_records(
    n,
    seed=0,
    funny_frac=0.25,
    nlp_frac=0.6,
    human_frac=0.0,
    year_range=(1995, 2022),
    n_abstract_words=30,
):
    rng = random.Random(seed)
    records = []
    for i in range(n):
        funny = rng.random() < funny_frac
        label = rng.choice([1, 2]) if funny else 0
        origin = LabelOrigin.HUMAN if rng.random() < human_frac else LabelOrigin.CLASSIFIER
        records.append(
            PaperRecord(
                id=f"p{i:05d}",
                title=f"Synthetic Title {i}",
                abstract=" ".join(f"w{rng.randrange(500)}" for _ in range(n_abstract_words)),
                venue=rng.choice(["ACL", "EMNLP", "Workshop X", "ICML"]),
                year=rng.randint(*year_range),
                source="NLP" if rng.random() < nlp_frac else "ML",
                humor_label=label,
                humor_label_origin=origin,
            )
        )
    return records


def make_bw_instances(n, n_candidates=6, systems=None, prefix="i"):
    systems = systems or SYSTEMS
    instances = []
    for i in range(n):
        candidates = tuple(
            Candidate(
                candidate_id=f"{prefix}{i}_c{j}",
                title=f"Title {i}.{j}",
                system=systems[j % len(systems)],
            )
            for j in range(n_candidates)
        )
        instances.append(
            TaskInstance(
                id=f"{prefix}{i}",
                abstract_id=f"a{i}",
                abstract_text=f"Abstract text number {i}.",
                candidates=candidates,
            )
        )
    return instances


def make_bw_campaign(n_instances=10, annotators=("ann1", "ann2", "ann3"), per_instance=2, seed=0):
    return create_campaign(
        "camp",
        "BestWorst",
        make_bw_instances(n_instances),
        AssignmentPolicy(annotators=tuple(annotators), per_instance=per_instance),
        seed=seed,
    )


def random_bw_judgments(campaign, seed=0):
    """One valid selection per (assigned annotator, instance)."""
    rng = random.Random(seed)
    judgments = []
    for annotator, instance_ids in sorted(campaign.assignments.items()):
        for iid in instance_ids:
            cand_ids = [c.candidate_id for c in campaign.instance(iid).candidates]
            picks = rng.sample(cand_ids, 4)
            judgments.append(
                BwsSelection(
                    instance_id=iid,
                    annotator_id=annotator,
                    best=frozenset(picks[:2]),
                    worst=frozenset(picks[2:]),
                )
            )
    return judgments


@pytest.fixture
def bw_campaign():
    return make_bw_campaign()
