"""HTTP API serving annotation campaigns to the browser frontend.

Judgments are durably logged before the response is acknowledged, writes
funnel through the per-campaign log appender, and reads work from replayed
immutable state. Task payloads sent to annotators never contain system
tags; only the analysis export view does.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .annotation import (
    BwsSelection,
    CampaignKind,
    PairChoice,
    PairOption,
    RankAnnotation,
    effective_state,
    export_campaign_csv,
    record_judgment,
)
from .errors import DataFormatError, JudgmentValidationError
from .storage import CampaignStore, SessionStore

ENV_PORT = "A2TEVAL_PORT"
ENV_DATA_DIR = "A2TEVAL_DATA_DIR"


@dataclass
class ServiceConfig:
    data_dir: str = "data"
    host: str = "127.0.0.1"
    port: int = 8040
    session_ttl_seconds: float = 8 * 3600

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ServiceConfig":
        """Read the JSON config file, then apply env overrides for the port
        and data directory."""
        cfg = cls()
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
            for key in ("data_dir", "host", "port", "session_ttl_seconds"):
                if key in obj:
                    setattr(cfg, key, obj[key])
        if os.environ.get(ENV_PORT):
            cfg.port = int(os.environ[ENV_PORT])
        if os.environ.get(ENV_DATA_DIR):
            cfg.data_dir = os.environ[ENV_DATA_DIR]
        return cfg


class SessionRequest(BaseModel):
    annotator_id: str
    campaign_id: str


class JudgmentBody(BaseModel):
    kind: str
    instance_id: str
    annotator_id: str
    best: list[str] | None = None
    worst: list[str] | None = None
    rank_of: dict[str, int] | None = None
    criterion: str = "quality"
    choice: str | None = None
    timestamp: float = 0.0
    idempotency_key: str | None = None


def _to_judgment(body: JudgmentBody):
    if body.kind == "BestWorst":
        return BwsSelection(
            instance_id=body.instance_id,
            annotator_id=body.annotator_id,
            best=frozenset(body.best or []),
            worst=frozenset(body.worst or []),
            timestamp=body.timestamp,
        )
    if body.kind == "Ranking":
        return RankAnnotation(
            instance_id=body.instance_id,
            annotator_id=body.annotator_id,
            rank_of=body.rank_of or {},
            criterion=body.criterion,
            timestamp=body.timestamp,
        )
    if body.kind == "Pairwise":
        try:
            choice = PairOption(body.choice)
        except ValueError:
            raise JudgmentValidationError(f"unknown pairwise choice {body.choice!r}")
        return PairChoice(
            instance_id=body.instance_id,
            annotator_id=body.annotator_id,
            choice=choice,
            timestamp=body.timestamp,
        )
    raise JudgmentValidationError(f"unknown judgment kind {body.kind!r}")


def _required_criteria(campaign) -> list[str]:
    if campaign.kind == CampaignKind.RANKING:
        return list(campaign.ranking_criteria)
    return [None]


def create_app(config: ServiceConfig) -> FastAPI:
    store = CampaignStore(config.data_dir)
    store.validate()  # refuse to start on a corrupt store
    sessions = SessionStore(config.data_dir, ttl_seconds=config.session_ttl_seconds)

    app = FastAPI(title="a2teval annotation service")
    app.state.store = store
    app.state.sessions = sessions

    def auth(authorization: str | None = Header(default=None)):
        if not authorization or not authorization.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        session = sessions.validate(authorization.removeprefix("Bearer "))
        if session is None:
            raise HTTPException(status_code=401, detail="invalid or expired session")
        return session

    @app.post("/auth/session")
    def open_session(req: SessionRequest):
        try:
            campaign = store.get_campaign(req.campaign_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no campaign {req.campaign_id!r}")
        if req.annotator_id not in campaign.assignments:
            raise HTTPException(
                status_code=403,
                detail=f"annotator {req.annotator_id!r} is not part of this campaign",
            )
        session = sessions.issue(req.annotator_id, req.campaign_id)
        return {"token": session.token, "expires_at": session.expires_at}

    @app.get("/campaigns")
    def list_campaigns():
        out = []
        for cid in store.list_campaign_ids():
            campaign = store.get_campaign(cid)
            out.append(
                {
                    "id": campaign.id,
                    "kind": campaign.kind.value,
                    "n_instances": len(campaign.instances),
                    "min_annotators_per_instance": campaign.min_annotators_per_instance,
                    "max_annotators_per_instance": campaign.max_annotators_per_instance,
                }
            )
        return out

    @app.get("/campaigns/{campaign_id}/next")
    def next_task(campaign_id: str, annotator: str = Query(...), session=Depends(auth)):
        if session.campaign_id != campaign_id or session.annotator_id != annotator:
            raise HTTPException(status_code=403, detail="session does not cover this request")
        try:
            campaign = store.get_campaign(campaign_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no campaign {campaign_id!r}")
        state = effective_state(store.log_for(campaign_id).judgments())
        assigned = campaign.assignments.get(annotator, [])
        criteria = _required_criteria(campaign)
        remaining = [
            iid
            for iid in assigned
            if any((iid, annotator, c) not in state for c in criteria)
        ]
        done = len(assigned) - len(remaining)
        if not remaining:
            return {"task": None, "done": done, "total": len(assigned)}
        inst = campaign.instance(remaining[0])
        order = campaign.presentation.get((annotator, inst.id))
        by_id = {c.candidate_id: c for c in inst.candidates}
        ordered = [by_id[cid] for cid in order] if order else list(inst.candidates)
        missing_criteria = [
            c for c in criteria if c is not None and (inst.id, annotator, c) not in state
        ]
        return {
            "task": {
                "instance_id": inst.id,
                "abstract_id": inst.abstract_id,
                "abstract_text": inst.abstract_text,
                "kind": campaign.kind.value,
                # blind view: candidate_id + title only, never the system tag
                "candidates": [
                    {"candidate_id": c.candidate_id, "title": c.title} for c in ordered
                ],
                "criteria": missing_criteria,
            },
            "done": done,
            "total": len(assigned),
        }

    @app.post("/campaigns/{campaign_id}/judgments")
    def submit_judgment(campaign_id: str, body: JudgmentBody, session=Depends(auth)):
        if session.campaign_id != campaign_id or session.annotator_id != body.annotator_id:
            raise HTTPException(status_code=403, detail="session does not cover this annotator")
        try:
            campaign = store.get_campaign(campaign_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no campaign {campaign_id!r}")
        log = store.log_for(campaign_id)
        if body.idempotency_key:
            prior = log.find_by_idempotency_key(body.idempotency_key)
            if prior is not None:
                return {
                    "seq": prior["seq"],
                    "instance_id": prior["instance_id"],
                    "annotator_id": prior["annotator_id"],
                    "replayed": True,
                }
        try:
            judgment = _to_judgment(body)
            if body.idempotency_key:
                # wrap append so the key lands in the log entry
                class _KeyedLog:
                    def append(self, payload):
                        payload = {**payload, "idempotency_key": body.idempotency_key}
                        return log.append(payload)

                receipt = record_judgment(campaign, judgment, _KeyedLog())
            else:
                receipt = record_judgment(campaign, judgment, log)
        except JudgmentValidationError as exc:
            raise HTTPException(status_code=422, detail={"reason": str(exc)})
        return {**receipt, "replayed": False}

    @app.get("/campaigns/{campaign_id}/progress")
    def progress(campaign_id: str):
        try:
            campaign = store.get_campaign(campaign_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no campaign {campaign_id!r}")
        state = effective_state(store.log_for(campaign_id).judgments())
        criteria = _required_criteria(campaign)
        per_annotator = {}
        for annotator, assigned in sorted(campaign.assignments.items()):
            done = sum(
                1
                for iid in assigned
                if all((iid, annotator, c) in state for c in criteria)
            )
            per_annotator[annotator] = {"done": done, "assigned": len(assigned)}
        total_done = sum(v["done"] for v in per_annotator.values())
        total_assigned = sum(v["assigned"] for v in per_annotator.values())
        return {"annotators": per_annotator, "done": total_done, "assigned": total_assigned}

    @app.get("/campaigns/{campaign_id}/export", response_class=PlainTextResponse)
    def export(campaign_id: str, view: str = Query(default="analysis")):
        if view not in ("annotator", "analysis"):
            raise HTTPException(status_code=422, detail=f"unknown view {view!r}")
        try:
            campaign = store.get_campaign(campaign_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no campaign {campaign_id!r}")
        judgments = store.log_for(campaign_id).judgments()
        return export_campaign_csv(campaign, judgments, view=view)

    return app


def serve(config: ServiceConfig) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    try:
        app = create_app(config)
    except DataFormatError as exc:
        raise SystemExit(f"refusing to start: {exc}")
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
