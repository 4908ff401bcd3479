"""File-backed persistence: append-only judgment logs, the campaign store,
session tokens, and run manifests.

Durability contract: a judgment is acknowledged only after its log line has
been flushed and fsynced, so an acknowledged judgment survives a process
kill. Replaying the log from genesis reproduces the effective campaign
state exactly. A partial trailing line (crash mid-write) is ignored on
open; corruption anywhere else refuses to load with a diagnostic.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .annotation import Campaign, Judgment, judgment_from_dict
from .errors import DataFormatError

TOOL_VERSION = "0.1.0"


class JudgmentLog:
    """Append-only JSONL log with monotone sequence numbers.

    Writes are serialized through a lock; reads parse the file afresh so
    they always see a consistent prefix.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._last_seq = 0
        for entry in self.entries():
            self._last_seq = max(self._last_seq, entry["seq"])

    def entries(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        raw = self.path.read_bytes()
        lines = raw.split(b"\n")
        complete = lines[:-1]  # data after the final newline is a torn write
        tail = lines[-1]
        for lineno, line in enumerate(complete, start=1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataFormatError(
                    f"{self.path}:{lineno}: corrupt log line ({exc})"
                ) from exc
        if tail.strip():
            # ignored: an unacknowledged judgment that never finished writing
            pass
        return out

    def judgments(self) -> list[Judgment]:
        return [judgment_from_dict(e) for e in self.entries()]

    def append(self, payload: dict) -> dict:
        with self._lock:
            self._last_seq += 1
            entry = {"seq": self._last_seq, **payload}
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            return entry

    def find_by_idempotency_key(self, key: str) -> dict | None:
        for entry in self.entries():
            if entry.get("idempotency_key") == key:
                return entry
        return None


class CampaignStore:
    """Directory of campaign definitions plus one judgment log each."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        (self.root / "campaigns").mkdir(parents=True, exist_ok=True)
        (self.root / "logs").mkdir(parents=True, exist_ok=True)
        self._logs: dict[str, JudgmentLog] = {}

    def _campaign_path(self, campaign_id: str) -> Path:
        return self.root / "campaigns" / f"{campaign_id}.json"

    def save_campaign(self, campaign: Campaign) -> None:
        path = self._campaign_path(campaign.id)
        if path.exists():
            raise DataFormatError(f"campaign {campaign.id!r} already exists")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(campaign.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    def update_campaign(self, campaign: Campaign) -> None:
        path = self._campaign_path(campaign.id)
        if not path.exists():
            raise KeyError(f"no campaign {campaign.id!r} to update")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(campaign.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    def get_campaign(self, campaign_id: str) -> Campaign:
        path = self._campaign_path(campaign_id)
        if not path.exists():
            raise KeyError(f"no campaign {campaign_id!r}")
        with open(path, encoding="utf-8") as fh:
            return Campaign.from_dict(json.load(fh))

    def list_campaign_ids(self) -> list[str]:
        return sorted(
            p.stem
            for p in (self.root / "campaigns").glob("*.json")
            if not p.name.endswith(".manifest.json")
        )

    def log_for(self, campaign_id: str) -> JudgmentLog:
        if campaign_id not in self._logs:
            self._logs[campaign_id] = JudgmentLog(self.root / "logs" / f"{campaign_id}.jsonl")
        return self._logs[campaign_id]

    def validate(self) -> None:
        """Parse every campaign and replay every log; raise on corruption."""
        for cid in self.list_campaign_ids():
            try:
                campaign = self.get_campaign(cid)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataFormatError(f"corrupt campaign store entry {cid!r}: {exc}") from exc
            self.log_for(campaign.id).judgments()


@dataclass
class Session:
    token: str
    annotator_id: str
    campaign_id: str
    expires_at: float


class SessionStore:
    """Pre-issued opaque session tokens with server-side expiry."""

    def __init__(self, root: str | Path, ttl_seconds: float = 8 * 3600):
        self.path = Path(root) / "sessions.jsonl"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.ttl_seconds = ttl_seconds
        self._sessions: dict[str, Session] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    self._sessions[obj["token"]] = Session(**obj)

    def issue(self, annotator_id: str, campaign_id: str) -> Session:
        session = Session(
            token=secrets.token_urlsafe(32),
            annotator_id=annotator_id,
            campaign_id=campaign_id,
            expires_at=time.time() + self.ttl_seconds,
        )
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(session.__dict__, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._sessions[session.token] = session
        return session

    def validate(self, token: str) -> Session | None:
        session = self._sessions.get(token)
        if session is None or session.expires_at < time.time():
            return None
        return session


# ── run manifests ────────────────────────────────────────────────────────────


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record written next to every CLI artifact."""

    command: str
    config: dict
    input_hashes: dict[str, str] = field(default_factory=dict)
    tool_version: str = TOOL_VERSION
    formula_variants: dict = field(default_factory=dict)

    def add_input(self, path: str | Path) -> None:
        self.input_hashes[str(path)] = sha256_file(path)

    def write(self, path: str | Path) -> None:
        payload = {
            "command": self.command,
            "config": self.config,
            "input_hashes": self.input_hashes,
            "tool_version": self.tool_version,
            "formula_variants": self.formula_variants,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(
            command=obj["command"],
            config=obj["config"],
            input_hashes=obj.get("input_hashes", {}),
            tool_version=obj.get("tool_version", "unknown"),
            formula_variants=obj.get("formula_variants", {}),
        )


def default_formula_variants() -> dict:
    from .analysis import EDIT_OVERLAP_VARIANT
    from .corpus import STOPWORDS_VERSION
    from .stats import WMT_TAU_TIE_RULE

    return {
        "wmt_tau_ties": WMT_TAU_TIE_RULE,
        "percentage_agreement": "shared-best-plus-shared-worst-over-4",
        "edit_overlap": EDIT_OVERLAP_VARIANT,
        "stopwords_version": STOPWORDS_VERSION,
        "std": "sample-n-minus-1",
    }
