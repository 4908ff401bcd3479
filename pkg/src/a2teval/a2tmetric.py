"""Ranking-supervised title quality metric over frozen sentence embeddings.

A small two-layer projection (affine -> tanh -> affine) maps externally
supplied embeddings into a comparison space where the Euclidean distance
between an abstract and a title reflects title quality: training pushes the
abstract closer to the better title of each relative-ranking judgment
(hinge with margin) while regressing the distance gap onto the scaled human
score difference (MSE). Scoring returns the negated distance, so higher is
better.

Training is single-threaded and bitwise deterministic given the config
seed; gradients are computed analytically and are checked against finite
differences in the test suite.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataFormatError, InfeasibleSpecError
from .scoring import RelativeRankingJudgment

METRIC_FORMAT = "a2teval-metric"
METRIC_VERSION = 1

EMBEDDING_STORE_KIND = "embedding_store"
EMBEDDING_STORE_VERSION = 1


class EmbeddingStore:
    """In-memory id -> vector map with a fixed dimension."""

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self._vectors: dict[str, np.ndarray] = {}

    def add(self, owner_id: str, values: Sequence[float]) -> None:
        vec = np.asarray(values, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise DataFormatError(
                f"embedding {owner_id!r} has dim {vec.shape}, store expects ({self.dim},)"
            )
        if not np.all(np.isfinite(vec)):
            raise DataFormatError(f"embedding {owner_id!r} contains non-finite values")
        self._vectors[owner_id] = vec

    def __contains__(self, owner_id: str) -> bool:
        return owner_id in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def get(self, owner_id: str) -> np.ndarray:
        try:
            return self._vectors[owner_id]
        except KeyError:
            raise DataFormatError(f"no embedding for id {owner_id!r}") from None

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        return np.stack([self.get(i) for i in ids])

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            header = {"kind": EMBEDDING_STORE_KIND, "version": EMBEDDING_STORE_VERSION, "dim": self.dim}
            fh.write(json.dumps(header) + "\n")
            for owner_id in sorted(self._vectors):
                fh.write(json.dumps({"id": owner_id, "vector": self._vectors[owner_id].tolist()}) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingStore":
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("kind") != EMBEDDING_STORE_KIND:
                raise DataFormatError(f"{path}: not an embedding store (missing header)")
            store = cls(dim=int(header["dim"]))
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    store.add(obj["id"], obj["vector"])
                except (json.JSONDecodeError, KeyError) as exc:
                    raise DataFormatError(f"{path}:{lineno}: malformed embedding ({exc})") from exc
        return store


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 0.1
    mse_weight: float = 1.0
    learning_rate: float = 0.05
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    early_stop_patience: int = 0  # 0 disables early stopping
    bws_scale: float = 1.0  # maps score differences to distance units
    hidden_dim: int = 64
    output_dim: int = 16

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.mse_weight < 0:
            raise ValueError("mse_weight must be nonnegative")
        if self.bws_scale <= 0:
            raise ValueError("bws_scale must be positive")
        for name in ("learning_rate", "batch_size", "hidden_dim", "output_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "margin": self.margin,
            "mse_weight": self.mse_weight,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "early_stop_patience": self.early_stop_patience,
            "bws_scale": self.bws_scale,
            "hidden_dim": self.hidden_dim,
            "output_dim": self.output_dim,
        }


class ProjectionModel:
    """affine -> tanh -> affine map from input_dim to output_dim."""

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray, seed: int = 0):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        self.seed = seed
        for name, p in self.params().items():
            if not np.all(np.isfinite(p)):
                raise DataFormatError(f"non-finite parameter {name}")

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, output_dim: int, seed: int = 0) -> "ProjectionModel":
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0.0, np.sqrt(2.0 / (input_dim + hidden_dim)), size=(hidden_dim, input_dim))
        w2 = rng.normal(0.0, np.sqrt(2.0 / (hidden_dim + output_dim)), size=(output_dim, hidden_dim))
        return cls(w1, np.zeros(hidden_dim), w2, np.zeros(output_dim), seed=seed)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def output_dim(self) -> int:
        return self.w2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "ProjectionModel":
        return ProjectionModel(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy(), seed=self.seed
        )

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise DataFormatError(f"input dim {x.shape[1]} != model input dim {self.input_dim}")
        hidden = np.tanh(x @ self.w1.T + self.b1)
        return hidden @ self.w2.T + self.b2

    def _forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        hidden = np.tanh(x @ self.w1.T + self.b1)
        return hidden, hidden @ self.w2.T + self.b2

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "w1": self.w1.tolist(),
            "b1": self.b1.tolist(),
            "w2": self.w2.tolist(),
            "b2": self.b2.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ProjectionModel":
        return cls(obj["w1"], obj["b1"], obj["w2"], obj["b2"], seed=obj.get("seed", 0))


def _pair_distances(za: np.ndarray, zt: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return np.sqrt(np.sum((za - zt) ** 2, axis=1))


def _loss_batch(
    model: ProjectionModel,
    a: np.ndarray,
    t_plus: np.ndarray,
    t_minus: np.ndarray,
    delta: np.ndarray,
    cfg: TrainConfig,
    want_grad: bool = True,
) -> tuple[float, dict[str, np.ndarray] | None]:
    """Mean loss over a batch of triplets, with analytic parameter gradients.

    loss_i = max(0, d(a,t+) - d(a,t-) + margin)
             + mse_weight * ((d(a,t-) - d(a,t+)) - bws_scale * delta_i)^2
    """
    if not (a.shape == t_plus.shape == t_minus.shape):
        raise DataFormatError("embedding batches must share shape")
    batch = a.shape[0]
    # overflow in a diverging run surfaces as the explicit non-finite check
    with np.errstate(over="ignore", invalid="ignore"):
        ha, za = model._forward(a)
        hp, zp = model._forward(t_plus)
        hm, zm = model._forward(t_minus)
        diff_p = za - zp
        diff_m = za - zm
        d_plus = np.sqrt(np.sum(diff_p**2, axis=1))
        d_minus = np.sqrt(np.sum(diff_m**2, axis=1))

        hinge_arg = d_plus - d_minus + cfg.margin
        hinge = np.maximum(hinge_arg, 0.0)
        residual = (d_minus - d_plus) - cfg.bws_scale * delta
        loss = float(np.mean(hinge + cfg.mse_weight * residual**2))
    if not np.isfinite(loss):
        raise DataFormatError("non-finite loss value")
    if not want_grad:
        return loss, None

    active = (hinge_arg > 0).astype(np.float64)
    g_dplus = (active - 2.0 * cfg.mse_weight * residual) / batch
    g_dminus = (-active + 2.0 * cfg.mse_weight * residual) / batch

    # d'(z) = (za - zt)/d; guard zero distances (subgradient 0)
    safe_p = np.where(d_plus > 1e-12, d_plus, 1.0)
    safe_m = np.where(d_minus > 1e-12, d_minus, 1.0)
    unit_p = np.where((d_plus > 1e-12)[:, None], diff_p / safe_p[:, None], 0.0)
    unit_m = np.where((d_minus > 1e-12)[:, None], diff_m / safe_m[:, None], 0.0)

    g_za = g_dplus[:, None] * unit_p + g_dminus[:, None] * unit_m
    g_zp = -g_dplus[:, None] * unit_p
    g_zm = -g_dminus[:, None] * unit_m

    grads = {name: np.zeros_like(p) for name, p in model.params().items()}

    def backprop(x: np.ndarray, hidden: np.ndarray, g_z: np.ndarray) -> None:
        grads["w2"] += g_z.T @ hidden
        grads["b2"] += g_z.sum(axis=0)
        g_hidden = g_z @ model.w2
        g_pre = g_hidden * (1.0 - hidden**2)
        grads["w1"] += g_pre.T @ x
        grads["b1"] += g_pre.sum(axis=0)

    backprop(a, ha, g_za)
    backprop(t_plus, hp, g_zp)
    backprop(t_minus, hm, g_zm)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DataFormatError(f"non-finite gradient for {name}")
    return loss, grads


def loss(
    a_emb: Sequence[float],
    tplus_emb: Sequence[float],
    tminus_emb: Sequence[float],
    delta_bws: float,
    model: ProjectionModel,
    cfg: TrainConfig,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and analytic parameter gradients for one judgment triplet."""
    if delta_bws <= 0:
        raise DataFormatError(f"delta_bws must be positive, got {delta_bws}")
    a = np.atleast_2d(np.asarray(a_emb, dtype=np.float64))
    tp = np.atleast_2d(np.asarray(tplus_emb, dtype=np.float64))
    tm = np.atleast_2d(np.asarray(tminus_emb, dtype=np.float64))
    if not (a.shape[1] == tp.shape[1] == tm.shape[1] == model.input_dim):
        raise DataFormatError("embedding dims must match the model input dim")
    value, grads = _loss_batch(model, a, tp, tm, np.array([delta_bws]), cfg)
    assert grads is not None
    return value, grads


# ── training ─────────────────────────────────────────────────────────────────


@dataclass
class TrainingReport:
    epoch_losses: list[float] = field(default_factory=list)
    dev_taus: list[float | None] = field(default_factory=list)
    train_violations: list[int] = field(default_factory=list)
    best_epoch: int | None = None
    diverged: bool = False

    def to_dict(self) -> dict:
        return {
            "epoch_losses": self.epoch_losses,
            "dev_taus": self.dev_taus,
            "train_violations": self.train_violations,
            "best_epoch": self.best_epoch,
            "diverged": self.diverged,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainingReport":
        return cls(
            epoch_losses=list(obj.get("epoch_losses", [])),
            dev_taus=list(obj.get("dev_taus", [])),
            train_violations=list(obj.get("train_violations", [])),
            best_epoch=obj.get("best_epoch"),
            diverged=obj.get("diverged", False),
        )


@dataclass
class TrainedMetric:
    model: ProjectionModel
    cfg: TrainConfig
    report: TrainingReport

    def save(self, path: str | Path) -> None:
        payload = {
            "format": METRIC_FORMAT,
            "version": METRIC_VERSION,
            "config": self.cfg.to_dict(),
            "model": self.model.to_dict(),
            "report": self.report.to_dict(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "TrainedMetric":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != METRIC_FORMAT or payload.get("version") != METRIC_VERSION:
            raise DataFormatError(
                f"{path}: unsupported metric file "
                f"(format={payload.get('format')!r}, version={payload.get('version')!r}); "
                f"this build reads {METRIC_FORMAT} v{METRIC_VERSION}"
            )
        return cls(
            model=ProjectionModel.from_dict(payload["model"]),
            cfg=TrainConfig(**payload["config"]),
            report=TrainingReport.from_dict(payload.get("report", {})),
        )


def _judgment_arrays(
    judgments: Sequence[RelativeRankingJudgment], store: EmbeddingStore
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    for j in judgments:
        for owner in (j.abstract_id, j.better_candidate_id, j.worse_candidate_id):
            if owner not in store:
                raise DataFormatError(f"no embedding for id {owner!r}")
    a = store.matrix([j.abstract_id for j in judgments])
    tp = store.matrix([j.better_candidate_id for j in judgments])
    tm = store.matrix([j.worse_candidate_id for j in judgments])
    delta = np.array([j.score_diff for j in judgments], dtype=np.float64)
    if np.any(delta <= 0):
        raise DataFormatError("judgments with non-positive score_diff are not trainable")
    return a, tp, tm, delta


def segment_tau(
    model: ProjectionModel, judgments: Sequence[RelativeRankingJudgment], store: EmbeddingStore
) -> float:
    """Relative-ranking tau of the model's scores against the judgments."""
    a, tp, tm, _ = _judgment_arrays(judgments, store)
    za = model.project(a)
    score_p = -_pair_distances(za, model.project(tp))
    score_m = -_pair_distances(za, model.project(tm))
    concordant = int(np.sum(score_p > score_m))
    total = len(judgments)
    return (2 * concordant - total) / total


def _violations(model: ProjectionModel, arrays, margin: float) -> int:
    a, tp, tm, _ = arrays
    za = model.project(a)
    d_plus = _pair_distances(za, model.project(tp))
    d_minus = _pair_distances(za, model.project(tm))
    with np.errstate(invalid="ignore"):
        return int(np.sum(d_plus - d_minus + margin > 0))


def train(
    judgments: Sequence[RelativeRankingJudgment],
    store: EmbeddingStore,
    cfg: TrainConfig,
    dev_judgments: Sequence[RelativeRankingJudgment] | None = None,
) -> TrainedMetric:
    """SGD over judgment triplets; deterministic given cfg.seed.

    When dev judgments are supplied, the checkpoint with the best dev
    segment tau wins; otherwise the final epoch's parameters are returned.
    A non-finite loss aborts training and returns the last good checkpoint
    with the divergence noted in the report.
    """
    if not judgments:
        raise DataFormatError("no judgments to train on")
    arrays = _judgment_arrays(judgments, store)
    a, tp, tm, delta = arrays

    model = ProjectionModel.init(store.dim, cfg.hidden_dim, cfg.output_dim, seed=cfg.seed)
    report = TrainingReport()
    if cfg.epochs == 0:
        return TrainedMetric(model=model, cfg=cfg, report=report)

    rng = np.random.default_rng(cfg.seed)
    n = len(judgments)
    best = model.copy()
    best_tau = -np.inf
    last_good = model.copy()
    stale = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        try:
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                value, grads = _loss_batch(model, a[idx], tp[idx], tm[idx], delta[idx], cfg)
                epoch_loss += value * len(idx)
                for name, p in model.params().items():
                    p -= cfg.learning_rate * grads[name]
        except DataFormatError:
            report.diverged = True
            final = last_good if best_tau == -np.inf else best
            return TrainedMetric(model=final, cfg=cfg, report=report)

        last_good = model.copy()
        report.epoch_losses.append(epoch_loss / n)
        report.train_violations.append(_violations(model, arrays, cfg.margin))

        if dev_judgments:
            tau = segment_tau(model, dev_judgments, store)
            report.dev_taus.append(tau)
            if tau > best_tau:
                best_tau = tau
                best = model.copy()
                report.best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if cfg.early_stop_patience and stale >= cfg.early_stop_patience:
                    break
        else:
            report.dev_taus.append(None)

    final = best if dev_judgments else model
    if report.best_epoch is None and dev_judgments:
        report.best_epoch = 0
    return TrainedMetric(model=final, cfg=cfg, report=report)


def score(metric: TrainedMetric, abstract_emb: Sequence[float], title_emb: Sequence[float]) -> float:
    """Negated Euclidean distance in the projected space; higher = better."""
    za = metric.model.project(abstract_emb)
    zt = metric.model.project(title_emb)
    return float(-_pair_distances(za, zt)[0])


def score_pairs(metric: TrainedMetric, abstracts: np.ndarray, titles: np.ndarray) -> np.ndarray:
    za = metric.model.project(abstracts)
    zt = metric.model.project(titles)
    return -_pair_distances(za, zt)


# ── split protocol ───────────────────────────────────────────────────────────


def make_metric_splits(
    instance_ids: Sequence[str],
    n_splits: int = 5,
    sizes: tuple[int, int, int] = (170, 25, 35),
    seed: int = 0,
) -> list[dict[str, list[str]]]:
    """n_splits independent train/dev/test partitions of the instance set.

    When the instance count differs from sum(sizes), the sizes scale
    proportionally (train and dev floored, test absorbs the remainder).
    """
    n = len(instance_ids)
    total = sum(sizes)
    if total == n:
        n_train, n_dev, n_test = sizes
    else:
        n_train = int(n * sizes[0] / total)
        n_dev = int(n * sizes[1] / total)
        n_test = n - n_train - n_dev
    if min(n_train, n_dev, n_test) < 1:
        raise InfeasibleSpecError(
            f"cannot scale sizes {sizes} to {n} instances: "
            f"got train={n_train} dev={n_dev} test={n_test}"
        )

    rng = np.random.default_rng(seed)
    ids = list(instance_ids)
    splits = []
    for _ in range(n_splits):
        perm = [ids[i] for i in rng.permutation(n)]
        splits.append(
            {
                "train": perm[:n_train],
                "dev": perm[n_train : n_train + n_dev],
                "test": perm[n_train + n_dev :],
            }
        )
    return splits


@dataclass
class SplitProtocolReport:
    segment_tau: "CorrelationReport"
    system_pearson: "CorrelationReport | None"
    system_spearman: "CorrelationReport | None"

    def render(self) -> str:
        lines = [self.segment_tau.summary()]
        if self.system_pearson is not None:
            lines.append(self.system_pearson.summary())
            lines.append(self.system_spearman.summary())
        return "\n".join(lines) + "\n"


def run_split_protocol(
    scores: Sequence,
    store: EmbeddingStore,
    cfg: TrainConfig,
    system_of: Mapping[str, str] | None = None,
    n_splits: int = 5,
    sizes: tuple[int, int, int] = (170, 25, 35),
    seed: int = 0,
    abstract_of: Mapping[str, str] | None = None,
) -> SplitProtocolReport:
    """Train on each of n random splits and report held-out correlations.

    `scores` are per-candidate human scores (BwsScore-shaped). Per split,
    train/dev judgments supervise the model and the test instances provide
    the held-out segment tau; with a candidate->system map, per-system
    means give system-level Pearson and Spearman. Values are aggregated as
    mean with sample standard deviation across splits.
    """
    from .scoring import to_relative_ranking
    from .stats import CorrelationReport, SegmentScorePair, system_level

    ids = sorted({s.instance_id for s in scores})
    splits = make_metric_splits(ids, n_splits=n_splits, sizes=sizes, seed=seed)
    taus: list[float] = []
    pearsons: list[float] = []
    spearmans: list[float] = []
    n_test_judgments = 0
    for split in splits:
        parts = {}
        for name in ("train", "dev", "test"):
            members = set(split[name])
            parts[name] = to_relative_ranking(
                [s for s in scores if s.instance_id in members], abstract_of
            )
        metric = train(parts["train"], store, cfg, dev_judgments=parts["dev"])
        taus.append(segment_tau(metric.model, parts["test"], store))
        n_test_judgments = max(n_test_judgments, len(parts["test"]))
        if system_of is not None:
            pairs_by_system: dict[str, list[SegmentScorePair]] = {}
            test_members = set(split["test"])
            for s in scores:
                if s.instance_id not in test_members:
                    continue
                owner = abstract_of[s.instance_id] if abstract_of else s.instance_id
                m = float(
                    -_pair_distances(
                        metric.model.project(store.get(owner)),
                        metric.model.project(store.get(s.candidate_id)),
                    )[0]
                )
                pairs_by_system.setdefault(system_of[s.candidate_id], []).append(
                    SegmentScorePair(owner, s.candidate_id, m, s.score)
                )
            report = system_level(pairs_by_system)
            if report.pearson_r is not None:
                pearsons.append(report.pearson_r)
                spearmans.append(report.spearman_rho)

    def summarize(level, coefficient, values, n):
        return CorrelationReport(
            level=level,
            coefficient=coefficient,
            value=sum(values) / len(values),
            n=n,
            per_split=values,
        )

    return SplitProtocolReport(
        segment_tau=summarize("Segment", "KendallWMT", taus, n_test_judgments),
        system_pearson=(
            summarize("System", "Pearson", pearsons, len(set(system_of.values()))) if pearsons else None
        ),
        system_spearman=(
            summarize("System", "Spearman", spearmans, len(set(system_of.values()))) if spearmans else None
        ),
    )


# ── embedding provider client ────────────────────────────────────────────────


class EmbeddingClient:
    """Optional HTTP embedding provider with an on-disk cache.

    POSTs {"texts": [...]} to the base URL and expects {"vectors": [...]};
    responses are cached per text under a sha256 key so repeated runs never
    re-request.
    """

    def __init__(self, base_url: str, cache_dir: str | Path):
        self.base_url = base_url
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _cache_path(self, text: str) -> Path:
        key = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return self.cache_dir / f"{key}.json"

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        import httpx

        out: dict[int, list[float]] = {}
        missing: list[tuple[int, str]] = []
        for i, text in enumerate(texts):
            path = self._cache_path(text)
            if path.exists():
                out[i] = json.loads(path.read_text(encoding="utf-8"))
            else:
                missing.append((i, text))
        if missing:
            resp = httpx.post(self.base_url, json={"texts": [t for _, t in missing]})
            resp.raise_for_status()
            vectors = resp.json()["vectors"]
            if len(vectors) != len(missing):
                raise DataFormatError(
                    f"provider returned {len(vectors)} vectors for {len(missing)} texts"
                )
            for (i, text), vec in zip(missing, vectors):
                self._cache_path(text).write_text(json.dumps(vec), encoding="utf-8")
                out[i] = vec
        return [out[i] for i in range(len(texts))]
