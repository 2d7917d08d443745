"""Labeled reference cases and the two-stage similarity retrieval.

Stage 1 ranks the whole database by cosine similarity in the latent space
and keeps a pool of ``pool_m`` candidates. Stage 2 min-max normalizes the
pool's cosines to [0, 1], adds an age-similarity bonus through a Gaussian
kernel, and returns the top k by the composite score

    s_composite = s_vae + w_age * s_age

with ties broken by record id so retrieval is reproducible everywhere.
Balanced mode caps each label at ceil(k/2) winners, topping up from the
other label when one side runs short.

On disk a database is a directory: ``manifest.json`` (counts, scoring
defaults, skip list), ``embeddings.f32`` (row-major N x 256 float32) and
``cases.jsonl`` (one case per line, pointing at its embedding row).
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clinical import ClinicalFeatures, extract_features
from .encoder import EncoderWeights, embed
from .errors import CardioRagError, EmptyDatabase, ZeroVector
from .records import EcgRecord, Label, Sex, write_atomic

EMBEDDING_DIM = 256
_DB_VERSION = 1


@dataclass
class CaseEntry:
    record_id: str
    label: Label
    age: float | None
    sex: Sex
    features: ClinicalFeatures
    embedding: np.ndarray

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float64)
        if self.embedding.shape != (EMBEDDING_DIM,):
            raise ValueError(f"embedding must be ({EMBEDDING_DIM},), "
                             f"got {self.embedding.shape}")
        if self.label not in (Label.POSITIVE, Label.NEGATIVE):
            raise ValueError("case label must be POSITIVE or NEGATIVE")


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 8
    pool_m: int | None = None  # None means 4*k
    w_age: float = 0.3
    sigma_age: float = 10.0
    balanced: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.pool_size < self.k:
            raise ValueError("pool_m must be >= k")
        if self.w_age < 0:
            raise ValueError("w_age must be >= 0")
        if self.sigma_age <= 0:
            raise ValueError("sigma_age must be > 0")

    @property
    def pool_size(self) -> int:
        return 4 * self.k if self.pool_m is None else self.pool_m


@dataclass
class ScoredCase:
    case: CaseEntry
    s_vae: float
    s_age: float
    s_composite: float
    age_neutral: bool = False  # True when either age was missing


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def age_similarity(query_age: float | None, case_age: float | None,
                   sigma: float = 10.0) -> float:
    """Gaussian age kernel; a missing age on either side scores neutral 1."""
    if query_age is None or case_age is None:
        return 1.0
    delta = float(query_age) - float(case_age)
    return math.exp(-(delta * delta) / (2.0 * sigma * sigma))


def _balanced_select(ranked: list[ScoredCase], k: int) -> list[ScoredCase]:
    half = math.ceil(k / 2)
    pos = [s for s in ranked if s.case.label is Label.POSITIVE]
    neg = [s for s in ranked if s.case.label is Label.NEGATIVE]
    chosen = pos[:half] + neg[:half]
    if len(chosen) < k:
        leftovers = pos[half:] + neg[half:]
        leftovers.sort(key=lambda s: (-s.s_composite, s.case.record_id))
        chosen += leftovers[:k - len(chosen)]
    chosen.sort(key=lambda s: (-s.s_composite, s.case.record_id))
    return chosen[:k]


def retrieve(query_embedding: np.ndarray, query_age: float | None,
             db: list[CaseEntry], cfg: RetrievalConfig) -> list[ScoredCase]:
    """Two-stage retrieval; results sorted by composite score descending."""
    if not db:
        raise EmptyDatabase("case database is empty")

    cosines = [(cosine_similarity(query_embedding, c.embedding), c) for c in db]
    cosines.sort(key=lambda t: (-t[0], t[1].record_id))
    pool = cosines[:cfg.pool_size]

    values = [c for c, _ in pool]
    lo, hi = min(values), max(values)
    span = hi - lo

    scored = []
    for cos, case in pool:
        s_vae = 1.0 if span == 0.0 else (cos - lo) / span
        s_age = age_similarity(query_age, case.age, cfg.sigma_age)
        scored.append(ScoredCase(
            case=case,
            s_vae=s_vae,
            s_age=s_age,
            s_composite=s_vae + cfg.w_age * s_age,
            age_neutral=query_age is None or case.age is None,
        ))
    scored.sort(key=lambda s: (-s.s_composite, s.case.record_id))

    if cfg.balanced:
        return _balanced_select(scored, cfg.k)
    return scored[:cfg.k]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _case_to_json(entry: CaseEntry, row: int) -> dict:
    return {
        "record_id": entry.record_id,
        "label": entry.label.name,
        "age": entry.age,
        "sex": entry.sex.name,
        "features": entry.features.to_json_dict(),
        "embedding_row": row,
    }


def build_db(corpus: list[EcgRecord], weights: EncoderWeights,
             out_dir: str | os.PathLike, hrv_lead: str = "V5",
             w_age: float = 0.3, sigma_age: float = 10.0) -> "CaseDatabase":
    """Extract features and embeddings for every labeled record and persist.

    Records that fail feature extraction or embedding (or carry no label)
    are skipped and listed in the manifest with the failure reason.
    """
    if not corpus:
        raise EmptyDatabase("corpus is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries: list[CaseEntry] = []
    skipped: list[dict] = []
    rows: list[np.ndarray] = []
    for rec in corpus:
        if rec.label not in (Label.POSITIVE, Label.NEGATIVE):
            skipped.append({"record_id": rec.record_id, "reason": "unlabeled"})
            continue
        try:
            features = extract_features(rec, hrv_lead=hrv_lead)
            latent = embed(rec, weights)
        except CardioRagError as exc:
            skipped.append({"record_id": rec.record_id,
                            "reason": f"{type(exc).__name__}: {exc}"})
            continue
        entries.append(CaseEntry(
            record_id=rec.record_id, label=rec.label, age=rec.age,
            sex=rec.sex, features=features, embedding=latent.mu))
        rows.append(latent.mu.astype("<f4"))

    if not entries:
        raise EmptyDatabase(
            f"no usable cases ({len(skipped)} records skipped)")

    write_atomic(out_dir / "embeddings.f32",
                 np.vstack(rows).astype("<f4").tobytes())
    lines = [json.dumps(_case_to_json(e, i), sort_keys=True)
             for i, e in enumerate(entries)]
    write_atomic(out_dir / "cases.jsonl", "\n".join(lines) + "\n")
    manifest = {
        "version": _DB_VERSION,
        "n_cases": len(entries),
        "dim": EMBEDDING_DIM,
        "w_age": w_age,
        "sigma_age": sigma_age,
        "skipped": skipped,
    }
    write_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return CaseDatabase(entries=entries, w_age=w_age, sigma_age=sigma_age,
                        skipped=skipped)


@dataclass
class CaseDatabase:
    """Immutable in-memory index over a persisted database directory."""

    entries: list[CaseEntry]
    w_age: float = 0.3
    sigma_age: float = 10.0
    skipped: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def load(cls, db_dir: str | os.PathLike) -> "CaseDatabase":
        db_dir = Path(db_dir)
        manifest = json.loads((db_dir / "manifest.json").read_text())
        n = manifest["n_cases"]
        dim = manifest.get("dim", EMBEDDING_DIM)
        if dim != EMBEDDING_DIM:
            raise ValueError(f"database dim {dim} unsupported")
        emb = np.frombuffer((db_dir / "embeddings.f32").read_bytes(),
                            dtype="<f4").reshape(n, dim)
        entries = []
        with open(db_dir / "cases.jsonl") as fh:
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                entries.append(CaseEntry(
                    record_id=d["record_id"],
                    label=Label[d["label"]],
                    age=d["age"],
                    sex=Sex[d["sex"]],
                    features=ClinicalFeatures.from_json_dict(d["features"]),
                    embedding=emb[d["embedding_row"]].astype(np.float64),
                ))
        if len(entries) != n:
            raise ValueError(f"manifest says {n} cases, found {len(entries)}")
        return cls(entries=entries,
                   w_age=manifest.get("w_age", 0.3),
                   sigma_age=manifest.get("sigma_age", 10.0),
                   skipped=manifest.get("skipped", []))

    def retrieve(self, query_embedding: np.ndarray, query_age: float | None,
                 cfg: RetrievalConfig) -> list[ScoredCase]:
        return retrieve(query_embedding, query_age, self.entries, cfg)
