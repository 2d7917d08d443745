"""Batch screening runs and confusion-matrix arithmetic.

A manifest is JSON lines of ``{"record_path", "format", "label"}``; paths
resolve relative to the manifest file. Each record runs through the whole
chain (preprocess, features, embedding, retrieval, prompt, diagnosis).
Replies the model could not structure (validity INVALID_OUTPUT) are counted
in ``excluded`` and dropped from the confusion counts; hard per-record
failures (unreadable file, no detectable beats) are logged and excluded
from both. Aggregation follows manifest order regardless of worker
scheduling, so reports are deterministic for a deterministic backend.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .casedb import CaseDatabase, RetrievalConfig, ScoredCase
from .clinical import extract_features
from .encoder import EncoderWeights, embed
from .errors import CardioRagError, EmptyEvaluation
from .llm import (BackendConfig, DiagnosisReport, FORCE_INVALID_MARKER,
                  Validity, diagnose)
from .prompt import PromptConfig, build_prompt
from .records import Label, load_record, preprocess, write_atomic


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    excluded: int = 0

    @property
    def n_evaluated(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsReport:
    """Percentages rounded to 2 decimals, F1 as a 4-decimal ratio.

    Metrics whose denominator is empty are None rather than zero.
    """

    configuration: str
    n_evaluated: int
    excluded: int
    accuracy: float
    recall: float | None
    precision: float | None
    specificity: float | None
    f1: float | None

    def to_json_dict(self) -> dict:
        return {
            "configuration": self.configuration,
            "n_evaluated": self.n_evaluated,
            "excluded": self.excluded,
            "accuracy_pct": self.accuracy,
            "recall_pct": self.recall,
            "precision_pct": self.precision,
            "specificity_pct": self.specificity,
            "f1": self.f1,
        }


CSV_COLUMNS = ["configuration", "n_evaluated", "excluded", "accuracy_pct",
               "recall_pct", "precision_pct", "specificity_pct", "f1"]


def compute_metrics(c: ConfusionCounts, configuration: str = "") -> MetricsReport:
    n = c.n_evaluated
    if n == 0:
        raise EmptyEvaluation("no evaluated cases")

    def pct(num: int, den: int) -> float | None:
        return None if den == 0 else round(100.0 * num / den, 2)

    precision = None if c.tp + c.fp == 0 else c.tp / (c.tp + c.fp)
    recall = None if c.tp + c.fn == 0 else c.tp / (c.tp + c.fn)
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = round(2 * precision * recall / (precision + recall), 4)

    return MetricsReport(
        configuration=configuration,
        n_evaluated=n,
        excluded=c.excluded,
        accuracy=round(100.0 * (c.tp + c.tn) / n, 2),
        recall=pct(c.tp, c.tp + c.fn),
        precision=pct(c.tp, c.tp + c.fp),
        specificity=pct(c.tn, c.tn + c.fp),
        f1=f1,
    )


@dataclass
class ExperimentConfig:
    prompt: PromptConfig = field(default_factory=PromptConfig)
    retrieval: RetrievalConfig | None = field(default_factory=RetrievalConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    hrv_lead: str = "V5"
    force_invalid_ids: frozenset[str] = frozenset()

    @property
    def label(self) -> str:
        name = self.prompt.variant.name
        if self.retrieval is None:
            return f"{name} No RAG"
        bal = " (bal)" if self.retrieval.balanced else ""
        return f"{name} RAG k={self.retrieval.k}{bal}"


@dataclass
class CaseResult:
    record_id: str
    label: Label | None
    status: str  # "ok", "excluded", "error"
    features: dict | None = None
    retrieved_ids: list[str] = field(default_factory=list)
    diagnosis: str | None = None
    confidence: float | None = None
    validity: str | None = None
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "record_id": self.record_id,
            "label": None if self.label is None else self.label.name,
            "status": self.status,
            "features": self.features,
            "retrieved_ids": self.retrieved_ids,
            "diagnosis": self.diagnosis,
            "confidence": self.confidence,
            "validity": self.validity,
            "error": self.error,
        }


def read_manifest(path: str | os.PathLike) -> list[dict]:
    path = Path(path)
    entries = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            rp = Path(d["record_path"])
            if not rp.is_absolute():
                rp = path.parent / rp
            entries.append({"record_path": rp,
                            "format": d.get("format", "internal"),
                            "label": Label[d["label"]]})
    return entries


def screen_record(rec, db: CaseDatabase | None, weights: EncoderWeights | None,
                  cfg: ExperimentConfig) -> tuple[DiagnosisReport, list[ScoredCase], dict]:
    """Run one preprocessed record through features -> RAG -> diagnosis."""
    features = extract_features(rec, hrv_lead=cfg.hrv_lead)
    cases: list[ScoredCase] = []
    if cfg.retrieval is not None and db is not None and len(db) > 0:
        latent = embed(rec, weights)
        cases = db.retrieve(latent.mu, rec.age, cfg.retrieval)
    text = build_prompt(cfg.prompt, features, cases)
    if rec.record_id in cfg.force_invalid_ids:
        text += f"\n{FORCE_INVALID_MARKER}\n"
    report = diagnose(text, cfg.backend)
    return report, cases, features.to_json_dict()


def _run_one(entry: dict, db, weights, cfg: ExperimentConfig) -> CaseResult:
    label = entry["label"]
    rid = str(entry["record_path"])
    try:
        rec = load_record(entry["record_path"], entry["format"])
        rid = rec.record_id
        rec = preprocess(rec)
        report, cases, feat = screen_record(rec, db, weights, cfg)
    except CardioRagError as exc:
        return CaseResult(record_id=rid, label=label, status="error",
                          error=f"{type(exc).__name__}: {exc}")

    if report.validity is Validity.INVALID_OUTPUT:
        return CaseResult(record_id=rid, label=label, status="excluded",
                          features=feat,
                          retrieved_ids=[sc.case.record_id for sc in cases],
                          validity=report.validity.value)
    return CaseResult(
        record_id=rid, label=label, status="ok", features=feat,
        retrieved_ids=[sc.case.record_id for sc in cases],
        diagnosis=report.diagnosis.name, confidence=report.confidence,
        validity=report.validity.value)


def run_experiment(manifest: str | os.PathLike, cfg: ExperimentConfig,
                   db: CaseDatabase | None = None,
                   weights: EncoderWeights | None = None) -> tuple[MetricsReport, list[CaseResult]]:
    """Screen every manifest record and aggregate Table-style metrics."""
    entries = read_manifest(manifest)
    if not entries:
        raise EmptyEvaluation(f"manifest {manifest} lists no records")
    if cfg.retrieval is not None and (db is None or weights is None):
        raise ValueError("retrieval configured but db/weights not provided")

    workers = max(1, cfg.backend.concurrency)
    if workers == 1 or cfg.backend.kind == "mock":
        results = [_run_one(e, db, weights, cfg) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda e: _run_one(e, db, weights, cfg),
                                    entries))

    counts = ConfusionCounts()
    for res in results:
        if res.status == "excluded":
            counts.excluded += 1
        elif res.status == "ok":
            predicted_positive = res.diagnosis == Label.POSITIVE.name
            actually_positive = res.label is Label.POSITIVE
            if predicted_positive and actually_positive:
                counts.tp += 1
            elif predicted_positive:
                counts.fp += 1
            elif actually_positive:
                counts.fn += 1
            else:
                counts.tn += 1

    report = compute_metrics(counts, configuration=cfg.label)
    return report, results


# ---------------------------------------------------------------------------
# report writers
# ---------------------------------------------------------------------------

def write_metrics_json(reports: list[MetricsReport], path) -> None:
    payload = [r.to_json_dict() for r in reports]
    write_atomic(path, json.dumps(payload, indent=2) + "\n")


def write_metrics_csv(reports: list[MetricsReport], path) -> None:
    def cell(v) -> str:
        return "" if v is None else str(v)

    lines = [",".join(CSV_COLUMNS)]
    for r in reports:
        d = r.to_json_dict()
        lines.append(",".join(cell(d[c]) for c in CSV_COLUMNS))
    write_atomic(path, "\n".join(lines) + "\n")


def write_case_log(results: list[CaseResult], path) -> None:
    lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in results]
    write_atomic(path, "\n".join(lines) + "\n")
