"""Single-record screening: features -> retrieval -> prompt -> diagnosis.

Uses the deterministic mock backend so the demo runs offline. Point the
backend at any chat-completions endpoint (env CARDIORAG_BASE_URL and
CARDIORAG_MODEL, kind="http") for a real model.
"""
import tempfile
from pathlib import Path

import numpy as np

from cardiorag import (BackendConfig, PromptConfig, RetrievalConfig,
                       build_db, preprocess, random_weights)
from cardiorag.evaluate import ExperimentConfig, screen_record
from cardiorag.prompt import Variant
from cardiorag.records import Label
from cardiorag.synth import random_screening_record, rbbb_record

work = Path(tempfile.mkdtemp(prefix="cardiorag-demo-"))
rng = np.random.default_rng(8)
weights = random_weights(seed=0)

corpus = [preprocess(random_screening_record(
    rng, f"ref{i:03d}", Label.POSITIVE if i % 2 else Label.NEGATIVE))
    for i in range(16)]
db = build_db(corpus, weights, work / "db")

patient = preprocess(rbbb_record(record_id="patient-007", age=61.0))

cfg = ExperimentConfig(
    prompt=PromptConfig(variant=Variant.P2),
    retrieval=RetrievalConfig(k=8),
    backend=BackendConfig(kind="mock"),
)
report, cases, features = screen_record(patient, db, weights, cfg)

print("patient features:")
for key, value in features.items():
    print(f"  {key}: {value}")
print(f"\nretrieved cases: {[sc.case.record_id for sc in cases]}")
print(f"\ndiagnosis: {report.diagnosis.name} "
      f"(confidence {report.confidence:.0f}%, validity {report.validity.value})")
print(f"reasoning: {report.reasoning}")
print(f"indicators: {report.indicators}")
