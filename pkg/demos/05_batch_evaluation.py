"""Batch evaluation sweep.

Builds a labeled test manifest, runs four configurations against the mock
backend, and prints a comparison table with exclusion accounting (one
record is forced to produce an unparseable reply).
"""
import json
import tempfile
from pathlib import Path

import numpy as np

from cardiorag import (BackendConfig, PromptConfig, RetrievalConfig,
                       build_db, preprocess, random_weights, run_experiment)
from cardiorag.evaluate import ExperimentConfig, write_metrics_csv
from cardiorag.prompt import Variant
from cardiorag.records import Label, write_internal
from cardiorag.synth import random_screening_record

work = Path(tempfile.mkdtemp(prefix="cardiorag-demo-"))
rng = np.random.default_rng(13)
weights = random_weights(seed=0)

corpus = [preprocess(random_screening_record(
    rng, f"ref{i:03d}", Label.POSITIVE if i % 2 else Label.NEGATIVE))
    for i in range(20)]
db = build_db(corpus, weights, work / "db")

lines = []
for i in range(30):
    label = Label.POSITIVE if i < 15 else Label.NEGATIVE
    rec = preprocess(random_screening_record(rng, f"pt{i:03d}", label))
    write_internal(rec, work / f"pt{i:03d}.cre")
    lines.append(json.dumps({"record_path": f"pt{i:03d}.cre",
                             "format": "internal", "label": label.name}))
manifest = work / "manifest.jsonl"
manifest.write_text("\n".join(lines) + "\n")

configurations = [
    ExperimentConfig(prompt=PromptConfig(variant=Variant.P1), retrieval=None,
                     backend=BackendConfig(kind="mock")),
    ExperimentConfig(prompt=PromptConfig(variant=Variant.P1),
                     retrieval=RetrievalConfig(k=8),
                     backend=BackendConfig(kind="mock")),
    ExperimentConfig(prompt=PromptConfig(variant=Variant.P2),
                     retrieval=RetrievalConfig(k=8),
                     backend=BackendConfig(kind="mock"),
                     force_invalid_ids=frozenset({"pt011"})),
    ExperimentConfig(prompt=PromptConfig(variant=Variant.P2),
                     retrieval=RetrievalConfig(k=8, balanced=True),
                     backend=BackendConfig(kind="mock")),
]

reports = []
print(f"{'configuration':<18} {'N':>3} {'excl':>4} {'acc%':>7} "
      f"{'recall%':>8} {'f1':>7}")
for cfg in configurations:
    report, _ = run_experiment(manifest, cfg, db=db, weights=weights)
    reports.append(report)
    print(f"{report.configuration:<18} {report.n_evaluated:>3} "
          f"{report.excluded:>4} {report.accuracy:>7.2f} "
          f"{report.recall:>8.2f} {report.f1:>7.4f}")

write_metrics_csv(reports, work / "metrics.csv")
print(f"\nwrote {work / 'metrics.csv'}")
