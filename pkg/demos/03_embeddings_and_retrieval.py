"""Latent embeddings and two-stage case retrieval.

Embeds a labeled reference corpus, persists it as a case database, then
retrieves the closest cases for a query record and prints the score
breakdown (normalized latent similarity + age kernel).
"""
import tempfile
from pathlib import Path

import numpy as np

from cardiorag import (RetrievalConfig, build_db, embed, kl_divergence,
                       preprocess, random_weights)
from cardiorag.records import Label
from cardiorag.synth import random_screening_record

work = Path(tempfile.mkdtemp(prefix="cardiorag-demo-"))
rng = np.random.default_rng(5)

# fixed-seed weights stand in for a trained encoder; swap in a trained
# CRW1 file via cardiorag.load_weights for real use
weights = random_weights(seed=0)

corpus = []
for i in range(24):
    label = Label.POSITIVE if i % 2 else Label.NEGATIVE
    corpus.append(preprocess(random_screening_record(rng, f"ref{i:03d}", label)))
db = build_db(corpus, weights, work / "db")
print(f"database: {len(db)} cases at {work / 'db'}")

query = preprocess(random_screening_record(rng, "query", Label.POSITIVE))
latent = embed(query, weights)
print(f"query embedding: mu[:4] = {np.round(latent.mu[:4], 4)}, "
      f"KL to prior = {kl_divergence(latent):.3f}")

cfg = RetrievalConfig(k=6, w_age=0.3, sigma_age=10.0)
print(f"\ntop {cfg.k} cases for query age {query.age:g} "
      f"(w_age={cfg.w_age}, sigma={cfg.sigma_age:g}):")
for rank, sc in enumerate(db.retrieve(latent.mu, query.age, cfg), start=1):
    print(f"  {rank}. {sc.case.record_id}  label={sc.case.label.name:8s} "
          f"age={sc.case.age:g}  s_vae={sc.s_vae:.3f}  s_age={sc.s_age:.3f} "
          f" composite={sc.s_composite:.3f}")

balanced = db.retrieve(latent.mu, query.age,
                       RetrievalConfig(k=6, balanced=True))
counts = {}
for sc in balanced:
    counts[sc.case.label.name] = counts.get(sc.case.label.name, 0) + 1
print(f"\nbalanced mode label mix: {counts}")
