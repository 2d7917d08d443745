"""Cross-runtime check against the trainer's exported artifacts.

The trainer (trainer/, a separate Node package) consumes internal-format
records and exports a CRW1 weight file plus golden mu vectors from its own
inference-mode forward pass. These tests load both through the Python
encoder and demand agreement within 1e-4 per element. They skip when the
artifacts have not been generated (trainer/README.md documents how).
"""
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cardiorag.encoder import embed, load_weights
from cardiorag.records import RecordFormat, load_record

TRAINER = Path(__file__).resolve().parent.parent / "trainer"
ARTIFACTS = TRAINER / "artifacts"


def _require_artifacts():
    trained = [ARTIFACTS / "weights.crw1", ARTIFACTS / "golden_ids.tsv",
               ARTIFACTS / "golden_mu.f32"]
    if not all(p.exists() for p in trained):
        pytest.skip("trainer artifacts not generated "
                    "(run: cd trainer && npm run train:acceptance)")
    if not (ARTIFACTS / "corpus").is_dir():
        # the corpus is deterministic; regenerate it in place
        subprocess.run([sys.executable,
                        str(TRAINER / "scripts" / "make_corpus.py")],
                       check=True)


def test_trained_weights_load_and_match_golden_embeddings():
    _require_artifacts()
    weights = load_weights(ARTIFACTS / "weights.crw1")
    assert weights.architecture.block_channels == (32, 64, 128, 256)
    assert weights.architecture.latent_dim == 256

    ids = (ARTIFACTS / "golden_ids.tsv").read_text().strip().splitlines()
    golden = np.frombuffer((ARTIFACTS / "golden_mu.f32").read_bytes(),
                           dtype="<f4").reshape(len(ids), 256)

    worst = 0.0
    for row, rid in enumerate(ids):
        rec = load_record(ARTIFACTS / "corpus" / f"{rid}.cre",
                          RecordFormat.INTERNAL)
        e = embed(rec, weights)
        diff = float(np.max(np.abs(e.mu - golden[row].astype(np.float64))))
        worst = max(worst, diff)
        assert diff <= 1e-4, f"{rid}: max |mu diff| = {diff:.2e}"
    print(f"PASS: trainer interop, {len(ids)} golden embeddings match "
          f"within 1e-4 (worst {worst:.2e})")


def test_training_history_decreased():
    _require_artifacts()
    hist = ARTIFACTS / "history.csv"
    if not hist.exists():
        pytest.skip("no training history exported")
    rows = hist.read_text().strip().splitlines()
    header = rows[0].split(",")
    total_col = header.index("total")
    first = float(rows[1].split(",")[total_col])
    last = float(rows[-1].split(",")[total_col])
    assert last < first
    print(f"PASS: trainer total loss decreased {first:.4f} -> {last:.4f}")
