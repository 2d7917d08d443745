import json

import numpy as np
import pytest

from cardiorag.casedb import RetrievalConfig, build_db
from cardiorag.errors import EmptyEvaluation
from cardiorag.evaluate import (ConfusionCounts, ExperimentConfig,
                                compute_metrics, run_experiment,
                                write_case_log, write_metrics_csv,
                                write_metrics_json)
from cardiorag.llm import BackendConfig, MOCK_RMSSD_THRESHOLD_MS
from cardiorag.prompt import PromptConfig, Variant
from cardiorag.records import Label, preprocess, write_internal
from cardiorag.synth import random_screening_record


# ---------------------------------------------------------------------------
# compute_metrics
# ---------------------------------------------------------------------------

def test_metrics_reconstruction_k8():
    # 99 evaluated cases, 49 positive: published rates are reproduced by
    # tp=43 fp=35 tn=15 fn=6 (solved from accuracy and recall)
    rep = compute_metrics(ConfusionCounts(tp=43, fp=35, tn=15, fn=6,
                                          excluded=1), "P2 RAG k=8")
    assert rep.accuracy == pytest.approx(58.59, abs=0.01)
    assert rep.recall == pytest.approx(87.76, abs=0.01)
    assert rep.f1 == pytest.approx(0.6772, abs=0.005)
    assert rep.n_evaluated == 99
    assert rep.excluded == 1


def test_metrics_reconstruction_k8_balanced():
    rep = compute_metrics(ConfusionCounts(tp=44, fp=36, tn=14, fn=5,
                                          excluded=1), "P2 RAG k=8 (bal)")
    assert rep.accuracy == pytest.approx(58.59, abs=0.01)
    assert rep.recall == pytest.approx(89.80, abs=0.01)
    assert rep.f1 == pytest.approx(0.6822, abs=0.005)


def test_metrics_all_correct():
    rep = compute_metrics(ConfusionCounts(tp=7, tn=13))
    assert rep.accuracy == 100.0
    assert rep.recall == 100.0
    assert rep.f1 == 1.0
    assert rep.specificity == 100.0


def test_metrics_undefined_denominators_absent():
    rep = compute_metrics(ConfusionCounts(tn=10))
    assert rep.recall is None      # no positives in truth
    assert rep.precision is None   # nothing predicted positive
    assert rep.f1 is None
    assert rep.accuracy == 100.0

    rep = compute_metrics(ConfusionCounts(tp=10))
    assert rep.specificity is None


def test_metrics_empty_evaluation():
    with pytest.raises(EmptyEvaluation):
        compute_metrics(ConfusionCounts(excluded=3))


def test_metrics_brute_force_recount(rng):
    for _ in range(50):
        c = ConfusionCounts(*(int(v) for v in rng.integers(0, 40, size=4)))
        if c.n_evaluated == 0:
            continue
        rep = compute_metrics(c)
        assert rep.accuracy == pytest.approx(
            100.0 * (c.tp + c.tn) / c.n_evaluated, abs=0.0051)
        if c.tp + c.fn:
            assert rep.recall == pytest.approx(
                100.0 * c.tp / (c.tp + c.fn), abs=0.0051)


# ---------------------------------------------------------------------------
# run_experiment (mock end to end)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def harness(tmp_path_factory):
    """Small case database plus a 20-record labeled manifest."""
    from cardiorag.encoder import random_weights

    root = tmp_path_factory.mktemp("eval")
    rng = np.random.default_rng(42)
    weights = random_weights(seed=0)

    corpus = [preprocess(random_screening_record(
        rng, f"case{i:03d}", Label.POSITIVE if i % 2 else Label.NEGATIVE))
        for i in range(12)]
    db = build_db(corpus, weights, root / "db")

    lines = []
    for i in range(20):
        label = Label.POSITIVE if i < 10 else Label.NEGATIVE
        rec = preprocess(random_screening_record(rng, f"test{i:03d}", label))
        write_internal(rec, root / f"test{i:03d}.cre")
        lines.append(json.dumps({"record_path": f"test{i:03d}.cre",
                                 "format": "internal",
                                 "label": label.name}))
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    return root, manifest, db, weights


def _cfg(**kw):
    defaults = dict(prompt=PromptConfig(variant=Variant.P2),
                    retrieval=RetrievalConfig(k=8),
                    backend=BackendConfig(kind="mock"))
    defaults.update(kw)
    return ExperimentConfig(**defaults)


def test_mock_run_matches_rule_oracle(harness):
    root, manifest, db, weights = harness
    report, results = run_experiment(manifest, _cfg(), db=db, weights=weights)

    # oracle: apply the mock decision rule directly to the logged features
    tp = fp = tn = fn = 0
    for r in results:
        assert r.status == "ok"
        f = r.features
        predicted = (f["rbbb"] or f["lafb"]
                     or round(f["rmssd_ms"], 1) < MOCK_RMSSD_THRESHOLD_MS)
        actual = r.label is Label.POSITIVE
        tp += predicted and actual
        fp += predicted and not actual
        tn += not predicted and not actual
        fn += not predicted and actual
    oracle = compute_metrics(ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn),
                             report.configuration)
    assert report == oracle


def test_force_invalid_is_excluded(harness):
    root, manifest, db, weights = harness
    cfg = _cfg(force_invalid_ids=frozenset({"test003"}))
    report, results = run_experiment(manifest, cfg, db=db, weights=weights)
    assert report.excluded == 1
    assert report.n_evaluated == 19
    by_id = {r.record_id: r for r in results}
    assert by_id["test003"].status == "excluded"
    assert by_id["test003"].validity == "INVALID_OUTPUT"


def test_metrics_invariant_under_manifest_permutation(harness, tmp_path):
    root, manifest, db, weights = harness
    lines = manifest.read_text().strip().splitlines()
    rng = np.random.default_rng(0)
    shuffled = list(lines)
    rng.shuffle(shuffled)
    # keep relative paths resolvable from the new manifest location
    shuffled = [json.dumps({**json.loads(ln), "record_path":
                            str(root / json.loads(ln)["record_path"])})
                for ln in shuffled]
    other = tmp_path / "shuffled.jsonl"
    other.write_text("\n".join(shuffled) + "\n")

    base, _ = run_experiment(manifest, _cfg(), db=db, weights=weights)
    perm, _ = run_experiment(other, _cfg(), db=db, weights=weights)
    assert (base.accuracy, base.recall, base.f1) == \
        (perm.accuracy, perm.recall, perm.f1)


def test_excluded_plus_evaluated_covers_manifest(harness):
    root, manifest, db, weights = harness
    cfg = _cfg(force_invalid_ids=frozenset({"test001", "test017"}))
    report, results = run_experiment(manifest, cfg, db=db, weights=weights)
    hard_failures = sum(r.status == "error" for r in results)
    assert report.excluded + report.n_evaluated == len(results) - hard_failures
    assert len(results) == 20


def test_no_rag_configuration(harness):
    root, manifest, db, weights = harness
    cfg = _cfg(retrieval=None)
    report, results = run_experiment(manifest, cfg)
    assert report.configuration == "P2 No RAG"
    assert all(r.retrieved_ids == [] for r in results)


def test_mock_pipeline_bit_deterministic(harness):
    root, manifest, db, weights = harness
    rep1, res1 = run_experiment(manifest, _cfg(), db=db, weights=weights)
    rep2, res2 = run_experiment(manifest, _cfg(), db=db, weights=weights)
    assert rep1 == rep2
    assert [json.dumps(r.to_json_dict(), sort_keys=True) for r in res1] == \
        [json.dumps(r.to_json_dict(), sort_keys=True) for r in res2]


def test_configuration_labels():
    assert _cfg().label == "P2 RAG k=8"
    assert _cfg(retrieval=RetrievalConfig(k=8, balanced=True)).label == \
        "P2 RAG k=8 (bal)"
    assert _cfg(prompt=PromptConfig(variant=Variant.P1),
                retrieval=None).label == "P1 No RAG"


def test_empty_manifest(tmp_path):
    m = tmp_path / "empty.jsonl"
    m.write_text("")
    with pytest.raises(EmptyEvaluation):
        run_experiment(m, _cfg(retrieval=None))


def test_hard_failure_logged_not_fatal(harness, tmp_path):
    root, manifest, db, weights = harness
    lines = manifest.read_text().strip().splitlines()
    lines = [json.dumps({**json.loads(ln), "record_path":
                         str(root / json.loads(ln)["record_path"])})
             for ln in lines]
    lines.append(json.dumps({"record_path": str(root / "missing.cre"),
                             "format": "internal", "label": "POSITIVE"}))
    m = tmp_path / "with-missing.jsonl"
    m.write_text("\n".join(lines) + "\n")
    report, results = run_experiment(m, _cfg(), db=db, weights=weights)
    assert len(results) == 21
    assert results[-1].status == "error"
    assert report.n_evaluated == 20


def test_report_writers(tmp_path, harness):
    root, manifest, db, weights = harness
    report, results = run_experiment(manifest, _cfg(), db=db, weights=weights)

    write_metrics_json([report], tmp_path / "m.json")
    blob = json.loads((tmp_path / "m.json").read_text())
    assert blob[0]["configuration"] == "P2 RAG k=8"

    write_metrics_csv([report], tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().strip().splitlines()
    assert lines[0].startswith("configuration,")
    assert len(lines) == 2

    write_case_log(results, tmp_path / "log.jsonl")
    rows = [json.loads(ln) for ln in
            (tmp_path / "log.jsonl").read_text().strip().splitlines()]
    assert len(rows) == 20
    assert {"record_id", "features", "retrieved_ids", "diagnosis",
            "validity"} <= set(rows[0])
