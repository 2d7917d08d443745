import json

import numpy as np
import pytest

from cardiorag.cli import main
from cardiorag.records import Label, RecordFormat, load_record, preprocess, write_internal
from cardiorag.synth import random_screening_record, rbbb_record


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Weights, a small internal-format corpus and a manifest."""
    root = tmp_path_factory.mktemp("cli")
    rng = np.random.default_rng(11)

    assert main(["init-weights", "--out", str(root / "w.crw1")]) == 0

    corpus = root / "corpus"
    corpus.mkdir()
    for i in range(8):
        label = Label.POSITIVE if i % 2 else Label.NEGATIVE
        rec = preprocess(random_screening_record(rng, f"case{i:02d}", label))
        write_internal(rec, corpus / f"case{i:02d}.cre")

    tests = root / "tests"
    tests.mkdir()
    lines = []
    for i in range(6):
        label = Label.POSITIVE if i < 3 else Label.NEGATIVE
        rec = preprocess(random_screening_record(rng, f"t{i:02d}", label))
        write_internal(rec, tests / f"t{i:02d}.cre")
        lines.append(json.dumps({"record_path": f"tests/t{i:02d}.cre",
                                 "format": "internal", "label": label.name}))
    (root / "manifest.jsonl").write_text("\n".join(lines) + "\n")
    return root


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "ingest" in capsys.readouterr().out


def test_subcommand_help_exits_zero(capsys):
    for cmd in ("ingest", "features", "build-db", "screen", "evaluate"):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0


def test_invalid_flag_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["screen", "x.cre", "--no-such-flag"])
    assert exc.value.code == 2


def test_ingest_roundtrip(tmp_path):
    rec = rbbb_record(age=61.0)
    src = tmp_path / "raw.cre"
    write_internal(rec, src)
    out = tmp_path / "pre.cre"
    rc = main(["ingest", str(src), "--format", "internal", "--out", str(out),
               "--preprocess", "--label", "POSITIVE"])
    assert rc == 0
    back = load_record(out, RecordFormat.INTERNAL)
    assert back.is_preprocessed()
    assert back.label is Label.POSITIVE


def test_features_command(tmp_path, capsys):
    src = tmp_path / "r.cre"
    write_internal(preprocess(rbbb_record(age=61.0)), src)
    rc = main(["features", str(src), "--format", "internal"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["features"]["rbbb"] is True
    assert "V1" in payload["leads"]
    assert payload["features"]["rmssd_ms"] == pytest.approx(0.0, abs=5.0)


def test_build_db_and_screen(workspace, capsys):
    db_dir = workspace / "db"
    rc = main(["build-db", str(workspace / "corpus"),
               "--weights", str(workspace / "w.crw1"),
               "--out", str(db_dir)])
    assert rc == 0
    assert (db_dir / "manifest.json").exists()
    capsys.readouterr()

    rc = main(["screen", str(workspace / "tests" / "t00.cre"),
               "--format", "internal", "--db", str(db_dir),
               "--weights", str(workspace / "w.crw1"),
               "--prompt", "P2", "--k", "4", "--llm", "mock"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["diagnosis"] in ("POSITIVE", "NEGATIVE")
    assert payload["validity"] == "VALID"
    assert len(payload["retrieved_ids"]) == 4


def test_screen_force_invalid_exit_code(workspace, capsys):
    rc = main(["screen", str(workspace / "tests" / "t00.cre"),
               "--format", "internal", "--k", "0", "--llm", "mock",
               "--force-invalid"])
    assert rc == 3
    payload = json.loads(capsys.readouterr().out)
    assert payload["validity"] == "INVALID_OUTPUT"


def test_screen_missing_record_exits_one(workspace):
    rc = main(["screen", str(workspace / "nope.cre"), "--format", "internal",
               "--k", "0", "--llm", "mock"])
    assert rc == 1


def test_build_db_unreadable_corpus(workspace):
    rc = main(["build-db", str(workspace / "no-such-dir"),
               "--weights", str(workspace / "w.crw1"),
               "--out", str(workspace / "db2")])
    assert rc == 1


def test_build_db_missing_weights_flag(workspace):
    rc = main(["build-db", str(workspace / "corpus"),
               "--out", str(workspace / "db3")])
    assert rc == 2


def test_evaluate_sweep(workspace, capsys):
    out_dir = workspace / "eval"
    rc = main(["evaluate", str(workspace / "manifest.jsonl"),
               "--db", str(workspace / "db"),
               "--weights", str(workspace / "w.crw1"),
               "--prompt", "P1,P2", "--k", "4,2", "--llm", "mock",
               "--out", str(out_dir)])
    assert rc == 0
    lines = (out_dir / "metrics.csv").read_text().strip().splitlines()
    assert len(lines) == 5  # header + 2x2 sweep
    blob = json.loads((out_dir / "metrics.json").read_text())
    labels = [row["configuration"] for row in blob]
    assert labels == ["P1 RAG k=4", "P1 RAG k=2", "P2 RAG k=4", "P2 RAG k=2"]
    assert (out_dir / "cases_P2_RAG_k4.jsonl").exists()


def test_evaluate_empty_manifest(workspace, tmp_path):
    m = tmp_path / "empty.jsonl"
    m.write_text("")
    rc = main(["evaluate", str(m), "--k", "0", "--llm", "mock",
               "--out", str(tmp_path / "out")])
    assert rc == 2


def test_evaluate_no_rag_row(workspace, capsys):
    out_dir = workspace / "eval-norag"
    rc = main(["evaluate", str(workspace / "manifest.jsonl"),
               "--prompt", "P1", "--k", "0", "--llm", "mock",
               "--out", str(out_dir)])
    assert rc == 0
    blob = json.loads((out_dir / "metrics.json").read_text())
    assert blob[0]["configuration"] == "P1 No RAG"


def test_config_file_supplies_defaults(workspace, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"db": str(workspace / "db"),
                               "weights": str(workspace / "w.crw1"),
                               "k": 2, "llm": "mock"}))
    rc = main(["--config", str(cfg), "screen",
               str(workspace / "tests" / "t01.cre"), "--format", "internal"])
    assert rc == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["retrieved_ids"]) == 2
