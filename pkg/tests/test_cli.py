import csv
import json
import subprocess
import sys
import time

import pytest

from perfdiff.ast import load_ast
from perfdiff.cli import run
from perfdiff.pairs import load_pairs
from perfdiff.train import load_model


class TestExitCodes:
    def test_help_exits_zero(self, capsys):
        assert run(["--help"]) == 0
        assert "perfdiff" in capsys.readouterr().out

    def test_help_lists_all_subcommands(self, capsys):
        run(["--help"])
        out = capsys.readouterr().out
        for name in ("parse", "gen", "pairs", "train", "eval", "predict",
                     "export-embeddings"):
            assert name in out

    def test_no_command_is_usage_error(self):
        assert run([]) == 1

    def test_unknown_flag_is_usage_error(self, capsys):
        assert run(["gen", "--nonsense"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_missing_input_file_is_data_error(self, capsys):
        assert run(["parse", "missing.c"]) == 2
        assert "missing.c" in capsys.readouterr().err

    def test_bad_source_is_data_error(self, tmp_path, capsys):
        src = tmp_path / "broken.c"
        src.write_text("int f( {")
        assert run(["parse", str(src)]) == 2
        err = capsys.readouterr().err
        assert "expected" in err


class TestParseCommand:
    def test_writes_ast_json(self, tmp_path):
        src = tmp_path / "prog.c"
        src.write_text("int f(){return 0;}")
        out = tmp_path / "prog.json"
        assert run(["parse", str(src), "-o", str(out)]) == 0
        ast = load_ast(out)
        assert ast.source_id == "prog"
        assert len(ast) == 5

    def test_stdout_when_no_output(self, tmp_path, capsys):
        src = tmp_path / "prog.c"
        src.write_text("int f(){return 0;}")
        assert run(["parse", str(src)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["root"] == 0


class TestGenCommand:
    def test_generates_manifest_and_asts(self, tmp_path):
        out = tmp_path / "corpus"
        assert run(["gen", "--n", "8", "--seed", "3", "-o", str(out)]) == 0
        rows = list(csv.DictReader(open(out / "manifest.csv")))
        assert len(rows) == 8
        for row in rows:
            assert load_ast(out / row["ast_path"]).runtime_ms is not None

    def test_seed_env_fallback(self, tmp_path, monkeypatch):
        out1, out2 = tmp_path / "c1", tmp_path / "c2"
        monkeypatch.setenv("PERFDIFF_SEED", "99")
        assert run(["gen", "--n", "4", "-o", str(out1)]) == 0
        assert run(["gen", "--n", "4", "--seed", "99", "-o", str(out2)]) == 0
        assert (out1 / "manifest.csv").read_bytes() == (out2 / "manifest.csv").read_bytes()


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    """gen -> pairs -> train -> eval on a small synthetic corpus."""
    root = tmp_path_factory.mktemp("smoke")
    corpus = root / "corpus"
    started = time.time()
    assert run(["gen", "--n", "50", "--max-depth", "2", "--seed", "19",
                "-o", str(corpus)]) == 0
    train_pairs = root / "train.json"
    test_pairs = root / "test.json"
    assert run([
        "pairs", "--manifest", str(corpus / "manifest.csv"),
        "--ratio", "0.25", "--symmetric", "--seed", "5",
        "-o", str(train_pairs), "--test-out", str(test_pairs),
        "--test-fraction", "0.2",
    ]) == 0
    model = root / "model.pdif"
    assert run([
        "train", "--pairs", str(train_pairs),
        "--encoder", "treelstm", "--variant", "uni", "--layers", "1",
        "-d", "16", "--embedding-dim", "8", "--epochs", "4",
        "--batch-size", "32", "--seed", "0",
        "-o", str(model),
    ]) == 0
    report = root / "report.json"
    matrix = root / "matrix.csv"
    assert run([
        "eval", "--model", str(model), "--pairs", str(test_pairs),
        "--report", str(report), "--csv", str(matrix),
    ]) == 0
    elapsed = time.time() - started
    return root, model, train_pairs, test_pairs, report, matrix, elapsed


class TestPipeline:
    def test_pipeline_completes_quickly(self, smoke):
        *_, elapsed = smoke
        assert elapsed < 300  # spec budget: five minutes on a laptop

    def test_split_is_disjoint(self, smoke):
        _, _, train_pairs, test_pairs, *_ = smoke
        train_ids = load_pairs(train_pairs).source_ids()
        test_ids = load_pairs(test_pairs).source_ids()
        assert train_ids.isdisjoint(test_ids)

    def test_report_schema(self, smoke):
        *_, report, _, _ = smoke
        payload = json.loads(report.read_text())
        assert set(payload) >= {"accuracy", "auc", "n_pairs", "roc_points",
                                "sensitivity", "threshold"}
        assert 0.0 <= payload["accuracy"] <= 1.0
        assert payload["roc_points"][0] == [0.0, 0.0]
        assert payload["roc_points"][-1] == [1.0, 1.0]

    def test_matrix_csv(self, smoke):
        *_, matrix, _ = smoke
        rows = list(csv.reader(open(matrix)))
        assert len(rows) == 2
        assert 0.0 <= float(rows[1][1]) <= 1.0

    def test_predict_on_generated_asts(self, smoke, capsys):
        root, model, *_ = smoke
        manifest = list(csv.DictReader(open(root / "corpus" / "manifest.csv")))
        by_cost = sorted(manifest, key=lambda r: float(r["runtime_ms"]))
        cheap = root / "corpus" / by_cost[0]["ast_path"]
        costly = root / "corpus" / by_cost[-1]["ast_path"]
        assert run(["predict", "--model", str(model), str(costly), str(cheap)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) == {"probability", "label", "meaning"}
        assert 0.0 < payload["probability"] < 1.0

    def test_export_embeddings(self, smoke, tmp_path):
        root, model, *_ = smoke
        out = tmp_path / "emb"
        assert run([
            "export-embeddings", "--model", str(model),
            "--manifest", str(root / "corpus" / "manifest.csv"),
            "--out-dir", str(out),
        ]) == 0
        codes = list(csv.reader(open(out / "codes.csv")))
        assert len(codes) == 1 + 50
        nodes = list(csv.reader(open(out / "nodes.csv")))
        assert len(nodes) >= 2

    def test_eval_cross_matrix_multiple(self, smoke, tmp_path):
        root, model, train_pairs, test_pairs, *_ = smoke
        matrix = tmp_path / "cross.csv"
        assert run([
            "eval", "--model", f"m={model}",
            "--pairs", f"tr={train_pairs}", "--pairs", f"te={test_pairs}",
            "--csv", str(matrix),
        ]) == 0
        rows = list(csv.reader(open(matrix)))
        assert rows[0] == ["train\\test", "te", "tr"]
        assert len(rows) == 2

    def test_train_determinism_across_runs(self, smoke, tmp_path):
        _, _, train_pairs, *_ = smoke
        outs = []
        for name in ("m1.pdif", "m2.pdif"):
            out = tmp_path / name
            assert run([
                "train", "--pairs", str(train_pairs), "--epochs", "2",
                "-d", "8", "--embedding-dim", "4", "--seed", "7",
                "-o", str(out),
            ]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_grid_sweep(self, smoke, tmp_path, capsys):
        _, _, train_pairs, *_ = smoke
        out = tmp_path / "grid.pdif"
        assert run([
            "train", "--pairs", str(train_pairs), "--epochs", "2",
            "--embedding-dim", "4", "--seed", "0",
            "--grid", "layers=1;d=4,8", "--log-json",
            "-o", str(out),
        ]) == 0
        events = [json.loads(line) for line in capsys.readouterr().err.splitlines()]
        trained = [e for e in events if e["event"] == "trained"]
        assert {e["d"] for e in trained} == {4, 8}
        assert load_model(out).config.d in (4, 8)


class TestConfigPrecedence:
    def test_flags_override_config_file(self, smoke, tmp_path):
        _, _, train_pairs, *_ = smoke
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"d": 4, "embedding_dim": 4, "epochs": 1}))
        out = tmp_path / "m.pdif"
        assert run([
            "train", "--pairs", str(train_pairs), "--config", str(cfg),
            "-d", "6", "--seed", "0", "-o", str(out),
        ]) == 0
        loaded = load_model(out)
        assert loaded.config.d == 6              # flag wins
        assert loaded.config.embedding_dim == 4  # config file wins over default

    def test_bad_config_key_is_data_error(self, smoke, tmp_path, capsys):
        _, _, train_pairs, *_ = smoke
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"wat": 1}))
        assert run([
            "train", "--pairs", str(train_pairs), "--config", str(cfg),
            "-o", str(tmp_path / "m.pdif"),
        ]) == 2
        assert "wat" in capsys.readouterr().err


class TestEntryPoint:
    def test_console_script_runs(self):
        proc = subprocess.run(
            [sys.executable, "-m", "perfdiff.cli", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "perfdiff" in proc.stdout
