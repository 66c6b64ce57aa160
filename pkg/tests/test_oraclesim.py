import json
import shutil

import pytest

from config import CORPUS_DIR_NAME, DATA_DIR, PROJECT_DIR, SAMPLE_CORPUS_FILE, SAMPLE_REFERENCE_FILE
from oraclesim import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestLex:
    def test_analyze_matches_reference(self, capsys, data_dir):
        code, out, _ = run_cli(capsys, "lex", "analyze")
        assert code == 0
        assert out == (data_dir / CORPUS_DIR_NAME / SAMPLE_REFERENCE_FILE).read_text(encoding="utf-8")

    def test_analyze_explicit_corpus_and_out(self, capsys, data_dir, tmp_path):
        out_path = tmp_path / "aggregates.csv"
        corpus = data_dir / CORPUS_DIR_NAME / SAMPLE_CORPUS_FILE
        code, out, err = run_cli(capsys, "lex", "analyze", "--corpus", str(corpus), "--out", str(out_path))
        assert code == 0
        assert out == ""
        assert "✅" in err
        reference = (data_dir / CORPUS_DIR_NAME / SAMPLE_REFERENCE_FILE).read_text(encoding="utf-8")
        assert out_path.read_text(encoding="utf-8") == reference

    def test_analyze_json(self, capsys):
        code, out, _ = run_cli(capsys, "lex", "analyze", "--format", "json")
        assert code == 0
        rows = json.loads(out)
        assert sum(row["occurrences"] for row in rows) == 25

    def test_empty_corpus_prints_header_only(self, capsys, tmp_path):
        corpus = tmp_path / "empty.jsonl"
        corpus.write_text("", encoding="utf-8")
        code, out, _ = run_cli(capsys, "lex", "analyze", "--corpus", str(corpus))
        assert code == 0
        assert out.count("\n") == 1
        assert out.startswith("category,occurrences,")

    def test_duplicate_id_fails(self, capsys, tmp_path):
        record = json.dumps({"id": "a", "category": "Discernible", "question": "q?", "answer": "yes"})
        corpus = tmp_path / "dup.jsonl"
        corpus.write_text(record + "\n" + record + "\n", encoding="utf-8")
        code, out, err = run_cli(capsys, "lex", "analyze", "--corpus", str(corpus))
        assert code == 1
        assert out == ""
        assert "❌" in err and "Duplicate" in err

    def test_missing_corpus_fails(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "lex", "analyze", "--corpus", str(tmp_path / "nope.jsonl"))
        assert code == 1
        assert "❌" in err

    def test_corpus_with_invalid_utf8_fails(self, capsys, tmp_path):
        record = json.dumps({"id": "a", "category": "Discernible", "question": "q?", "answer": "yes"})
        corpus = tmp_path / "latin.jsonl"
        corpus.write_bytes(record.encode("utf-8") + b"\n\xff\xfe\n")
        code, out, err = run_cli(capsys, "lex", "analyze", "--corpus", str(corpus))
        assert code == 1
        assert out == ""
        assert "❌" in err and "line 2" in err and "UTF-8" in err

    def test_classify(self, capsys):
        code, out, _ = run_cli(capsys, "lex", "classify", "--answerable-by", "SingleExclusiveSource",
                               "--interpretation-conflict")
        assert code == 0
        result = json.loads(out)
        assert result["category"] == "Ambiguous"
        assert result["routing"] == "LowReliabilityFlag"

    def test_classify_computation(self, capsys):
        _, out, _ = run_cli(capsys, "lex", "classify", "--answerable-by", "ManyObservers", "--pure-computation")
        assert json.loads(out)["routing"] == "ComputePath"

    def test_classify_impossible_features(self, capsys):
        code, out, err = run_cli(capsys, "lex", "classify", "--answerable-by", "NoOne", "--pure-computation")
        assert code == 1
        assert out == ""
        assert "❌" in err


class TestUrnDemo:
    def test_accepted(self, capsys):
        code, out, _ = run_cli(capsys, "urn", "demo", "--m-gold", "go", "--m-silver", "stay")
        assert code == 0
        transcript = json.loads(out)
        assert transcript["outcome"] == {"verdict": "Accepted"}
        expected = "go" if transcript["selection"]["chosen"] == "Gold" else "stay"
        assert transcript["reveal"]["message"] == expected

    def test_tamper_rejected(self, capsys):
        code, out, _ = run_cli(capsys, "urn", "demo", "--m-gold", "go", "--m-silver", "stay", "--tamper")
        assert code == 0
        assert json.loads(out)["outcome"]["verdict"] == "Rejected"

    def test_deterministic(self, capsys):
        args = ("urn", "demo", "--m-gold", "go", "--m-silver", "stay", "--seed", "12")
        _, first, _ = run_cli(capsys, *args)
        _, second, _ = run_cli(capsys, *args)
        assert first == second

    def test_largest_seed_accepted(self, capsys):
        code, out, _ = run_cli(capsys, "urn", "demo", "--m-gold", "go", "--m-silver", "stay",
                               "--seed", str(2 ** 64 - 1))
        assert code == 0
        assert json.loads(out)["outcome"]["verdict"] == "Accepted"

    def test_quorum_not_met(self, capsys):
        _, out, _ = run_cli(capsys, "urn", "demo", "--m-gold", "go", "--m-silver", "stay",
                            "--witnesses", "2", "--quorum", "3")
        assert json.loads(out)["status"] == "QuorumNotMet"


class TestSim:
    def test_run_to_stdout(self, capsys):
        code, out, _ = run_cli(capsys, "sim", "run", "--scenario", "briber", "--seed", "3")
        assert code == 0
        assert json.loads(out)["run_seed"] == 3

    def test_run_outputs_are_reproducible(self, capsys, tmp_path):
        outputs = []
        for attempt in ("a", "b"):
            paths = {key: tmp_path / f"{attempt}.{key}" for key in ("json", "jsonl", "csv")}
            code, out, _ = run_cli(capsys, "sim", "run", "--scenario", "briber.json",
                                   "--out", str(paths["json"]), "--log", str(paths["jsonl"]),
                                   "--csv", str(paths["csv"]))
            assert code == 0
            assert out == ""
            outputs.append({key: path.read_bytes() for key, path in paths.items()})
        assert outputs[0] == outputs[1]

    def test_run_scenario_path(self, capsys, data_dir):
        code, out, _ = run_cli(capsys, "sim", "run", "--scenario", str(data_dir / "scenarios" / "all_honest.json"))
        assert code == 0
        assert json.loads(out)["manipulation_success_rate"] == 0.0

    def test_invalid_scenario(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"duration_days": 0, "tolerance": -1}), encoding="utf-8")
        code, out, err = run_cli(capsys, "sim", "run", "--scenario", str(path))
        assert code == 1
        assert out == ""
        assert "duration_days" in err and "tolerance" in err

    def test_scenario_with_invalid_utf8(self, capsys, tmp_path):
        path = tmp_path / "latin.json"
        path.write_bytes(b'{"name": "\xff", "duration_days": 30}')
        code, out, err = run_cli(capsys, "sim", "run", "--scenario", str(path))
        assert code == 1
        assert out == ""
        assert "UTF-8" in err

    def test_unknown_scenario(self, capsys):
        code, _, err = run_cli(capsys, "sim", "run", "--scenario", "no_such_scenario")
        assert code == 1
        assert "❌" in err

    def test_replicate(self, capsys):
        code, out, _ = run_cli(capsys, "sim", "replicate", "--scenario", "briber", "--runs", "2")
        assert code == 0
        summary = json.loads(out)
        assert summary["runs"] == 2
        assert summary["metrics"]["audits"]["n"] == 2


class TestUsage:
    @pytest.mark.parametrize("argv", [
        [],
        ["divine"],
        ["sim"],
        ["sim", "run"],
        ["sim", "replicate", "--scenario", "briber", "--runs", "0"],
        ["lex", "classify", "--answerable-by", "Everyone"],
        ["urn", "demo", "--m-gold", "a", "--m-silver", "b", "--seed", str(2 ** 64)],
        ["sim", "run", "--scenario", "briber", "--seed", str(2 ** 64)],
        ["sim", "replicate", "--scenario", "briber", "--seed", "-1"],
    ])
    def test_usage_errors_exit_2(self, argv, capsys):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 2


class TestDataDir:
    def test_bundled_data_lives_under_project_dir(self):
        assert DATA_DIR == PROJECT_DIR / "data"
        assert (PROJECT_DIR / "requirements.txt").is_file()
        assert (PROJECT_DIR / "scripts" / "setup_environment.py").is_file()

    def test_env_overrides_flag(self, capsys, monkeypatch, tmp_path, data_dir):
        copy = tmp_path / "data"
        shutil.copytree(data_dir, copy)
        record = {"id": "only", "category": "Recondite", "question": "q?", "answer": "Perhaps."}
        (copy / CORPUS_DIR_NAME / SAMPLE_CORPUS_FILE).write_text(json.dumps(record) + "\n", encoding="utf-8")
        monkeypatch.setenv("ORACLESIM_DATA_DIR", str(copy))

        code, out, _ = run_cli(capsys, "--data-dir", str(data_dir), "lex", "analyze")
        assert code == 0
        lines = out.splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("Recondite,1,")

    def test_flag_used_without_env(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "--data-dir", str(tmp_path), "lex", "analyze")
        assert code == 1
        assert "❌" in err
