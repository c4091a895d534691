"""End-to-end command line checks: index, retrieve, eval."""

from __future__ import annotations

import json
import re

import jsonschema
import pytest

from alignrag.baselines_eval import METHODS
from alignrag.cli import main
from alignrag.pipeline import TRACE_SCHEMA

CITY_RECORDS = [
    {
        "id": "t1",
        "kind": "table",
        "title": "city populations",
        "columns": ["city", "pop"],
        "rows": [["paris", "2m"], ["lyon", "500k"]],
    },
    {
        "id": "t2",
        "kind": "table",
        "title": "country areas",
        "columns": ["country", "area"],
        "rows": [["france", "643"]],
    },
    {
        "id": "p1",
        "kind": "passage",
        "title": "paris overview",
        "sentences": ["paris is the capital of france.", "lyon is smaller."],
    },
]

QUESTION_RECORDS = [
    {"question_id": "q1", "question": "paris population", "gold_object_ids": ["t1"]},
    {"question_id": "q2", "question": "france area", "gold_object_ids": ["t2"]},
]


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return str(path)


@pytest.fixture()
def workdir(tmp_path):
    corpus = write_jsonl(tmp_path / "corpus.jsonl", CITY_RECORDS)
    questions = write_jsonl(tmp_path / "questions.jsonl", QUESTION_RECORDS)
    index = str(tmp_path / "index.json")
    assert main(["index", "build", "--corpus", corpus, "--out", index]) == 0
    return {
        "corpus": corpus,
        "questions": questions,
        "index": index,
        "tmp": tmp_path,
    }


class TestIndexBuild:
    def test_reports_and_writes(self, tmp_path, capsys):
        corpus = write_jsonl(tmp_path / "c.jsonl", CITY_RECORDS)
        out = str(tmp_path / "idx.json")
        assert main(["index", "build", "--corpus", corpus, "--out", out]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "indexed 3 objects"
        assert re.fullmatch(r"chunks: \d+", lines[1])
        assert re.fullmatch(r"ngrams: \d+", lines[2])
        assert lines[3] == f"wrote {out}"
        with open(out, encoding="utf-8") as handle:
            json.load(handle)

    def test_missing_corpus(self, tmp_path, capsys):
        out = str(tmp_path / "idx.json")
        code = main(["index", "build", "--corpus", "nope.jsonl", "--out", out])
        assert code == 1
        assert "error: corpus file not found: nope.jsonl" in capsys.readouterr().err


class TestRetrieve:
    def test_arm_prints_confidence(self, workdir, capsys):
        code = main(
            [
                "retrieve",
                "paris population",
                "--corpus",
                workdir["corpus"],
                "--index",
                workdir["index"],
            ]
        )
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines
        for line in lines:
            assert re.fullmatch(r"\S+\t\d+\.\d{6}", line)

    def test_dense_prints_plain_ids(self, workdir, capsys):
        code = main(
            [
                "retrieve",
                "paris population",
                "--corpus",
                workdir["corpus"],
                "--index",
                workdir["index"],
                "--method",
                "dense",
                "--top-k",
                "2",
            ]
        )
        assert code == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2
        assert all("\t" not in line for line in lines)
        assert set(lines) <= {"t1", "t2", "p1"}

    def test_trace_file_matches_schema(self, workdir, capsys):
        trace_path = workdir["tmp"] / "trace.json"
        code = main(
            [
                "retrieve",
                "paris population",
                "--corpus",
                workdir["corpus"],
                "--index",
                workdir["index"],
                "--trace",
                str(trace_path),
            ]
        )
        assert code == 0
        raw = trace_path.read_text()
        assert raw.endswith("\n")
        trace = json.loads(raw)
        jsonschema.validate(instance=trace, schema=TRACE_SCHEMA)
        assert trace["question_id"] == "q0"
        assert "trace written to" in capsys.readouterr().err

    def test_unknown_method_rejected_by_parser(self, workdir):
        with pytest.raises(SystemExit):
            main(
                [
                    "retrieve",
                    "q",
                    "--corpus",
                    workdir["corpus"],
                    "--index",
                    workdir["index"],
                    "--method",
                    "sparta",
                ]
            )

    def test_missing_index(self, workdir, capsys):
        code = main(
            [
                "retrieve",
                "q",
                "--corpus",
                workdir["corpus"],
                "--index",
                str(workdir["tmp"] / "absent.json"),
            ]
        )
        assert code == 1
        assert "error: index file not found" in capsys.readouterr().err

    def test_env_config_picked_up(self, workdir, capsys, monkeypatch):
        cfg = workdir["tmp"] / "cfg.json"
        cfg.write_text(json.dumps({"final_k": 1}))
        monkeypatch.setenv("ARM_CONFIG", str(cfg))
        argv = [
            "retrieve",
            "paris population",
            "--corpus",
            workdir["corpus"],
            "--index",
            workdir["index"],
        ]
        assert main(argv) == 0
        assert len(capsys.readouterr().out.splitlines()) == 1

    def test_explicit_config_beats_env(self, workdir, capsys, monkeypatch):
        env_cfg = workdir["tmp"] / "env.json"
        env_cfg.write_text(json.dumps({"final_k": 1}))
        cli_cfg = workdir["tmp"] / "cli.json"
        cli_cfg.write_text(json.dumps({"final_k": 2}))
        monkeypatch.setenv("ARM_CONFIG", str(env_cfg))
        argv = [
            "retrieve",
            "paris population",
            "--corpus",
            workdir["corpus"],
            "--index",
            workdir["index"],
            "--config",
            str(cli_cfg),
        ]
        assert main(argv) == 0
        assert len(capsys.readouterr().out.splitlines()) == 2

    def test_seeded_runs_repeat(self, workdir, capsys):
        cfg = workdir["tmp"] / "rand.json"
        cfg.write_text(json.dumps({"scorer": "mock-random"}))
        argv = [
            "retrieve",
            "paris population",
            "--corpus",
            workdir["corpus"],
            "--index",
            workdir["index"],
            "--config",
            str(cfg),
            "--seed",
            "3",
        ]
        assert main(argv) == 0
        first = capsys.readouterr().out
        assert main(argv) == 0
        assert capsys.readouterr().out == first


class TestEvalRun:
    def run(self, workdir, out_name, extra=()):
        out_dir = workdir["tmp"] / out_name
        argv = [
            "eval",
            "run",
            "--corpus",
            workdir["corpus"],
            "--index",
            workdir["index"],
            "--questions",
            workdir["questions"],
            "--out",
            str(out_dir),
            *extra,
        ]
        assert main(argv) == 0
        return out_dir

    def test_writes_reports_and_table(self, workdir, capsys):
        out_dir = self.run(workdir, "rep")
        out = capsys.readouterr().out
        lines = out.splitlines()
        assert lines[0].split() == ["method", "P", "R", "F1", "PR", "#calls", "#obj"]
        assert [ln.split()[0] for ln in lines[1:-1]] == list(METHODS)
        assert lines[-1].startswith("wrote ")
        results = json.loads((out_dir / "results.json").read_text())
        assert results["version"] == 1
        assert set(results["methods"]) == set(METHODS)
        csv_lines = (out_dir / "results.csv").read_text().splitlines()
        assert csv_lines[0].startswith("method,")
        assert len(csv_lines) == 1 + len(METHODS)

    def test_method_flag_limits_rows(self, workdir, capsys):
        out_dir = self.run(
            workdir, "two", extra=["--method", "arm", "--method", "dense"]
        )
        results = json.loads((out_dir / "results.json").read_text())
        assert sorted(results["methods"]) == ["arm", "dense"]
        table = capsys.readouterr().out.splitlines()
        assert [ln.split()[0] for ln in table[1:3]] == ["arm", "dense"]

    def test_reruns_byte_identical(self, workdir, capsys):
        first = self.run(workdir, "a")
        second = self.run(workdir, "b")
        capsys.readouterr()
        for name in ("results.json", "results.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_trace_lines_per_question(self, workdir, capsys):
        trace_path = workdir["tmp"] / "traces.jsonl"
        self.run(
            workdir,
            "traced",
            extra=["--method", "arm", "--trace", str(trace_path)],
        )
        capsys.readouterr()
        lines = trace_path.read_text().splitlines()
        assert len(lines) == len(QUESTION_RECORDS)
        for line, record in zip(lines, QUESTION_RECORDS):
            trace = json.loads(line)
            jsonschema.validate(instance=trace, schema=TRACE_SCHEMA)
            assert trace["question_id"] == record["question_id"]

    def test_missing_questions(self, workdir, capsys):
        code = main(
            [
                "eval",
                "run",
                "--corpus",
                workdir["corpus"],
                "--index",
                workdir["index"],
                "--questions",
                str(workdir["tmp"] / "absent.jsonl"),
                "--out",
                str(workdir["tmp"] / "out"),
            ]
        )
        assert code == 1
        assert "error: questions file not found" in capsys.readouterr().err

    def test_unknown_gold_id_reported(self, workdir, capsys):
        bad = write_jsonl(
            workdir["tmp"] / "bad.jsonl",
            [{"question_id": "q", "question": "x", "gold_object_ids": ["zz"]}],
        )
        code = main(
            [
                "eval",
                "run",
                "--corpus",
                workdir["corpus"],
                "--index",
                workdir["index"],
                "--questions",
                bad,
                "--out",
                str(workdir["tmp"] / "out"),
            ]
        )
        assert code == 1
        assert "error:" in capsys.readouterr().err
