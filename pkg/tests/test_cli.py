import csv
import json
from pathlib import Path

import pytest

from studentsim.cli import main
from studentsim.dataset import export_cohort, load_cohort, save_raw_samples
from studentsim.synthetic import make_real_records


@pytest.fixture(autouse=True)
def _offline(monkeypatch):
    monkeypatch.setenv("NO_NETWORK", "1")


def _tree(root: Path) -> dict[str, bytes]:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            data = p.read_bytes()
            if p.name == "manifest.json":
                m = json.loads(data)
                m.pop("created_at")
                data = json.dumps(m, sort_keys=True).encode()
            out[str(p.relative_to(root))] = data
    return out


def _simulate(lecture_file, out, *extra):
    return main(
        ["simulate", "--lecture", str(lecture_file), "--mode", "experiment2", "--cohort-size", "3", "--seed", "7", "--out", str(out), *extra]
    )


def test_simulate_is_reproducible(tmp_path, lecture_file):
    assert _simulate(lecture_file, tmp_path / "a") == 0
    assert _simulate(lecture_file, tmp_path / "b", "--workers", "1") == 0
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert set(a) == {"cohort.jsonl", "manifest.json", "logs/agent_0000.jsonl", "logs/agent_0001.jsonl", "logs/agent_0002.jsonl"}
    a_manifest = json.loads(a.pop("manifest.json"))
    b_manifest = json.loads(b.pop("manifest.json"))
    assert a == b
    a_manifest["config"].pop("workers")
    b_manifest["config"].pop("workers")
    assert a_manifest == b_manifest


def test_manifest_contents(tmp_path, lecture_file):
    _simulate(lecture_file, tmp_path / "run")
    m = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert m["exit_code"] == 0
    assert m["seeds"]["agents"] == [7, 6, 5]
    assert m["provider"].startswith("mock")
    assert len(m["template_hash"]) == 64
    assert m["config"]["provider"]["api_key_env"] == "OPENAI_API_KEY"
    assert "api_key" not in m["config"]["provider"]
    assert len(m["agents"]) == 3 and all(a["error"] is None for a in m["agents"])


def test_no_logs_flag(tmp_path, lecture_file):
    _simulate(lecture_file, tmp_path / "run", "--no-logs")
    assert not (tmp_path / "run" / "logs").exists()


def test_experiment1_without_records_is_fatal(tmp_path, lecture_file, capsys):
    code = main(["simulate", "--lecture", str(lecture_file), "--mode", "experiment1", "--out", str(tmp_path / "x")])
    assert code == 1
    assert "records" in capsys.readouterr().err


def test_missing_cohort_size_is_fatal(tmp_path, lecture_file, capsys):
    assert main(["simulate", "--lecture", str(lecture_file), "--out", str(tmp_path / "x")]) == 1
    assert "cohort_size" in capsys.readouterr().err


def test_bad_flag_value_is_fatal(tmp_path, lecture_file):
    with pytest.raises(SystemExit) as err:
        main(["simulate", "--lecture", str(lecture_file), "--ablate", "Z"])
    assert err.value.code == 1


def test_unknown_config_key(tmp_path, lecture_file, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"provider": {"api_key": "sk-nope"}}))
    assert _simulate(lecture_file, tmp_path / "x", "--config", str(cfg)) == 1
    assert "provider.api_key" in capsys.readouterr().err


def test_fault_injection_gives_partial_exit(tmp_path, lecture_file, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cohort_size": 5, "provider": {"kind": "mock", "mock": {"fail_agents": [1, 3]}}}))
    out = tmp_path / "run"
    code = main(["simulate", "--config", str(cfg), "--lecture", str(lecture_file), "--out", str(out)])
    assert code == 2
    assert "virtual-0001" in capsys.readouterr().err
    ids = [r.student_id for r in load_cohort(out / "cohort.jsonl")]
    assert ids == ["virtual-0000", "virtual-0002", "virtual-0004"]
    m = json.loads((out / "manifest.json").read_text())
    assert m["exit_code"] == 2
    assert [a["error"] is not None for a in m["agents"]] == [False, True, False, True, False]


def test_flags_override_config_file(tmp_path, lecture_file):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"cohort_size": 9, "seed": 1}))
    out = tmp_path / "run"
    main(["simulate", "--config", str(cfg), "--lecture", str(lecture_file), "--cohort-size", "2", "--out", str(out)])
    m = json.loads((out / "manifest.json").read_text())
    assert m["config"]["cohort_size"] == 2 and m["config"]["seed"] == 1


def test_experiment1_writes_scores(tmp_path, lecture_file, records_file):
    out = tmp_path / "run"
    code = main(["simulate", "--lecture", str(lecture_file), "--mode", "experiment1", "--records", str(records_file), "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(open(out / "scores.csv")))
    assert {r["agent"] for r in rows} == {"real-0000", "real-0001", "real-0002", "real-0003", "ALL"}


def test_ablation_grid(tmp_path, lecture_file, records_file):
    out = tmp_path / "grid"
    assert main(["ablate", "--lecture", str(lecture_file), "--records", str(records_file), "--out", str(out)]) == 0
    cells = ["all_priors", "all_standard", "xM", "xP", "xC", "xD"]
    for cell in cells:
        assert (out / cell / "scores.csv").is_file()
    rows = list(csv.DictReader(open(out / "comparison.csv")))
    assert [r["cell"] for r in rows] == cells
    assert [r["components"] for r in rows] == ["All", "All", "xM", "xP", "xC", "xD"]
    for log in (out / "xD" / "logs").glob("*.jsonl"):
        for line in log.read_text().splitlines():
            assert "[DEMONSTRATION]" not in json.loads(line)["prompt"]


def test_analyze_self_comparison(tmp_path, lecture_file, records_file):
    out = tmp_path / "an"
    assert main(["analyze", "--lecture", str(lecture_file), "--cohort", str(records_file), "--truth", str(records_file), "--out", str(out)]) == 0
    for row in csv.DictReader(open(out / "scores.csv")):
        v = float(row["value"])
        if "similarity" in row["metric"]:
            assert v == 1.0
        else:
            assert v == 0.0


def test_analyze_correlation(tmp_path, lecture_file, records_file):
    out = tmp_path / "an"
    assert main(["analyze", "--lecture", str(lecture_file), "--cohort", str(records_file), "--out", str(out)]) == 0
    assert (out / "summary.csv").is_file()
    rows = list(csv.reader(open(out / "correlation.csv")))
    for row in rows[1:]:
        for cell in row[1:]:
            assert cell == "NA" or -1.0 <= float(cell) <= 1.0


def test_analyze_reports_malformed_line(tmp_path, lecture, lecture_file, capsys):
    records, _ = make_real_records(lecture, 20, seed=1)
    path = tmp_path / "c.jsonl"
    export_cohort(records, path)
    lines = path.read_text().splitlines()
    lines[16] = lines[16].replace('"gaze_aoi":', '"gaze_aoi":"x","_":', 1)
    path.write_text("\n".join(lines) + "\n")
    assert main(["analyze", "--lecture", str(lecture_file), "--cohort", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "line 17" in capsys.readouterr().err


def test_validate_and_derive(tmp_path, lecture, lecture_file, real_cohort, capsys):
    records, raw = real_cohort
    raw_path = tmp_path / "raw.jsonl"
    save_raw_samples(raw, raw_path)
    personas = tmp_path / "personas.jsonl"
    personas.write_text("".join(json.dumps({"student_id": r.student_id, **r.persona.to_dict()}) + "\n" for r in records))
    answers = tmp_path / "answers.jsonl"
    answers.write_text(
        "".join(
            json.dumps({"student_id": r.student_id, "question_id": a.question_id, "chosen": a.chosen}) + "\n"
            for r in records
            for a in r.answers
        )
    )
    out = tmp_path / "students.jsonl"
    assert main(["derive", "--lecture", str(lecture_file), "--raw", str(raw_path), "--personas", str(personas), "--answers", str(answers), "--out", str(out)]) == 0
    assert load_cohort(out, lecture) == records
    assert main(["validate", "--lecture", str(lecture_file), "--cohort", str(out), "--raw", str(raw_path)]) == 0
    assert "cohort ok: 4 records" in capsys.readouterr().out


def test_personas_command(tmp_path):
    out = tmp_path / "p.jsonl"
    assert main(["personas", "--count", "5", "--seed", "2", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 5


def test_missing_lecture_file(tmp_path, capsys):
    assert main(["validate", "--lecture", str(tmp_path / "nope.jsonl")]) == 1
    assert "nope.jsonl" in capsys.readouterr().err
