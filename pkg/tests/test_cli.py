"""End-to-end command-line flows over the simulated executor."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from leveldiff.cli import (
    ENV_OUTPUT_DIR,
    MEASUREMENT_LOG,
    REPORT_FILE,
    SUMMARY_FILE,
    load_campaign,
    load_pair_preset,
    main,
    read_measurement_log,
)
from leveldiff.corpus import load_manifest
from leveldiff.model import ConfigError


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")
    return path


def _sim_pair_obj(label="SIM"):
    return {
        "label": label,
        "kind": "level",
        "baseline": {"id": "sim-baseline", "command_prefix": ["sim"]},
        "subject": {"id": "sim-subject", "command_prefix": ["sim"]},
    }


def _simulate(tmp_path, spec_obj, name="corpus") -> Path:
    """Run the simulate command, returning the corpus directory."""
    corpus_dir = tmp_path / name
    spec_path = _write_json(
        tmp_path / f"{name}-spec.json", {**spec_obj, "output_dir": str(corpus_dir)}
    )
    assert main(["simulate", str(spec_path)]) == 0
    return corpus_dir


def _campaign(tmp_path, corpus_dir, out_name="out", **extra) -> Path:
    obj = {
        "pairs": [_sim_pair_obj()],
        "schedule": {"preset": "paper-lp"},
        "executor": {"kind": "simulated", "model_table": str(corpus_dir / "models.json")},
        "output_dir": str(tmp_path / out_name),
        **extra,
    }
    return _write_json(tmp_path / f"campaign-{out_name}.json", obj)


def test_simulate_writes_loadable_corpus(tmp_path):
    corpus_dir = _simulate(tmp_path, {"neutral": 2, "injected_bug": 1, "seed": 3})
    manifest = load_manifest(corpus_dir / "manifest.json")
    assert len(manifest.programs) == 3
    models = json.loads((corpus_dir / "models.json").read_text())
    truth = json.loads((corpus_dir / "ground_truth.json").read_text())
    assert set(truth) == {p.id for p in manifest.programs}
    assert len(models) > 0


def test_simulate_rejects_unknown_fields(tmp_path):
    spec_path = _write_json(tmp_path / "spec.json", {"neutral": 1, "wat": 2})
    assert main(["simulate", str(spec_path)]) == 2


def test_run_reports_ten_injected_bugs_as_unique(tmp_path, capsys):
    corpus_dir = _simulate(tmp_path, {"injected_bug": 10, "seed": 5})
    campaign = _campaign(tmp_path, corpus_dir)
    assert main(["run", str(campaign), str(corpus_dir / "manifest.json")]) == 0

    out = capsys.readouterr().out
    assert "[SIM] programs=10 pass=10" in out
    assert "unique=10" in out

    summary = json.loads((tmp_path / "out" / SUMMARY_FILE).read_text())
    result = summary["results"]["SIM"]
    assert len(result["survivors"]) == 10
    assert all(v["kind"] == "survivor" for v in result["verdicts"].values())
    # Every artifact the run promises is present.
    for name in (MEASUREMENT_LOG, SUMMARY_FILE, "run_info.json"):
        assert (tmp_path / "out" / name).exists()


def test_rerun_summary_is_byte_identical(tmp_path):
    # Noise on: determinism must come from seeded noise streams, not luck.
    corpus_dir = _simulate(
        tmp_path, {"neutral": 5, "injected_bug": 2, "noise_sd": 0.02, "seed": 9}
    )
    campaign_a = _campaign(tmp_path, corpus_dir, out_name="out-a")
    campaign_b = _campaign(tmp_path, corpus_dir, out_name="out-b")
    manifest = str(corpus_dir / "manifest.json")
    assert main(["run", campaign_a.as_posix(), manifest]) == 0
    assert main(["run", campaign_b.as_posix(), manifest]) == 0
    summary_a = (tmp_path / "out-a" / SUMMARY_FILE).read_bytes()
    summary_b = (tmp_path / "out-b" / SUMMARY_FILE).read_bytes()
    assert summary_a == summary_b
    log_a = (tmp_path / "out-a" / MEASUREMENT_LOG).read_bytes()
    log_b = (tmp_path / "out-b" / MEASUREMENT_LOG).read_bytes()
    assert log_a == log_b


def test_run_rejects_empty_corpus(tmp_path):
    corpus_dir = _simulate(tmp_path, {"injected_bug": 1, "seed": 0})
    empty = _write_json(
        tmp_path / "empty.json", {"version": 1, "defaults": {}, "programs": []}
    )
    campaign = _campaign(tmp_path, corpus_dir)
    assert main(["run", str(campaign), str(empty)]) == 2


def test_fail_on_candidates_exit_code(tmp_path):
    corpus_dir = _simulate(tmp_path, {"injected_bug": 1, "seed": 0})
    campaign = _campaign(tmp_path, corpus_dir)
    manifest = str(corpus_dir / "manifest.json")
    assert main(["run", str(campaign), manifest, "--fail-on-candidates"]) == 1
    # A corpus with nothing to find exits 0 under the same flag.
    clean_dir = _simulate(tmp_path, {"neutral": 3, "seed": 0}, name="clean")
    clean_campaign = _campaign(tmp_path, clean_dir, out_name="out-clean")
    assert (
        main(
            [
                "run",
                str(clean_campaign),
                str(clean_dir / "manifest.json"),
                "--fail-on-candidates",
            ]
        )
        == 0
    )


def test_output_dir_environment_override(tmp_path, monkeypatch):
    corpus_dir = _simulate(tmp_path, {"injected_bug": 1, "seed": 1})
    campaign = _campaign(tmp_path, corpus_dir)
    override = tmp_path / "elsewhere"
    monkeypatch.setenv(ENV_OUTPUT_DIR, str(override))
    assert main(["run", str(campaign), str(corpus_dir / "manifest.json")]) == 0
    assert (override / SUMMARY_FILE).exists()
    assert not (tmp_path / "out").exists()


def test_report_renders_table_and_is_idempotent(tmp_path, capsys):
    corpus_dir = _simulate(
        tmp_path, {"neutral": 6, "constant_overhead": 2, "injected_bug": 2, "seed": 7}
    )
    campaign = _campaign(tmp_path, corpus_dir)
    assert main(["run", str(campaign), str(corpus_dir / "manifest.json")]) == 0
    capsys.readouterr()

    out_dir = str(tmp_path / "out")
    assert main(["report", out_dir]) == 0
    first_stdout = capsys.readouterr().out
    first_report = (tmp_path / "out" / REPORT_FILE).read_bytes()

    assert "removed@L0" in first_stdout
    assert "unique" in first_stdout
    # Candidate lines show the per-level ratio trail.
    assert "ratio=" in first_stdout and "trail=0:" in first_stdout

    assert main(["report", out_dir]) == 0
    second_stdout = capsys.readouterr().out
    assert second_stdout == first_stdout
    assert (tmp_path / "out" / REPORT_FILE).read_bytes() == first_report

    report = json.loads(first_report)
    entry = report["pairs"]["SIM"]
    assert entry["programs_measured"] == 10
    assert entry["executed_per_level"][0] == 10
    assert sum(entry["removed_per_level"]) + entry["passed_checks"] + entry["errored"] == 10
    assert entry["time_total_ns"] >= entry["time_after_first_level_ns"]


def test_report_tolerates_torn_log_tail(tmp_path, capsys):
    corpus_dir = _simulate(tmp_path, {"injected_bug": 2, "seed": 2})
    campaign = _campaign(tmp_path, corpus_dir)
    assert main(["run", str(campaign), str(corpus_dir / "manifest.json")]) == 0

    log_path = tmp_path / "out" / MEASUREMENT_LOG
    full = read_measurement_log(log_path)
    text = log_path.read_text()
    torn = text[: len(text) - 25]  # cut into the final record
    partial_dir = tmp_path / "partial"
    partial_dir.mkdir()
    (partial_dir / MEASUREMENT_LOG).write_text(torn)

    survivors = read_measurement_log(partial_dir / MEASUREMENT_LOG)
    assert len(survivors) == len(full) - 1

    capsys.readouterr()
    assert main(["report", str(partial_dir)]) == 0
    out = capsys.readouterr().out
    assert "measurement log only" in out


def test_read_measurement_log_rejects_mid_file_corruption(tmp_path):
    log_path = tmp_path / MEASUREMENT_LOG
    log_path.write_text('{"oops": true\n{"also": "bad"}\n')
    with pytest.raises(ConfigError):
        read_measurement_log(log_path)


def test_report_requires_some_artifact(tmp_path):
    empty = tmp_path / "nothing"
    empty.mkdir()
    assert main(["report", str(empty)]) == 2


def test_validate_accepts_good_and_rejects_bad(tmp_path, capsys):
    corpus_dir = _simulate(tmp_path, {"injected_bug": 1, "seed": 0})
    good = _campaign(tmp_path, corpus_dir)
    assert main(["validate", str(good)]) == 0
    assert "ok:" in capsys.readouterr().out

    bad = _write_json(
        tmp_path / "bad.json",
        {"pairs": [_sim_pair_obj()], "executor": {"kind": "simulated"}},
    )
    assert main(["validate", str(bad)]) == 2

    missing_table = _write_json(
        tmp_path / "missing-table.json",
        {
            "pairs": [_sim_pair_obj()],
            "executor": {"kind": "simulated", "model_table": "absent.json"},
        },
    )
    assert main(["validate", str(missing_table)]) == 2


def test_load_campaign_validation_errors(tmp_path):
    corpus_dir = _simulate(tmp_path, {"injected_bug": 1, "seed": 0})
    with pytest.raises(ConfigError):
        load_campaign(_write_json(tmp_path / "c1.json", {"pairs": []}))
    with pytest.raises(ConfigError):
        load_campaign(
            _write_json(
                tmp_path / "c2.json",
                {"pairs": [_sim_pair_obj("X"), _sim_pair_obj("X")]},
            )
        )
    with pytest.raises(ConfigError):
        load_campaign(
            _write_json(
                tmp_path / "c3.json",
                {"pairs": [_sim_pair_obj()], "schedule": {"preset": "nope"}},
            )
        )
    with pytest.raises(ConfigError):
        load_campaign(
            _write_json(
                tmp_path / "c4.json",
                {"pairs": [_sim_pair_obj()], "executor": {"kind": "quantum"}},
            )
        )
    with pytest.raises(ConfigError):
        load_campaign(
            _write_json(
                tmp_path / "c5.json",
                {"pairs": [_sim_pair_obj()], "parallelism": 0},
            )
        )
    # Relative model_table paths resolve against the campaign file.
    campaign = load_campaign(
        _write_json(
            tmp_path / "c6.json",
            {
                "pairs": [_sim_pair_obj()],
                "executor": {"kind": "simulated", "model_table": "corpus/models.json"},
            },
        )
    )
    assert campaign.model_table_path == str(corpus_dir / "models.json")


def test_pair_presets_load_and_diverge_on_flags():
    for name in ("LP0", "LP1", "LP2", "LP3"):
        pair = load_pair_preset(name)
        assert pair.kind.value == "level"
        assert pair.baseline.id != pair.subject.id
        assert any("TieredStopAtLevel=1" in f for f in pair.baseline.extra_flags)
        assert any("TieredStopAtLevel=4" in f for f in pair.subject.extra_flags)
    for name in ("RP0", "RP1"):
        pair = load_pair_preset(name)
        assert pair.kind.value == "regression"
        assert pair.baseline.version_label != pair.subject.version_label
    with pytest.raises(ConfigError):
        load_pair_preset("LP9")


def test_known_bugs_file_accumulates_between_runs(tmp_path):
    corpus_dir = _simulate(tmp_path, {"injected_bug": 2, "seed": 4})
    known_path = tmp_path / "known.tsv"
    campaign = _campaign(
        tmp_path,
        corpus_dir,
        filters={"known_bugs": str(known_path)},
    )
    manifest = str(corpus_dir / "manifest.json")
    assert main(["run", str(campaign), manifest]) == 0
    first_known = known_path.read_text().splitlines()
    assert len(first_known) == 2  # both templates recorded

    # A second run sees the templates as known: everything becomes Duplicate.
    campaign2 = _campaign(
        tmp_path,
        corpus_dir,
        out_name="out-2",
        filters={"known_bugs": str(known_path)},
    )
    assert main(["run", str(campaign2), manifest]) == 0
    summary = json.loads((tmp_path / "out-2" / SUMMARY_FILE).read_text())
    verdicts = summary["results"]["SIM"]["verdicts"]
    assert all(v["kind"] == "duplicate" for v in verdicts.values())
    assert all(v["duplicate_of"] == "known" for v in verdicts.values())
    assert known_path.read_text().splitlines() == first_known
