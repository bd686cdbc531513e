"""Manifest loading/validation and synthetic corpus ground truth."""

from __future__ import annotations

import json

import pytest

from leveldiff.corpus import (
    CorpusDefaults,
    CorpusManifest,
    DuplicateIdError,
    LABEL_CONSTANT_OVERHEAD,
    LABEL_INJECTED_BUG,
    LABEL_NEUTRAL,
    ManifestParseError,
    MissingPlaceholderError,
    SIM_BASELINE_ID,
    SIM_SUBJECT_ID,
    SyntheticCorpusSpec,
    load_manifest,
    spec_from_json_obj,
    synthesize_corpus,
    write_manifest,
)
from leveldiff.engine import CampaignConfig, run_campaign
from leveldiff.executors import SimulatedExecutor
from leveldiff.filters import FilterConfig, KnownBugSet, apply_filters
from leveldiff.model import ConfigError, VerdictKind

from helpers import make_program, make_schedule, sim_pair

LP_SCHEDULE = make_schedule(
    iterations=(100_000, 500_000, 1_000_000, 3_000_000),
    thresholds=(1.2, 1.2, 1.3, 1.4),
)


def _write_manifest_json(tmp_path, programs, defaults=None, version=1):
    obj = {"version": version, "defaults": defaults or {}, "programs": programs}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(obj))
    return path


def _program_obj(pid, **overrides):
    obj = {"id": pid, "run_spec": ["bench", "--iters", "{N}"]}
    obj.update(overrides)
    return obj


def test_load_manifest_applies_defaults(tmp_path):
    path = _write_manifest_json(
        tmp_path,
        [_program_obj("p1"), _program_obj("p2", timeout_ms=5_000)],
        defaults={"timeout_ms": 9_000},
    )
    manifest = load_manifest(path)
    assert [p.id for p in manifest.programs] == ["p1", "p2"]
    assert manifest.programs[0].timeout_ms == 9_000
    assert manifest.programs[1].timeout_ms == 5_000
    # Without an explicit workdir the manifest's own directory is used.
    assert manifest.defaults.workdir == str(tmp_path.resolve())


def test_load_manifest_resolves_relative_workdir(tmp_path):
    path = _write_manifest_json(
        tmp_path, [_program_obj("p1")], defaults={"workdir": "programs"}
    )
    manifest = load_manifest(path)
    assert manifest.defaults.workdir == str(tmp_path.resolve() / "programs")


def test_load_manifest_rejects_duplicate_ids(tmp_path):
    path = _write_manifest_json(tmp_path, [_program_obj("p1"), _program_obj("p1")])
    with pytest.raises(DuplicateIdError):
        load_manifest(path)


def test_load_manifest_rejects_missing_placeholder(tmp_path):
    path = _write_manifest_json(
        tmp_path, [_program_obj("p1", run_spec=["bench", "--iters", "100"])]
    )
    with pytest.raises(MissingPlaceholderError):
        load_manifest(path)
    # A placeholder appearing twice is just as unusable.
    path = _write_manifest_json(
        tmp_path, [_program_obj("p1", run_spec=["bench", "{N}", "{N}"])]
    )
    with pytest.raises(MissingPlaceholderError):
        load_manifest(path)


def test_load_manifest_rejects_bad_json_and_versions(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text("{not json")
    with pytest.raises(ManifestParseError):
        load_manifest(path)
    path.write_text(json.dumps([1, 2, 3]))
    with pytest.raises(ManifestParseError):
        load_manifest(path)
    with pytest.raises(ManifestParseError):
        load_manifest(_write_manifest_json(tmp_path, [_program_obj("p1")], version=99))
    with pytest.raises(ManifestParseError):
        load_manifest(tmp_path / "absent.json")


def test_manifest_round_trip(tmp_path):
    manifest = CorpusManifest(
        version=1,
        defaults=CorpusDefaults(timeout_ms=30_000, workdir=str(tmp_path)),
        programs=(
            make_program("p1", source_project="proj-x"),
            make_program("p2", timeout_ms=2_000),
        ),
    )
    path = tmp_path / "roundtrip.json"
    write_manifest(manifest, path)
    assert load_manifest(path) == manifest


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ConfigError):
        SyntheticCorpusSpec()  # empty corpus
    with pytest.raises(ConfigError):
        SyntheticCorpusSpec(neutral=-1, injected_bug=2)
    with pytest.raises(ConfigError):
        SyntheticCorpusSpec(injected_bug=1, slowdown_factor=1.0)
    with pytest.raises(ConfigError):
        spec_from_json_obj({"neutral": 1, "bogus_field": 3})
    spec = spec_from_json_obj({"injected_bug": 2, "seed": 7, "output_dir": "x"})
    assert spec.injected_bug == 2 and spec.seed == 7


def test_synthesis_is_deterministic():
    spec = SyntheticCorpusSpec(neutral=3, constant_overhead=2, injected_bug=1, seed=11)
    first = synthesize_corpus(spec)
    second = synthesize_corpus(spec)
    assert first[0] == second[0]
    assert first[2] == second[2]


def _run_synthetic(spec):
    manifest, table, ground_truth = synthesize_corpus(spec)
    executor = SimulatedExecutor(table)
    result = run_campaign(
        list(manifest.programs), CampaignConfig(sim_pair(), LP_SCHEDULE), executor
    )
    filtered, _ = apply_filters(
        result, list(manifest.programs), FilterConfig(), KnownBugSet()
    )
    return manifest, ground_truth, result, filtered


def test_single_neutral_program_never_survives():
    manifest, _, result, _ = _run_synthetic(SyntheticCorpusSpec(neutral=1, seed=0))
    pid = manifest.programs[0].id
    verdict = result.verdicts[pid]
    # Identical models and zero noise give a ratio of exactly 1.0.
    assert verdict.kind is VerdictKind.FILTERED
    assert verdict.level_index == 0
    assert result.survivors == ()


def test_constant_overhead_survives_checks_then_fp_filter_removes_it():
    # Seed 0 draws a cheap compiled cost, so the 0.9s compile-time overhead
    # still dominates at 3M iterations and every ratio check passes.
    manifest, _, result, filtered = _run_synthetic(
        SyntheticCorpusSpec(constant_overhead=1, seed=0)
    )
    pid = manifest.programs[0].id
    assert result.verdicts[pid].kind is VerdictKind.SURVIVOR
    # The difference between configurations is a constant, so the trend
    # filter rejects it afterwards.
    assert filtered.verdicts[pid].kind is VerdictKind.FALSE_POSITIVE
    assert filtered.survivors == ()


def test_constant_overhead_with_costly_program_dies_at_a_late_check():
    # Seed 4 draws an expensive compiled cost; by 3M iterations the constant
    # overhead no longer clears the 1.4 threshold.
    manifest, _, result, _ = _run_synthetic(
        SyntheticCorpusSpec(constant_overhead=1, seed=4)
    )
    pid = manifest.programs[0].id
    verdict = result.verdicts[pid]
    assert verdict.kind is VerdictKind.FILTERED
    assert verdict.level_index == 3


def test_injected_bug_survives_all_levels_with_ratio_near_factor():
    manifest, _, result, filtered = _run_synthetic(
        SyntheticCorpusSpec(injected_bug=1, slowdown_factor=1.5, seed=0)
    )
    pid = manifest.programs[0].id
    assert result.verdicts[pid].kind is VerdictKind.SURVIVOR
    survivor = result.survivors[0]
    assert survivor.last_level == 3
    # At 3M iterations the per-iteration slowdown dominates startup costs.
    assert survivor.final_ratio > 1.4
    assert survivor.final_ratio == pytest.approx(1.5, rel=0.05)
    # The genuine bug also survives the trend filter.
    assert filtered.verdicts[pid].kind is VerdictKind.SURVIVOR


def test_ground_truth_matches_models():
    spec = SyntheticCorpusSpec(
        neutral=4, constant_overhead=3, injected_bug=3, slowdown_factor=1.5, seed=3
    )
    manifest, table, ground_truth = synthesize_corpus(spec)
    assert len(manifest.programs) == 10
    labels = [ground_truth[p.id]["label"] for p in manifest.programs]
    assert labels.count(LABEL_NEUTRAL) == 4
    assert labels.count(LABEL_CONSTANT_OVERHEAD) == 3
    assert labels.count(LABEL_INJECTED_BUG) == 3

    for program in manifest.programs:
        entry = ground_truth[program.id]
        baseline = table.get(program.id, SIM_BASELINE_ID)
        subject = table.get(program.id, SIM_SUBJECT_ID)
        assert entry["baseline"]["compiled_ns_per_iter"] == baseline.compiled_ns_per_iter
        # Noise streams always differ between configurations; the timing
        # parameters differ only as the label dictates.
        assert baseline.noise_seed != subject.noise_seed
        if entry["label"] == LABEL_NEUTRAL:
            assert subject.compiled_ns_per_iter == baseline.compiled_ns_per_iter
            assert subject.compile_cost_ns == baseline.compile_cost_ns
        elif entry["label"] == LABEL_CONSTANT_OVERHEAD:
            assert subject.compile_cost_ns == baseline.compile_cost_ns + spec.overhead_delta_ns
            assert subject.compiled_ns_per_iter == baseline.compiled_ns_per_iter
        else:
            assert subject.effective_compiled_ns_per_iter() == pytest.approx(
                spec.slowdown_factor * baseline.effective_compiled_ns_per_iter()
            )
            assert subject.compile_cost_ns == baseline.compile_cost_ns
        assert subject.interpreted_ns_per_iter == baseline.interpreted_ns_per_iter
        assert subject.hot_iterations == baseline.hot_iterations


def test_synthetic_programs_have_usable_manifest_entries():
    manifest, _, _ = synthesize_corpus(SyntheticCorpusSpec(neutral=2, seed=1))
    for program in manifest.programs:
        assert program.placeholder_count() == 1
        assert program.generator == "synthetic"
        assert program.template_id is not None
