"""Command-line interface.

Four commands: `run` drives campaigns from a campaign config plus a corpus
manifest, `report` renders the artifacts a run left behind, `simulate`
materializes a synthetic corpus from a spec file, and `validate` checks a
campaign config without running anything. Campaign configs and the corpus
manifest are JSON; measurements stream to an append-only JSONL log so a
crashed run still leaves a parseable prefix.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import time
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

from .corpus import (
    CorpusManifest,
    load_manifest,
    spec_from_json_obj,
    synthesize_corpus,
    write_manifest,
)
from .engine import CampaignConfig, FirstLevelPolicy, run_campaign
from .executors import (
    DEFAULT_EXCEPTION_PATTERNS,
    Executor,
    ModelTable,
    SimulatedExecutor,
    SubprocessExecutor,
)
from .filters import FilterConfig, KnownBugSet, apply_filters
from .model import (
    CampaignResult,
    ConfigError,
    ConfigurationPair,
    LevelDiffError,
    LevelSchedule,
    MeasurementRecord,
    Outcome,
    VerdictKind,
    campaign_result_to_json_obj,
    pair_from_json_obj,
    record_from_json_obj,
    record_to_json_obj,
    schedule_from_json_obj,
    schedule_to_json_obj,
    validate_schedule,
)

ENV_OUTPUT_DIR = "LEVELDIFF_OUT"

MEASUREMENT_LOG = "measurements.jsonl"
SUMMARY_FILE = "summary.json"
REPORT_FILE = "report.json"
RUN_INFO_FILE = "run_info.json"

# Stock schedules: four levels with rising iteration counts and thresholds.
# The lp variant is tuned for tier pairs (bigger expected gap), the rp
# variant for version pairs. Presets ship with per-level caps disabled;
# campaigns enable them by overriding top_ks.
SCHEDULE_PRESETS: dict[str, LevelSchedule] = {
    "paper-lp": LevelSchedule(
        iterations=(100_000, 500_000, 1_000_000, 3_000_000),
        thresholds=(1.2, 1.2, 1.3, 1.4),
        top_ks=(-1, -1, -1),
    ),
    "paper-rp": LevelSchedule(
        iterations=(100_000, 500_000, 1_000_000, 3_000_000),
        thresholds=(1.1, 1.1, 1.2, 1.3),
        top_ks=(-1, -1, -1),
    ),
}

PAIR_PRESET_NAMES = ("LP0", "LP1", "LP2", "LP3", "RP0", "RP1")


def load_pair_preset(name: str) -> ConfigurationPair:
    if name not in PAIR_PRESET_NAMES:
        raise ConfigError(f"unknown pair preset {name!r}, have {', '.join(PAIR_PRESET_NAMES)}")
    data = resources.files("leveldiff").joinpath(f"data/pairs/{name.lower()}.json").read_text("utf-8")
    return pair_from_json_obj(json.loads(data))


@dataclass(frozen=True)
class CampaignFile:
    """Parsed campaign config: what to compare, how, and where output goes."""

    pairs: tuple[ConfigurationPair, ...]
    schedule: LevelSchedule
    executor_kind: str
    model_table_path: str | None
    exception_patterns: tuple[str, ...]
    filter_config: FilterConfig
    known_bugs_path: str | None
    first_level_policy: FirstLevelPolicy
    first_level_log: str | None
    parallelism: int
    seed: int
    output_dir: str


def _parse_schedule(obj: Mapping[str, Any]) -> LevelSchedule:
    if "preset" in obj:
        name = obj["preset"]
        if name not in SCHEDULE_PRESETS:
            raise ConfigError(
                f"unknown schedule preset {name!r}, have {', '.join(sorted(SCHEDULE_PRESETS))}"
            )
        schedule = SCHEDULE_PRESETS[name]
        if "top_ks" in obj:
            schedule = replace(schedule, top_ks=tuple(obj["top_ks"]))
        return validate_schedule(schedule)
    try:
        schedule = LevelSchedule(
            iterations=tuple(obj["iterations"]),
            thresholds=tuple(obj["thresholds"]),
            top_ks=tuple(obj.get("top_ks", [-1] * (len(obj["iterations"]) - 1))),
        )
    except KeyError as exc:
        raise ConfigError(f"schedule needs {exc.args[0]!r} (or a preset)") from exc
    return validate_schedule(schedule)


def _parse_pair(obj: Mapping[str, Any]) -> ConfigurationPair:
    if "preset" in obj:
        return load_pair_preset(obj["preset"])
    try:
        return pair_from_json_obj(obj)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad pair entry: {exc}") from exc


def load_campaign(path: str | Path) -> CampaignFile:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read campaign {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: campaign must be a JSON object")
    base = path.resolve().parent

    def resolve(p: str | None) -> str | None:
        if p is None:
            return None
        candidate = Path(p)
        return str(candidate if candidate.is_absolute() else base / candidate)

    pairs_obj = obj.get("pairs")
    if not pairs_obj:
        raise ConfigError(f"{path}: campaign lists no pairs")
    pairs = tuple(_parse_pair(p) for p in pairs_obj)
    labels = [p.label for p in pairs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{path}: duplicate pair labels")

    schedule = _parse_schedule(obj.get("schedule", {"preset": "paper-lp"}))

    executor_obj = obj.get("executor", {})
    kind = executor_obj.get("kind", "subprocess")
    if kind not in ("subprocess", "simulated"):
        raise ConfigError(f"{path}: unknown executor kind {kind!r}")
    model_table_path = resolve(executor_obj.get("model_table"))
    if kind == "simulated" and model_table_path is None:
        raise ConfigError(f"{path}: simulated executor needs a model_table path")
    patterns = tuple(executor_obj.get("exception_patterns", DEFAULT_EXCEPTION_PATTERNS))

    filters_obj = obj.get("filters", {})
    filter_config = FilterConfig(
        growth_fraction=filters_obj.get("growth_fraction", 0.5),
        min_levels_for_trend=filters_obj.get("min_levels_for_trend", 2),
    )
    known_bugs_path = resolve(filters_obj.get("known_bugs"))

    policy_name = obj.get("first_level_policy", "execute-all")
    try:
        policy = FirstLevelPolicy(policy_name)
    except ValueError:
        raise ConfigError(f"{path}: unknown first_level_policy {policy_name!r}") from None
    first_level_log = resolve(obj.get("first_level_log"))
    if policy is FirstLevelPolicy.REUSE_PROVIDED and first_level_log is None:
        raise ConfigError(f"{path}: reuse-provided needs first_level_log")

    parallelism = obj.get("parallelism", 1)
    if not isinstance(parallelism, int) or parallelism < 1:
        raise ConfigError(f"{path}: parallelism must be a positive integer")

    return CampaignFile(
        pairs=pairs,
        schedule=schedule,
        executor_kind=kind,
        model_table_path=model_table_path,
        exception_patterns=patterns,
        filter_config=filter_config,
        known_bugs_path=known_bugs_path,
        first_level_policy=policy,
        first_level_log=first_level_log,
        parallelism=parallelism,
        seed=obj.get("seed", 0),
        output_dir=resolve(obj.get("output_dir", "leveldiff-out")),
    )


def resolve_output_dir(configured: str) -> Path:
    """Campaign's output_dir, unless the override environment variable is set."""
    override = os.environ.get(ENV_OUTPUT_DIR)
    return Path(override) if override else Path(configured)


# ---------------------------------------------------------------------------
# Measurement log
# ---------------------------------------------------------------------------


def read_measurement_log(path: str | Path) -> list[MeasurementRecord]:
    """Read a JSONL measurement log, tolerating a torn final line.

    A run that died mid-write leaves a prefix of complete lines plus at most
    one partial line; the partial tail is skipped. Corruption anywhere else
    is an error.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    records: list[MeasurementRecord] = []
    for index, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(record_from_json_obj(obj))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            if index == len(lines) - 1:
                break
            raise ConfigError(f"{path}:{index + 1}: corrupt measurement record: {exc}") from exc
    return records


def _load_first_level_records(path: str) -> dict[str, MeasurementRecord]:
    provided: dict[str, MeasurementRecord] = {}
    for record in read_measurement_log(path):
        if record.level_index == 0:
            provided[record.program_id] = record
    return provided


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _build_executor(campaign: CampaignFile, manifest: CorpusManifest) -> Executor:
    if campaign.executor_kind == "simulated":
        table_path = Path(campaign.model_table_path or "")
        try:
            table_obj = json.loads(table_path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read model table {table_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{table_path}: {exc}") from exc
        return SimulatedExecutor(ModelTable.from_json_obj(table_obj))
    return SubprocessExecutor(
        workdir=manifest.defaults.workdir,
        exception_patterns=campaign.exception_patterns,
    )


def cmd_run(campaign_path: str, manifest_path: str, fail_on_candidates: bool = False) -> int:
    started = time.time()
    campaign = load_campaign(campaign_path)
    manifest = load_manifest(manifest_path)
    if not manifest.programs:
        raise ConfigError(f"{manifest_path}: corpus is empty")

    out_dir = resolve_output_dir(campaign.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    executor = _build_executor(campaign, manifest)
    provided = (
        _load_first_level_records(campaign.first_level_log)
        if campaign.first_level_policy is FirstLevelPolicy.REUSE_PROVIDED
        and campaign.first_level_log is not None
        else None
    )
    known_bugs = (
        KnownBugSet.load(campaign.known_bugs_path)
        if campaign.known_bugs_path
        else KnownBugSet()
    )

    results: dict[str, Any] = {}
    total_unique = 0
    with open(out_dir / MEASUREMENT_LOG, "a", encoding="utf-8") as log:

        def sink(record: MeasurementRecord) -> None:
            log.write(json.dumps(record_to_json_obj(record), sort_keys=True) + "\n")
            log.flush()

        for pair in campaign.pairs:
            config = CampaignConfig(
                pair=pair,
                schedule=campaign.schedule,
                first_level_policy=campaign.first_level_policy,
                parallelism=campaign.parallelism,
            )
            result = run_campaign(
                manifest.programs,
                config,
                executor,
                provided_first_level=provided,
                record_sink=sink,
            )
            filtered, dedup = apply_filters(
                result, manifest.programs, campaign.filter_config, known_bugs
            )
            for generator, template_id in dedup.new_known_entries:
                known_bugs.add(generator, template_id)
            if campaign.known_bugs_path:
                KnownBugSet.append_entries(campaign.known_bugs_path, dedup.new_known_entries)

            results[pair.label] = campaign_result_to_json_obj(filtered)
            counts = _verdict_counts(filtered)
            total_unique += counts["survivor"]
            print(
                f"[{pair.label}] programs={len(manifest.programs)} "
                f"pass={counts['survivor'] + counts['false_positive'] + counts['duplicate']} "
                f"false_positives={counts['false_positive']} duplicates={counts['duplicate']} "
                f"errored={counts['errored']} unique={counts['survivor']}"
            )

    summary = {
        "campaign": {
            "schedule": schedule_to_json_obj(campaign.schedule),
            "pair_labels": [p.label for p in campaign.pairs],
            "executor": campaign.executor_kind,
            "first_level_policy": campaign.first_level_policy.value,
            "parallelism": campaign.parallelism,
            "seed": campaign.seed,
        },
        "results": results,
    }
    (out_dir / SUMMARY_FILE).write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    finished = time.time()
    run_info = {
        "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "finished": _dt.datetime.fromtimestamp(finished, _dt.timezone.utc).isoformat(),
        "harness_wall_s": finished - started,
        "campaign_file": str(campaign_path),
        "manifest_file": str(manifest_path),
    }
    (out_dir / RUN_INFO_FILE).write_text(
        json.dumps(run_info, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {out_dir / SUMMARY_FILE}")
    if fail_on_candidates and total_unique > 0:
        return 1
    return 0


def _verdict_counts(result: CampaignResult) -> dict[str, int]:
    counts = {kind.value: 0 for kind in VerdictKind}
    for verdict in result.verdicts.values():
        counts[verdict.kind.value] += 1
    return counts


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _format_ns(ns: int) -> str:
    if ns >= 1_000_000_000:
        return f"{ns / 1e9:.2f}s"
    if ns >= 1_000_000:
        return f"{ns / 1e6:.2f}ms"
    if ns >= 1_000:
        return f"{ns / 1e3:.2f}us"
    return f"{ns}ns"


def _render_table(rows: list[list[str]]) -> str:
    widths = [max(len(row[col]) for row in rows) for col in range(len(rows[0]))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
    return "\n".join(lines)


def build_report(
    summary: Mapping[str, Any] | None, records: Sequence[MeasurementRecord]
) -> dict[str, Any]:
    """Fold artifacts into the machine-readable report structure.

    Works from the log alone when the summary is missing (partial run);
    verdict-derived columns then stay empty.
    """
    by_pair_records: dict[str, dict[str, list[MeasurementRecord]]] = {}
    for record in records:
        by_pair_records.setdefault(record.pair_label, {}).setdefault(
            record.program_id, []
        ).append(record)

    report: dict[str, Any] = {"pairs": {}}
    pair_labels = (
        list(summary["results"].keys()) if summary is not None else sorted(by_pair_records)
    )
    for label in pair_labels:
        pair_entry: dict[str, Any] = {}
        trails = by_pair_records.get(label, {})
        pair_entry["programs_measured"] = len(trails)
        executed_per_level: dict[int, int] = {}
        time_per_level: dict[int, int] = {}
        for program_records in trails.values():
            for record in program_records:
                executed_per_level[record.level_index] = (
                    executed_per_level.get(record.level_index, 0) + 1
                )
                # Error records may lack one or both durations.
                spent = (record.baseline_ns or 0) + (record.subject_ns or 0)
                time_per_level[record.level_index] = (
                    time_per_level.get(record.level_index, 0) + spent
                )
        levels = sorted(executed_per_level)
        pair_entry["executed_per_level"] = [executed_per_level[i] for i in levels]
        pair_entry["time_per_level_ns"] = [time_per_level[i] for i in levels]
        pair_entry["time_total_ns"] = sum(time_per_level.values())
        pair_entry["time_after_first_level_ns"] = sum(
            t for i, t in time_per_level.items() if i > 0
        )

        if summary is not None:
            result_obj = summary["results"][label]
            verdicts = result_obj["verdicts"]
            n_levels = len(result_obj["schedule"]["iterations"])
            removed = [0] * n_levels
            counts = {kind.value: 0 for kind in VerdictKind}
            for verdict in verdicts.values():
                counts[verdict["kind"]] += 1
                if verdict["kind"] == VerdictKind.FILTERED.value:
                    removed[verdict["level_index"]] += 1
            pair_entry["removed_per_level"] = removed
            pair_entry["errored"] = counts[VerdictKind.ERRORED.value]
            pair_entry["passed_checks"] = (
                counts[VerdictKind.SURVIVOR.value]
                + counts[VerdictKind.FALSE_POSITIVE.value]
                + counts[VerdictKind.DUPLICATE.value]
            )
            pair_entry["false_positives"] = counts[VerdictKind.FALSE_POSITIVE.value]
            pair_entry["duplicates"] = counts[VerdictKind.DUPLICATE.value]
            pair_entry["unique_candidates"] = counts[VerdictKind.SURVIVOR.value]
            candidates = []
            for survivor in result_obj["survivors"]:
                program_id = survivor["program_id"]
                trail = [
                    {"level_index": r.level_index, "iterations": r.iterations, "ratio": r.ratio}
                    for r in trails.get(program_id, [])
                ]
                candidates.append(
                    {
                        "program_id": program_id,
                        "final_ratio": survivor["final_ratio"],
                        "last_level": survivor["last_level"],
                        "annotations": verdicts[program_id]["annotations"],
                        "trail": trail,
                    }
                )
            pair_entry["candidates"] = candidates
        report["pairs"][label] = pair_entry
    return report


def cmd_report(output_dir: str) -> int:
    out = Path(output_dir)
    log_path = out / MEASUREMENT_LOG
    summary_path = out / SUMMARY_FILE
    if not log_path.exists() and not summary_path.exists():
        raise ConfigError(f"{out}: no {MEASUREMENT_LOG} or {SUMMARY_FILE}; nothing to report")

    summary = None
    if summary_path.exists():
        summary = json.loads(summary_path.read_text(encoding="utf-8"))
    records = read_measurement_log(log_path) if log_path.exists() else []
    report = build_report(summary, records)

    header = ["pair", "measured"]
    if summary is not None:
        n_levels = max(
            (len(e.get("removed_per_level", [])) for e in report["pairs"].values()),
            default=0,
        )
        header += [f"removed@L{i}" for i in range(n_levels)]
        header += ["errored", "pass", "fp", "dup", "unique", "t_total", "t_after_L0"]
    else:
        header += ["t_total", "t_after_L0"]
    rows = [header]
    for label, entry in report["pairs"].items():
        row = [label, str(entry["programs_measured"])]
        if summary is not None:
            removed = entry.get("removed_per_level", [])
            row += [str(x) for x in removed]
            row += [""] * (len(header) - 9 - len(removed))
            row += [
                str(entry.get("errored", "")),
                str(entry.get("passed_checks", "")),
                str(entry.get("false_positives", "")),
                str(entry.get("duplicates", "")),
                str(entry.get("unique_candidates", "")),
                _format_ns(entry["time_total_ns"]),
                _format_ns(entry["time_after_first_level_ns"]),
            ]
        else:
            row += [
                _format_ns(entry["time_total_ns"]),
                _format_ns(entry["time_after_first_level_ns"]),
            ]
        rows.append(row)
    print(_render_table(rows))

    if summary is None:
        print("note: summary.json missing, reporting from the measurement log only")
    else:
        for label, entry in report["pairs"].items():
            for candidate in entry.get("candidates", []):
                trail = ",".join(
                    f"{t['level_index']}:{t['ratio']:.3f}"
                    for t in candidate["trail"]
                    if t["ratio"] is not None
                )
                notes = ",".join(candidate["annotations"])
                suffix = f" [{notes}]" if notes else ""
                print(
                    f"  [{label}] {candidate['program_id']} "
                    f"ratio={candidate['final_ratio']:.3f} trail={trail}{suffix}"
                )

    (out / REPORT_FILE).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return 0


# ---------------------------------------------------------------------------
# simulate / validate
# ---------------------------------------------------------------------------


def cmd_simulate(spec_path: str) -> int:
    path = Path(spec_path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read corpus spec {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: corpus spec must be a JSON object")
    try:
        spec = spec_from_json_obj(obj)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    configured = obj.get("output_dir", str(path.resolve().parent))
    out_dir = resolve_output_dir(
        configured if Path(configured).is_absolute() else str(path.resolve().parent / configured)
    )
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest, table, ground_truth = synthesize_corpus(spec)
    write_manifest(manifest, out_dir / "manifest.json")
    (out_dir / "models.json").write_text(
        json.dumps(table.to_json_obj(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out_dir / "ground_truth.json").write_text(
        json.dumps(ground_truth, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(manifest.programs)} programs to {out_dir / 'manifest.json'}")
    return 0


def cmd_validate(campaign_path: str) -> int:
    campaign = load_campaign(campaign_path)
    validate_schedule(campaign.schedule)
    if campaign.executor_kind == "simulated":
        table_path = Path(campaign.model_table_path or "")
        if not table_path.exists():
            raise ConfigError(f"model table {table_path} does not exist")
    print(
        f"ok: {len(campaign.pairs)} pair(s), {len(campaign.schedule.iterations)} levels, "
        f"executor={campaign.executor_kind}"
    )
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="leveldiff",
        description="Differential performance testing with leveled candidate filtering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run campaigns from a campaign config and corpus manifest")
    run_parser.add_argument("campaign", help="campaign config (JSON)")
    run_parser.add_argument("manifest", help="corpus manifest (JSON)")
    run_parser.add_argument(
        "--fail-on-candidates",
        action="store_true",
        help="exit 1 when unique candidates remain after filtering",
    )

    report_parser = sub.add_parser("report", help="render a run's output directory")
    report_parser.add_argument("output_dir")

    simulate_parser = sub.add_parser("simulate", help="materialize a synthetic corpus")
    simulate_parser.add_argument("spec", help="synthetic corpus spec (JSON)")

    validate_parser = sub.add_parser("validate", help="check a campaign config")
    validate_parser.add_argument("campaign")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.campaign, args.manifest, fail_on_candidates=args.fail_on_candidates)
        if args.command == "report":
            return cmd_report(args.output_dir)
        if args.command == "simulate":
            return cmd_simulate(args.spec)
        if args.command == "validate":
            return cmd_validate(args.campaign)
    except LevelDiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
