"""Core domain types for the differential performance-testing harness.

Durations are integer nanoseconds end to end; timing ratios are floats
computed as subject over baseline. All types here are immutable after
construction and safe to share across worker threads. Persistence helpers
(`*_to_json_obj` / `*_from_json_obj`) round-trip every value exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterator, Mapping

ITERATION_PLACEHOLDER = "{N}"


class LevelDiffError(Exception):
    """Base class for all harness errors."""


class ConfigError(LevelDiffError):
    """A campaign, manifest, schedule, or CLI input is invalid."""


class ScheduleError(ConfigError):
    pass


class LengthMismatchError(ScheduleError):
    pass


class NonAscendingIterationsError(ScheduleError):
    pass


class ThresholdNotAboveOneError(ScheduleError):
    pass


class OutOfOrderLevelError(LevelDiffError):
    """A measurement was appended at a level not above the previous one."""


class NonPositiveMeasurementError(LevelDiffError):
    """A ratio check was asked to compare non-positive durations."""


class PairKind(Enum):
    LEVEL = "level"
    REGRESSION = "regression"


class Outcome(Enum):
    OK = "ok"
    BASELINE_ERROR = "baseline_error"
    SUBJECT_ERROR = "subject_error"
    TIMEOUT = "timeout"


class VerdictKind(Enum):
    SURVIVOR = "survivor"
    FILTERED = "filtered"
    ERRORED = "errored"
    FALSE_POSITIVE = "false_positive"
    DUPLICATE = "duplicate"


@dataclass(frozen=True)
class ProgramCandidate:
    """One generated test program plus the metadata filters need later.

    run_spec is the argv tail appended after the runtime configuration's
    command; exactly one token must embed the iteration placeholder "{N}"
    (enforced at manifest ingestion, see corpus.load_manifest).
    """

    id: str
    run_spec: tuple[str, ...]
    generator: str = "unknown"
    template_id: str | None = None
    source_project: str | None = None
    timeout_ms: int = 60_000

    def placeholder_count(self) -> int:
        return sum(tok.count(ITERATION_PLACEHOLDER) for tok in self.run_spec)

    def rendered_run_spec(self, iterations: int) -> list[str]:
        return [tok.replace(ITERATION_PLACEHOLDER, str(iterations)) for tok in self.run_spec]


@dataclass(frozen=True)
class RuntimeConfiguration:
    """A concrete way to invoke a runtime: command plus distinguishing flags."""

    id: str
    command_prefix: tuple[str, ...]
    extra_flags: tuple[str, ...] = ()
    version_label: str = ""

    def __post_init__(self) -> None:
        if not self.command_prefix:
            raise ValueError(f"configuration {self.id!r}: empty command_prefix")


@dataclass(frozen=True)
class ConfigurationPair:
    """Baseline vs subject configuration under test.

    The baseline is the side expected slower or equal (lower compilation
    tier, or the older version in a regression pair); ratios are
    subject/baseline, so values above 1 mean the subject ran slower than
    the baseline, which is the anomaly this harness hunts.
    """

    label: str
    kind: PairKind
    baseline: RuntimeConfiguration
    subject: RuntimeConfiguration

    def __post_init__(self) -> None:
        if self.baseline.id == self.subject.id:
            raise ValueError(f"pair {self.label!r}: baseline and subject share id {self.baseline.id!r}")


@dataclass(frozen=True)
class LevelSchedule:
    """Per-level iteration counts, ratio thresholds, and candidate caps.

    iterations must ascend strictly; thresholds are the per-level ratio
    cutoffs (each > 1); top_ks has one entry per level after the first and
    any value <= 0 disables the cap at that level.
    """

    iterations: tuple[int, ...]
    thresholds: tuple[float, ...]
    top_ks: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.iterations)


def validate_schedule(schedule: LevelSchedule) -> LevelSchedule:
    """Check shape invariants, returning the schedule unchanged if they hold."""
    n = len(schedule.iterations)
    if n == 0:
        raise LengthMismatchError("schedule has no levels")
    if len(schedule.thresholds) != n:
        raise LengthMismatchError(
            f"{n} iteration counts but {len(schedule.thresholds)} thresholds"
        )
    if len(schedule.top_ks) != n - 1:
        raise LengthMismatchError(
            f"{n} levels need {n - 1} top-k entries, got {len(schedule.top_ks)}"
        )
    for a, b in zip(schedule.iterations, schedule.iterations[1:]):
        if b <= a:
            raise NonAscendingIterationsError(f"iteration counts must ascend strictly: {a} then {b}")
    if any(x <= 0 for x in schedule.iterations):
        raise NonAscendingIterationsError("iteration counts must be positive")
    for th in schedule.thresholds:
        if not th > 1.0:
            raise ThresholdNotAboveOneError(f"threshold {th} is not above 1")
    return schedule


@dataclass(frozen=True)
class MeasurementRecord:
    """One paired measurement of a program at one level.

    baseline_ns/subject_ns are the two configurations' reported durations;
    ratio is subject/baseline and present only for OK outcomes. wall_ns is
    cost bookkeeping (the executor's account of time actually spent, both
    sides summed). flags carries measurement caveats such as a wall-clock
    timing fallback; they bubble up into verdict annotations.
    """

    program_id: str
    pair_label: str
    level_index: int
    iterations: int
    baseline_ns: int
    subject_ns: int
    ratio: float | None
    outcome: Outcome
    exception_signature: str | None = None
    wall_ns: int = 0
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.level_index < 0:
            raise ValueError("level_index must be >= 0")
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.outcome is Outcome.OK:
            if self.baseline_ns <= 0 or self.subject_ns <= 0:
                raise ValueError("OK measurements need positive durations")
            expected = self.subject_ns / self.baseline_ns
            if self.ratio != expected:
                raise ValueError(f"ratio {self.ratio!r} does not equal subject/baseline {expected!r}")
        elif self.ratio is not None:
            raise ValueError(f"outcome {self.outcome.value} cannot carry a ratio")

    @classmethod
    def paired(
        cls,
        program_id: str,
        pair_label: str,
        level_index: int,
        iterations: int,
        baseline_ns: int,
        subject_ns: int,
        *,
        exception_signature: str | None = None,
        wall_ns: int = 0,
        flags: tuple[str, ...] = (),
    ) -> "MeasurementRecord":
        """Build an OK record, computing the ratio from the two durations."""
        if baseline_ns <= 0 or subject_ns <= 0:
            raise ValueError("OK measurements need positive durations")
        return cls(
            program_id=program_id,
            pair_label=pair_label,
            level_index=level_index,
            iterations=iterations,
            baseline_ns=baseline_ns,
            subject_ns=subject_ns,
            ratio=subject_ns / baseline_ns,
            outcome=Outcome.OK,
            exception_signature=exception_signature,
            wall_ns=wall_ns,
            flags=flags,
        )


class History:
    """Ordered per-program measurement lists.

    Appends must move strictly up the level ladder (one record per program
    per level at most); prioritization reads only the newest record but the
    full list is kept for the trend filter and for reports.
    """

    def __init__(self) -> None:
        self._records: dict[str, list[MeasurementRecord]] = {}

    def append(self, record: MeasurementRecord) -> None:
        existing = self._records.setdefault(record.program_id, [])
        if existing and record.level_index <= existing[-1].level_index:
            raise OutOfOrderLevelError(
                f"{record.program_id}: level {record.level_index} after level {existing[-1].level_index}"
            )
        existing.append(record)

    def records(self, program_id: str) -> tuple[MeasurementRecord, ...]:
        return tuple(self._records.get(program_id, ()))

    def latest(self, program_id: str) -> MeasurementRecord | None:
        existing = self._records.get(program_id)
        return existing[-1] if existing else None

    def program_ids(self) -> tuple[str, ...]:
        return tuple(self._records)

    def __iter__(self) -> Iterator[MeasurementRecord]:
        for records in self._records.values():
            yield from records

    def __len__(self) -> int:
        return sum(len(r) for r in self._records.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, History):
            return NotImplemented
        return self._records == other._records

    def snapshot(self) -> dict[str, tuple[MeasurementRecord, ...]]:
        return {pid: tuple(records) for pid, records in self._records.items()}


@dataclass(frozen=True)
class Verdict:
    """Final classification of one program after a campaign and its filters."""

    kind: VerdictKind
    level_index: int | None = None
    outcome: Outcome | None = None
    duplicate_of: str | None = None
    annotations: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind is VerdictKind.FILTERED and self.level_index is None:
            raise ValueError("filtered verdicts need the level they failed at")
        if self.kind is VerdictKind.ERRORED and self.outcome is None:
            raise ValueError("errored verdicts need the failure outcome")
        if self.kind is VerdictKind.DUPLICATE and not self.duplicate_of:
            raise ValueError("duplicate verdicts need a representative")


@dataclass(frozen=True)
class SurvivorEntry:
    program_id: str
    final_ratio: float
    last_level: int


@dataclass(frozen=True)
class CostSummary:
    """Executions and executor-reported time, per level and total.

    Times sum baseline and subject durations as the executor accounted for
    them (virtual time for simulated runs, child wall time for subprocess
    runs), so they are reproducible; harness overhead is not included.
    """

    executions_per_level: tuple[int, ...]
    time_per_level_ns: tuple[int, ...]

    @property
    def total_time_ns(self) -> int:
        return sum(self.time_per_level_ns)

    @property
    def time_after_first_level_ns(self) -> int:
        return sum(self.time_per_level_ns[1:])


@dataclass(frozen=True)
class CampaignResult:
    """Everything one pair's campaign produced: verdicts, survivors, costs.

    verdicts covers every corpus program exactly once; survivors are ordered
    by final ratio descending (ties by id); history holds the full
    measurement trail keyed by program id.
    """

    pair_label: str
    schedule: LevelSchedule
    verdicts: Mapping[str, Verdict]
    survivors: tuple[SurvivorEntry, ...]
    cost: CostSummary
    history: Mapping[str, tuple[MeasurementRecord, ...]]


# ---------------------------------------------------------------------------
# JSON round-trip helpers. Keys mirror field names; enums serialize to their
# string values; tuples serialize to lists.
# ---------------------------------------------------------------------------


def program_to_json_obj(p: ProgramCandidate) -> dict[str, Any]:
    return {
        "id": p.id,
        "run_spec": list(p.run_spec),
        "generator": p.generator,
        "template_id": p.template_id,
        "source_project": p.source_project,
        "timeout_ms": p.timeout_ms,
    }


def program_from_json_obj(obj: Mapping[str, Any]) -> ProgramCandidate:
    return ProgramCandidate(
        id=obj["id"],
        run_spec=tuple(obj["run_spec"]),
        generator=obj.get("generator", "unknown"),
        template_id=obj.get("template_id"),
        source_project=obj.get("source_project"),
        timeout_ms=obj.get("timeout_ms", 60_000),
    )


def configuration_to_json_obj(c: RuntimeConfiguration) -> dict[str, Any]:
    return {
        "id": c.id,
        "command_prefix": list(c.command_prefix),
        "extra_flags": list(c.extra_flags),
        "version_label": c.version_label,
    }


def configuration_from_json_obj(obj: Mapping[str, Any]) -> RuntimeConfiguration:
    return RuntimeConfiguration(
        id=obj["id"],
        command_prefix=tuple(obj["command_prefix"]),
        extra_flags=tuple(obj.get("extra_flags", ())),
        version_label=obj.get("version_label", ""),
    )


def pair_to_json_obj(p: ConfigurationPair) -> dict[str, Any]:
    return {
        "label": p.label,
        "kind": p.kind.value,
        "baseline": configuration_to_json_obj(p.baseline),
        "subject": configuration_to_json_obj(p.subject),
    }


def pair_from_json_obj(obj: Mapping[str, Any]) -> ConfigurationPair:
    return ConfigurationPair(
        label=obj["label"],
        kind=PairKind(obj.get("kind", "level")),
        baseline=configuration_from_json_obj(obj["baseline"]),
        subject=configuration_from_json_obj(obj["subject"]),
    )


def schedule_to_json_obj(s: LevelSchedule) -> dict[str, Any]:
    return {
        "iterations": list(s.iterations),
        "thresholds": list(s.thresholds),
        "top_ks": list(s.top_ks),
    }


def schedule_from_json_obj(obj: Mapping[str, Any]) -> LevelSchedule:
    return LevelSchedule(
        iterations=tuple(obj["iterations"]),
        thresholds=tuple(obj["thresholds"]),
        top_ks=tuple(obj["top_ks"]),
    )


def record_to_json_obj(r: MeasurementRecord) -> dict[str, Any]:
    return {
        "program_id": r.program_id,
        "pair_label": r.pair_label,
        "level_index": r.level_index,
        "iterations": r.iterations,
        "baseline_ns": r.baseline_ns,
        "subject_ns": r.subject_ns,
        "ratio": r.ratio,
        "outcome": r.outcome.value,
        "exception_signature": r.exception_signature,
        "wall_ns": r.wall_ns,
        "flags": list(r.flags),
    }


def record_from_json_obj(obj: Mapping[str, Any]) -> MeasurementRecord:
    return MeasurementRecord(
        program_id=obj["program_id"],
        pair_label=obj["pair_label"],
        level_index=obj["level_index"],
        iterations=obj["iterations"],
        baseline_ns=obj["baseline_ns"],
        subject_ns=obj["subject_ns"],
        ratio=obj["ratio"],
        outcome=Outcome(obj["outcome"]),
        exception_signature=obj.get("exception_signature"),
        wall_ns=obj.get("wall_ns", 0),
        flags=tuple(obj.get("flags", ())),
    )


def verdict_to_json_obj(v: Verdict) -> dict[str, Any]:
    return {
        "kind": v.kind.value,
        "level_index": v.level_index,
        "outcome": v.outcome.value if v.outcome is not None else None,
        "duplicate_of": v.duplicate_of,
        "annotations": list(v.annotations),
    }


def verdict_from_json_obj(obj: Mapping[str, Any]) -> Verdict:
    outcome = obj.get("outcome")
    return Verdict(
        kind=VerdictKind(obj["kind"]),
        level_index=obj.get("level_index"),
        outcome=Outcome(outcome) if outcome is not None else None,
        duplicate_of=obj.get("duplicate_of"),
        annotations=tuple(obj.get("annotations", ())),
    )


def campaign_result_to_json_obj(r: CampaignResult) -> dict[str, Any]:
    return {
        "pair_label": r.pair_label,
        "schedule": schedule_to_json_obj(r.schedule),
        "verdicts": {pid: verdict_to_json_obj(v) for pid, v in r.verdicts.items()},
        "survivors": [
            {"program_id": s.program_id, "final_ratio": s.final_ratio, "last_level": s.last_level}
            for s in r.survivors
        ],
        "cost": {
            "executions_per_level": list(r.cost.executions_per_level),
            "time_per_level_ns": list(r.cost.time_per_level_ns),
        },
        "history": {
            pid: [record_to_json_obj(rec) for rec in records]
            for pid, records in r.history.items()
        },
    }


def campaign_result_from_json_obj(obj: Mapping[str, Any]) -> CampaignResult:
    return CampaignResult(
        pair_label=obj["pair_label"],
        schedule=schedule_from_json_obj(obj["schedule"]),
        verdicts={pid: verdict_from_json_obj(v) for pid, v in obj["verdicts"].items()},
        survivors=tuple(
            SurvivorEntry(s["program_id"], s["final_ratio"], s["last_level"])
            for s in obj["survivors"]
        ),
        cost=CostSummary(
            executions_per_level=tuple(obj["cost"]["executions_per_level"]),
            time_per_level_ns=tuple(obj["cost"]["time_per_level_ns"]),
        ),
        history={
            pid: tuple(record_from_json_obj(rec) for rec in records)
            for pid, records in obj["history"].items()
        },
    )
