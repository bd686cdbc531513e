"""Leveled differential campaign loop.

The loop walks a schedule of increasing iteration counts. At each level the
remaining candidates are reordered by their newest timing ratio, optionally
truncated to the top k, and measured under both configurations of the pair;
a candidate whose subject/baseline ratio fails to exceed the level's
threshold is deactivated and never executed again. Candidates left active
after the last level are survivors.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Container, Mapping, Sequence

from .executors import ExecStatus, ExecutionResult, Executor
from .model import (
    CampaignResult,
    ConfigError,
    ConfigurationPair,
    CostSummary,
    History,
    LevelSchedule,
    MeasurementRecord,
    NonPositiveMeasurementError,
    Outcome,
    ProgramCandidate,
    SurvivorEntry,
    Verdict,
    VerdictKind,
    validate_schedule,
)

RecordSink = Callable[[MeasurementRecord], None]


class FirstLevelPolicy(Enum):
    EXECUTE_ALL = "execute-all"
    REUSE_PROVIDED = "reuse-provided"


@dataclass(frozen=True)
class CampaignConfig:
    pair: ConfigurationPair
    schedule: LevelSchedule
    first_level_policy: FirstLevelPolicy = FirstLevelPolicy.EXECUTE_ALL
    parallelism: int = 1

    def __post_init__(self) -> None:
        validate_schedule(self.schedule)
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")


def check(baseline_ns: int, subject_ns: int, threshold: float) -> bool:
    """True when the subject ran slower than threshold times the baseline.

    Strict inequality: a ratio exactly at the threshold does not pass, so a
    candidate must clearly exceed the level's bar to stay in the campaign.
    """
    if baseline_ns <= 0 or subject_ns <= 0:
        raise NonPositiveMeasurementError(
            f"durations must be positive, got baseline={baseline_ns} subject={subject_ns}"
        )
    if not threshold > 1.0:
        raise ValueError(f"threshold must be above 1, got {threshold}")
    return subject_ns / baseline_ns > threshold


def prioritize(
    programs: Sequence[ProgramCandidate], history: History
) -> list[ProgramCandidate]:
    """Order candidates most-suspicious-first by their newest ratio.

    Programs whose newest record carries no ratio (errored) or that have no
    history at all sort after every ratio-bearing program; ties break by
    ascending id so the order is total and reruns agree.
    """

    def key(p: ProgramCandidate) -> tuple:
        latest = history.latest(p.id)
        if latest is not None and latest.ratio is not None:
            return (0, -latest.ratio, p.id)
        return (1, 0.0, p.id)

    return sorted(programs, key=key)


def select_top_k(
    ordered: Sequence[ProgramCandidate], active_ids: Container[str], k: int
) -> list[ProgramCandidate]:
    """First k active candidates of an already-prioritized list.

    Inactive candidates are dropped without counting against k, so the
    selection is always the k most suspicious programs still in play.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    selected: list[ProgramCandidate] = []
    for program in ordered:
        if program.id in active_ids:
            selected.append(program)
            if len(selected) == k:
                break
    return selected


def update_history(history: History, record: MeasurementRecord) -> History:
    """Append one record to a program's trail; levels must strictly ascend."""
    history.append(record)
    return history


def _measure_pair(
    executor: Executor,
    program: ProgramCandidate,
    pair: ConfigurationPair,
    level_index: int,
    iterations: int,
) -> MeasurementRecord:
    """Run baseline then subject and fold both halves into one record.

    The two halves are never concurrent with each other; a failed baseline
    skips the subject entirely since no ratio could come of it.
    """
    baseline = executor.execute(program, pair.baseline, iterations)
    subject: ExecutionResult | None = None
    if baseline.status is ExecStatus.OK:
        subject = executor.execute(program, pair.subject, iterations)

    flags: list[str] = []
    if baseline.timing_source == "wall":
        flags.append("baseline-wall-clock")
    if subject is not None and subject.timing_source == "wall":
        flags.append("subject-wall-clock")

    signature = None
    if subject is not None and subject.exception_signature:
        signature = subject.exception_signature
    elif baseline.exception_signature:
        signature = baseline.exception_signature

    wall_ns = baseline.wall_ns + (subject.wall_ns if subject is not None else 0)

    # An OK execution reporting a non-positive duration is an invalid
    # measurement; classify it as that side's failure so the campaign
    # continues instead of tripping over an impossible ratio.
    baseline_invalid = baseline.status is ExecStatus.OK and baseline.duration_ns <= 0
    subject_invalid = (
        subject is not None and subject.status is ExecStatus.OK and subject.duration_ns <= 0
    )
    if baseline_invalid or subject_invalid:
        flags.append("non-positive-duration")

    if baseline.status is ExecStatus.TIMEOUT:
        outcome = Outcome.TIMEOUT
    elif baseline.status is ExecStatus.ERROR or baseline_invalid:
        outcome = Outcome.BASELINE_ERROR
    elif subject is not None and subject.status is ExecStatus.TIMEOUT:
        outcome = Outcome.TIMEOUT
    elif (subject is not None and subject.status is ExecStatus.ERROR) or subject_invalid:
        outcome = Outcome.SUBJECT_ERROR
    else:
        outcome = Outcome.OK

    if outcome is Outcome.OK:
        assert subject is not None
        return MeasurementRecord.paired(
            program_id=program.id,
            pair_label=pair.label,
            level_index=level_index,
            iterations=iterations,
            baseline_ns=baseline.duration_ns,
            subject_ns=subject.duration_ns,
            exception_signature=signature,
            wall_ns=wall_ns,
            flags=tuple(flags),
        )
    return MeasurementRecord(
        program_id=program.id,
        pair_label=pair.label,
        level_index=level_index,
        iterations=iterations,
        baseline_ns=baseline.duration_ns,
        subject_ns=subject.duration_ns if subject is not None else 0,
        ratio=None,
        outcome=outcome,
        exception_signature=signature,
        wall_ns=wall_ns,
        flags=tuple(flags),
    )


def _validate_provided_first_level(
    programs: Sequence[ProgramCandidate],
    schedule: LevelSchedule,
    provided: Mapping[str, MeasurementRecord] | None,
) -> dict[str, MeasurementRecord]:
    if provided is None:
        raise ConfigError("first-level policy reuse-provided needs provided records")
    validated: dict[str, MeasurementRecord] = {}
    for program in programs:
        record = provided.get(program.id)
        if record is None:
            raise ConfigError(f"no provided first-level record for program {program.id!r}")
        if record.level_index != 0:
            raise ConfigError(
                f"provided record for {program.id!r} is at level {record.level_index}, expected 0"
            )
        if record.iterations != schedule.iterations[0]:
            raise ConfigError(
                f"provided record for {program.id!r} ran {record.iterations} iterations, "
                f"schedule expects {schedule.iterations[0]}"
            )
        validated[program.id] = record
    return validated


def run_campaign(
    corpus: Sequence[ProgramCandidate],
    config: CampaignConfig,
    executor: Executor,
    provided_first_level: Mapping[str, MeasurementRecord] | None = None,
    record_sink: RecordSink | None = None,
) -> CampaignResult:
    """Run one pair's full leveled campaign over a corpus.

    Every corpus program ends with exactly one verdict. record_sink, when
    given, receives each measurement as it lands (the CLI streams them to
    the append-only log). Reused first-level records are ingested into the
    history and the sink but count zero executions and zero cost, since the
    campaign did not pay for them.
    """
    if not corpus:
        raise ConfigError("corpus is empty")
    seen: set[str] = set()
    for program in corpus:
        if program.id in seen:
            raise ConfigError(f"duplicate program id {program.id!r} in corpus")
        seen.add(program.id)

    schedule = validate_schedule(config.schedule)
    executor.prepare(corpus, config.pair)

    levels = len(schedule.iterations)
    history = History()
    active: dict[str, bool] = {p.id: True for p in corpus}
    verdicts: dict[str, Verdict] = {}
    executions = [0] * levels
    level_time = [0] * levels

    def settle(record: MeasurementRecord, threshold: float) -> None:
        """Apply one record: log, history, then the level's ratio check."""
        if record_sink is not None:
            record_sink(record)
        update_history(history, record)
        if record.outcome is not Outcome.OK:
            active[record.program_id] = False
            verdicts[record.program_id] = Verdict(
                VerdictKind.ERRORED, outcome=record.outcome
            )
        elif not check(record.baseline_ns, record.subject_ns, threshold):
            active[record.program_id] = False
            verdicts[record.program_id] = Verdict(
                VerdictKind.FILTERED, level_index=record.level_index
            )

    for level_index in range(levels):
        iterations = schedule.iterations[level_index]
        threshold = schedule.thresholds[level_index]

        if level_index == 0 and config.first_level_policy is FirstLevelPolicy.REUSE_PROVIDED:
            provided = _validate_provided_first_level(corpus, schedule, provided_first_level)
            for program in corpus:
                record = replace(provided[program.id], pair_label=config.pair.label)
                settle(record, threshold)
            continue

        ordered = prioritize(corpus, history)
        if level_index >= 1 and schedule.top_ks[level_index - 1] > 0:
            active_ids = {pid for pid, is_active in active.items() if is_active}
            selected = select_top_k(ordered, active_ids, schedule.top_ks[level_index - 1])
        else:
            selected = ordered

        to_measure = [p for p in selected if active[p.id]]
        if config.parallelism > 1 and len(to_measure) > 1:
            with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
                records = list(
                    pool.map(
                        lambda p: _measure_pair(
                            executor, p, config.pair, level_index, iterations
                        ),
                        to_measure,
                    )
                )
        else:
            records = [
                _measure_pair(executor, p, config.pair, level_index, iterations)
                for p in to_measure
            ]

        executions[level_index] = len(records)
        for record in records:
            level_time[level_index] += record.baseline_ns + record.subject_ns
            settle(record, threshold)

    survivors: list[SurvivorEntry] = []
    for program in corpus:
        if not active[program.id]:
            continue
        last = history.latest(program.id)
        assert last is not None and last.ratio is not None
        annotations: list[str] = []
        if last.level_index < levels - 1:
            annotations.append(f"stale-at-level-{last.level_index}")
        flagged = sorted({flag for rec in history.records(program.id) for flag in rec.flags})
        annotations.extend(flagged)
        verdicts[program.id] = Verdict(VerdictKind.SURVIVOR, annotations=tuple(annotations))
        survivors.append(SurvivorEntry(program.id, last.ratio, last.level_index))

    survivors.sort(key=lambda s: (-s.final_ratio, s.program_id))

    return CampaignResult(
        pair_label=config.pair.label,
        schedule=schedule,
        verdicts=verdicts,
        survivors=tuple(survivors),
        cost=CostSummary(tuple(executions), tuple(level_time)),
        history=history.snapshot(),
    )
