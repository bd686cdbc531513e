"""Builders and stubs shared across the test modules."""

from __future__ import annotations

from leveldiff.corpus import SIM_BASELINE_ID, SIM_SUBJECT_ID
from leveldiff.executors import (
    ExecStatus,
    ExecutionResult,
    Executor,
    ModelTable,
    SimulatedRuntimeModel,
)
from leveldiff.model import (
    ConfigurationPair,
    LevelSchedule,
    MeasurementRecord,
    PairKind,
    ProgramCandidate,
    RuntimeConfiguration,
)


def make_program(pid: str, **overrides) -> ProgramCandidate:
    defaults = dict(
        id=pid,
        run_spec=("bench", "--iters", "{N}"),
        generator="gen-a",
        template_id=f"tpl-{pid}",
        source_project=None,
        timeout_ms=60_000,
    )
    defaults.update(overrides)
    return ProgramCandidate(**defaults)


def sim_pair(label: str = "SIM") -> ConfigurationPair:
    return ConfigurationPair(
        label=label,
        kind=PairKind.LEVEL,
        baseline=RuntimeConfiguration(SIM_BASELINE_ID, ("sim",), ("--side", "baseline")),
        subject=RuntimeConfiguration(SIM_SUBJECT_ID, ("sim",), ("--side", "subject")),
    )


def flat_model(ns_per_iter: float, noise_sd: float = 0.0, noise_seed: int = 0) -> SimulatedRuntimeModel:
    """Model whose duration is exactly ns_per_iter * N (no warmup, no compile cost)."""
    return SimulatedRuntimeModel(
        compile_cost_ns=0.0,
        interpreted_ns_per_iter=ns_per_iter,
        compiled_ns_per_iter=ns_per_iter,
        hot_iterations=0,
        noise_sd=noise_sd,
        noise_seed=noise_seed,
    )


def ratio_table(ratios: dict[str, float], base_ns_per_iter: float = 100.0) -> ModelTable:
    """Model table where each program's subject/baseline ratio is exactly ratios[pid]."""
    table = ModelTable()
    for pid, ratio in ratios.items():
        table.put(pid, SIM_BASELINE_ID, flat_model(base_ns_per_iter))
        table.put(pid, SIM_SUBJECT_ID, flat_model(base_ns_per_iter * ratio))
    return table


def make_schedule(
    iterations=(1_000, 10_000),
    thresholds=(1.2, 1.2),
    top_ks=None,
) -> LevelSchedule:
    if top_ks is None:
        top_ks = (-1,) * (len(iterations) - 1)
    return LevelSchedule(tuple(iterations), tuple(thresholds), tuple(top_ks))


def ok_record(
    pid: str,
    level: int,
    baseline_ns: int,
    subject_ns: int,
    iterations: int | None = None,
    pair_label: str = "SIM",
) -> MeasurementRecord:
    return MeasurementRecord.paired(
        program_id=pid,
        pair_label=pair_label,
        level_index=level,
        iterations=iterations if iterations is not None else 1_000 * (level + 1),
        baseline_ns=baseline_ns,
        subject_ns=subject_ns,
    )


class CallLoggingExecutor(Executor):
    """Wraps another executor and records every (program, config, N) call."""

    def __init__(self, inner: Executor) -> None:
        self.inner = inner
        self.calls: list[tuple[str, str, int]] = []

    def prepare(self, programs, pair) -> None:
        self.inner.prepare(programs, pair)

    def execute(self, program, config, iterations) -> ExecutionResult:
        self.calls.append((program.id, config.id, iterations))
        return self.inner.execute(program, config, iterations)

    def calls_for(self, pid: str) -> list[tuple[str, str, int]]:
        return [c for c in self.calls if c[0] == pid]


class ScriptedExecutor(Executor):
    """Returns canned ExecutionResults keyed by (program id, config id, N).

    Unlisted cells fall back to a fixed OK duration so tests only script the
    interesting cells.
    """

    def __init__(self, canned: dict[tuple[str, str, int], ExecutionResult], default_ns: int = 1_000):
        self.canned = canned
        self.default_ns = default_ns

    def execute(self, program, config, iterations) -> ExecutionResult:
        key = (program.id, config.id, iterations)
        if key in self.canned:
            return self.canned[key]
        return ExecutionResult(
            duration_ns=self.default_ns,
            wall_ns=self.default_ns,
            status=ExecStatus.OK,
            timing_source="simulated",
        )
