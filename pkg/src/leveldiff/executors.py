"""Execution backends.

Two executors satisfy the same small contract: given a program, a runtime
configuration, and an iteration count, produce a duration in nanoseconds
plus enough metadata to classify failures. `SubprocessExecutor` drives real
runtimes and understands the `LEVELDIFF_NS` self-timing protocol;
`SimulatedExecutor` evaluates a closed-form tiered-compilation cost model,
which is what the deterministic test corpora run on.
"""

from __future__ import annotations

import random
import re
import shutil
import subprocess
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Sequence

from .model import (
    ConfigurationPair,
    LevelDiffError,
    ProgramCandidate,
    RuntimeConfiguration,
)


class ExecutorUnavailableError(LevelDiffError):
    """The executor cannot serve this pair or corpus at all."""


class ExecStatus(Enum):
    OK = "ok"
    ERROR = "error"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class ExecutionResult:
    """Outcome of running one (program, configuration, N) cell.

    duration_ns is the measurement the ratio check consumes; wall_ns is the
    executor's account of time actually spent (virtual time for simulated
    runs). timing_source records where duration_ns came from: "reported"
    (self-timed via the timing line), "wall" (fallback), "simulated", or
    "none" when the run failed before producing anything usable. error
    carries harness-level failure detail; exception_signature carries the
    normalized signature of an exception the program itself printed.
    """

    duration_ns: int
    wall_ns: int
    status: ExecStatus
    exception_signature: str | None = None
    timing_source: str = "reported"
    error: str | None = None


class Executor(ABC):
    """Measurement backend contract used by the campaign engine."""

    def prepare(self, programs: Sequence[ProgramCandidate], pair: ConfigurationPair) -> None:
        """Validate that this executor can serve the corpus and pair.

        Raises ExecutorUnavailableError before any measurement is attempted;
        the default accepts everything.
        """

    @abstractmethod
    def execute(
        self, program: ProgramCandidate, config: RuntimeConfiguration, iterations: int
    ) -> ExecutionResult:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Subprocess executor
# ---------------------------------------------------------------------------

TIMING_LINE_PREFIX = "LEVELDIFF_NS"
_TIMING_LINE = re.compile(r"LEVELDIFF_NS ([0-9]+)")

DEFAULT_EXCEPTION_PATTERNS: tuple[str, ...] = (
    # Qualified JVM-style exception/error class names, e.g. java.lang.ArithmeticException
    r"((?:[A-Za-z_$][A-Za-z0-9_$]*\.)+[A-Za-z_$][A-Za-z0-9_$]*(?:Exception|Error))",
    r"(Exception in thread .*)",
    r"(Segmentation fault.*|.*SIGSEGV.*|panic: .*)",
)


def extract_exception_signature(stderr: str, patterns: Sequence[str]) -> str | None:
    """Return the normalized signature from the first matching stderr line.

    The first line matching any pattern wins; the pattern's first capture
    group (or the whole match) becomes the signature after stripping hex
    addresses and digit runs, so two crashes differing only in addresses or
    counters collapse to one signature.
    """
    compiled = [re.compile(p) for p in patterns]
    for line in stderr.splitlines():
        for pat in compiled:
            m = pat.search(line)
            if m:
                sig = m.group(1) if m.groups() else m.group(0)
                sig = re.sub(r"0x[0-9a-fA-F]+", "", sig)
                sig = re.sub(r"[0-9]+", "", sig)
                sig = re.sub(r"\s+", " ", sig).strip()
                if sig:
                    return sig
    return None


def parse_timing_line(stdout: str) -> int | None:
    """Extract the reported duration from stdout.

    The protocol is one line `LEVELDIFF_NS <decimal integer>` (ASCII, single
    space, no sign); the last well-formed line wins when several appear.
    A line that starts with the token but is malformed raises ValueError so
    a half-broken harness integration cannot silently degrade to wall time.
    """
    reported: int | None = None
    for line in stdout.splitlines():
        line = line.rstrip("\r")
        if not line.startswith(TIMING_LINE_PREFIX):
            continue
        m = _TIMING_LINE.fullmatch(line)
        if m is None:
            raise ValueError(f"malformed timing line: {line!r}")
        reported = int(m.group(1))
    return reported


def build_command(
    program: ProgramCandidate, config: RuntimeConfiguration, iterations: int
) -> list[str]:
    """Assemble argv: runtime command, configuration flags, then the program."""
    return (
        list(config.command_prefix)
        + list(config.extra_flags)
        + program.rendered_run_spec(iterations)
    )


@dataclass
class SubprocessExecutor(Executor):
    """Runs each measurement as a child process and parses its timing line.

    workdir is the directory run_spec paths resolve against (typically the
    corpus manifest's directory). Timeouts kill the child; the call never
    blocks past the program's timeout plus one grace period.
    """

    workdir: str | None = None
    exception_patterns: tuple[str, ...] = DEFAULT_EXCEPTION_PATTERNS
    kill_grace_s: float = 2.0

    def prepare(self, programs: Sequence[ProgramCandidate], pair: ConfigurationPair) -> None:
        for config in (pair.baseline, pair.subject):
            exe = config.command_prefix[0]
            if shutil.which(exe) is None and not Path(exe).exists():
                raise ExecutorUnavailableError(
                    f"configuration {config.id!r}: command {exe!r} not found"
                )

    def execute(
        self, program: ProgramCandidate, config: RuntimeConfiguration, iterations: int
    ) -> ExecutionResult:
        cmd = build_command(program, config, iterations)
        timeout_s = program.timeout_ms / 1000.0
        start = time.perf_counter_ns()
        try:
            proc = subprocess.run(
                cmd,
                capture_output=True,
                text=True,
                timeout=timeout_s,
                cwd=self.workdir,
            )
        except subprocess.TimeoutExpired as exc:
            wall = time.perf_counter_ns() - start
            stderr = exc.stderr if isinstance(exc.stderr, str) else ""
            return ExecutionResult(
                duration_ns=wall,
                wall_ns=wall,
                status=ExecStatus.TIMEOUT,
                exception_signature=extract_exception_signature(stderr, self.exception_patterns),
                timing_source="wall",
                error=f"timeout after {program.timeout_ms} ms",
            )
        except OSError as exc:
            wall = time.perf_counter_ns() - start
            return ExecutionResult(
                duration_ns=wall,
                wall_ns=wall,
                status=ExecStatus.ERROR,
                timing_source="none",
                error=f"spawn failure: {exc}",
            )
        wall = time.perf_counter_ns() - start
        signature = extract_exception_signature(proc.stderr, self.exception_patterns)
        try:
            reported = parse_timing_line(proc.stdout)
        except ValueError as exc:
            return ExecutionResult(
                duration_ns=wall,
                wall_ns=wall,
                status=ExecStatus.ERROR,
                exception_signature=signature,
                timing_source="none",
                error=str(exc),
            )
        if proc.returncode != 0:
            return ExecutionResult(
                duration_ns=reported if reported is not None else wall,
                wall_ns=wall,
                status=ExecStatus.ERROR,
                exception_signature=signature,
                timing_source="reported" if reported is not None else "wall",
                error=f"exit status {proc.returncode}",
            )
        if reported is None:
            return ExecutionResult(
                duration_ns=wall,
                wall_ns=wall,
                status=ExecStatus.OK,
                exception_signature=signature,
                timing_source="wall",
            )
        return ExecutionResult(
            duration_ns=reported,
            wall_ns=wall,
            status=ExecStatus.OK,
            exception_signature=signature,
            timing_source="reported",
        )


# ---------------------------------------------------------------------------
# Simulated executor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulatedRuntimeModel:
    """Closed-form cost model of a runtime executing one program.

    The first hot_iterations run interpreted; once the loop count crosses
    that threshold the one-time compile cost is paid and remaining
    iterations run at the effective compiled speed, where speculation
    success discounts the gain and failure adds the deoptimization penalty.
    noise_sd is the relative standard deviation of multiplicative
    measurement noise (0 disables it); draws are keyed by (noise_seed,
    iterations) so repeated calls are reproducible.
    """

    compile_cost_ns: float
    interpreted_ns_per_iter: float
    compiled_ns_per_iter: float
    hot_iterations: int
    speculation_success: float = 0.0
    speculation_gain_ns: float = 0.0
    deopt_penalty_ns: float = 0.0
    noise_sd: float = 0.0
    noise_seed: int = 0

    def __post_init__(self) -> None:
        for name in (
            "compile_cost_ns",
            "interpreted_ns_per_iter",
            "compiled_ns_per_iter",
            "speculation_gain_ns",
            "deopt_penalty_ns",
            "noise_sd",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.hot_iterations < 0:
            raise ValueError("hot_iterations must be >= 0")
        if not 0.0 <= self.speculation_success <= 1.0:
            raise ValueError("speculation_success must be within [0, 1]")

    def effective_compiled_ns_per_iter(self) -> float:
        """Compiled per-iteration cost adjusted for speculation, floored at 0."""
        adjusted = (
            self.compiled_ns_per_iter
            - self.speculation_success * self.speculation_gain_ns
            + (1.0 - self.speculation_success) * self.deopt_penalty_ns
        )
        return max(0.0, adjusted)


def _noise_factor(model: SimulatedRuntimeModel, iterations: int) -> float:
    if model.noise_sd <= 0.0:
        return 0.0
    rng = random.Random(f"{model.noise_seed}:{iterations}")
    # Rejection-truncate at three standard deviations so a single draw can
    # never fake a slowdown larger than the model geometry allows.
    while True:
        eps = rng.gauss(0.0, model.noise_sd)
        if abs(eps) <= 3.0 * model.noise_sd:
            return eps


def execute_simulated(model: SimulatedRuntimeModel, iterations: int) -> int:
    """Duration in nanoseconds for running `iterations` loop iterations."""
    if iterations <= 0:
        raise ValueError("iterations must be positive")
    warm = min(iterations, model.hot_iterations)
    duration = model.interpreted_ns_per_iter * warm
    if iterations > model.hot_iterations:
        duration += model.compile_cost_ns
        duration += (iterations - model.hot_iterations) * model.effective_compiled_ns_per_iter()
    return round(duration * (1.0 + _noise_factor(model, iterations)))


def simulated_model_to_json_obj(m: SimulatedRuntimeModel) -> dict[str, Any]:
    return {
        "compile_cost_ns": m.compile_cost_ns,
        "interpreted_ns_per_iter": m.interpreted_ns_per_iter,
        "compiled_ns_per_iter": m.compiled_ns_per_iter,
        "hot_iterations": m.hot_iterations,
        "speculation_success": m.speculation_success,
        "speculation_gain_ns": m.speculation_gain_ns,
        "deopt_penalty_ns": m.deopt_penalty_ns,
        "noise_sd": m.noise_sd,
        "noise_seed": m.noise_seed,
    }


def simulated_model_from_json_obj(obj: Mapping[str, Any]) -> SimulatedRuntimeModel:
    return SimulatedRuntimeModel(**obj)


class ModelTable:
    """Simulated models keyed by (program id, configuration id)."""

    def __init__(
        self, models: Mapping[str, Mapping[str, SimulatedRuntimeModel]] | None = None
    ) -> None:
        self._models: dict[str, dict[str, SimulatedRuntimeModel]] = {
            pid: dict(by_config) for pid, by_config in (models or {}).items()
        }

    def put(self, program_id: str, config_id: str, model: SimulatedRuntimeModel) -> None:
        self._models.setdefault(program_id, {})[config_id] = model

    def get(self, program_id: str, config_id: str) -> SimulatedRuntimeModel:
        try:
            return self._models[program_id][config_id]
        except KeyError:
            raise ExecutorUnavailableError(
                f"no simulated model for program {program_id!r} under configuration {config_id!r}"
            ) from None

    def has(self, program_id: str, config_id: str) -> bool:
        return config_id in self._models.get(program_id, {})

    def __len__(self) -> int:
        return len(self._models)

    def to_json_obj(self) -> dict[str, Any]:
        return {
            pid: {cid: simulated_model_to_json_obj(m) for cid, m in by_config.items()}
            for pid, by_config in self._models.items()
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping[str, Any]) -> "ModelTable":
        table = cls()
        for pid, by_config in obj.items():
            for cid, m in by_config.items():
                table.put(pid, cid, simulated_model_from_json_obj(m))
        return table


@dataclass
class SimulatedExecutor(Executor):
    """Deterministic executor backed by a ModelTable; never errors or times out."""

    table: ModelTable

    def prepare(self, programs: Sequence[ProgramCandidate], pair: ConfigurationPair) -> None:
        missing = [
            (p.id, config.id)
            for p in programs
            for config in (pair.baseline, pair.subject)
            if not self.table.has(p.id, config.id)
        ]
        if missing:
            pid, cid = missing[0]
            raise ExecutorUnavailableError(
                f"model table is missing {len(missing)} entries, first: ({pid!r}, {cid!r})"
            )

    def execute(
        self, program: ProgramCandidate, config: RuntimeConfiguration, iterations: int
    ) -> ExecutionResult:
        duration = execute_simulated(self.table.get(program.id, config.id), iterations)
        return ExecutionResult(
            duration_ns=duration,
            wall_ns=duration,
            status=ExecStatus.OK,
            timing_source="simulated",
        )


# ---------------------------------------------------------------------------
# Profitability predicates
# ---------------------------------------------------------------------------


def compilation_profitable(
    interpreted_ns_per_iter: float,
    compiled_ns_per_iter: float,
    expected_runs: float,
    compile_cost_ns: float,
) -> bool:
    """True when the per-run saving times expected runs strictly beats the compile cost."""
    for name, value in (
        ("interpreted_ns_per_iter", interpreted_ns_per_iter),
        ("compiled_ns_per_iter", compiled_ns_per_iter),
        ("expected_runs", expected_runs),
        ("compile_cost_ns", compile_cost_ns),
    ):
        if value < 0:
            raise ValueError(f"{name} must be >= 0")
    return (interpreted_ns_per_iter - compiled_ns_per_iter) * expected_runs > compile_cost_ns


def speculation_beneficial(
    success_probability: float,
    gain_ns: float,
    penalty_ns: float,
) -> bool:
    """True when expected speculation gain strictly beats the expected deopt cost."""
    if not 0.0 <= success_probability <= 1.0:
        raise ValueError("success_probability must be within [0, 1]")
    if gain_ns < 0 or penalty_ns < 0:
        raise ValueError("gain_ns and penalty_ns must be >= 0")
    return success_probability * gain_ns > (1.0 - success_probability) * penalty_ns
