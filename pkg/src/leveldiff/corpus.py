"""Corpus ingestion and synthetic corpus generation.

A corpus is a JSON manifest listing program candidates plus shared defaults.
The synthesizer builds deterministic corpora of simulated programs with a
known ground truth (neutral, constant compilation overhead, or an injected
per-iteration slowdown), which is what the self-checking test campaigns and
the `simulate` CLI command run on.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .executors import (
    ModelTable,
    SimulatedRuntimeModel,
    simulated_model_to_json_obj,
)
from .model import (
    ConfigError,
    ITERATION_PLACEHOLDER,
    ProgramCandidate,
    program_from_json_obj,
    program_to_json_obj,
)

MANIFEST_VERSION = 1

# Configuration ids every synthetic corpus runs under.
SIM_BASELINE_ID = "sim-baseline"
SIM_SUBJECT_ID = "sim-subject"

LABEL_NEUTRAL = "neutral"
LABEL_CONSTANT_OVERHEAD = "constant_overhead"
LABEL_INJECTED_BUG = "injected_bug"


class ManifestError(ConfigError):
    pass


class ManifestParseError(ManifestError):
    pass


class DuplicateIdError(ManifestError):
    pass


class MissingPlaceholderError(ManifestError):
    pass


@dataclass(frozen=True)
class CorpusDefaults:
    timeout_ms: int = 60_000
    workdir: str | None = None


@dataclass(frozen=True)
class CorpusManifest:
    version: int
    defaults: CorpusDefaults
    programs: tuple[ProgramCandidate, ...]


def manifest_to_json_obj(manifest: CorpusManifest) -> dict[str, Any]:
    return {
        "version": manifest.version,
        "defaults": {
            "timeout_ms": manifest.defaults.timeout_ms,
            "workdir": manifest.defaults.workdir,
        },
        "programs": [program_to_json_obj(p) for p in manifest.programs],
    }


def manifest_from_json_obj(obj: Mapping[str, Any], base_dir: Path | None = None) -> CorpusManifest:
    """Build a manifest from parsed JSON, validating program entries.

    base_dir, when given, becomes the default working directory for
    relative run_spec paths (callers pass the manifest file's directory).
    """
    version = obj.get("version")
    if version != MANIFEST_VERSION:
        raise ManifestParseError(f"unsupported manifest version {version!r}")
    defaults_obj = obj.get("defaults", {})
    workdir = defaults_obj.get("workdir")
    if workdir is None and base_dir is not None:
        workdir = str(base_dir)
    elif workdir is not None and base_dir is not None and not Path(workdir).is_absolute():
        workdir = str(base_dir / workdir)
    defaults = CorpusDefaults(
        timeout_ms=defaults_obj.get("timeout_ms", 60_000),
        workdir=workdir,
    )

    programs: list[ProgramCandidate] = []
    seen: set[str] = set()
    for entry in obj.get("programs", []):
        if "timeout_ms" not in entry:
            entry = {**entry, "timeout_ms": defaults.timeout_ms}
        try:
            program = program_from_json_obj(entry)
        except (KeyError, TypeError) as exc:
            raise ManifestParseError(f"bad program entry {entry!r}: {exc}") from exc
        if program.id in seen:
            raise DuplicateIdError(f"duplicate program id {program.id!r}")
        seen.add(program.id)
        if program.placeholder_count() != 1:
            raise MissingPlaceholderError(
                f"program {program.id!r}: run_spec must contain {ITERATION_PLACEHOLDER!r} exactly once"
            )
        if program.timeout_ms <= 0:
            raise ManifestParseError(f"program {program.id!r}: timeout_ms must be positive")
        programs.append(program)
    return CorpusManifest(version=version, defaults=defaults, programs=tuple(programs))


def load_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestParseError(f"cannot read manifest {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ManifestParseError(f"{path}: manifest must be a JSON object")
    return manifest_from_json_obj(obj, base_dir=path.resolve().parent)


def write_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(manifest_to_json_obj(manifest), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# Synthetic corpora
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """Recipe for a deterministic corpus with known ground truth.

    slowdown_factor scales the subject's effective compiled per-iteration
    cost for injected bugs; overhead_delta_ns is added to the subject's
    one-time compile cost for constant-overhead programs; noise_sd is the
    relative measurement noise both configurations simulate.
    """

    neutral: int = 0
    constant_overhead: int = 0
    injected_bug: int = 0
    slowdown_factor: float = 1.5
    overhead_delta_ns: int = 900_000_000
    noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.neutral < 0 or self.constant_overhead < 0 or self.injected_bug < 0:
            raise ConfigError("program counts must be >= 0")
        if self.neutral + self.constant_overhead + self.injected_bug == 0:
            raise ConfigError("corpus would be empty")
        if self.slowdown_factor <= 1.0:
            raise ConfigError("slowdown_factor must be above 1")
        if self.overhead_delta_ns <= 0:
            raise ConfigError("overhead_delta_ns must be positive")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be >= 0")


def spec_from_json_obj(obj: Mapping[str, Any]) -> SyntheticCorpusSpec:
    allowed = {
        "neutral",
        "constant_overhead",
        "injected_bug",
        "slowdown_factor",
        "overhead_delta_ns",
        "noise_sd",
        "seed",
    }
    unknown = set(obj) - allowed - {"output_dir"}
    if unknown:
        raise ConfigError(f"unknown synthetic corpus fields: {sorted(unknown)}")
    return SyntheticCorpusSpec(**{k: v for k, v in obj.items() if k in allowed})


def _noise_seed(spec_seed: int, program_id: str, config_id: str) -> int:
    return random.Random(f"{spec_seed}:noise:{program_id}:{config_id}").getrandbits(63)


def synthesize_corpus(
    spec: SyntheticCorpusSpec,
) -> tuple[CorpusManifest, ModelTable, dict[str, dict[str, Any]]]:
    """Generate a corpus, its simulated models, and the ground-truth map.

    Everything derives from spec.seed: base model parameters are drawn once
    per program, the subject model copies the baseline and perturbs it
    according to the program's label, and noise streams get independent
    seeds per (program, configuration). Ground truth maps program id to
    label plus both models, so tests can cross-check measured behavior.
    """
    total = spec.neutral + spec.constant_overhead + spec.injected_bug
    labels = (
        [LABEL_NEUTRAL] * spec.neutral
        + [LABEL_CONSTANT_OVERHEAD] * spec.constant_overhead
        + [LABEL_INJECTED_BUG] * spec.injected_bug
    )
    rng = random.Random(f"{spec.seed}:corpus")
    rng.shuffle(labels)

    programs: list[ProgramCandidate] = []
    table = ModelTable()
    ground_truth: dict[str, dict[str, Any]] = {}
    width = max(4, len(str(total - 1)))
    for index, label in enumerate(labels):
        program_id = f"p{index:0{width}d}"
        compiled = math.exp(rng.uniform(math.log(100.0), math.log(1600.0)))
        interpreted = compiled * rng.uniform(3.0, 8.0)
        hot = rng.randint(200, 1000)
        compile_cost = rng.uniform(1e4, 2e5)

        baseline = SimulatedRuntimeModel(
            compile_cost_ns=compile_cost,
            interpreted_ns_per_iter=interpreted,
            compiled_ns_per_iter=compiled,
            hot_iterations=hot,
            noise_sd=spec.noise_sd,
            noise_seed=_noise_seed(spec.seed, program_id, SIM_BASELINE_ID),
        )
        subject_seed = _noise_seed(spec.seed, program_id, SIM_SUBJECT_ID)
        if label == LABEL_CONSTANT_OVERHEAD:
            subject = SimulatedRuntimeModel(
                compile_cost_ns=compile_cost + spec.overhead_delta_ns,
                interpreted_ns_per_iter=interpreted,
                compiled_ns_per_iter=compiled,
                hot_iterations=hot,
                noise_sd=spec.noise_sd,
                noise_seed=subject_seed,
            )
        elif label == LABEL_INJECTED_BUG:
            subject = SimulatedRuntimeModel(
                compile_cost_ns=compile_cost,
                interpreted_ns_per_iter=interpreted,
                compiled_ns_per_iter=compiled * spec.slowdown_factor,
                hot_iterations=hot,
                noise_sd=spec.noise_sd,
                noise_seed=subject_seed,
            )
        else:
            subject = SimulatedRuntimeModel(
                compile_cost_ns=compile_cost,
                interpreted_ns_per_iter=interpreted,
                compiled_ns_per_iter=compiled,
                hot_iterations=hot,
                noise_sd=spec.noise_sd,
                noise_seed=subject_seed,
            )

        program = ProgramCandidate(
            id=program_id,
            run_spec=("sim", "--iters", ITERATION_PLACEHOLDER),
            generator="synthetic",
            template_id=f"tpl-{program_id}",
            source_project="synthetic",
        )
        programs.append(program)
        table.put(program_id, SIM_BASELINE_ID, baseline)
        table.put(program_id, SIM_SUBJECT_ID, subject)
        ground_truth[program_id] = {
            "label": label,
            "baseline": simulated_model_to_json_obj(baseline),
            "subject": simulated_model_to_json_obj(subject),
        }

    manifest = CorpusManifest(
        version=MANIFEST_VERSION,
        defaults=CorpusDefaults(),
        programs=tuple(programs),
    )
    return manifest, table, ground_truth
