"""Differential performance testing for JIT-compiled runtimes.

Programs run under two runtime configurations at increasing iteration
counts; candidates whose subject/baseline timing ratio stays above a
per-level threshold survive to the next, more expensive, level. Survivors
pass through a constant-overhead false-positive filter and root-cause
deduplication before being reported as performance-bug candidates.
"""

from .engine import (
    CampaignConfig,
    FirstLevelPolicy,
    check,
    prioritize,
    run_campaign,
    select_top_k,
    update_history,
)
from .executors import (
    ExecStatus,
    ExecutionResult,
    Executor,
    ExecutorUnavailableError,
    ModelTable,
    SimulatedExecutor,
    SimulatedRuntimeModel,
    SubprocessExecutor,
    compilation_profitable,
    execute_simulated,
    speculation_beneficial,
)
from .filters import (
    DedupResult,
    FilterConfig,
    KnownBugSet,
    SurvivorView,
    apply_filters,
    duplicate_filter,
    false_positive_filter,
)
from .corpus import (
    CorpusManifest,
    SyntheticCorpusSpec,
    load_manifest,
    synthesize_corpus,
    write_manifest,
)
from .model import (
    CampaignResult,
    ConfigError,
    ConfigurationPair,
    History,
    LevelDiffError,
    LevelSchedule,
    MeasurementRecord,
    Outcome,
    PairKind,
    ProgramCandidate,
    RuntimeConfiguration,
    SurvivorEntry,
    Verdict,
    VerdictKind,
    validate_schedule,
)

__version__ = "0.1.0"

__all__ = [
    "CampaignConfig",
    "CampaignResult",
    "ConfigError",
    "ConfigurationPair",
    "CorpusManifest",
    "DedupResult",
    "ExecStatus",
    "ExecutionResult",
    "Executor",
    "ExecutorUnavailableError",
    "FilterConfig",
    "FirstLevelPolicy",
    "History",
    "KnownBugSet",
    "LevelDiffError",
    "LevelSchedule",
    "MeasurementRecord",
    "ModelTable",
    "Outcome",
    "PairKind",
    "ProgramCandidate",
    "RuntimeConfiguration",
    "SimulatedExecutor",
    "SimulatedRuntimeModel",
    "SubprocessExecutor",
    "SurvivorEntry",
    "SurvivorView",
    "SyntheticCorpusSpec",
    "Verdict",
    "VerdictKind",
    "apply_filters",
    "check",
    "compilation_profitable",
    "duplicate_filter",
    "execute_simulated",
    "false_positive_filter",
    "load_manifest",
    "prioritize",
    "run_campaign",
    "select_top_k",
    "speculation_beneficial",
    "synthesize_corpus",
    "update_history",
    "validate_schedule",
    "write_manifest",
]
