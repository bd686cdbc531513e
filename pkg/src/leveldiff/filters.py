"""Post-campaign survivor filters.

Two independent reducers run after the leveled loop. The false-positive
filter drops survivors whose absolute baseline/subject difference failed to
grow with the iteration count, which is the signature of a constant startup
or compilation overhead rather than a per-iteration slowdown. The duplicate
filter collapses survivors that share a known root cause: first by program
template against a persistent known-bug set, then by exception signature
within each generator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .model import (
    CampaignResult,
    ConfigError,
    MeasurementRecord,
    Outcome,
    ProgramCandidate,
    Verdict,
    VerdictKind,
)

TREND_UNVERIFIED = "trend-unverified"
KNOWN_BUG = "known"


@dataclass(frozen=True)
class FilterConfig:
    """Tuning for the false-positive trend rule.

    growth_fraction is the fraction of proportional growth the difference
    must attain between the first and last executed level; survivors with
    fewer than min_levels_for_trend usable records are kept but annotated
    rather than judged.
    """

    growth_fraction: float = 0.5
    min_levels_for_trend: int = 2

    def __post_init__(self) -> None:
        if not 0.0 < self.growth_fraction <= 1.0:
            raise ConfigError(f"growth_fraction must be in (0, 1], got {self.growth_fraction}")
        if self.min_levels_for_trend < 2:
            raise ConfigError("min_levels_for_trend must be >= 2")


@dataclass(frozen=True)
class TrendDecision:
    keep: bool
    annotation: str | None = None


def false_positive_filter(
    survivor_histories: Mapping[str, Sequence[MeasurementRecord]],
    config: FilterConfig,
) -> dict[str, TrendDecision]:
    """Judge each survivor's difference trend between first and last level.

    A genuine per-iteration slowdown makes |baseline - subject| scale with
    the iteration count; the survivor is kept iff the difference at the last
    executed level is at least growth_fraction times the proportional
    projection of the first level's difference. Survivors without enough
    levels to form a trend are kept with a TREND_UNVERIFIED annotation.
    """
    decisions: dict[str, TrendDecision] = {}
    for program_id, records in survivor_histories.items():
        usable = [r for r in records if r.outcome is Outcome.OK]
        if len(usable) < config.min_levels_for_trend:
            decisions[program_id] = TrendDecision(keep=True, annotation=TREND_UNVERIFIED)
            continue
        first, last = usable[0], usable[-1]
        diff_first = abs(first.subject_ns - first.baseline_ns)
        diff_last = abs(last.subject_ns - last.baseline_ns)
        # diff_last / diff_first >= growth_fraction * (N_last / N_first),
        # cross-multiplied so a zero first-level difference never divides.
        keep = diff_last * first.iterations >= config.growth_fraction * last.iterations * diff_first
        decisions[program_id] = TrendDecision(keep=keep)
    return decisions


class KnownBugSet:
    """Persistent set of (generator, template id) pairs with a known root cause.

    The on-disk format is one tab-separated pair per line, append-only, so
    campaigns can extend it without rewriting what previous runs learned.
    """

    def __init__(self, entries: Iterable[tuple[str, str]] = ()) -> None:
        self._entries: set[tuple[str, str]] = set(entries)

    def contains(self, generator: str, template_id: str) -> bool:
        return (generator, template_id) in self._entries

    def add(self, generator: str, template_id: str) -> None:
        self._entries.add((generator, template_id))

    def entries(self) -> frozenset[tuple[str, str]]:
        return frozenset(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    @classmethod
    def load(cls, path: str | Path) -> "KnownBugSet":
        """Read a known-bug file; a missing file is an empty set."""
        known = cls()
        path = Path(path)
        if not path.exists():
            return known
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'generator<TAB>template_id'")
            known.add(parts[0], parts[1])
        return known

    @staticmethod
    def append_entries(path: str | Path, entries: Sequence[tuple[str, str]]) -> None:
        if not entries:
            return
        with open(path, "a", encoding="utf-8") as fh:
            for generator, template_id in entries:
                fh.write(f"{generator}\t{template_id}\n")


@dataclass(frozen=True)
class SurvivorView:
    """The slice of a survivor the duplicate filter needs."""

    program_id: str
    generator: str
    template_id: str | None
    exception_signature: str | None
    final_ratio: float


@dataclass(frozen=True)
class DedupResult:
    kept: tuple[SurvivorView, ...]
    duplicate_of: Mapping[str, str]
    new_known_entries: tuple[tuple[str, str], ...]


def _best(group: Sequence[SurvivorView]) -> SurvivorView:
    return min(group, key=lambda s: (-s.final_ratio, s.program_id))


def duplicate_filter(
    survivors: Sequence[SurvivorView], known_bugs: KnownBugSet
) -> DedupResult:
    """Collapse survivors sharing a root cause; template pass runs first.

    Membership in the known-bug set is evaluated against its state at call
    entry, so survivors kept by this call do not suppress each other via
    the entries they would add; new_known_entries reports what the caller
    should persist for future campaigns. Representatives are the highest
    final ratio in their group, ties to the lowest id.
    """
    duplicate_of: dict[str, str] = {}

    # Template pass: known templates are absorbed outright, the rest group
    # by (generator, template) and keep one representative each.
    after_template: list[SurvivorView] = []
    template_groups: dict[tuple[str, str], list[SurvivorView]] = {}
    for survivor in survivors:
        if survivor.template_id is None:
            after_template.append(survivor)
            continue
        if known_bugs.contains(survivor.generator, survivor.template_id):
            duplicate_of[survivor.program_id] = KNOWN_BUG
            continue
        template_groups.setdefault((survivor.generator, survivor.template_id), []).append(survivor)
    for group in template_groups.values():
        representative = _best(group)
        for survivor in group:
            if survivor.program_id != representative.program_id:
                duplicate_of[survivor.program_id] = representative.program_id
        after_template.append(representative)

    # Exception pass: within a generator, survivors sharing a signature
    # collapse to one. Survivors without a signature never group.
    signature_groups: dict[tuple[str, str], list[SurvivorView]] = {}
    for survivor in after_template:
        if survivor.exception_signature:
            signature_groups.setdefault(
                (survivor.generator, survivor.exception_signature), []
            ).append(survivor)
    for group in signature_groups.values():
        representative = _best(group)
        for survivor in group:
            if survivor.program_id != representative.program_id:
                duplicate_of[survivor.program_id] = representative.program_id

    # A template representative absorbed by the exception pass leaves its
    # own duplicates pointing at a non-kept program; follow the chain so
    # every duplicate names a survivor of both passes.
    for program_id, representative in list(duplicate_of.items()):
        while representative != KNOWN_BUG and representative in duplicate_of:
            representative = duplicate_of[representative]
        duplicate_of[program_id] = representative

    kept = tuple(s for s in survivors if s.program_id not in duplicate_of)
    new_entries: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for view in kept:
        if view.template_id is None:
            continue
        entry = (view.generator, view.template_id)
        if entry in seen or known_bugs.contains(*entry):
            continue
        seen.add(entry)
        new_entries.append(entry)
    return DedupResult(kept=kept, duplicate_of=duplicate_of, new_known_entries=tuple(new_entries))


def apply_filters(
    result: CampaignResult,
    corpus: Sequence[ProgramCandidate],
    config: FilterConfig,
    known_bugs: KnownBugSet,
) -> tuple[CampaignResult, DedupResult]:
    """Rewrite a campaign's survivor verdicts through both filters.

    Survivors dropped by the trend rule become FALSE_POSITIVE verdicts;
    survivors absorbed by the duplicate filter become DUPLICATE verdicts
    naming their representative (or the known-bug marker). The returned
    result's survivor list keeps only programs that came through both
    passes, in the original ratio ordering.
    """
    candidates = {p.id: p for p in corpus}
    histories = {entry.program_id: result.history[entry.program_id] for entry in result.survivors}
    trend = false_positive_filter(histories, config)

    verdicts = dict(result.verdicts)
    views: list[SurvivorView] = []
    for entry in result.survivors:
        decision = trend[entry.program_id]
        if not decision.keep:
            verdicts[entry.program_id] = Verdict(VerdictKind.FALSE_POSITIVE)
            continue
        program = candidates[entry.program_id]
        signature = None
        for record in reversed(histories[entry.program_id]):
            if record.exception_signature:
                signature = record.exception_signature
                break
        views.append(
            SurvivorView(
                program_id=entry.program_id,
                generator=program.generator,
                template_id=program.template_id,
                exception_signature=signature,
                final_ratio=entry.final_ratio,
            )
        )

    dedup = duplicate_filter(views, known_bugs)
    for program_id, representative in dedup.duplicate_of.items():
        verdicts[program_id] = Verdict(VerdictKind.DUPLICATE, duplicate_of=representative)
    kept_ids = {view.program_id for view in dedup.kept}
    for entry in result.survivors:
        if entry.program_id not in kept_ids:
            continue
        decision = trend[entry.program_id]
        if decision.annotation:
            old = verdicts[entry.program_id]
            verdicts[entry.program_id] = replace(
                old, annotations=tuple(list(old.annotations) + [decision.annotation])
            )

    survivors = tuple(entry for entry in result.survivors if entry.program_id in kept_ids)
    filtered = CampaignResult(
        pair_label=result.pair_label,
        schedule=result.schedule,
        verdicts=verdicts,
        survivors=survivors,
        cost=result.cost,
        history=result.history,
    )
    return filtered, dedup
