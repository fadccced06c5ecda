"""Candidate post-processing: policy filters, precision control, consolidation.

The stage order is fixed and deliberate: sensitive filtering runs first and
fails closed (a broken policy model must never leak a sensitive trend),
generic filtering runs second and fails open (a broken model should not
blank the product surface), precision control applies the score/UU floors,
and consolidation merges near-duplicate phrasings last so thresholds act on
raw per-topic evidence.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from .burst import DetectionConfig, TrendCandidate
from .llm import CompletionClient, CompletionRequest, LlmError
from .topics import TopicRejected, normalize_topic

logger = logging.getLogger(__name__)

_LLM_BATCH = 100


class FilterReason(str, Enum):
    OK = "OK"
    SENSITIVE = "SENSITIVE"
    GENERIC = "GENERIC"


class FilterSource(str, Enum):
    RULES = "RULES"
    LLM = "LLM"


@dataclass(slots=True)
class FilterVerdict:
    topic: str
    keep: bool
    reason: FilterReason
    source: FilterSource

    def __post_init__(self) -> None:
        if self.keep != (self.reason is FilterReason.OK):
            raise ValueError("keep must be true exactly when reason is OK")


@dataclass(slots=True)
class ConsolidatedTrend:
    """A cluster of near-duplicate topics collapsed into one trend."""

    representative: str
    members: list[str]
    trend_score: float
    uu_now: int
    detect_hour: int


# Looks up the distinct users behind a topic at a detection tick; consolidation
# needs real user sets so merged counts do not double-count shared posters.
UserLookup = Callable[[str, int], set[str]]


def _normalize_entries(entries: Iterable[str]) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()
    for entry in entries:
        try:
            norm = normalize_topic(entry)
        except TopicRejected:
            continue
        if norm not in seen:
            seen.add(norm)
            out.append(norm)
    return out


def _phrase_in_topic(phrase: str, topic: str) -> bool:
    return f" {phrase} " in f" {topic} "


# ----------------------------------------------------------------------
# sensitive filter (fail closed)
# ----------------------------------------------------------------------


class RulesSensitiveFilter:
    """Drops topics containing any blocklisted token or phrase."""

    def __init__(self, blocklist: Iterable[str] | None = None) -> None:
        self.blocklist = _normalize_entries(blocklist or [])

    def classify(self, topics: Sequence[str]) -> dict[str, FilterVerdict]:
        verdicts: dict[str, FilterVerdict] = {}
        for topic in topics:
            blocked = any(_phrase_in_topic(entry, topic) for entry in self.blocklist)
            verdicts[topic] = FilterVerdict(
                topic=topic,
                keep=not blocked,
                reason=FilterReason.SENSITIVE if blocked else FilterReason.OK,
                source=FilterSource.RULES,
            )
        return verdicts


class LlmSensitiveFilter:
    """Asks the policy model keep/drop per topic; any failure drops the batch."""

    def __init__(self, client: CompletionClient, prompt_template: str) -> None:
        self.client = client
        self.prompt_template = prompt_template

    def classify(self, topics: Sequence[str]) -> dict[str, FilterVerdict]:
        verdicts: dict[str, FilterVerdict] = {}
        for i in range(0, len(topics), _LLM_BATCH):
            batch = topics[i : i + _LLM_BATCH]
            decisions = _ask_keep_drop(
                self.client, self.prompt_template, "sensitive", batch
            )
            for topic in batch:
                # fail closed: unknown or missing verdicts count as drops
                keep = decisions.get(topic, False) if decisions is not None else False
                verdicts[topic] = FilterVerdict(
                    topic=topic,
                    keep=keep,
                    reason=FilterReason.OK if keep else FilterReason.SENSITIVE,
                    source=FilterSource.LLM,
                )
        return verdicts


# ----------------------------------------------------------------------
# generic filter (fail open)
# ----------------------------------------------------------------------


class RulesGenericFilter:
    """Drops catch-all phrases: exact matches against the generic-term list,
    plus bare single-token topics that equal a listed phrase's head noun."""

    def __init__(self, generic_terms: Iterable[str] | None = None) -> None:
        self.terms = set(_normalize_entries(generic_terms or []))
        self.head_nouns = {term.split()[-1] for term in self.terms}

    def classify(self, topics: Sequence[str]) -> dict[str, FilterVerdict]:
        verdicts: dict[str, FilterVerdict] = {}
        for topic in topics:
            tokens = topic.split()
            generic = topic in self.terms or (
                len(tokens) == 1 and tokens[0] in self.head_nouns
            )
            verdicts[topic] = FilterVerdict(
                topic=topic,
                keep=not generic,
                reason=FilterReason.GENERIC if generic else FilterReason.OK,
                source=FilterSource.RULES,
            )
        return verdicts


class LlmGenericFilter:
    """Asks the model keep/drop per topic; any failure keeps the batch."""

    def __init__(self, client: CompletionClient, prompt_template: str) -> None:
        self.client = client
        self.prompt_template = prompt_template

    def classify(self, topics: Sequence[str]) -> dict[str, FilterVerdict]:
        verdicts: dict[str, FilterVerdict] = {}
        for i in range(0, len(topics), _LLM_BATCH):
            batch = topics[i : i + _LLM_BATCH]
            decisions = _ask_keep_drop(
                self.client, self.prompt_template, "generic", batch
            )
            for topic in batch:
                # fail open: unknown or missing verdicts count as keeps
                keep = decisions.get(topic, True) if decisions is not None else True
                verdicts[topic] = FilterVerdict(
                    topic=topic,
                    keep=keep,
                    reason=FilterReason.OK if keep else FilterReason.GENERIC,
                    source=FilterSource.LLM,
                )
        return verdicts


def _ask_keep_drop(
    client: CompletionClient,
    prompt_template: str,
    tag: str,
    topics: Sequence[str],
) -> dict[str, bool] | None:
    """Run one keep/drop batch. Returns topic -> keep, or None on failure
    (transport error or a response with no parseable verdict lines)."""
    prompt = prompt_template.format(topics="\n".join(topics))
    try:
        response = client.complete(CompletionRequest(prompt=prompt, tag=tag))
    except LlmError as exc:
        logger.warning("%s filter call failed (%s); batch of %d affected",
                       tag, exc, len(topics))
        return None
    decisions: dict[str, bool] = {}
    for line in response.text.splitlines():
        line = line.strip()
        verb, sep, rest = line.partition(":")
        if not sep:
            continue
        verb = verb.strip().lower()
        if verb not in ("keep", "drop"):
            continue
        try:
            topic = normalize_topic(rest)
        except TopicRejected:
            continue
        decisions[topic] = verb == "keep"
    if not decisions:
        logger.warning("%s filter returned no parseable verdicts for batch of %d",
                       tag, len(topics))
        return None
    return decisions


# ----------------------------------------------------------------------
# filter application
# ----------------------------------------------------------------------


def _apply_filter(
    candidates: Sequence[TrendCandidate],
    classify: Callable[[Sequence[str]], dict[str, FilterVerdict]],
) -> tuple[list[TrendCandidate], list[FilterVerdict]]:
    topics = sorted({c.topic for c in candidates})
    verdicts = classify(topics)
    kept = [c for c in candidates if verdicts[c.topic].keep]
    removed = [v for t, v in sorted(verdicts.items()) if not v.keep]
    return kept, removed


def filter_sensitive(
    candidates: Sequence[TrendCandidate],
    policy: RulesSensitiveFilter | LlmSensitiveFilter,
) -> tuple[list[TrendCandidate], list[FilterVerdict]]:
    """Remove sensitive topics; returns (kept candidates, removal verdicts)."""
    return _apply_filter(candidates, policy.classify)


def filter_generic(
    candidates: Sequence[TrendCandidate],
    classifier: RulesGenericFilter | LlmGenericFilter,
) -> tuple[list[TrendCandidate], list[FilterVerdict]]:
    """Remove catch-all topics; returns (kept candidates, removal verdicts)."""
    return _apply_filter(candidates, classifier.classify)


# ----------------------------------------------------------------------
# precision control
# ----------------------------------------------------------------------


@dataclass(slots=True)
class PrecisionRule:
    """Per-category override of the global score threshold and/or UU floor."""

    score_threshold: float | None = None
    min_uu: int | None = None


def parse_precision_rules(raw: Mapping[str, object]) -> dict[str, PrecisionRule]:
    """Accepts {"sports": 1.5} shorthand or {"sports": {"score_threshold": ...,
    "min_uu": ...}} objects."""
    rules: dict[str, PrecisionRule] = {}
    for category, value in raw.items():
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            rules[category] = PrecisionRule(score_threshold=float(value))
        elif isinstance(value, Mapping):
            rule = PrecisionRule()
            if "score_threshold" in value:
                rule.score_threshold = float(value["score_threshold"])  # type: ignore[arg-type]
            if "min_uu" in value:
                rule.min_uu = int(value["min_uu"])  # type: ignore[arg-type]
            rules[category] = rule
        else:
            raise ValueError(f"bad precision rule for category {category!r}")
    return rules


def apply_precision_control(
    candidates: Sequence[TrendCandidate],
    config: DetectionConfig,
    per_category: Mapping[str, PrecisionRule] | None = None,
) -> list[TrendCandidate]:
    """Retain candidates meeting the score threshold and UU floor; candidates
    carrying a category use that category's overrides when present."""
    per_category = per_category or {}
    kept: list[TrendCandidate] = []
    for candidate in candidates:
        rule = per_category.get(candidate.category) if candidate.category else None
        threshold = config.score_threshold
        min_uu = config.min_uu
        if rule is not None:
            if rule.score_threshold is not None:
                threshold = rule.score_threshold
            if rule.min_uu is not None:
                min_uu = rule.min_uu
        if candidate.trend_score >= threshold and candidate.uu_now >= min_uu:
            kept.append(candidate)
    return kept


# ----------------------------------------------------------------------
# consolidation
# ----------------------------------------------------------------------


def _token_related(a: frozenset[str], b: frozenset[str], jaccard_threshold: float) -> bool:
    if a <= b or b <= a:
        return True
    union = len(a | b)
    return union > 0 and len(a & b) / union >= jaccard_threshold


def _pick_representative(members: Sequence[TrendCandidate]) -> TrendCandidate:
    # highest unique users wins; ties prefer the least-qualified (shortest)
    # name, then lexicographic order
    return min(members, key=lambda c: (-c.uu_now, len(c.topic.split()), c.topic))


class RulesConsolidator:
    """Merges topics whose token sets nest or overlap strongly.

    Two topics join the same cluster when one token set contains the other or
    their Jaccard similarity meets the threshold; clusters are the transitive
    closure of that relation.
    """

    def __init__(self, user_lookup: UserLookup, jaccard_threshold: float = 0.6) -> None:
        if not 0 < jaccard_threshold <= 1:
            raise ValueError("jaccard threshold must be in (0, 1]")
        self.user_lookup = user_lookup
        self.jaccard_threshold = jaccard_threshold

    def group(self, candidates: Sequence[TrendCandidate]) -> list[list[TrendCandidate]]:
        tokens = [frozenset(c.topic.split()) for c in candidates]
        parent = list(range(len(candidates)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(len(candidates)):
            for j in range(i + 1, len(candidates)):
                if _token_related(tokens[i], tokens[j], self.jaccard_threshold):
                    ri, rj = find(i), find(j)
                    if ri != rj:
                        parent[rj] = ri
        clusters: dict[int, list[TrendCandidate]] = {}
        for i, candidate in enumerate(candidates):
            clusters.setdefault(find(i), []).append(candidate)
        return list(clusters.values())

    def consolidate(self, candidates: Sequence[TrendCandidate]) -> list[ConsolidatedTrend]:
        return _build_trends(self.group(candidates), self.user_lookup)


class LlmConsolidator:
    """Asks the model to group near-duplicates; falls back to rules on any
    failure or on a grouping that is not a partition of the input."""

    def __init__(
        self,
        client: CompletionClient,
        prompt_template: str,
        fallback: RulesConsolidator,
    ) -> None:
        self.client = client
        self.prompt_template = prompt_template
        self.fallback = fallback

    def consolidate(self, candidates: Sequence[TrendCandidate]) -> list[ConsolidatedTrend]:
        if not candidates:
            return []
        prompt = self.prompt_template.format(
            topics="\n".join(c.topic for c in candidates)
        )
        try:
            response = self.client.complete(
                CompletionRequest(prompt=prompt, tag="consolidate")
            )
        except LlmError as exc:
            logger.warning("consolidation call failed (%s); using rules", exc)
            return self.fallback.consolidate(candidates)
        groups = _parse_groups(response.text, [c.topic for c in candidates])
        if groups is None:
            logger.warning("consolidation output is not a partition; using rules")
            return self.fallback.consolidate(candidates)
        by_topic = {c.topic: c for c in candidates}
        clusters = [[by_topic[t] for t in group] for group in groups]
        return _build_trends(clusters, self.fallback.user_lookup)


def _parse_groups(text: str, topics: Sequence[str]) -> list[list[str]] | None:
    """Parse `group: a | b | c` lines into a partition of `topics`, or None."""
    expected = set(topics)
    groups: list[list[str]] = []
    seen: set[str] = set()
    for line in text.splitlines():
        line = line.strip()
        if not line.lower().startswith("group:"):
            continue
        members: list[str] = []
        for part in line[len("group:"):].split("|"):
            try:
                topic = normalize_topic(part)
            except TopicRejected:
                continue
            members.append(topic)
        if not members:
            continue
        groups.append(members)
        seen.update(members)
    if not groups:
        return None
    flat = [t for group in groups for t in group]
    if len(flat) != len(expected) or set(flat) != expected or len(seen) != len(flat):
        return None
    return groups


def _build_trends(
    clusters: Sequence[Sequence[TrendCandidate]], user_lookup: UserLookup
) -> list[ConsolidatedTrend]:
    trends: list[ConsolidatedTrend] = []
    for cluster in clusters:
        rep = _pick_representative(cluster)
        users: set[str] = set()
        for member in cluster:
            users.update(user_lookup(member.topic, member.detect_hour))
        trends.append(
            ConsolidatedTrend(
                representative=rep.topic,
                members=sorted(c.topic for c in cluster),
                trend_score=max(c.trend_score for c in cluster),
                uu_now=len(users),
                detect_hour=rep.detect_hour,
            )
        )
    trends.sort(key=lambda t: (t.detect_hour, -t.trend_score, t.representative))
    return trends


def consolidate(
    candidates: Sequence[TrendCandidate],
    consolidator: RulesConsolidator | LlmConsolidator,
) -> list[ConsolidatedTrend]:
    """Cluster candidates into consolidated trends, one tick at a time.

    Candidates from different detection ticks never merge; mixing hours in one
    call simply consolidates each tick independently.
    """
    by_hour: dict[int, list[TrendCandidate]] = {}
    for candidate in candidates:
        by_hour.setdefault(candidate.detect_hour, []).append(candidate)
    trends: list[ConsolidatedTrend] = []
    for hour in sorted(by_hour):
        trends.extend(consolidator.consolidate(by_hour[hour]))
    trends.sort(key=lambda t: (t.detect_hour, -t.trend_score, t.representative))
    return trends


@dataclass(slots=True)
class PostprocessResult:
    trends: list[ConsolidatedTrend]
    removed: list[FilterVerdict] = field(default_factory=list)
    retained_candidates: list[TrendCandidate] = field(default_factory=list)


def postprocess(
    candidates: Sequence[TrendCandidate],
    sensitive_filter: RulesSensitiveFilter | LlmSensitiveFilter,
    generic_filter: RulesGenericFilter | LlmGenericFilter,
    config: DetectionConfig,
    consolidator: RulesConsolidator | LlmConsolidator,
    per_category: Mapping[str, PrecisionRule] | None = None,
) -> PostprocessResult:
    """Full post-processing pass in the fixed stage order."""
    kept, removed_sensitive = filter_sensitive(candidates, sensitive_filter)
    kept, removed_generic = filter_generic(kept, generic_filter)
    kept = apply_precision_control(kept, config, per_category)
    trends = consolidate(kept, consolidator)
    return PostprocessResult(
        trends=trends,
        removed=removed_sensitive + removed_generic,
        retained_candidates=kept,
    )
