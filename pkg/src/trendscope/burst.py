"""Multi-scale burst scoring over aggregated unique-user series.

For each topic we compare the current unique-user count against a family of
trailing baselines, one per window length N:

    moving_max(N, t)     = max of the series over the N hours ending at t
    moving_max_avg(N, t) = mean of moving_max(N, i) for the N hours ending at t
    lift(N, t)           = value(t) / moving_max_avg(N, t-1)

The per-window lifts are combined with a weighted harmonic mean using weights
w_N = exp(-lambda * N), so short windows dominate but a burst must look
elevated at every scale to score high. The harmonic mean is dragged toward the
smallest lift, which is what makes the combined score conservative: one flat
scale vetoes the others.

Series are plain sequences of non-negative counts indexed by hour offset;
positions outside the sequence read as zero (a topic has no activity before
its first observation).
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .store import TopicStore

DEFAULT_WINDOWS = (6, 12, 24, 72)


@dataclass(slots=True)
class DetectionConfig:
    """All knobs of the detection stage."""

    agg_hours: int = 3
    windows: tuple[int, ...] = DEFAULT_WINDOWS
    decay_lambda: float = 0.05
    min_uu: int = 30
    score_threshold: float = 1.8
    baseline_floor: float = 1.0
    lift_cap: float = 1000.0

    def __post_init__(self) -> None:
        self.windows = tuple(self.windows)
        if self.agg_hours < 1:
            raise ValueError("agg_hours must be >= 1")
        if not self.windows:
            raise ValueError("window set must be non-empty")
        if any(n < 2 for n in self.windows):
            raise ValueError("windows must be >= 2 hours")
        if list(self.windows) != sorted(set(self.windows)):
            raise ValueError("windows must be strictly increasing")
        if self.decay_lambda <= 0:
            raise ValueError("decay_lambda must be positive")
        if self.min_uu < 1:
            raise ValueError("min_uu must be >= 1")
        if self.score_threshold <= 0:
            raise ValueError("score_threshold must be positive")
        if self.baseline_floor <= 0:
            raise ValueError("baseline_floor must be positive")
        if self.lift_cap <= 1:
            raise ValueError("lift_cap must be > 1")

    @property
    def span(self) -> int:
        """History needed to score at one hour: lift(N, t) reads back to
        t - 2N + 1, so twice the widest window suffices."""
        return 2 * max(self.windows)


@dataclass(slots=True)
class LiftProfile:
    """Per-window (lift, weight) pairs for one topic at one hour."""

    per_window: dict[int, tuple[float, float]] = field(default_factory=dict)

    def lifts(self) -> dict[int, float]:
        return {n: pair[0] for n, pair in self.per_window.items()}

    def weights(self) -> dict[int, float]:
        return {n: pair[1] for n, pair in self.per_window.items()}


@dataclass(slots=True)
class TrendCandidate:
    """One topic flagged at one detection tick, before post-processing."""

    topic: str
    detect_hour: int
    uu_now: int
    lift_profile: LiftProfile
    trend_score: float
    # Optional upstream label; lets precision control apply per-category
    # thresholds when a caller pre-categorizes candidates.
    category: str | None = None


def _value(series: Sequence[int], i: int) -> int:
    return series[i] if 0 <= i < len(series) else 0


def moving_max(series: Sequence[int], window: int, t: int) -> int:
    """Largest series value over the `window` hours ending at t."""
    return max(_value(series, i) for i in range(t - window + 1, t + 1))


def _window_maxima(series: Sequence[int], window: int, start: int, end: int) -> list[int]:
    """moving_max(window, i) for each i in [start, end], via a monotonic deque
    so the cost is linear in (end - start + window) instead of quadratic."""
    maxima: list[int] = []
    dq: deque[tuple[int, int]] = deque()  # (index, value), values non-increasing
    for i in range(start - window + 1, end + 1):
        v = _value(series, i)
        while dq and dq[-1][1] <= v:
            dq.pop()
        dq.append((i, v))
        if dq[0][0] <= i - window:
            dq.popleft()
        if i >= start:
            maxima.append(dq[0][1])
    return maxima


def moving_max_avg(series: Sequence[int], window: int, t: int) -> float:
    """Mean of the moving maxima over the `window` hours ending at t."""
    maxima = _window_maxima(series, window, t - window + 1, t)
    return sum(maxima) / window


def lift(series: Sequence[int], window: int, t: int, config: DetectionConfig) -> float:
    """Current value over the floored trailing baseline, clamped to the cap.

    The baseline ends at t-1 so the hour being scored never inflates its own
    denominator."""
    baseline = max(moving_max_avg(series, window, t - 1), config.baseline_floor)
    ratio = _value(series, t) / baseline
    return min(ratio, config.lift_cap)


def window_weights(windows: Sequence[int], decay_lambda: float) -> dict[int, float]:
    """Exponential-decay weights w_N = exp(-lambda * N)."""
    return {n: math.exp(-decay_lambda * n) for n in windows}


def weighted_harmonic_mean(
    lifts: Mapping[int, float], weights: Mapping[int, float]
) -> float:
    """Combine per-window lifts; a single zero lift zeroes the whole score."""
    keys = sorted(lifts)
    if any(lifts[n] == 0 for n in keys):
        return 0.0
    numerator = sum(weights[n] for n in keys)
    denominator = sum(weights[n] / lifts[n] for n in keys)
    return numerator / denominator


def lift_profile(series: Sequence[int], config: DetectionConfig, t: int) -> LiftProfile:
    """Per-window lifts and weights for the series position t."""
    weights = window_weights(config.windows, config.decay_lambda)
    profile = LiftProfile()
    for n in config.windows:
        profile.per_window[n] = (lift(series, n, t, config), weights[n])
    return profile


def trend_score(series: Sequence[int], config: DetectionConfig, t: int) -> float:
    """Weighted harmonic mean of the per-window lifts at position t."""
    profile = lift_profile(series, config, t)
    return weighted_harmonic_mean(profile.lifts(), profile.weights())


def prefilter(store: TopicStore, t: int, config: DetectionConfig) -> list[str]:
    """Topics whose aggregated unique-user count at t clears the floor."""
    return [
        topic
        for topic in store.topics()
        if store.unique_users(topic, t, config.agg_hours) >= config.min_uu
    ]


def detect(store: TopicStore, config: DetectionConfig, t: int) -> list[TrendCandidate]:
    """Score every pre-filtered topic at hour t.

    Returns all candidates (thresholding is a post-processing concern), sorted
    by score descending, unique users descending, then topic name.
    """
    span = config.span
    candidates: list[TrendCandidate] = []
    for topic in prefilter(store, t, config):
        uu_now = store.unique_users(topic, t, config.agg_hours)
        values = store.series_view(topic, t, span, config.agg_hours)
        profile = lift_profile(values, config, len(values) - 1)
        score = weighted_harmonic_mean(profile.lifts(), profile.weights())
        candidates.append(
            TrendCandidate(
                topic=topic,
                detect_hour=t,
                uu_now=uu_now,
                lift_profile=profile,
                trend_score=score,
            )
        )
    candidates.sort(key=lambda c: (-c.trend_score, -c.uu_now, c.topic))
    return candidates
