"""Seeded synthetic post streams with injected bursts.

Background topics emit a Poisson number of posts per hour around a base rate;
burst topics multiply that rate by a flat-top triangle: linear ramp up to the
peak multiplier, hold, then linear ramp back down, all inside the labeled
duration. Every (topic, hour) draw uses fresh user ids, so hourly unique users
equal the hourly event count and the ground truth is exactly recoverable.

Equal seeds produce byte-identical streams; the seed also salts the id
namespace so different seeds never share user ids.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

# (code, weight); a slice of events deliberately carries no country code
COUNTRY_POOL = (
    ("US", 0.32),
    ("BR", 0.16),
    ("IN", 0.14),
    ("FR", 0.12),
    ("GB", 0.11),
    ("DE", 0.10),
    ("", 0.05),
)


@dataclass(slots=True)
class BurstSpec:
    topic_index: int
    onset_hour: int
    duration_hours: int
    peak_multiplier: float


@dataclass(slots=True)
class SyntheticSpec:
    n_topics: int
    horizon_hours: int
    base_rate: float
    bursts: list[BurstSpec] = field(default_factory=list)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_topics < 1:
            raise ValueError("n_topics must be >= 1")
        if self.horizon_hours < 1:
            raise ValueError("horizon_hours must be >= 1")
        if self.base_rate <= 0:
            raise ValueError("base_rate must be positive")
        for burst in self.bursts:
            if not 0 <= burst.topic_index < self.n_topics:
                raise ValueError(f"burst topic index {burst.topic_index} out of range")
            if burst.duration_hours < 1:
                raise ValueError("burst duration must be >= 1 hour")
            if burst.onset_hour < 0:
                raise ValueError("burst onset must be >= 0")
            if burst.onset_hour + burst.duration_hours > self.horizon_hours:
                raise ValueError("burst must end within the horizon")
            if burst.peak_multiplier <= 1:
                raise ValueError("peak multiplier must exceed 1")


def topic_name(index: int) -> str:
    return f"t{index:04d}"


def burst_multiplier(burst: BurstSpec, hour: int) -> float:
    """Rate multiplier of a burst at an absolute hour; 1.0 outside the burst."""
    k = hour - burst.onset_hour
    d = burst.duration_hours
    if k < 0 or k >= d:
        return 1.0
    half = (d + 1) // 2
    level = min(k + 1, d - k) / half
    return 1.0 + (burst.peak_multiplier - 1.0) * level


def load_spec(path: str) -> SyntheticSpec:
    with open(path, encoding="utf-8") as fp:
        obj = json.load(fp)
    bursts = [
        BurstSpec(
            topic_index=int(b["topic_index"]),
            onset_hour=int(b["onset_hour"]),
            duration_hours=int(b["duration_hours"]),
            peak_multiplier=float(b["peak_multiplier"]),
        )
        for b in obj.get("bursts", [])
    ]
    return SyntheticSpec(
        n_topics=int(obj["n_topics"]),
        horizon_hours=int(obj["horizon_hours"]),
        base_rate=float(obj["base_rate"]),
        bursts=bursts,
        seed=int(obj.get("seed", 0)),
    )


def default_spec(seed: int = 0) -> SyntheticSpec:
    """Small smoke-test stream: 20 topics, 4 days, 3 mid-stream bursts."""
    return SyntheticSpec(
        n_topics=20,
        horizon_hours=96,
        base_rate=20.0,
        bursts=[
            BurstSpec(topic_index=3, onset_hour=40, duration_hours=6, peak_multiplier=8.0),
            BurstSpec(topic_index=7, onset_hour=55, duration_hours=8, peak_multiplier=10.0),
            BurstSpec(topic_index=12, onset_hour=70, duration_hours=6, peak_multiplier=8.0),
        ],
        seed=seed,
    )


def generate_synthetic_stream(
    spec: SyntheticSpec, events_fp: TextIO, labels_fp: TextIO | None = None
) -> tuple[int, int]:
    """Write the event stream (and burst labels) as JSONL; returns the counts."""
    rng = np.random.default_rng(spec.seed)
    # Seed-specific id namespace: same seed -> same ids, new seed -> new ids.
    session = f"{rng.integers(0, 2**32):08x}"
    names = [topic_name(i) for i in range(spec.n_topics)]
    bursts_by_topic: dict[int, list[BurstSpec]] = {}
    for burst in spec.bursts:
        bursts_by_topic.setdefault(burst.topic_index, []).append(burst)

    codes = [code for code, _ in COUNTRY_POOL]
    weights = np.array([w for _, w in COUNTRY_POOL])
    weights = weights / weights.sum()

    n_events = 0
    base = np.full(spec.n_topics, spec.base_rate, dtype=float)
    for hour in range(spec.horizon_hours):
        rates = base.copy()
        for ti, topic_bursts in bursts_by_topic.items():
            for burst in topic_bursts:
                rates[ti] *= burst_multiplier(burst, hour)
        counts = rng.poisson(rates)
        for ti in np.nonzero(counts)[0]:
            count = int(counts[ti])
            offsets = rng.integers(1, 3600, size=count)
            country_idx = rng.choice(len(codes), size=count, p=weights)
            name = names[ti]
            for j in range(count):
                event = {
                    "post_id": f"p{session}-{hour}-{ti}-{j}",
                    "user_id": f"u{session}-{hour}-{ti}-{j}",
                    "ts": hour * 3600 + int(offsets[j]),
                    "country": codes[country_idx[j]],
                    "hashtags": [name],
                }
                events_fp.write(json.dumps(event, ensure_ascii=False) + "\n")
                n_events += 1

    n_labels = 0
    if labels_fp is not None:
        for burst in spec.bursts:
            label = {
                "topic": names[burst.topic_index],
                "onset_hour": burst.onset_hour,
                "duration_hours": burst.duration_hours,
            }
            labels_fp.write(json.dumps(label) + "\n")
            n_labels += 1
    return n_events, n_labels
