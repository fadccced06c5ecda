"""Per-topic hourly unique-user time series.

The store keeps, for every topic, the set of users who posted it in each UTC
hour, bucketed by country. All detection-facing queries are expressed over a
trailing aggregation window of T hours: `unique_users(topic, t, T)` is the
size of the union of the buckets for hours (t-T, t]. Sets make ingestion
idempotent and order-independent by construction.

Snapshots are a length-prefixed binary format starting with the 4-byte magic
``TPS1`` and a version byte; topics, hours, countries, and users are written
sorted, so equal stores produce identical snapshot bytes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable

from .events import hour_bucket

SNAPSHOT_MAGIC = b"TPS1"
SNAPSHOT_VERSION = 1

DEFAULT_RETENTION_HOURS = 14 * 24


class SnapshotError(ValueError):
    """Snapshot bytes are not readable by this store version."""


@dataclass(slots=True)
class TopicSeries:
    """All retained activity for one topic."""

    topic: str
    # hour -> country code (possibly "") -> user ids
    country_buckets: dict[int, dict[str, set[str]]] = field(default_factory=dict)
    # hour -> user ids; derived from country_buckets, kept in sync for speed
    buckets: dict[int, set[str]] = field(default_factory=dict)
    first_seen: int | None = None
    last_seen: int | None = None

    @property
    def countries(self) -> dict[str, set[str]]:
        """Country -> users over the whole retention horizon."""
        out: dict[str, set[str]] = {}
        for per_country in self.country_buckets.values():
            for country, users in per_country.items():
                if country:
                    out.setdefault(country, set()).update(users)
        return out


class TopicStore:
    """Mutable collection of TopicSeries with retention-based eviction."""

    def __init__(self, retention_hours: int = DEFAULT_RETENTION_HOURS) -> None:
        if retention_hours < 1:
            raise ValueError("retention_hours must be >= 1")
        self.retention_hours = retention_hours
        self._series: dict[str, TopicSeries] = {}

    def __len__(self) -> int:
        return len(self._series)

    def topics(self) -> list[str]:
        return sorted(self._series)

    def get(self, topic: str) -> TopicSeries | None:
        return self._series.get(topic)

    def record(self, topic: str, user_id: str, country: str, ts: int) -> None:
        """Add one observation. Re-recording the same observation is a no-op;
        observations older than the retention horizon are dropped."""
        hour = hour_bucket(ts)
        series = self._series.get(topic)
        if series is None:
            series = TopicSeries(topic=topic)
            self._series[topic] = series
        if series.last_seen is not None and hour < series.last_seen - self.retention_hours:
            return
        per_country = series.country_buckets.get(hour)
        if per_country is None:
            per_country = {}
            series.country_buckets[hour] = per_country
            series.buckets[hour] = set()
        per_country.setdefault(country, set()).add(user_id)
        series.buckets[hour].add(user_id)
        if series.first_seen is None or hour < series.first_seen:
            series.first_seen = hour
        if series.last_seen is None or hour > series.last_seen:
            series.last_seen = hour
            self._evict(series)

    def _evict(self, series: TopicSeries) -> None:
        assert series.last_seen is not None
        horizon = series.last_seen - self.retention_hours
        stale = [h for h in series.buckets if h < horizon]
        for h in stale:
            del series.buckets[h]
            del series.country_buckets[h]
        if series.buckets:
            series.first_seen = min(series.buckets)

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def window_users(self, topic: str, t: int, agg_hours: int) -> set[str]:
        """Union of user sets over hours (t - agg_hours, t]."""
        series = self._series.get(topic)
        if series is None:
            return set()
        users: set[str] = set()
        for hour in range(t - agg_hours + 1, t + 1):
            bucket = series.buckets.get(hour)
            if bucket:
                users.update(bucket)
        return users

    def unique_users(self, topic: str, t: int, agg_hours: int) -> int:
        """Distinct users who posted `topic` in the trailing window ending at t.
        Unknown topics count zero."""
        return len(self.window_users(topic, t, agg_hours))

    def series_view(self, topic: str, t_end: int, span: int, agg_hours: int) -> list[int]:
        """Aggregated hourly counts for hours (t_end - span, t_end].

        Element i is unique_users(topic, t_end - span + 1 + i, agg_hours);
        hours with no data read as zero. Computed with a sliding multiset so
        the cost is linear in the data touched, not span * agg_hours.
        """
        series = self._series.get(topic)
        start = t_end - span + 1
        if series is None:
            return [0] * span
        counts: dict[str, int] = {}
        out: list[int] = []
        # warm up the full window for the hour just before `start`, so the
        # first expiry step (hour start - agg_hours) removes users it has seen
        for hour in range(start - agg_hours, start):
            for user in series.buckets.get(hour, ()):
                counts[user] = counts.get(user, 0) + 1
        for hour in range(start, t_end + 1):
            for user in series.buckets.get(hour, ()):
                counts[user] = counts.get(user, 0) + 1
            expired = series.buckets.get(hour - agg_hours)
            if expired:
                for user in expired:
                    remaining = counts[user] - 1
                    if remaining:
                        counts[user] = remaining
                    else:
                        del counts[user]
            out.append(len(counts))
        return out

    def country_user_counts(
        self, topics: Iterable[str], t: int, agg_hours: int
    ) -> dict[str, int]:
        """Distinct posting users per country across `topics` over the trailing
        window ending at t. Events without a country code are skipped."""
        per_country: dict[str, set[str]] = {}
        for topic in topics:
            series = self._series.get(topic)
            if series is None:
                continue
            for hour in range(t - agg_hours + 1, t + 1):
                for country, users in series.country_buckets.get(hour, {}).items():
                    if country:
                        per_country.setdefault(country, set()).update(users)
        return {country: len(users) for country, users in per_country.items()}

    # ------------------------------------------------------------------
    # snapshots
    # ------------------------------------------------------------------

    def save_snapshot(self, fp: BinaryIO) -> None:
        write = fp.write
        write(SNAPSHOT_MAGIC)
        write(struct.pack("<B", SNAPSHOT_VERSION))
        write(struct.pack("<qI", self.retention_hours, len(self._series)))
        for topic in sorted(self._series):
            series = self._series[topic]
            tb = topic.encode("utf-8")
            write(struct.pack("<H", len(tb)))
            write(tb)
            write(struct.pack("<I", len(series.country_buckets)))
            for hour in sorted(series.country_buckets):
                per_country = series.country_buckets[hour]
                write(struct.pack("<qH", hour, len(per_country)))
                for country in sorted(per_country):
                    cb = country.encode("utf-8")
                    users = sorted(per_country[country])
                    write(struct.pack("<B", len(cb)))
                    write(cb)
                    write(struct.pack("<I", len(users)))
                    for user in users:
                        ub = user.encode("utf-8")
                        write(struct.pack("<H", len(ub)))
                        write(ub)

    def save_snapshot_file(self, path: str) -> None:
        with open(path, "wb") as fp:
            self.save_snapshot(fp)

    @classmethod
    def load_snapshot(cls, fp: BinaryIO) -> "TopicStore":
        def read_exact(n: int) -> bytes:
            data = fp.read(n)
            if len(data) != n:
                raise SnapshotError("snapshot truncated")
            return data

        magic = fp.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotError(
                f"bad magic {magic!r}; not a topic-series snapshot"
            )
        (version,) = struct.unpack("<B", read_exact(1))
        if version != SNAPSHOT_VERSION:
            raise SnapshotError(
                f"snapshot version {version} is incompatible with this build "
                f"(expected {SNAPSHOT_VERSION})"
            )
        retention, n_topics = struct.unpack("<qI", read_exact(12))
        store = cls(retention_hours=retention)
        for _ in range(n_topics):
            (tlen,) = struct.unpack("<H", read_exact(2))
            topic = read_exact(tlen).decode("utf-8")
            series = TopicSeries(topic=topic)
            store._series[topic] = series
            (n_hours,) = struct.unpack("<I", read_exact(4))
            for _ in range(n_hours):
                hour, n_countries = struct.unpack("<qH", read_exact(10))
                per_country: dict[str, set[str]] = {}
                bucket: set[str] = set()
                for _ in range(n_countries):
                    (clen,) = struct.unpack("<B", read_exact(1))
                    country = read_exact(clen).decode("utf-8")
                    (n_users,) = struct.unpack("<I", read_exact(4))
                    users: set[str] = set()
                    for _ in range(n_users):
                        (ulen,) = struct.unpack("<H", read_exact(2))
                        users.add(read_exact(ulen).decode("utf-8"))
                    per_country[country] = users
                    bucket.update(users)
                series.country_buckets[hour] = per_country
                series.buckets[hour] = bucket
            if series.buckets:
                series.first_seen = min(series.buckets)
                series.last_seen = max(series.buckets)
        return store

    @classmethod
    def load_snapshot_file(cls, path: str) -> "TopicStore":
        with open(path, "rb") as fp:
            return cls.load_snapshot(fp)
