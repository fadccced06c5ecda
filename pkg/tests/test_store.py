import io
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_window_users
from trendscope.store import SnapshotError, TopicStore


def hour_ts(hour: int, offset: int = 1) -> int:
    return hour * 3600 + offset


def fill(store: TopicStore, rows) -> None:
    for topic, user, country, hour in rows:
        store.record(topic, user, country, hour_ts(hour))


# ----------------------------------------------------------------------
# recording and window queries
# ----------------------------------------------------------------------


def test_unique_users_window_semantics():
    store = TopicStore()
    fill(store, [("wc", "u1", "US", 5), ("wc", "u2", "BR", 6), ("wc", "u2", "BR", 7)])
    # window (t-3, t]: hour 5 contributes to ticks 5, 6, 7 only
    assert store.unique_users("wc", 4, 3) == 0
    assert store.unique_users("wc", 5, 3) == 1
    assert store.unique_users("wc", 7, 3) == 2
    assert store.unique_users("wc", 8, 3) == 1
    assert store.unique_users("wc", 10, 3) == 0
    assert store.unique_users("nope", 7, 3) == 0


def test_record_is_idempotent():
    store = TopicStore()
    for _ in range(3):
        store.record("wc", "u1", "US", hour_ts(5))
    assert store.unique_users("wc", 5, 1) == 1
    assert store.get("wc").buckets[5] == {"u1"}


def test_same_user_in_two_hours_counts_once_per_window():
    store = TopicStore()
    fill(store, [("wc", "u1", "US", 5), ("wc", "u1", "US", 6)])
    assert store.unique_users("wc", 6, 3) == 1


def test_countries_property_skips_missing_code():
    store = TopicStore()
    fill(store, [("wc", "u1", "US", 5), ("wc", "u2", "", 5), ("wc", "u3", "US", 6)])
    assert store.get("wc").countries == {"US": {"u1", "u3"}}


def test_topics_sorted_and_len():
    store = TopicStore()
    fill(store, [("b", "u", "", 1), ("a", "u", "", 1)])
    assert store.topics() == ["a", "b"]
    assert len(store) == 2


def test_country_user_counts_unions_across_topics():
    store = TopicStore()
    fill(
        store,
        [
            ("wc", "u1", "US", 10),
            ("wc26", "u1", "US", 10),  # same user, two topics: one count
            ("wc26", "u2", "BR", 9),
            ("wc", "u3", "", 10),  # no country code: skipped
            ("wc", "u4", "US", 7),  # outside the window at t=10, T=3
        ],
    )
    assert store.country_user_counts(["wc", "wc26"], 10, 3) == {"US": 1, "BR": 1}


# ----------------------------------------------------------------------
# retention
# ----------------------------------------------------------------------


def test_retention_evicts_old_hours_when_time_advances():
    store = TopicStore(retention_hours=100)
    store.record("wc", "u1", "US", hour_ts(0))
    store.record("wc", "u2", "US", hour_ts(101))
    series = store.get("wc")
    assert 0 not in series.buckets
    assert series.first_seen == 101
    assert series.last_seen == 101


def test_retention_drops_arrivals_older_than_horizon():
    store = TopicStore(retention_hours=100)
    store.record("wc", "u1", "US", hour_ts(200))
    store.record("wc", "u2", "US", hour_ts(99))  # 200 - 100 = 100 > 99
    assert store.get("wc").buckets.keys() == {200}
    # exactly at the horizon is retained
    store.record("wc", "u3", "US", hour_ts(100))
    assert store.get("wc").buckets.keys() == {200, 100}
    assert store.get("wc").first_seen == 100


def test_ingestion_order_does_not_matter():
    rows = [
        ("wc", f"u{i % 7}", "US", 200 - (i * 13) % 150) for i in range(60)
    ] + [("wc", "late", "BR", 40)]
    rng = random.Random(7)
    reference = None
    for _ in range(20):
        rng.shuffle(rows)
        store = TopicStore(retention_hours=100)
        fill(store, rows)
        answers = [store.unique_users("wc", t, 3) for t in range(0, 210, 3)]
        snapshot = io.BytesIO()
        store.save_snapshot(snapshot)
        if reference is None:
            reference = (answers, snapshot.getvalue())
        else:
            assert (answers, snapshot.getvalue()) == reference


def test_retention_validation():
    with pytest.raises(ValueError):
        TopicStore(retention_hours=0)


# ----------------------------------------------------------------------
# series_view
# ----------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(
    rows=st.lists(
        st.tuples(st.integers(min_value=0, max_value=40), st.integers(min_value=0, max_value=9)),
        max_size=120,
    ),
    t_end=st.integers(min_value=0, max_value=48),
    span=st.integers(min_value=1, max_value=50),
    agg=st.integers(min_value=1, max_value=5),
)
def test_series_view_matches_brute_force(rows, t_end, span, agg):
    store = TopicStore(retention_hours=1000)
    buckets: dict[int, set[str]] = {}
    for hour, user_n in rows:
        user = f"u{user_n}"
        store.record("wc", user, "US", hour_ts(hour))
        buckets.setdefault(hour, set()).add(user)

    view = store.series_view("wc", t_end, span, agg)
    assert len(view) == span
    expected = [
        len(brute_window_users(buckets, t, agg))
        for t in range(t_end - span + 1, t_end + 1)
    ]
    assert view == expected


def test_series_view_unknown_topic_is_zeros():
    assert TopicStore().series_view("nope", 10, 4, 3) == [0, 0, 0, 0]


# ----------------------------------------------------------------------
# snapshots
# ----------------------------------------------------------------------


def sample_store() -> TopicStore:
    store = TopicStore(retention_hours=500)
    fill(
        store,
        [
            ("wc", "u1", "US", 5),
            ("wc", "u2", "", 6),
            ("wc", "u3", "BR", 6),
            ("messi", "u1", "FR", 7),
            ("café", "ué", "FR", 8),
        ],
    )
    return store


def test_snapshot_round_trip_preserves_queries():
    store = sample_store()
    buf = io.BytesIO()
    store.save_snapshot(buf)
    buf.seek(0)
    loaded = TopicStore.load_snapshot(buf)

    assert loaded.retention_hours == store.retention_hours
    assert loaded.topics() == store.topics()
    for topic in store.topics():
        for t in range(0, 12):
            assert loaded.series_view(topic, t, 6, 3) == store.series_view(topic, t, 6, 3)
            assert loaded.window_users(topic, t, 3) == store.window_users(topic, t, 3)
    assert loaded.country_user_counts(["wc", "messi"], 7, 3) == store.country_user_counts(
        ["wc", "messi"], 7, 3
    )
    assert loaded.get("wc").first_seen == store.get("wc").first_seen
    assert loaded.get("wc").last_seen == store.get("wc").last_seen


def test_snapshot_bytes_are_deterministic():
    a, b = io.BytesIO(), io.BytesIO()
    sample_store().save_snapshot(a)
    sample_store().save_snapshot(b)
    assert a.getvalue() == b.getvalue()

    # loading and re-saving also reproduces the bytes
    b.seek(0)
    c = io.BytesIO()
    TopicStore.load_snapshot(b).save_snapshot(c)
    assert c.getvalue() == a.getvalue()


def test_snapshot_file_round_trip(tmp_path):
    path = tmp_path / "store.bin"
    store = sample_store()
    store.save_snapshot_file(str(path))
    loaded = TopicStore.load_snapshot_file(str(path))
    assert loaded.topics() == store.topics()


def test_snapshot_rejects_bad_magic():
    with pytest.raises(SnapshotError, match="magic"):
        TopicStore.load_snapshot(io.BytesIO(b"NOPE" + b"\x00" * 20))


def test_snapshot_rejects_unknown_version():
    buf = io.BytesIO()
    sample_store().save_snapshot(buf)
    data = bytearray(buf.getvalue())
    data[4] = 99
    with pytest.raises(SnapshotError, match="version"):
        TopicStore.load_snapshot(io.BytesIO(bytes(data)))


def test_snapshot_rejects_truncation():
    buf = io.BytesIO()
    sample_store().save_snapshot(buf)
    data = buf.getvalue()
    for cut in (5, 13, len(data) // 2, len(data) - 1):
        with pytest.raises(SnapshotError, match="truncated"):
            TopicStore.load_snapshot(io.BytesIO(data[:cut]))
