import io

import pytest

from trendscope.events import read_events
from trendscope.synth import (
    COUNTRY_POOL,
    BurstSpec,
    SyntheticSpec,
    burst_multiplier,
    default_spec,
    generate_synthetic_stream,
    load_spec,
    topic_name,
)

SMALL = SyntheticSpec(
    n_topics=5,
    horizon_hours=24,
    base_rate=4.0,
    bursts=[BurstSpec(topic_index=2, onset_hour=10, duration_hours=6, peak_multiplier=8.0)],
    seed=123,
)


def generate(spec):
    events_fp, labels_fp = io.StringIO(), io.StringIO()
    n_events, n_labels = generate_synthetic_stream(spec, events_fp, labels_fp)
    return events_fp.getvalue(), labels_fp.getvalue(), n_events, n_labels


def test_equal_seeds_give_identical_streams():
    assert generate(SMALL) == generate(SMALL)


def test_different_seeds_share_no_ids():
    import dataclasses
    import json

    first, _, _, _ = generate(SMALL)
    second, _, _, _ = generate(dataclasses.replace(SMALL, seed=124))
    users_a = {json.loads(line)["user_id"] for line in first.splitlines()}
    users_b = {json.loads(line)["user_id"] for line in second.splitlines()}
    assert users_a and users_b
    assert not users_a & users_b


def test_stream_contents_are_well_formed():
    text, labels_text, n_events, n_labels = generate(SMALL)
    events = list(read_events(io.StringIO(text)))
    assert len(events) == n_events
    assert n_labels == 1
    assert "t0002" in labels_text

    names = {topic_name(i) for i in range(SMALL.n_topics)}
    codes = {code for code, _ in COUNTRY_POOL}
    user_ids = set()
    for event in events:
        assert event.hashtags[0] in names
        assert event.country in codes
        hour = event.ts // 3600
        assert 0 <= hour < SMALL.horizon_hours
        assert event.ts % 3600 != 0  # offsets start at 1 second into the hour
        user_ids.add(event.user_id)
    # fresh user per event: hourly uniques equal hourly counts by construction
    assert len(user_ids) == len(events)


def test_burst_hours_emit_more_events():
    text, _, _, _ = generate(SMALL)
    by_topic_hour: dict[tuple[str, int], int] = {}
    for event in read_events(io.StringIO(text)):
        key = (event.hashtags[0], event.ts // 3600)
        by_topic_hour[key] = by_topic_hour.get(key, 0) + 1
    peak = by_topic_hour.get(("t0002", 12), 0) + by_topic_hour.get(("t0002", 13), 0)
    before = by_topic_hour.get(("t0002", 8), 0) + by_topic_hour.get(("t0002", 9), 0)
    assert peak > 3 * max(before, 1)


def test_burst_multiplier_shape():
    burst = BurstSpec(topic_index=0, onset_hour=10, duration_hours=6, peak_multiplier=8.0)
    assert burst_multiplier(burst, 9) == 1.0
    assert burst_multiplier(burst, 16) == 1.0
    levels = [burst_multiplier(burst, 10 + k) for k in range(6)]
    # ramp to the peak, hold for the middle two hours, ramp back down
    assert levels == pytest.approx(
        [1 + 7 / 3, 1 + 14 / 3, 8.0, 8.0, 1 + 14 / 3, 1 + 7 / 3]
    )

    odd = BurstSpec(topic_index=0, onset_hour=0, duration_hours=5, peak_multiplier=5.0)
    assert [burst_multiplier(odd, h) for h in range(5)] == pytest.approx(
        [1 + 4 / 3, 1 + 8 / 3, 5.0, 1 + 8 / 3, 1 + 4 / 3]
    )


def test_single_hour_burst_hits_peak():
    burst = BurstSpec(topic_index=0, onset_hour=3, duration_hours=1, peak_multiplier=6.0)
    assert burst_multiplier(burst, 3) == 6.0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_topics": 0},
        {"horizon_hours": 0},
        {"base_rate": 0.0},
        {"bursts": [BurstSpec(9, 0, 2, 8.0)]},  # topic out of range
        {"bursts": [BurstSpec(0, 20, 6, 8.0)]},  # runs past the horizon
        {"bursts": [BurstSpec(0, -1, 2, 8.0)]},
        {"bursts": [BurstSpec(0, 0, 0, 8.0)]},
        {"bursts": [BurstSpec(0, 0, 2, 1.0)]},
    ],
)
def test_spec_validation(kwargs):
    base = dict(n_topics=5, horizon_hours=24, base_rate=4.0)
    base.update(kwargs)
    with pytest.raises(ValueError):
        SyntheticSpec(**base)


def test_load_spec_and_defaults(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(
        '{"n_topics": 3, "horizon_hours": 12, "base_rate": 2.5,'
        ' "seed": 9, "bursts": [{"topic_index": 1, "onset_hour": 4,'
        ' "duration_hours": 3, "peak_multiplier": 6.0}]}'
    )
    spec = load_spec(str(path))
    assert spec == SyntheticSpec(
        n_topics=3,
        horizon_hours=12,
        base_rate=2.5,
        bursts=[BurstSpec(1, 4, 3, 6.0)],
        seed=9,
    )

    smoke = default_spec(seed=5)
    assert smoke.seed == 5
    assert len(smoke.bursts) == 3
    assert topic_name(7) == "t0007"
