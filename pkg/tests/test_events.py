import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from trendscope.events import (
    EventParseError,
    EventValidationError,
    PostEvent,
    event_to_json,
    hour_bucket,
    parse_event,
    read_events,
)


def line(**fields) -> str:
    base = {"post_id": "p1", "user_id": "u1", "ts": 7200, "caption": "hi"}
    base.update(fields)
    return json.dumps({k: v for k, v in base.items() if v is not ...})


def test_parse_minimal_event():
    event = parse_event(line())
    assert event.post_id == "p1"
    assert event.user_id == "u1"
    assert event.ts == 7200
    assert event.caption == "hi"
    assert event.topics is None
    assert event.country == ""


def test_parse_all_fields():
    event = parse_event(
        line(
            country="US",
            hashtags=["#worldcup"],
            visual_tags=["soccer"],
            transcript="goal",
            ocr_text="WC",
            topics=["world cup"],
        )
    )
    assert event.country == "US"
    assert event.hashtags == ["#worldcup"]
    assert event.visual_tags == ["soccer"]
    assert event.transcript == "goal"
    assert event.ocr_text == "WC"
    assert event.topics == ["world cup"]


@pytest.mark.parametrize("missing", ["post_id", "user_id", "ts"])
def test_missing_required_field(missing):
    with pytest.raises(EventValidationError, match=missing):
        parse_event(line(**{missing: ...}))


@pytest.mark.parametrize("field", ["post_id", "user_id"])
def test_empty_id_rejected(field):
    with pytest.raises(EventValidationError):
        parse_event(line(**{field: ""}))


@pytest.mark.parametrize("bad_ts", [True, False, "7200", 7200.0, 0, -1])
def test_bad_ts_rejected(bad_ts):
    with pytest.raises(EventValidationError):
        parse_event(line(ts=bad_ts))


def test_malformed_json_reports_line_number():
    with pytest.raises(EventParseError, match="line 17") as excinfo:
        parse_event("{not json", line_no=17)
    assert excinfo.value.line_no == 17


def test_non_object_rejected():
    with pytest.raises(EventValidationError):
        parse_event("[1, 2]")


@pytest.mark.parametrize("bad", ["world cup", [1, 2], {"a": 1}])
def test_bad_topics_rejected(bad):
    with pytest.raises(EventValidationError, match="topics"):
        parse_event(line(topics=bad))


def test_no_topics_and_no_signal_rejected():
    with pytest.raises(EventValidationError, match="signal"):
        parse_event(json.dumps({"post_id": "p", "user_id": "u", "ts": 5}))


def test_empty_topics_list_counts_as_present():
    # an explicitly empty list means "extraction ran, found nothing"
    event = parse_event(json.dumps({"post_id": "p", "user_id": "u", "ts": 5, "topics": []}))
    assert event.topics == []


def test_null_optional_string_reads_as_empty():
    event = parse_event(line(country=None, transcript=None))
    assert event.country == ""
    assert event.transcript == ""


@pytest.mark.parametrize("field", ["caption", "country", "transcript", "ocr_text"])
def test_non_string_optional_field_rejected(field):
    with pytest.raises(EventValidationError, match=field):
        parse_event(line(**{field: 3, "topics": ["t"]}))


@pytest.mark.parametrize("field", ["hashtags", "visual_tags"])
def test_non_list_signal_field_rejected(field):
    with pytest.raises(EventValidationError, match=field):
        parse_event(line(**{field: "nope", "topics": ["t"]}))


def test_round_trip_omits_absent_topics():
    event = parse_event(line())
    payload = event_to_json(event)
    assert '"topics"' not in payload
    assert parse_event(payload) == event


def test_round_trip_keeps_topics():
    event = parse_event(line(topics=["a", "b"]))
    assert parse_event(event_to_json(event)) == event


text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=40
)
events = st.builds(
    PostEvent,
    post_id=st.text(min_size=1, max_size=20),
    user_id=st.text(min_size=1, max_size=20),
    ts=st.integers(min_value=1, max_value=2**40),
    country=text,
    caption=text,
    hashtags=st.lists(text, max_size=4),
    visual_tags=st.lists(text, max_size=4),
    transcript=text,
    ocr_text=text,
    topics=st.one_of(st.none(), st.lists(text, max_size=4)),
).filter(lambda e: e.topics is not None or e.has_signal())


@given(events)
def test_serialization_round_trips(event):
    assert parse_event(event_to_json(event)) == event


def test_read_events_skips_blank_lines_and_numbers_errors():
    good = line()
    stream = io.StringIO(f"{good}\n\n   \n{good}\n")
    assert len(list(read_events(stream))) == 2

    stream = io.StringIO(f"{good}\n\nnot json\n")
    with pytest.raises(EventParseError, match="line 3"):
        list(read_events(stream))


def test_hour_bucket():
    assert hour_bucket(1730000000) == 480555
    assert hour_bucket(3599) == 0
    assert hour_bucket(3600) == 1
    assert hour_bucket(7199) == 1
