import pytest

from conftest import StubBackend
from trendscope.burst import DetectionConfig, LiftProfile, TrendCandidate
from trendscope.llm import CompletionClient, null_client
from trendscope.postprocess import (
    ConsolidatedTrend,
    FilterReason,
    FilterSource,
    FilterVerdict,
    LlmConsolidator,
    LlmGenericFilter,
    LlmSensitiveFilter,
    PrecisionRule,
    RulesConsolidator,
    RulesGenericFilter,
    RulesSensitiveFilter,
    apply_precision_control,
    consolidate,
    filter_generic,
    filter_sensitive,
    parse_precision_rules,
    postprocess,
)

KEEP_DROP_PROMPT = "verdicts please\n\n{topics}"
GROUP_PROMPT = "groups please\n\n{topics}"


def cand(topic, hour=50, uu=10, score=2.5, category=None) -> TrendCandidate:
    return TrendCandidate(
        topic=topic,
        detect_hour=hour,
        uu_now=uu,
        lift_profile=LiftProfile(),
        trend_score=score,
        category=category,
    )


def lookup_from(table):
    return lambda topic, hour: set(table.get(topic, set()))


def test_verdict_consistency_is_enforced():
    FilterVerdict("t", True, FilterReason.OK, FilterSource.RULES)
    with pytest.raises(ValueError):
        FilterVerdict("t", True, FilterReason.SENSITIVE, FilterSource.RULES)
    with pytest.raises(ValueError):
        FilterVerdict("t", False, FilterReason.OK, FilterSource.LLM)


# ----------------------------------------------------------------------
# sensitive filter
# ----------------------------------------------------------------------


def test_rules_sensitive_blocks_phrase_tokens():
    policy = RulesSensitiveFilter(["weapon", "self harm"])
    kept, removed = filter_sensitive(
        [cand("weapon sale"), cand("weaponry showcase"), cand("self harm talk"), cand("soccer")],
        policy,
    )
    assert [c.topic for c in kept] == ["weaponry showcase", "soccer"]
    assert [(v.topic, v.reason, v.source) for v in removed] == [
        ("self harm talk", FilterReason.SENSITIVE, FilterSource.RULES),
        ("weapon sale", FilterReason.SENSITIVE, FilterSource.RULES),
    ]


def test_rules_sensitive_normalizes_blocklist_entries():
    policy = RulesSensitiveFilter(["#Weapon ", "###"])
    assert policy.blocklist == ["weapon"]
    kept, _ = filter_sensitive([cand("weapon sale")], policy)
    assert kept == []


def test_llm_sensitive_honors_verdict_lines():
    backend = StubBackend({"sensitive": "keep: soccer\ndrop: weapon sale"})
    policy = LlmSensitiveFilter(CompletionClient(backend), KEEP_DROP_PROMPT)
    kept, removed = filter_sensitive([cand("soccer"), cand("weapon sale")], policy)
    assert [c.topic for c in kept] == ["soccer"]
    assert removed[0].source is FilterSource.LLM
    assert backend.requests[0].prompt.endswith("soccer\nweapon sale")


def test_llm_sensitive_fails_closed_on_transport_error():
    policy = LlmSensitiveFilter(null_client(), KEEP_DROP_PROMPT)
    kept, removed = filter_sensitive([cand("soccer"), cand("food")], policy)
    assert kept == []
    assert len(removed) == 2


def test_llm_sensitive_fails_closed_on_garbage_output():
    backend = StubBackend({"sensitive": "I cannot help with that."})
    policy = LlmSensitiveFilter(CompletionClient(backend), KEEP_DROP_PROMPT)
    kept, _ = filter_sensitive([cand("soccer")], policy)
    assert kept == []


def test_llm_sensitive_drops_topics_missing_from_answer():
    backend = StubBackend({"sensitive": "keep: soccer"})
    policy = LlmSensitiveFilter(CompletionClient(backend), KEEP_DROP_PROMPT)
    kept, removed = filter_sensitive([cand("soccer"), cand("mystery")], policy)
    assert [c.topic for c in kept] == ["soccer"]
    assert [v.topic for v in removed] == ["mystery"]


# ----------------------------------------------------------------------
# generic filter
# ----------------------------------------------------------------------


def test_rules_generic_exact_and_head_noun_matches():
    classifier = RulesGenericFilter(["funny videos", "daily life"])
    kept, removed = filter_generic(
        [cand("funny videos"), cand("videos"), cand("funny videos of cats"), cand("life")],
        classifier,
    )
    assert [c.topic for c in kept] == ["funny videos of cats"]
    assert {v.topic for v in removed} == {"funny videos", "videos", "life"}
    assert all(v.reason is FilterReason.GENERIC for v in removed)


def test_llm_generic_fails_open_on_transport_error():
    classifier = LlmGenericFilter(null_client(), KEEP_DROP_PROMPT)
    kept, removed = filter_generic([cand("soccer"), cand("random stuff")], classifier)
    assert [c.topic for c in kept] == ["soccer", "random stuff"]
    assert removed == []


def test_llm_generic_fails_open_on_garbage_output():
    backend = StubBackend({"generic": "???"})
    classifier = LlmGenericFilter(CompletionClient(backend), KEEP_DROP_PROMPT)
    kept, _ = filter_generic([cand("soccer")], classifier)
    assert [c.topic for c in kept] == ["soccer"]


def test_llm_generic_keeps_topics_missing_from_answer():
    backend = StubBackend({"generic": "drop: random stuff"})
    classifier = LlmGenericFilter(CompletionClient(backend), KEEP_DROP_PROMPT)
    kept, removed = filter_generic([cand("soccer"), cand("random stuff")], classifier)
    assert [c.topic for c in kept] == ["soccer"]
    assert [v.topic for v in removed] == ["random stuff"]


def test_keep_drop_parsing_is_forgiving():
    backend = StubBackend(
        {"generic": "Sure, here you go:\nKEEP: soccer\n Drop:  random   stuff \nnote: ignored"}
    )
    classifier = LlmGenericFilter(CompletionClient(backend), KEEP_DROP_PROMPT)
    kept, removed = filter_generic([cand("soccer"), cand("random stuff")], classifier)
    assert [c.topic for c in kept] == ["soccer"]
    assert [v.topic for v in removed] == ["random stuff"]


# ----------------------------------------------------------------------
# precision control
# ----------------------------------------------------------------------


def test_parse_precision_rules_accepts_both_shapes():
    rules = parse_precision_rules(
        {"sports": 1.5, "news": {"score_threshold": 1.2, "min_uu": 10}, "music": {"min_uu": 5}}
    )
    assert rules["sports"] == PrecisionRule(score_threshold=1.5, min_uu=None)
    assert rules["news"] == PrecisionRule(score_threshold=1.2, min_uu=10)
    assert rules["music"] == PrecisionRule(score_threshold=None, min_uu=5)


@pytest.mark.parametrize("bad", [True, "1.5", None, [1.5]])
def test_parse_precision_rules_rejects_bad_values(bad):
    with pytest.raises(ValueError):
        parse_precision_rules({"sports": bad})


def test_precision_control_global_floors():
    config = DetectionConfig(min_uu=30, score_threshold=1.8)
    kept = apply_precision_control(
        [cand("a", score=1.8, uu=30), cand("b", score=1.79, uu=99), cand("c", score=9.0, uu=29)],
        config,
    )
    assert [c.topic for c in kept] == ["a"]


def test_precision_control_per_category_overrides():
    config = DetectionConfig(min_uu=30, score_threshold=1.8)
    rules = parse_precision_rules({"sports": {"score_threshold": 1.2, "min_uu": 5}})
    kept = apply_precision_control(
        [
            cand("low score sports", score=1.3, uu=10, category="sports"),
            cand("low score news", score=1.3, uu=10, category="news"),
            cand("uncategorized", score=1.3, uu=10),
        ],
        config,
        rules,
    )
    assert [c.topic for c in kept] == ["low score sports"]


# ----------------------------------------------------------------------
# consolidation
# ----------------------------------------------------------------------


def test_token_subset_merges_and_picks_highest_uu_representative():
    users = {
        "world cup 2026": {f"u{i}" for i in range(120)},
        "world cup": {f"u{i}" for i in range(60, 150)},
        "world cup 2026 qualifiers": {f"u{i}" for i in range(40)},
    }
    consolidator = RulesConsolidator(lookup_from(users))
    trends = consolidate(
        [
            cand("world cup", uu=90),
            cand("world cup 2026", uu=120),
            cand("world cup 2026 qualifiers", uu=40),
        ],
        consolidator,
    )
    assert len(trends) == 1
    trend = trends[0]
    assert trend.representative == "world cup 2026"
    assert trend.members == ["world cup", "world cup 2026", "world cup 2026 qualifiers"]
    assert trend.uu_now == 150  # union, not the 250 sum
    assert trend.detect_hour == 50


def test_jaccard_merges_non_nested_phrasings():
    consolidator = RulesConsolidator(lookup_from({}), jaccard_threshold=0.6)
    # {messi, goal, video} vs {messi, goal, clip}: 2 shared / 4 union = 0.5
    apart = consolidate([cand("messi goal video"), cand("messi goal clip")], consolidator)
    assert len(apart) == 2
    # {messi, goal, video} vs {messi, goal}: subset merges regardless
    together = consolidate([cand("messi goal video"), cand("messi goal")], consolidator)
    assert len(together) == 1


def test_consolidation_uses_transitive_closure():
    consolidator = RulesConsolidator(lookup_from({}))
    trends = consolidate(
        [cand("world cup"), cand("world cup 2026"), cand("world 2026")],
        consolidator,
    )
    # "world cup" and "world 2026" relate only through "world cup 2026"
    assert len(trends) == 1
    assert trends[0].members == ["world 2026", "world cup", "world cup 2026"]


def test_representative_tie_breaks():
    # equal uu: fewest tokens wins
    consolidator = RulesConsolidator(lookup_from({}))
    [trend] = consolidate([cand("world cup 2026", uu=10), cand("world cup", uu=10)], consolidator)
    assert trend.representative == "world cup"
    # equal uu and token count: lexicographic (3 shared tokens / 5 = 0.6 merges)
    [trend] = consolidate(
        [cand("fifa world cup b", uu=10), cand("fifa world cup a", uu=10)], consolidator
    )
    assert trend.representative == "fifa world cup a"


def test_unrelated_topics_stay_separate_and_sort_by_score():
    consolidator = RulesConsolidator(lookup_from({}))
    trends = consolidate(
        [cand("street food", score=2.0), cand("city marathon", score=3.0)], consolidator
    )
    assert [(t.representative, t.trend_score) for t in trends] == [
        ("city marathon", 3.0),
        ("street food", 2.0),
    ]


def test_candidates_from_different_ticks_never_merge():
    consolidator = RulesConsolidator(lookup_from({"world cup": {"u1"}}))
    trends = consolidate([cand("world cup", hour=10), cand("world cup", hour=11)], consolidator)
    assert [(t.representative, t.detect_hour) for t in trends] == [
        ("world cup", 10),
        ("world cup", 11),
    ]


def test_cluster_score_is_member_max():
    consolidator = RulesConsolidator(lookup_from({}))
    [trend] = consolidate(
        [cand("world cup", score=2.0, uu=50), cand("world cup 2026", score=4.5, uu=10)],
        consolidator,
    )
    assert trend.trend_score == 4.5
    assert trend.representative == "world cup"


def test_jaccard_threshold_validation():
    with pytest.raises(ValueError):
        RulesConsolidator(lookup_from({}), jaccard_threshold=0.0)
    with pytest.raises(ValueError):
        RulesConsolidator(lookup_from({}), jaccard_threshold=1.5)


def test_llm_consolidator_uses_model_grouping():
    # rules would keep these apart (jaccard 1/3); the model merges them
    backend = StubBackend({"consolidate": "group: alpha news | beta news"})
    rules = RulesConsolidator(lookup_from({"alpha news": {"u1"}, "beta news": {"u2"}}))
    consolidator = LlmConsolidator(CompletionClient(backend), GROUP_PROMPT, rules)
    trends = consolidate([cand("alpha news", uu=1), cand("beta news", uu=1)], consolidator)
    assert len(trends) == 1
    assert trends[0].members == ["alpha news", "beta news"]
    assert trends[0].uu_now == 2


def test_llm_consolidator_falls_back_when_output_is_not_a_partition():
    for text in (
        "group: alpha news",  # missing a topic
        "group: alpha news | beta news\ngroup: beta news",  # duplicate
        "group: alpha news | gamma news",  # unknown topic
        "no groups at all",
    ):
        backend = StubBackend({"consolidate": text})
        rules = RulesConsolidator(lookup_from({}))
        consolidator = LlmConsolidator(CompletionClient(backend), GROUP_PROMPT, rules)
        trends = consolidate([cand("alpha news"), cand("beta news")], consolidator)
        assert len(trends) == 2, text


def test_llm_consolidator_falls_back_on_transport_error():
    rules = RulesConsolidator(lookup_from({}))
    consolidator = LlmConsolidator(null_client(), GROUP_PROMPT, rules)
    trends = consolidate([cand("world cup"), cand("world cup 2026")], consolidator)
    assert len(trends) == 1  # rules still merge the nested phrasings


def test_llm_consolidator_empty_input():
    rules = RulesConsolidator(lookup_from({}))
    consolidator = LlmConsolidator(null_client(), GROUP_PROMPT, rules)
    assert consolidator.consolidate([]) == []


# ----------------------------------------------------------------------
# the full pass
# ----------------------------------------------------------------------


def test_postprocess_stage_order_and_outputs():
    config = DetectionConfig(min_uu=5, score_threshold=1.8)
    candidates = [
        cand("weapon sale", score=9.0, uu=50),  # sensitive
        cand("funny videos", score=8.0, uu=40),  # generic
        cand("world cup", score=3.0, uu=30),
        cand("world cup 2026", score=2.5, uu=35),
        cand("weak signal", score=1.2, uu=50),  # below threshold
        cand("tiny crowd", score=5.0, uu=4),  # below uu floor
    ]
    users = {"world cup": {"a", "b"}, "world cup 2026": {"b", "c"}}
    result = postprocess(
        candidates,
        RulesSensitiveFilter(["weapon"]),
        RulesGenericFilter(["funny videos"]),
        config,
        RulesConsolidator(lookup_from(users)),
    )
    assert [(v.topic, v.reason) for v in result.removed] == [
        ("weapon sale", FilterReason.SENSITIVE),
        ("funny videos", FilterReason.GENERIC),
    ]
    assert [c.topic for c in result.retained_candidates] == ["world cup", "world cup 2026"]
    assert result.trends == [
        ConsolidatedTrend(
            representative="world cup 2026",
            members=["world cup", "world cup 2026"],
            trend_score=3.0,
            uu_now=3,
            detect_hour=50,
        )
    ]


def test_postprocess_sensitive_wins_over_generic():
    # a topic both filters would drop is reported as SENSITIVE: that filter
    # runs first and the generic filter never sees the topic
    config = DetectionConfig(min_uu=1, score_threshold=0.1)
    result = postprocess(
        [cand("weapon videos")],
        RulesSensitiveFilter(["weapon"]),
        RulesGenericFilter(["weapon videos"]),
        config,
        RulesConsolidator(lookup_from({})),
    )
    assert [(v.topic, v.reason) for v in result.removed] == [
        ("weapon videos", FilterReason.SENSITIVE)
    ]
