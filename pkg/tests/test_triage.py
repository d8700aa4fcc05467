import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from telemon.model import TriageCategory
from telemon.triage import (
    DepthExceeded,
    MalformedPredicate,
    MissingFallback,
    UnknownRuleItem,
    classify,
    explain,
    load_ruleset,
)

from conftest import FLOOR_ANSWERS, make_report, random_answers
from reference import ref_classify, ref_explain

NUMERIC_KEYS = ["temperature_c", "dyspnea", "pain", "distress"]
BOOL_KEYS = ["quarantine_problem", "household_change"]


class TestLoader:
    def test_default_ruleset_roundtrip(self, ruleset):
        assert ruleset.version == "default-v1"
        assert len(ruleset.rules) == 9

    def test_unknown_item_rejected(self, questionnaire, ruleset_json):
        bad = json.loads(json.dumps(ruleset_json))
        bad["rules"].append(
            {"category": "Red", "name": "x", "when": {"cmp": ["oxygen", "<", 90]}}
        )
        with pytest.raises(UnknownRuleItem) as exc:
            load_ruleset(json.dumps(bad), questionnaire)
        assert exc.value.key == "oxygen"

    def test_missing_fallback_rejected(self, questionnaire, ruleset_json):
        bad = json.loads(json.dumps(ruleset_json))
        bad["rules"] = [r for r in bad["rules"] if r["when"] != {"always": True}]
        with pytest.raises(MissingFallback):
            load_ruleset(json.dumps(bad), questionnaire)

    def test_missing_category_rejected(self, questionnaire, ruleset_json):
        bad = json.loads(json.dumps(ruleset_json))
        bad["rules"] = [r for r in bad["rules"] if r["category"] != "Green"]
        with pytest.raises(MissingFallback):
            load_ruleset(json.dumps(bad), questionnaire)

    def test_depth_limit(self, questionnaire, ruleset_json):
        deep = {"cmp": ["dyspnea", ">=", 5]}
        for _ in range(17):
            deep = {"not": deep}
        bad = json.loads(json.dumps(ruleset_json))
        bad["rules"].append({"category": "Red", "name": "deep", "when": deep})
        with pytest.raises(DepthExceeded):
            load_ruleset(json.dumps(bad), questionnaire)

    def test_malformed_predicate(self, questionnaire, ruleset_json):
        bad = json.loads(json.dumps(ruleset_json))
        bad["rules"].append({"category": "Red", "name": "x", "when": {"cmp": ["dyspnea"]}})
        with pytest.raises(MalformedPredicate):
            load_ruleset(json.dumps(bad), questionnaire)


class TestClassifyDefaultRuleset:
    """Expected categories are cross-computed with the naive reference
    interpreter so frozen values and oracle agree."""

    def check(self, ruleset, ruleset_json, current, previous, expected):
        cur = make_report(current)
        prev = make_report(previous, minute=-720) if previous is not None else None
        got = classify(ruleset, cur, prev)
        oracle = ref_classify(
            ruleset_json, cur.answers, prev.answers if prev else None
        )
        assert got.name == oracle == expected

    def test_floor_is_green(self, ruleset, ruleset_json):
        self.check(ruleset, ruleset_json, {}, {}, "Green")

    def test_stable_fever_is_yellow(self, ruleset, ruleset_json):
        self.check(
            ruleset,
            ruleset_json,
            {"temperature_c": 38.2, "dyspnea": 2},
            {"temperature_c": 38.3, "dyspnea": 2},
            "Yellow",
        )

    def test_fever_rise_is_orange(self, ruleset, ruleset_json):
        self.check(
            ruleset,
            ruleset_json,
            {"temperature_c": 38.6},
            {"temperature_c": 37.0},
            "Orange",
        )

    def test_severe_dyspnea_is_red(self, ruleset, ruleset_json):
        self.check(ruleset, ruleset_json, {"dyspnea": 8}, None, "Red")

    def test_high_fever_is_red(self, ruleset, ruleset_json):
        self.check(ruleset, ruleset_json, {"temperature_c": 40.2}, None, "Red")

    def test_new_quarantine_problem_is_orange(self, ruleset, ruleset_json):
        self.check(ruleset, ruleset_json, {"quarantine_problem": True}, {}, "Orange")

    def test_persistent_quarantine_problem_is_red(self, ruleset, ruleset_json):
        self.check(
            ruleset,
            ruleset_json,
            {"quarantine_problem": True},
            {"quarantine_problem": True},
            "Red",
        )

    def test_first_quarantine_problem_without_history_is_orange(
        self, ruleset, ruleset_json
    ):
        self.check(ruleset, ruleset_json, {"quarantine_problem": True}, None, "Orange")


class TestExplain:
    def test_red_case(self, ruleset, ruleset_json):
        cur = make_report({"dyspnea": 8})
        assert explain(ruleset, cur, None) == [("severe_dyspnea", True)]
        assert ref_explain(ruleset_json, cur.answers, None) == [("severe_dyspnea", True)]

    def test_green_case(self, ruleset, ruleset_json):
        cur = make_report({})
        prev = make_report({}, minute=-720)
        assert explain(ruleset, cur, prev) == [("asymptomatic", True)]
        assert ref_explain(ruleset_json, cur.answers, prev.answers) == [
            ("asymptomatic", True)
        ]

    def test_yellow_fallback(self, ruleset, ruleset_json):
        cur = make_report({"pain": 4})
        assert explain(ruleset, cur, None) == [("fallback_symptomatic", True)]
        assert ref_explain(ruleset_json, cur.answers, None) == [
            ("fallback_symptomatic", True)
        ]

    def test_winning_list_never_empty(self, ruleset):
        rng = random.Random(3)
        for _ in range(500):
            cur = make_report(random_answers(rng))
            prev = make_report(random_answers(rng), minute=-720)
            assert explain(ruleset, cur, prev)


class TestProperties:
    def test_determinism_and_totality(self, ruleset):
        rng = random.Random(11)
        for _ in range(2000):
            cur = make_report(random_answers(rng))
            prev = (
                make_report(random_answers(rng), minute=-720)
                if rng.random() < 0.8
                else None
            )
            first = classify(ruleset, cur, prev)
            assert first in TriageCategory
            assert classify(ruleset, cur, prev) == first

    def test_no_previous_safety(self, ruleset):
        rng = random.Random(13)
        for _ in range(500):
            classify(ruleset, make_report(random_answers(rng)), None)

    @settings(max_examples=300)
    @given(
        data=st.data(),
        key=st.sampled_from(NUMERIC_KEYS),
    )
    def test_default_ruleset_monotone_in_numeric_items(self, ruleset, data, key):
        rng = random.Random(data.draw(st.integers(0, 2**32)))
        answers = random_answers(rng)
        prev = make_report(random_answers(rng), minute=-720)
        lo, hi = (30.0, 45.0) if key == "temperature_c" else (0, 10)
        bumped = dict(answers)
        room = hi - answers[key]
        bump = data.draw(st.floats(0, float(room)))
        bumped[key] = answers[key] + (bump if key == "temperature_c" else int(bump))
        low = classify(ruleset, make_report(answers), prev)
        high = classify(ruleset, make_report(bumped), prev)
        assert high >= low


def random_predicate(rng: random.Random, depth: int = 0) -> dict:
    choices = ["cmp", "delta", "bool", "no_previous"]
    if depth < 3:
        choices += ["all", "any", "not"]
    tag = rng.choice(choices)
    if tag == "cmp":
        key = rng.choice(NUMERIC_KEYS + BOOL_KEYS)
        hi = 45.0 if key == "temperature_c" else (1 if key in BOOL_KEYS else 10)
        lo = 30.0 if key == "temperature_c" else 0
        return {"cmp": [key, rng.choice(["<", "<=", "==", ">=", ">"]),
                        round(rng.uniform(lo, hi), 1)]}
    if tag == "delta":
        key = rng.choice(NUMERIC_KEYS + BOOL_KEYS)
        return {"delta": [key, rng.choice(["<", "<=", "==", ">=", ">"]),
                          round(rng.uniform(-5, 5), 1)]}
    if tag == "bool":
        return {"bool": rng.choice(BOOL_KEYS)}
    if tag == "no_previous":
        return {"no_previous": True}
    if tag == "not":
        return {"not": random_predicate(rng, depth + 1)}
    return {tag: [random_predicate(rng, depth + 1) for _ in range(rng.randint(1, 3))]}


def random_ruleset_json(rng: random.Random) -> dict:
    rules = [
        {"category": "Green", "name": "green_0", "when": random_predicate(rng)},
        {"category": "Orange", "name": "orange_0", "when": random_predicate(rng)},
        {"category": "Red", "name": "red_0", "when": random_predicate(rng)},
        {"category": "Yellow", "name": "fallback", "when": {"always": True}},
    ]
    for i in range(rng.randint(2, 8)):
        rules.append(
            {
                "category": rng.choice(["Green", "Yellow", "Orange", "Red"]),
                "name": f"r{i}",
                "when": random_predicate(rng),
            }
        )
    rng.shuffle(rules)
    return {"version": "random", "rules": rules}


class TestOracleEquivalence:
    def test_production_matches_reference_on_random_rulesets(self, questionnaire):
        rng = random.Random(42)
        for _ in range(2000):
            ruleset_json = random_ruleset_json(rng)
            ruleset = load_ruleset(json.dumps(ruleset_json), questionnaire)
            cur = make_report(random_answers(rng))
            prev = (
                make_report(random_answers(rng), minute=-720)
                if rng.random() < 0.7
                else None
            )
            prev_answers = prev.answers if prev else None
            assert (
                classify(ruleset, cur, prev).name
                == ref_classify(ruleset_json, cur.answers, prev_answers)
            )
            assert explain(ruleset, cur, prev) == ref_explain(
                ruleset_json, cur.answers, prev_answers
            )
