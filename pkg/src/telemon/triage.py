"""Decision ruleset: load, classify, explain.

Predicates are expression trees over the report answers plus the previous
report's answers (for change-over-time atoms). Rulesets come from a JSON
config; thresholds live there, not in code. Classification is
highest-severity-wins, so rule order in the file carries no semantics.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

from .model import CATEGORY_NAMES, QuestionnaireDefinition, SymptomReport, TriageCategory

MAX_PREDICATE_DEPTH = 16

OPS: dict[str, Callable[[float, float], bool]] = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "==": lambda a, b: a == b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


class RulesetError(Exception):
    code = "ruleset_error"


class UnknownRuleItem(RulesetError):
    code = "unknown_rule_item"

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"rule references item not in questionnaire: {key!r}")


class MalformedPredicate(RulesetError):
    code = "malformed_predicate"


class MissingFallback(RulesetError):
    code = "missing_fallback"


class DepthExceeded(RulesetError):
    code = "depth_exceeded"


Answers = dict
# Compiled predicate: (current answers, previous answers or None) -> bool
Evaluator = Callable[[Answers, Optional[Answers]], bool]


def _num(value) -> float:
    # booleans participate in Compare/Delta atoms as 1/0
    return float(value)


def _compile(node: dict, keys: frozenset[str], depth: int = 1) -> Evaluator:
    if depth > MAX_PREDICATE_DEPTH:
        raise DepthExceeded(f"predicate deeper than {MAX_PREDICATE_DEPTH}")
    if not isinstance(node, dict) or len(node) != 1:
        raise MalformedPredicate(f"predicate node must be a single-key object: {node!r}")
    (tag, body), = node.items()

    if tag == "cmp":
        key, op, const = _check_atom(body, keys)
        opf = OPS[op]
        return lambda cur, prev: opf(_num(cur[key]), const)

    if tag == "delta":
        key, op, const = _check_atom(body, keys)
        opf = OPS[op]
        # false when there is no previous report
        return lambda cur, prev: prev is not None and opf(
            _num(cur[key]) - _num(prev[key]), const
        )

    if tag == "bool":
        if not isinstance(body, str):
            raise MalformedPredicate(f"bool atom needs an item key: {body!r}")
        if body not in keys:
            raise UnknownRuleItem(body)
        key = body
        return lambda cur, prev: bool(cur[key])

    if tag == "no_previous":
        return lambda cur, prev: prev is None

    if tag == "always":
        if body is not True:
            raise MalformedPredicate("always atom must be true")
        return lambda cur, prev: True

    if tag == "all":
        subs = _compile_list(body, keys, depth)
        return lambda cur, prev: all(s(cur, prev) for s in subs)

    if tag == "any":
        subs = _compile_list(body, keys, depth)
        return lambda cur, prev: any(s(cur, prev) for s in subs)

    if tag == "not":
        sub = _compile(body, keys, depth + 1)
        return lambda cur, prev: not sub(cur, prev)

    raise MalformedPredicate(f"unknown predicate tag: {tag!r}")


def _compile_list(body, keys, depth) -> list[Evaluator]:
    if not isinstance(body, list):
        raise MalformedPredicate(f"connective needs a list of predicates: {body!r}")
    return [_compile(child, keys, depth + 1) for child in body]


def _check_atom(body, keys: frozenset[str]) -> tuple[str, str, float]:
    if (
        not isinstance(body, list)
        or len(body) != 3
        or not isinstance(body[0], str)
        or body[1] not in OPS
        or isinstance(body[2], bool)
        or not isinstance(body[2], (int, float))
    ):
        raise MalformedPredicate(f"atom must be [key, op, number]: {body!r}")
    key, op, const = body
    if key not in keys:
        raise UnknownRuleItem(key)
    return key, op, float(const)


@dataclass(frozen=True)
class Rule:
    name: str
    category: TriageCategory
    predicate: dict  # raw JSON form, kept for audit/export
    evaluator: Evaluator

    @property
    def is_fallback(self) -> bool:
        # an unconditional rule is the ruleset's "else" branch; it only
        # wins when no conditional rule fires, otherwise Green could never
        # be reached past an always-true Yellow
        return self.predicate == {"always": True}


@dataclass(frozen=True)
class RuleSet:
    version: str
    rules: tuple[Rule, ...]

    def rules_for(self, category: TriageCategory) -> list[Rule]:
        return [r for r in self.rules if r.category == category]


def load_ruleset(config_text: str, definition: QuestionnaireDefinition) -> RuleSet:
    """Parse and validate a ruleset config against the questionnaire keys.

    Totality is enforced structurally: there must be an unconditional
    fallback rule for Yellow and at least one explicit Green rule.
    """
    data = json.loads(config_text)
    if not isinstance(data, dict) or "rules" not in data:
        raise MalformedPredicate("ruleset must be an object with a 'rules' list")
    version = data.get("version", "unversioned")
    keys = definition.keys
    rules: list[Rule] = []
    for raw in data["rules"]:
        if not isinstance(raw, dict) or "when" not in raw or "category" not in raw:
            raise MalformedPredicate(f"rule needs category/name/when: {raw!r}")
        category = TriageCategory.from_name(raw["category"])
        evaluator = _compile(raw["when"], keys)
        rules.append(
            Rule(
                name=raw.get("name", f"rule_{len(rules)}"),
                category=category,
                predicate=raw["when"],
                evaluator=evaluator,
            )
        )
    by_category = {c: [r for r in rules if r.category == c] for c in TriageCategory}
    missing = [c.name for c in TriageCategory if not by_category[c]]
    if missing:
        raise MissingFallback(f"no rule for categories: {missing}")
    has_fallback = any(
        r.predicate == {"always": True} for r in by_category[TriageCategory.Yellow]
    )
    if not has_fallback:
        raise MissingFallback("ruleset needs an unconditional Yellow fallback rule")
    return RuleSet(version=version, rules=tuple(rules))


def classify(
    ruleset: RuleSet,
    current: SymptomReport,
    previous: Optional[SymptomReport] = None,
) -> TriageCategory:
    """Highest-severity category among satisfied conditional rules; the
    unconditional fallback decides when none fire. Total and pure."""
    cur = current.answers
    prev = previous.answers if previous is not None else None
    best: Optional[TriageCategory] = None
    fallback: Optional[TriageCategory] = None
    for rule in ruleset.rules:
        if rule.is_fallback:
            fallback = max(fallback, rule.category) if fallback is not None else rule.category
            continue
        if (best is None or rule.category > best) and rule.evaluator(cur, prev):
            best = rule.category
    if best is not None:
        return best
    # a loaded ruleset always has a fallback (totality checked at load)
    assert fallback is not None, "ruleset is not total"
    return fallback


def explain(
    ruleset: RuleSet,
    current: SymptomReport,
    previous: Optional[SymptomReport] = None,
) -> list[tuple[str, bool]]:
    """Fired rules of the winning category, for the clinician audit trail."""
    winner = classify(ruleset, current, previous)
    cur = current.answers
    prev = previous.answers if previous is not None else None
    fired = [
        (rule.name, True)
        for rule in ruleset.rules_for(winner)
        if not rule.is_fallback and rule.evaluator(cur, prev)
    ]
    if not fired:  # fallback win: report the fallback rule itself
        fired = [(rule.name, True) for rule in ruleset.rules_for(winner) if rule.is_fallback]
    return fired


__all__ = [
    "RuleSet",
    "Rule",
    "RulesetError",
    "UnknownRuleItem",
    "MalformedPredicate",
    "MissingFallback",
    "DepthExceeded",
    "MAX_PREDICATE_DEPTH",
    "load_ruleset",
    "classify",
    "explain",
    "OPS",
    "CATEGORY_NAMES",
]
