"""Remote patient monitoring platform: tokenized questionnaires, automated
triage, escalation, GP notifications, an event-sourced Command Centre
service, and a synthetic cohort simulator."""

from .model import TriageCategory, check_eligibility, validate_report
from .triage import classify, explain, load_ruleset

__all__ = [
    "TriageCategory",
    "check_eligibility",
    "validate_report",
    "classify",
    "explain",
    "load_ruleset",
]

__version__ = "0.1.0"
