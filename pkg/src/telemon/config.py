"""Deployment configuration: one JSON file, path via TELEMON_CONFIG.

The questionnaire and ruleset files are referenced from the deployment
file and resolved relative to it; defaults ship inside the package.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import timedelta
from importlib import resources
from pathlib import Path
from typing import Optional

from .model import QuestionnaireDefinition, load_questionnaire
from .triage import RuleSet, load_ruleset

ENV_VAR = "TELEMON_CONFIG"


@dataclass(frozen=True)
class DeploymentConfig:
    base_url: str
    anchor_hour_utc: int
    escalation_factor: int
    calm_streak: int
    overdue_after: timedelta
    token_ttl: timedelta
    default_reports_per_day: int
    page_size: int
    operator_token: Optional[str]
    questionnaire: QuestionnaireDefinition
    ruleset: RuleSet

    def link_for(self, token: str) -> str:
        return f"{self.base_url}/q/{token}"


def _package_text(name: str) -> str:
    return (resources.files("telemon") / "config" / name).read_text("utf-8")


def load_config(path: Optional[os.PathLike | str] = None) -> DeploymentConfig:
    """Load deployment config from `path`, $TELEMON_CONFIG, or package defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR)
    if path is None:
        raw = json.loads(_package_text("deployment.json"))
        read = _package_text
    else:
        base = Path(path).parent
        raw = json.loads(Path(path).read_text("utf-8"))

        def read(name: str) -> str:
            local = base / name
            if local.exists():
                return local.read_text("utf-8")
            return _package_text(name)

    questionnaire = load_questionnaire(read(raw.get("questionnaire", "questionnaire.json")))
    ruleset = load_ruleset(read(raw.get("ruleset", "ruleset-default-v1.json")), questionnaire)
    return DeploymentConfig(
        base_url=raw.get("base_url", "http://localhost:8000").rstrip("/"),
        anchor_hour_utc=raw.get("anchor_hour_utc", 8),
        escalation_factor=raw.get("escalation_factor", 2),
        calm_streak=raw.get("calm_streak", 4),
        overdue_after=timedelta(hours=raw.get("overdue_after_hours", 8)),
        token_ttl=timedelta(hours=raw.get("token_ttl_hours", 24)),
        default_reports_per_day=raw.get("default_reports_per_day", 2),
        page_size=raw.get("page_size", 50),
        operator_token=raw.get("operator_token"),
        questionnaire=questionnaire,
        ruleset=ruleset,
    )
