import json
import random
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for the reference interpreter

from telemon.config import load_config
from telemon.model import SymptomReport

T0 = datetime(2026, 1, 5, 0, 0, tzinfo=timezone.utc)

ELIGIBLE = {
    "no_initial_severity": True,
    "quarantine_capable": True,
    "can_self_monitor": True,
    "consent": True,
}

FLOOR_ANSWERS = {
    "temperature_c": 36.8,
    "dyspnea": 0,
    "pain": 0,
    "distress": 0,
    "quarantine_problem": False,
    "household_change": False,
}


@pytest.fixture(scope="session")
def config():
    return load_config()


@pytest.fixture(scope="session")
def questionnaire(config):
    return config.questionnaire


@pytest.fixture(scope="session")
def ruleset(config):
    return config.ruleset


@pytest.fixture(scope="session")
def ruleset_json():
    from importlib import resources

    text = (resources.files("telemon") / "config" / "ruleset-default-v1.json").read_text()
    return json.loads(text)


def make_report(answers, minute=0, patient_id="P000001"):
    full = dict(FLOOR_ANSWERS)
    full.update(answers)
    return SymptomReport(
        patient_id=patient_id,
        received_at=T0 + timedelta(minutes=minute),
        answers=full,
    )


def enrollment_form(ref="ext-1", phone="ph_000001", gp="gp_0001", **overrides):
    form = {
        "external_ref": ref,
        "phone": phone,
        "gp_contact": gp,
        "eligibility": dict(ELIGIBLE),
    }
    form.update(overrides)
    return form


def random_answers(rng: random.Random) -> dict:
    return {
        "temperature_c": round(rng.uniform(30.0, 45.0), 1),
        "dyspnea": rng.randint(0, 10),
        "pain": rng.randint(0, 10),
        "distress": rng.randint(0, 10),
        "quarantine_problem": rng.random() < 0.2,
        "household_change": rng.random() < 0.1,
    }
