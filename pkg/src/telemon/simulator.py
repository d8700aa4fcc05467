"""Synthetic cohort simulator.

Generates patients with scripted symptom trajectories, drives the service
through simulated time (1-minute granularity) via the real token links,
and reports how the workload split between automatic messages and human
action items. Everything is a pure function of the seed.
"""
from __future__ import annotations

import heapq
import json
import random
import re
import time
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Optional

from .config import DeploymentConfig, load_config
from .eventstore import EventLog, MemoryEventLog
from .notifier import CallbackGateway
from .service import CommandCentre

SIM_EPOCH = datetime(2026, 1, 5, 0, 0, tzinfo=timezone.utc)
ENROLL_MINUTE = 7 * 60  # 07:00 UTC on day 0; first dispatch lands at 08:00

ARCHETYPES = ("stable", "deteriorating", "quarantine_issue", "nonresponder", "asymptomatic")

_LINK_RE = re.compile(r"/q/([A-Za-z0-9_\-]+)")


class InvalidSpec(Exception):
    pass


class SimulationInvariantViolation(Exception):
    pass


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int
    days: int
    seed: int
    p_stable: float = 0.3
    p_deteriorating: float = 0.1
    p_quarantine_issue: float = 0.05
    p_nonresponder: float = 0.1
    response_delay_min: int = 30  # minutes
    response_delay_max: int = 240
    nonresponder_skip_prob: float = 0.6
    reports_per_day: int = 2

    def validate(self) -> None:
        probs = (
            self.p_stable,
            self.p_deteriorating,
            self.p_quarantine_issue,
            self.p_nonresponder,
        )
        if any(p < 0 or p > 1 for p in probs) or sum(probs) > 1:
            raise InvalidSpec("archetype probabilities must be in [0,1] and sum to <= 1")
        if self.n_patients < 1 or self.days < 1:
            raise InvalidSpec("need at least one patient and one day")
        if not (0 < self.response_delay_min <= self.response_delay_max):
            raise InvalidSpec("bad response delay range")
        if self.response_delay_max >= 8 * 60:
            raise InvalidSpec("response delay must stay inside the 8h overdue window")
        if self.reports_per_day not in (1, 2):
            raise InvalidSpec("baseline reports_per_day must be 1 or 2")


@dataclass
class SimPatient:
    index: int
    archetype: str
    rng_seed: int
    jump_report: int  # report at which the deteriorating spike / flip happens
    big_jump: bool
    dispatch_count: int = 0
    rng: random.Random = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        self.rng = random.Random(self.rng_seed)

    @property
    def external_ref(self) -> str:
        return f"sim-{self.index:06d}"

    def enrollment_form(self) -> dict:
        return {
            "external_ref": self.external_ref,
            "phone": f"ph_{self.index:06d}",
            "gp_contact": f"gp_{self.index % 97:04d}",
            "eligibility": {
                "no_initial_severity": True,
                "quarantine_capable": True,
                "can_self_monitor": True,
                "consent": True,
            },
        }

    def answers_for(self, k: int) -> dict:
        """Scripted answers for the k-th dispatched questionnaire (0-based)."""
        if self.archetype == "stable":
            return _answers(38.0, 2, 3, 2)
        if self.archetype == "deteriorating":
            temp = 37.0 + 0.3 * k
            dyspnea = int(k * 0.7)
            if k >= self.jump_report:
                temp += 2.2 if self.big_jump else 1.2
                dyspnea += 2
            return _answers(round(min(temp, 42.0), 1), min(dyspnea, 10), 1, 2)
        if self.archetype == "quarantine_issue":
            return _answers(36.8, 0, 0, 3, quarantine_problem=k >= self.jump_report)
        # nonresponder and asymptomatic report floor values when they do answer
        return _answers(36.8, 0, 0, 0)

    def responds(self, spec: CohortSpec) -> Optional[int]:
        """Latency in minutes for this dispatch, or None if skipped."""
        skip_draw = self.rng.random()
        latency = self.rng.randint(spec.response_delay_min, spec.response_delay_max)
        if self.archetype == "nonresponder" and skip_draw < spec.nonresponder_skip_prob:
            return None
        return latency


def _answers(temp, dyspnea, pain, distress, quarantine_problem=False, household_change=False):
    return {
        "temperature_c": temp,
        "dyspnea": dyspnea,
        "pain": pain,
        "distress": distress,
        "quarantine_problem": quarantine_problem,
        "household_change": household_change,
    }


def generate_cohort(spec: CohortSpec) -> list[SimPatient]:
    spec.validate()
    rng = random.Random(spec.seed)
    thresholds = [
        ("stable", spec.p_stable),
        ("deteriorating", spec.p_deteriorating),
        ("quarantine_issue", spec.p_quarantine_issue),
        ("nonresponder", spec.p_nonresponder),
    ]
    cohort = []
    for i in range(spec.n_patients):
        u = rng.random()
        archetype = "asymptomatic"
        cumulative = 0.0
        for name, p in thresholds:
            cumulative += p
            if u < cumulative:
                archetype = name
                break
        max_report = max(2, spec.days * spec.reports_per_day - 1)
        cohort.append(
            SimPatient(
                index=i,
                archetype=archetype,
                rng_seed=rng.getrandbits(64),
                jump_report=rng.randint(1, max_report),
                big_jump=rng.random() < 0.3,
            )
        )
    return cohort


@dataclass
class SimulationReport:
    spec: dict
    total_reports: int
    histogram: dict[str, int]
    actions_by_trigger: dict[str, int]
    total_actions: int
    automatic_messages: int
    automation_ratio: float
    overdue_detections: int
    gp_summaries: int
    dispatches: int
    enrolled: int
    runtime_seconds: float

    def canonical_dict(self) -> dict:
        # runtime is wall-clock and deliberately outside the deterministic part
        d = self.to_dict()
        d.pop("runtime_seconds")
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.canonical_dict(), sort_keys=True)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "total_reports": self.total_reports,
            "histogram": self.histogram,
            "actions_by_trigger": self.actions_by_trigger,
            "total_actions": self.total_actions,
            "automatic_messages": self.automatic_messages,
            "automation_ratio": self.automation_ratio,
            "overdue_detections": self.overdue_detections,
            "gp_summaries": self.gp_summaries,
            "dispatches": self.dispatches,
            "enrolled": self.enrolled,
            "runtime_seconds": self.runtime_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationReport":
        return cls(**d)


class InProcessDriver:
    """Runs the service in this process; fastest path, used by tests."""

    def __init__(self, config: Optional[DeploymentConfig] = None,
                 log_path: Optional[Path] = None):
        self.new_messages: list[dict] = []
        gateway = CallbackGateway(lambda m: self.new_messages.append(m.to_dict()))
        log = EventLog(log_path, fsync=False) if log_path else MemoryEventLog()
        self.centre = CommandCentre(config or load_config(), log=log, gateway=gateway)

    def enroll(self, form: dict, now: datetime) -> str:
        return self.centre.enroll(form, now)

    def tick(self, now: datetime) -> None:
        self.centre.tick(now)

    def submit(self, token: str, answers: dict, now: datetime) -> str:
        return self.centre.submit_report(token, answers, now).category.name

    def drain_messages(self) -> list[dict]:
        out, self.new_messages = self.new_messages, []
        return out

    def stats(self) -> dict:
        return self.centre.centre_stats()

    def next_wakeup(self) -> Optional[datetime]:
        return self.centre.next_wakeup()

    def close(self) -> None:
        self.centre.close()


class HttpDriver:
    """Talks to a running service through the public HTTP API; questionnaire
    links are picked out of the service's gateway file sink."""

    supports_wakeup = False

    def __init__(self, endpoint: str, gateway_file: Path, client=None):
        import httpx

        self.client = client or httpx.Client(base_url=endpoint, timeout=30.0)
        self._gateway_fh = open(gateway_file, "r", encoding="utf-8")

    def enroll(self, form: dict, now: datetime) -> str:
        form = dict(form, now=now.isoformat())
        resp = self.client.post("/patients", json=form)
        resp.raise_for_status()
        return resp.json()["patient_id"]

    def tick(self, now: datetime) -> None:
        self.client.post("/tick", json={"now": now.isoformat()}).raise_for_status()

    def submit(self, token: str, answers: dict, now: datetime) -> str:
        resp = self.client.post(
            f"/q/{token}", json={"answers": answers, "now": now.isoformat()}
        )
        resp.raise_for_status()
        return resp.json()["category"]

    def drain_messages(self) -> list[dict]:
        out = []
        for line in self._gateway_fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
        return out

    def stats(self) -> dict:
        resp = self.client.get("/stats")
        resp.raise_for_status()
        return resp.json()

    def next_wakeup(self) -> Optional[datetime]:
        return None  # remote heaps not visible; step minute by minute

    def close(self) -> None:
        self._gateway_fh.close()
        self.client.close()


def run(spec: CohortSpec, driver) -> SimulationReport:
    """Drive a full simulation; raises SimulationInvariantViolation if the
    service's books do not balance at the end."""
    started = time.monotonic()
    cohort = generate_cohort(spec)
    phone_to_patient = {f"ph_{p.index:06d}": p for p in cohort}

    enroll_at = SIM_EPOCH + timedelta(minutes=ENROLL_MINUTE)
    for patient in cohort:
        form = dict(patient.enrollment_form(), reports_per_day=spec.reports_per_day)
        driver.enroll(form, enroll_at)
    driver.drain_messages()  # GP enrollment notices are not simulator input

    # (due_minute, order, token, answers) for scripted questionnaire responses
    response_heap: list[tuple[int, int, str, dict]] = []
    order = 0
    my_histogram = {c: 0 for c in ("Green", "Yellow", "Orange", "Red")}
    end_minute = spec.days * 24 * 60
    minute = ENROLL_MINUTE

    while minute <= end_minute:
        now = SIM_EPOCH + timedelta(minutes=minute)
        driver.tick(now)
        for message in driver.drain_messages():
            match = _LINK_RE.search(message["body"])
            if not match:
                continue
            patient = phone_to_patient.get(message["recipient"])
            if patient is None:
                continue
            k = patient.dispatch_count
            patient.dispatch_count += 1
            latency = patient.responds(spec)
            if latency is None:
                continue
            heapq.heappush(
                response_heap,
                (minute + latency, order, match.group(1), patient.answers_for(k)),
            )
            order += 1
        while response_heap and response_heap[0][0] <= minute:
            _, _, token, answers = heapq.heappop(response_heap)
            category = driver.submit(token, answers, now)
            my_histogram[category] += 1

        # jump over quiet minutes when the driver can tell us the next due
        # time; a remote driver cannot, so it steps minute by minute
        if getattr(driver, "supports_wakeup", True):
            wakeups = [end_minute + 1]
            wakeup = driver.next_wakeup()
            if wakeup is not None:
                wakeups.append(_ceil_minute(wakeup))
            if response_heap:
                wakeups.append(response_heap[0][0])
            minute = max(minute + 1, min(wakeups))
        else:
            minute += 1

    stats = driver.stats()
    report = _build_report(spec, stats, time.monotonic() - started)

    if report.histogram != my_histogram:
        raise SimulationInvariantViolation(
            f"service histogram {report.histogram} != simulator's {my_histogram}"
        )
    _check_conservation(report, stats)
    return report


def _ceil_minute(ts: datetime) -> int:
    delta = ts - SIM_EPOCH
    minutes = delta / timedelta(minutes=1)
    return int(minutes) if minutes == int(minutes) else int(minutes) + 1


def _build_report(spec: CohortSpec, stats: dict, runtime: float) -> SimulationReport:
    histogram = stats["reports_by_category"]
    actions_by_trigger = stats["actions_by_trigger"]
    total_actions = sum(actions_by_trigger.values())
    automatic = stats["message_purposes"].get("reassurance", 0)
    denominator = automatic + total_actions
    counts = stats["event_counts"]
    return SimulationReport(
        spec={
            "n_patients": spec.n_patients,
            "days": spec.days,
            "seed": spec.seed,
            "mix": {
                "stable": spec.p_stable,
                "deteriorating": spec.p_deteriorating,
                "quarantine_issue": spec.p_quarantine_issue,
                "nonresponder": spec.p_nonresponder,
            },
            "reports_per_day": spec.reports_per_day,
        },
        total_reports=counts.get("report_received", 0),
        histogram=dict(histogram),
        actions_by_trigger=dict(actions_by_trigger),
        total_actions=total_actions,
        automatic_messages=automatic,
        automation_ratio=automatic / denominator if denominator else 1.0,
        overdue_detections=counts.get("overdue_detected", 0),
        gp_summaries=counts.get("gp_summary_sent", 0),
        dispatches=counts.get("dispatched", 0),
        enrolled=stats["enrolled_total"],
        runtime_seconds=round(runtime, 3),
    )


def _check_conservation(report: SimulationReport, stats: dict) -> None:
    h = report.histogram
    automatic_expected = h["Green"] + h["Yellow"]
    if report.automatic_messages != automatic_expected:
        raise SimulationInvariantViolation(
            f"automatic messages {report.automatic_messages} != "
            f"Green+Yellow reports {automatic_expected}"
        )
    patient_initiated = report.actions_by_trigger.get("PatientInitiated", 0)
    actions_expected = (
        h["Orange"] + h["Red"] + report.overdue_detections + patient_initiated
    )
    if report.total_actions != actions_expected:
        raise SimulationInvariantViolation(
            f"action items {report.total_actions} != O+R+overdue+contacts "
            f"{actions_expected}"
        )
    if report.gp_summaries != report.total_reports:
        raise SimulationInvariantViolation(
            f"gp summaries {report.gp_summaries} != reports {report.total_reports}"
        )


def run_in_process(spec: CohortSpec, config: Optional[DeploymentConfig] = None,
                   log_path: Optional[Path] = None) -> SimulationReport:
    driver = InProcessDriver(config, log_path=log_path)
    try:
        return run(spec, driver)
    finally:
        driver.close()


def report_out(report: SimulationReport, fmt: str = "json", out=None) -> str:
    """Render the report as json, csv (histogram), or an aligned text table."""
    if fmt == "json":
        text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    elif fmt == "csv":
        lines = ["category,reports"]
        for name in ("Green", "Yellow", "Orange", "Red"):
            lines.append(f"{name},{report.histogram[name]}")
        lines.append(f"total,{sum(report.histogram.values())}")
        text = "\n".join(lines) + "\n"
    elif fmt == "text":
        rows = [
            ("enrolled", report.enrolled),
            ("dispatches", report.dispatches),
            ("reports", report.total_reports),
            *((f"  {c}", report.histogram[c]) for c in ("Green", "Yellow", "Orange", "Red")),
            ("action items", report.total_actions),
            ("automatic messages", report.automatic_messages),
            ("overdue detections", report.overdue_detections),
            ("gp summaries", report.gp_summaries),
            ("automation ratio", report.automation_ratio),
            ("runtime (s)", report.runtime_seconds),
        ]
        width = max(len(label) for label, _ in rows)
        text = "\n".join(f"{label.ljust(width)}  {value}" for label, value in rows) + "\n"
    else:
        raise ValueError(f"unsupported report format: {fmt}")
    if out is not None:
        out.write(text)
    return text
