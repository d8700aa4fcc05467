"""Domain types, questionnaire schema, and report validation. No I/O here.

All timestamps are UTC; display conversion is a UI concern.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from typing import Any, Optional

UTC = timezone.utc

MAX_QUESTIONNAIRE_ITEMS = 10  # loader rejects definitions with >= 10 items


class ValidationError(Exception):
    """Base for questionnaire / report validation failures."""

    code = "validation_error"


class MissingRequiredItem(ValidationError):
    code = "missing_required_item"

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"missing required item: {key}")


class OutOfRange(ValidationError):
    code = "out_of_range"

    def __init__(self, key: str, value: Any, min_value: float, max_value: float):
        self.key = key
        self.value = value
        self.min_value = min_value
        self.max_value = max_value
        super().__init__(f"{key}={value!r} outside [{min_value}, {max_value}]")


class UnknownItem(ValidationError):
    code = "unknown_item"

    def __init__(self, key: str):
        self.key = key
        super().__init__(f"unknown item: {key}")


class BadItemType(ValidationError):
    code = "bad_item_type"

    def __init__(self, key: str, value: Any, expected: str):
        self.key = key
        self.value = value
        super().__init__(f"{key}={value!r} is not {expected}")


class QuestionnaireTooLong(ValidationError):
    code = "questionnaire_too_long"


class TriageCategory(enum.IntEnum):
    """Severity flag. Total order: Green < Yellow < Orange < Red."""

    Green = 0
    Yellow = 1
    Orange = 2
    Red = 3

    @classmethod
    def from_name(cls, name: str) -> "TriageCategory":
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown triage category: {name!r}") from None


CATEGORY_NAMES = [c.name for c in TriageCategory]


class PatientStatus(str, enum.Enum):
    Enrolled = "Enrolled"
    Monitoring = "Monitoring"
    Hospitalized = "Hospitalized"
    Discharged = "Discharged"


class ActionTrigger(str, enum.Enum):
    OrangeFlag = "OrangeFlag"
    RedFlag = "RedFlag"
    NonResponder = "NonResponder"
    PatientInitiated = "PatientInitiated"
    # Not part of the clinical flag set: raised when an outbound notification
    # has no usable recipient and a human must chase the contact details.
    DeliveryFailure = "DeliveryFailure"


class ActionKind(str, enum.Enum):
    Review = "Review"
    Call = "Call"
    IntensifyMonitoring = "IntensifyMonitoring"
    DispatchAssistance = "DispatchAssistance"
    Hospitalize = "Hospitalize"


class ActionStatus(str, enum.Enum):
    Open = "Open"
    Acknowledged = "Acknowledged"
    Resolved = "Resolved"


@dataclass(frozen=True)
class Eligibility:
    no_initial_severity: bool
    quarantine_capable: bool
    can_self_monitor: bool
    consent: bool

    def all_true(self) -> bool:
        return (
            self.no_initial_severity
            and self.quarantine_capable
            and self.can_self_monitor
            and self.consent
        )

    def failing_criteria(self) -> list[str]:
        names = {
            "no_initial_severity": self.no_initial_severity,
            "quarantine_capable": self.quarantine_capable,
            "can_self_monitor": self.can_self_monitor,
            "consent": self.consent,
        }
        return [k for k, ok in names.items() if not ok]


def check_eligibility(e: Eligibility) -> bool:
    """True iff all four enrollment criteria hold."""
    return e.all_true()


@dataclass(frozen=True)
class Item:
    key: str
    label: str
    kind: str  # "numeric" | "boolean" | "scale_0_10"
    required: bool = True
    min: Optional[float] = None
    max: Optional[float] = None
    unit: Optional[str] = None

    def bounds(self) -> tuple[float, float]:
        if self.kind == "scale_0_10":
            return 0.0, 10.0
        if self.kind == "boolean":
            return 0.0, 1.0
        return (
            self.min if self.min is not None else float("-inf"),
            self.max if self.max is not None else float("inf"),
        )


@dataclass(frozen=True)
class QuestionnaireDefinition:
    items: tuple[Item, ...]

    def __post_init__(self):
        if len(self.items) >= MAX_QUESTIONNAIRE_ITEMS:
            raise QuestionnaireTooLong(
                f"{len(self.items)} items; must be fewer than {MAX_QUESTIONNAIRE_ITEMS}"
            )
        keys = [i.key for i in self.items]
        if len(set(keys)) != len(keys):
            raise ValidationError(f"duplicate item keys in questionnaire: {keys}")

    @property
    def keys(self) -> frozenset[str]:
        return frozenset(i.key for i in self.items)

    def item(self, key: str) -> Item:
        for i in self.items:
            if i.key == key:
                return i
        raise UnknownItem(key)

    def to_dict(self) -> dict:
        return {
            "items": [
                {
                    k: v
                    for k, v in {
                        "key": i.key,
                        "label": i.label,
                        "kind": i.kind,
                        "required": i.required,
                        "min": i.min,
                        "max": i.max,
                        "unit": i.unit,
                    }.items()
                    if v is not None
                }
                for i in self.items
            ]
        }


def load_questionnaire(config_text: str) -> QuestionnaireDefinition:
    """Parse the human-editable questionnaire JSON config."""
    data = json.loads(config_text)
    items = []
    for raw in data["items"]:
        kind = raw["kind"]
        if kind not in ("numeric", "boolean", "scale_0_10"):
            raise ValidationError(f"unknown item kind: {kind!r}")
        if kind == "numeric" and ("min" not in raw or "max" not in raw):
            raise ValidationError(f"numeric item {raw['key']!r} needs min and max")
        items.append(
            Item(
                key=raw["key"],
                label=raw.get("label", raw["key"]),
                kind=kind,
                required=raw.get("required", True),
                min=raw.get("min"),
                max=raw.get("max"),
                unit=raw.get("unit"),
            )
        )
    return QuestionnaireDefinition(items=tuple(items))


@dataclass(frozen=True)
class SymptomReport:
    patient_id: str
    received_at: datetime
    answers: dict[str, Any]

    def to_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "received_at": self.received_at.isoformat(),
            "answers": dict(self.answers),
        }


def validate_report(
    definition: QuestionnaireDefinition,
    raw_answers: dict[str, Any],
    now: datetime,
    patient_id: str,
) -> SymptomReport:
    """Validate raw answers against the questionnaire; total over raw maps.

    Returns a SymptomReport or raises exactly one typed ValidationError.
    """
    for key in raw_answers:
        if key not in definition.keys:
            raise UnknownItem(key)
    answers: dict[str, Any] = {}
    for item in definition.items:
        if item.key not in raw_answers:
            if item.required:
                raise MissingRequiredItem(item.key)
            continue
        value = raw_answers[item.key]
        if item.kind == "boolean":
            if not isinstance(value, bool):
                raise BadItemType(item.key, value, "a boolean")
            answers[item.key] = value
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise BadItemType(item.key, value, "a number")
        lo, hi = item.bounds()
        if not (lo <= value <= hi):
            raise OutOfRange(item.key, value, lo, hi)
        if item.kind == "scale_0_10":
            if float(value) != int(value):
                raise BadItemType(item.key, value, "an integer 0-10")
            value = int(value)
        answers[item.key] = value
    return SymptomReport(patient_id=patient_id, received_at=now, answers=answers)


DEFAULT_OVERDUE_AFTER = timedelta(hours=8)


@dataclass
class MonitoringSchedule:
    reports_per_day: int
    baseline_per_day: int
    escalated: bool
    next_dispatch_at: Optional[datetime]
    overdue_after: timedelta = DEFAULT_OVERDUE_AFTER

    @classmethod
    def baseline(cls, per_day: int, overdue_after: timedelta = DEFAULT_OVERDUE_AFTER):
        if per_day < 1:
            raise ValueError("reports_per_day must be >= 1")
        return cls(
            reports_per_day=per_day,
            baseline_per_day=per_day,
            escalated=False,
            next_dispatch_at=None,
            overdue_after=overdue_after,
        )

    def copy(self) -> "MonitoringSchedule":
        return replace(self)

    def to_dict(self) -> dict:
        return {
            "reports_per_day": self.reports_per_day,
            "baseline_per_day": self.baseline_per_day,
            "escalated": self.escalated,
            "next_dispatch_at": (
                self.next_dispatch_at.isoformat() if self.next_dispatch_at else None
            ),
            "overdue_after_s": int(self.overdue_after.total_seconds()),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MonitoringSchedule":
        return cls(
            reports_per_day=d["reports_per_day"],
            baseline_per_day=d["baseline_per_day"],
            escalated=d["escalated"],
            next_dispatch_at=(
                datetime.fromisoformat(d["next_dispatch_at"])
                if d["next_dispatch_at"]
                else None
            ),
            overdue_after=timedelta(seconds=d["overdue_after_s"]),
        )


@dataclass
class Patient:
    patient_id: str
    external_ref: str
    phone: str
    gp_contact: Optional[str]
    enrolled_at: datetime
    eligibility: Eligibility
    schedule: MonitoringSchedule
    current_category: TriageCategory = TriageCategory.Green
    overdue: bool = False
    status: PatientStatus = PatientStatus.Monitoring

    @property
    def is_monitoring(self) -> bool:
        return self.status == PatientStatus.Monitoring


@dataclass
class ActionItem:
    action_id: str
    patient_id: str
    created_at: datetime
    trigger: ActionTrigger
    kind: ActionKind
    status: ActionStatus = ActionStatus.Open
    resolution_note: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "action_id": self.action_id,
            "patient_id": self.patient_id,
            "created_at": self.created_at.isoformat(),
            "trigger": self.trigger.value,
            "kind": self.kind.value,
            "status": self.status.value,
            "resolution_note": self.resolution_note,
        }


@dataclass(frozen=True)
class Event:
    """One append-only record; all service state is a fold over these."""

    seq: int
    patient_id: Optional[str]
    at: datetime
    kind: str
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "patient_id": self.patient_id,
            "at": self.at.isoformat(),
            "kind": self.kind,
            "payload": self.payload,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Event":
        return cls(
            seq=d["seq"],
            patient_id=d["patient_id"],
            at=datetime.fromisoformat(d["at"]),
            kind=d["kind"],
            payload=d.get("payload", {}),
        )


EVENT_KINDS = frozenset(
    {
        "enrolled",
        "dispatched",
        "report_received",
        "flag_changed",
        "schedule_changed",
        "overdue_detected",
        "action_created",
        "action_acknowledged",
        "action_resolved",
        "status_changed",
        "message_sent",
        "gp_summary_sent",
        "error",
    }
)
