"""Monitoring cadence: dispatch times, 8h non-responder detection,
escalation on Orange/Red and de-escalation after a calm streak.

Every function is pure in its arguments; the system clock is never read
here. The service drives these from a single tick loop with an injected
clock, so replaying the same tick sequence reproduces the same commands.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime, time, timedelta
from typing import Iterable, Optional, Sequence

from .model import MonitoringSchedule, PatientStatus, TriageCategory, UTC

ANCHOR_HOUR_UTC = 8
ESCALATION_FACTOR = 2
CALM_STREAK = 4


def dispatch_slots(reports_per_day: int, anchor_hour: int = ANCHOR_HOUR_UTC) -> list[timedelta]:
    """Evenly spaced send offsets from local midnight, anchored at the anchor hour."""
    spacing = timedelta(days=1) / reports_per_day
    return sorted(
        (timedelta(hours=anchor_hour) + k * spacing) % timedelta(days=1)
        for k in range(reports_per_day)
    )


def next_dispatch(
    schedule: MonitoringSchedule, now: datetime, anchor_hour: int = ANCHOR_HOUR_UTC
) -> datetime:
    """Earliest slot strictly after `now`."""
    midnight = datetime.combine(now.date(), time(0, 0), tzinfo=UTC)
    slots = dispatch_slots(schedule.reports_per_day, anchor_hour)
    for day in (0, 1):
        base = midnight + timedelta(days=day)
        for offset in slots:
            candidate = base + offset
            if candidate > now:
                return candidate
    raise AssertionError("unreachable: tomorrow always has a slot")


def is_overdue(last_dispatch_at: datetime, responded: bool, now: datetime,
               overdue_after: timedelta = timedelta(hours=8)) -> bool:
    """Strictly more than the window after dispatch with no response."""
    return not responded and (now - last_dispatch_at) > overdue_after


def escalate(
    schedule: MonitoringSchedule,
    category: TriageCategory,
    factor: int = ESCALATION_FACTOR,
) -> MonitoringSchedule:
    """Double the frequency on a first Orange/Red flag; idempotent."""
    if category < TriageCategory.Orange or schedule.escalated:
        return schedule
    return force_escalate(schedule, factor)


def force_escalate(schedule: MonitoringSchedule, factor: int = ESCALATION_FACTOR) -> MonitoringSchedule:
    if schedule.escalated:
        return schedule
    return replace(
        schedule,
        reports_per_day=schedule.reports_per_day * factor,
        escalated=True,
    )


def maybe_deescalate(
    schedule: MonitoringSchedule,
    recent_categories: Sequence[TriageCategory],
    calm_streak: int = CALM_STREAK,
) -> MonitoringSchedule:
    """Back to baseline after `calm_streak` consecutive reports at Yellow or below.

    `recent_categories` is ordered newest-last.
    """
    if not schedule.escalated or len(recent_categories) < calm_streak:
        return schedule
    if all(c <= TriageCategory.Yellow for c in recent_categories[-calm_streak:]):
        return replace(
            schedule,
            reports_per_day=schedule.baseline_per_day,
            escalated=False,
        )
    return schedule


@dataclass(frozen=True)
class DispatchCommand:
    patient_id: str
    due_at: datetime


@dataclass(frozen=True)
class OverdueDetection:
    patient_id: str
    dispatch_id: str
    dispatched_at: datetime


@dataclass(frozen=True)
class PendingDispatch:
    """A sent questionnaire awaiting a response, for overdue tracking."""

    dispatch_id: str
    patient_id: str
    at: datetime
    responded: bool
    overdue_flagged: bool


def should_dispatch(status: PatientStatus, schedule: MonitoringSchedule, now: datetime) -> bool:
    return (
        status == PatientStatus.Monitoring
        and schedule.next_dispatch_at is not None
        and schedule.next_dispatch_at <= now
    )


def newly_overdue(pending: PendingDispatch, now: datetime,
                  overdue_after: timedelta = timedelta(hours=8)) -> bool:
    return not pending.overdue_flagged and is_overdue(
        pending.at, pending.responded, now, overdue_after
    )


def tick(
    now: datetime,
    patients: Iterable[tuple[str, PatientStatus, MonitoringSchedule]],
    pending: Iterable[PendingDispatch],
    overdue_after: timedelta = timedelta(hours=8),
) -> tuple[list[DispatchCommand], list[OverdueDetection]]:
    """One pass over patient state: who gets a questionnaire, who is newly overdue.

    Pure; the service translates commands into tokens, messages, and events.
    Overdue detections never repeat because the caller records the
    overdue_flagged bit from the emitted detection.
    """
    commands = [
        DispatchCommand(patient_id=pid, due_at=schedule.next_dispatch_at)
        for pid, status, schedule in patients
        if should_dispatch(status, schedule, now)
    ]
    detections = [
        OverdueDetection(patient_id=p.patient_id, dispatch_id=p.dispatch_id, dispatched_at=p.at)
        for p in pending
        if newly_overdue(p, now, overdue_after)
    ]
    return commands, detections
