"""Materialized Command Centre state as a pure fold over the event log.

The live service and log replay share this one ``apply`` function, so
"live state equals replayed state" holds by construction and is verified
field-for-field in tests via ``snapshot_dict``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Optional

from .model import (
    ActionItem,
    ActionKind,
    ActionStatus,
    ActionTrigger,
    Eligibility,
    Event,
    MonitoringSchedule,
    Patient,
    PatientStatus,
    TriageCategory,
)

RECENT_CATEGORIES_KEPT = 8


@dataclass
class PendingDispatchState:
    dispatch_id: str
    patient_id: str
    at: datetime
    responded: bool = False
    overdue_flagged: bool = False


@dataclass
class PatientView:
    patient: Patient
    recent_categories: list[TriageCategory] = field(default_factory=list)
    last_report_at: Optional[datetime] = None
    last_answers: Optional[dict] = None
    report_count: int = 0
    open_action_ids: list[str] = field(default_factory=list)


@dataclass
class CentreState:
    patients: dict[str, PatientView] = field(default_factory=dict)
    external_refs: dict[str, str] = field(default_factory=dict)
    pending: dict[str, PendingDispatchState] = field(default_factory=dict)
    actions: dict[str, ActionItem] = field(default_factory=dict)
    dead_letters: list[str] = field(default_factory=list)
    gp_notified: list[str] = field(default_factory=list)
    summarized_reports: list[str] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    reports_by_category: dict[str, int] = field(default_factory=dict)
    actions_by_trigger: dict[str, int] = field(default_factory=dict)
    message_purposes: dict[str, int] = field(default_factory=dict)
    n_patients: int = 0
    n_dispatches: int = 0
    n_actions: int = 0
    n_messages: int = 0
    last_seq: int = 0

    # --- fold --------------------------------------------------------------

    def apply(self, event: Event) -> None:
        handler = getattr(self, f"_on_{event.kind}", None)
        if handler is not None:
            handler(event)
        self.counters[event.kind] = self.counters.get(event.kind, 0) + 1
        self.last_seq = event.seq

    def _on_enrolled(self, e: Event) -> None:
        p = e.payload
        patient = Patient(
            patient_id=e.patient_id,
            external_ref=p["external_ref"],
            phone=p["phone"],
            gp_contact=p.get("gp_contact"),
            enrolled_at=e.at,
            eligibility=Eligibility(**p["eligibility"]),
            schedule=MonitoringSchedule.from_dict(p["schedule"]),
            current_category=TriageCategory.Green,
            overdue=False,
            status=PatientStatus.Monitoring,
        )
        self.patients[e.patient_id] = PatientView(patient=patient)
        self.external_refs[p["external_ref"]] = e.patient_id
        self.n_patients += 1

    def _on_dispatched(self, e: Event) -> None:
        p = e.payload
        view = self.patients[e.patient_id]
        view.patient.schedule.next_dispatch_at = (
            datetime.fromisoformat(p["next_dispatch_at"])
            if p["next_dispatch_at"]
            else None
        )
        self.pending[p["dispatch_id"]] = PendingDispatchState(
            dispatch_id=p["dispatch_id"], patient_id=e.patient_id, at=e.at
        )
        self.n_dispatches += 1

    def _on_report_received(self, e: Event) -> None:
        p = e.payload
        view = self.patients[e.patient_id]
        dispatch = self.pending.get(p["dispatch_id"])
        if dispatch is not None:
            dispatch.responded = True
        category = TriageCategory.from_name(p["category"])
        view.patient.current_category = category
        view.patient.overdue = False
        view.recent_categories.append(category)
        del view.recent_categories[:-RECENT_CATEGORIES_KEPT]
        view.last_report_at = e.at
        view.last_answers = p["answers"]
        view.report_count += 1
        self.reports_by_category[category.name] = (
            self.reports_by_category.get(category.name, 0) + 1
        )

    def _on_flag_changed(self, e: Event) -> None:
        view = self.patients[e.patient_id]
        view.patient.current_category = TriageCategory.from_name(e.payload["to"])

    def _on_schedule_changed(self, e: Event) -> None:
        p = e.payload
        sched = self.patients[e.patient_id].patient.schedule
        sched.reports_per_day = p["reports_per_day"]
        sched.escalated = p["escalated"]
        sched.next_dispatch_at = (
            datetime.fromisoformat(p["next_dispatch_at"])
            if p["next_dispatch_at"]
            else None
        )

    def _on_overdue_detected(self, e: Event) -> None:
        dispatch = self.pending[e.payload["dispatch_id"]]
        dispatch.overdue_flagged = True
        self.patients[e.patient_id].patient.overdue = True

    def _on_action_created(self, e: Event) -> None:
        p = e.payload
        action = ActionItem(
            action_id=p["action_id"],
            patient_id=e.patient_id,
            created_at=e.at,
            trigger=ActionTrigger(p["trigger"]),
            kind=ActionKind(p["kind"]),
        )
        self.actions[action.action_id] = action
        self.patients[e.patient_id].open_action_ids.append(action.action_id)
        self.n_actions += 1
        self.actions_by_trigger[action.trigger.value] = (
            self.actions_by_trigger.get(action.trigger.value, 0) + 1
        )

    def _on_action_acknowledged(self, e: Event) -> None:
        self.actions[e.payload["action_id"]].status = ActionStatus.Acknowledged

    def _on_action_resolved(self, e: Event) -> None:
        p = e.payload
        action = self.actions[p["action_id"]]
        action.status = ActionStatus.Resolved
        action.kind = ActionKind(p["kind"])
        action.resolution_note = p["note"]
        view = self.patients[action.patient_id]
        if action.action_id in view.open_action_ids:
            view.open_action_ids.remove(action.action_id)

    def _on_status_changed(self, e: Event) -> None:
        view = self.patients[e.patient_id]
        view.patient.status = PatientStatus(e.payload["status"])
        if view.patient.status != PatientStatus.Monitoring:
            view.patient.schedule.next_dispatch_at = None

    def _on_message_sent(self, e: Event) -> None:
        self.n_messages += 1
        if e.payload.get("delivery_state") == "Failed":
            self.dead_letters.append(e.payload["message_id"])
        if e.payload.get("purpose") == "gp_enrollment":
            self.gp_notified.append(e.patient_id)
        purpose = e.payload.get("purpose", "other")
        self.message_purposes[purpose] = self.message_purposes.get(purpose, 0) + 1

    def _on_gp_summary_sent(self, e: Event) -> None:
        self.summarized_reports.append(e.payload["report_ref"])

    # --- queries ------------------------------------------------------------

    def monitoring_views(self) -> list[PatientView]:
        return [v for v in self.patients.values() if v.patient.is_monitoring]

    def category_counts(self) -> dict[str, int]:
        counts = {c.name: 0 for c in TriageCategory}
        for view in self.monitoring_views():
            counts[view.patient.current_category.name] += 1
        return counts

    def stats(self) -> dict:
        return {
            "categories": self.category_counts(),
            "overdue": sum(1 for v in self.monitoring_views() if v.patient.overdue),
            "open_actions": sum(
                1 for a in self.actions.values() if a.status != ActionStatus.Resolved
            ),
            "monitoring": len(self.monitoring_views()),
            "enrolled_total": self.n_patients,
            "reports_by_category": {
                c.name: self.reports_by_category.get(c.name, 0) for c in TriageCategory
            },
            "actions_by_trigger": dict(sorted(self.actions_by_trigger.items())),
            "message_purposes": dict(sorted(self.message_purposes.items())),
            "event_counts": dict(sorted(self.counters.items())),
        }

    # --- serialization (snapshots + replay-equality checks) -----------------

    def snapshot_dict(self) -> dict:
        return {
            "patients": {
                pid: {
                    "patient": {
                        "patient_id": v.patient.patient_id,
                        "external_ref": v.patient.external_ref,
                        "phone": v.patient.phone,
                        "gp_contact": v.patient.gp_contact,
                        "enrolled_at": v.patient.enrolled_at.isoformat(),
                        "eligibility": vars(v.patient.eligibility),
                        "schedule": v.patient.schedule.to_dict(),
                        "current_category": v.patient.current_category.name,
                        "overdue": v.patient.overdue,
                        "status": v.patient.status.value,
                    },
                    "recent_categories": [c.name for c in v.recent_categories],
                    "last_report_at": (
                        v.last_report_at.isoformat() if v.last_report_at else None
                    ),
                    "last_answers": v.last_answers,
                    "report_count": v.report_count,
                    "open_action_ids": list(v.open_action_ids),
                }
                for pid, v in sorted(self.patients.items())
            },
            "external_refs": dict(sorted(self.external_refs.items())),
            "pending": {
                did: {
                    "patient_id": d.patient_id,
                    "at": d.at.isoformat(),
                    "responded": d.responded,
                    "overdue_flagged": d.overdue_flagged,
                }
                for did, d in sorted(self.pending.items())
            },
            "actions": {aid: a.to_dict() for aid, a in sorted(self.actions.items())},
            "dead_letters": list(self.dead_letters),
            "gp_notified": list(self.gp_notified),
            "summarized_reports": list(self.summarized_reports),
            "counters": dict(sorted(self.counters.items())),
            "reports_by_category": dict(sorted(self.reports_by_category.items())),
            "actions_by_trigger": dict(sorted(self.actions_by_trigger.items())),
            "message_purposes": dict(sorted(self.message_purposes.items())),
            "n_patients": self.n_patients,
            "n_dispatches": self.n_dispatches,
            "n_actions": self.n_actions,
            "n_messages": self.n_messages,
            "last_seq": self.last_seq,
        }

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot_dict(), sort_keys=True)

    @classmethod
    def from_snapshot_dict(cls, d: dict) -> "CentreState":
        state = cls()
        for pid, pv in d["patients"].items():
            raw = pv["patient"]
            patient = Patient(
                patient_id=raw["patient_id"],
                external_ref=raw["external_ref"],
                phone=raw["phone"],
                gp_contact=raw["gp_contact"],
                enrolled_at=datetime.fromisoformat(raw["enrolled_at"]),
                eligibility=Eligibility(**raw["eligibility"]),
                schedule=MonitoringSchedule.from_dict(raw["schedule"]),
                current_category=TriageCategory.from_name(raw["current_category"]),
                overdue=raw["overdue"],
                status=PatientStatus(raw["status"]),
            )
            state.patients[pid] = PatientView(
                patient=patient,
                recent_categories=[
                    TriageCategory.from_name(c) for c in pv["recent_categories"]
                ],
                last_report_at=(
                    datetime.fromisoformat(pv["last_report_at"])
                    if pv["last_report_at"]
                    else None
                ),
                last_answers=pv["last_answers"],
                report_count=pv["report_count"],
                open_action_ids=list(pv["open_action_ids"]),
            )
        state.external_refs = dict(d["external_refs"])
        for did, pd in d["pending"].items():
            state.pending[did] = PendingDispatchState(
                dispatch_id=did,
                patient_id=pd["patient_id"],
                at=datetime.fromisoformat(pd["at"]),
                responded=pd["responded"],
                overdue_flagged=pd["overdue_flagged"],
            )
        for aid, ad in d["actions"].items():
            state.actions[aid] = ActionItem(
                action_id=ad["action_id"],
                patient_id=ad["patient_id"],
                created_at=datetime.fromisoformat(ad["created_at"]),
                trigger=ActionTrigger(ad["trigger"]),
                kind=ActionKind(ad["kind"]),
                status=ActionStatus(ad["status"]),
                resolution_note=ad["resolution_note"],
            )
        state.dead_letters = list(d["dead_letters"])
        state.gp_notified = list(d["gp_notified"])
        state.summarized_reports = list(d["summarized_reports"])
        state.counters = dict(d["counters"])
        state.reports_by_category = dict(d["reports_by_category"])
        state.actions_by_trigger = dict(d["actions_by_trigger"])
        state.message_purposes = dict(d["message_purposes"])
        state.n_patients = d["n_patients"]
        state.n_dispatches = d["n_dispatches"]
        state.n_actions = d["n_actions"]
        state.n_messages = d["n_messages"]
        state.last_seq = d["last_seq"]
        return state


def replay(log, from_state: Optional[CentreState] = None) -> CentreState:
    """Fold the log (optionally on top of a snapshot) into centre state."""
    state = from_state if from_state is not None else CentreState()
    for event in log.iter_events(from_seq=state.last_seq):
        state.apply(event)
    return state
