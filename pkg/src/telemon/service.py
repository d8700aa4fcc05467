"""The Command Centre: ties the domain modules together.

Commands (enroll, submit_report, act, contact, tick) are serialized
through one lock and persist as events before the in-memory read model is
updated, via the same fold used for replay. Side effects (message
delivery) happen at command time; replay only rebuilds state.

The clock is injected into every command; nothing here reads wall time.
"""
from __future__ import annotations

import base64
import heapq
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Iterator, Optional

from . import scheduler
from .config import DeploymentConfig
from .eventstore import EventLog, MemoryEventLog
from .model import (
    ActionKind,
    ActionStatus,
    ActionTrigger,
    Eligibility,
    Event,
    MonitoringSchedule,
    Patient,
    PatientStatus,
    SymptomReport,
    TriageCategory,
    ValidationError,
    check_eligibility,
    validate_report,
)
from .notifier import (
    GPSummary,
    MemoryGateway,
    MessageGateway,
    MissingGPContact,
    Notifier,
    OutboundMessage,
)
from .readmodel import CentreState, PatientView, replay
from .tokens import TokenError, TokenService
from .triage import classify, explain

SNAPSHOT_EVERY = 10_000


class ServiceError(Exception):
    code = "service_error"
    http_status = 400


class NotEligible(ServiceError):
    code = "not_eligible"
    http_status = 422

    def __init__(self, criteria: list[str]):
        self.criteria = criteria
        super().__init__(f"eligibility criteria not met: {', '.join(criteria)}")


class DuplicatePatient(ServiceError):
    code = "duplicate_patient"
    http_status = 409


class NotFound(ServiceError):
    code = "not_found"
    http_status = 404


class IllegalTransition(ServiceError):
    code = "illegal_transition"
    http_status = 409


@dataclass(frozen=True)
class SubmitResult:
    patient_id: str
    category: TriageCategory
    message_to_patient: str


ACKNOWLEDGEMENT = (
    "Thank you for completing your questionnaire. "
    "The Command Centre has received your answers and a clinician will review them."
)

_EPOCH = datetime.min


class CommandCentre:
    def __init__(
        self,
        config: DeploymentConfig,
        log: Optional[EventLog | MemoryEventLog] = None,
        gateway: Optional[MessageGateway] = None,
        snapshot_path: Optional[Path] = None,
        sleep: Callable[[float], None] = lambda s: None,
    ):
        self.config = config
        self.log = log if log is not None else MemoryEventLog()
        self.gateway = gateway if gateway is not None else MemoryGateway()
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self.state = CentreState()
        self.tokens = TokenService(
            monitoring_check=self._is_monitoring, ttl=config.token_ttl
        )
        self.notifier = Notifier(self.gateway, self._next_message_id, sleep=sleep)
        self._lock = threading.RLock()
        self._updates = threading.Condition(self._lock)
        # runtime wakeup queues; rebuilt from state after replay
        self._dispatch_heap: list[tuple[datetime, str]] = []
        self._overdue_heap: list[tuple[datetime, str]] = []
        # test hook: raised right after classification to prove atomicity
        self.fault_after_classify: Optional[Callable[[], None]] = None
        self._load_existing()

    # --- startup / replay ----------------------------------------------------

    def _load_existing(self) -> None:
        base = None
        if self.snapshot_path and self.snapshot_path.exists():
            snap = json.loads(self.snapshot_path.read_text("utf-8"))
            base = CentreState.from_snapshot_dict(snap)
        self.state = replay(self.log, base)
        for pid in self.state.gp_notified:
            self.notifier._gp_notified.add(pid)
        for ref in self.state.summarized_reports:
            self.notifier._summarized.add(ref)
        self._rebuild_runtime()

    def _rebuild_runtime(self) -> None:
        self._dispatch_heap.clear()
        self._overdue_heap.clear()
        for pid, view in self.state.patients.items():
            nda = view.patient.schedule.next_dispatch_at
            if view.patient.is_monitoring and nda is not None:
                heapq.heappush(self._dispatch_heap, (nda, pid))
        for did, pending in self.state.pending.items():
            if not pending.responded and not pending.overdue_flagged:
                deadline = pending.at + self.config.overdue_after
                heapq.heappush(self._overdue_heap, (deadline, did))

    # --- id generation (from replayed counters, so ids survive restarts) -----

    def _next_patient_id(self) -> str:
        return f"P{self.state.n_patients + 1:06d}"

    def _next_dispatch_id(self) -> str:
        return f"D{self.state.n_dispatches + 1:08d}"

    def _next_action_id(self) -> str:
        return f"A{self.state.n_actions + 1:06d}"

    def _next_message_id(self) -> str:
        self._message_counter = getattr(self, "_message_counter", self.state.n_messages)
        self._message_counter += 1
        return f"M{self._message_counter:08d}"

    def _is_monitoring(self, patient_id: str) -> bool:
        view = self.state.patients.get(patient_id)
        return view is not None and view.patient.is_monitoring

    # --- event plumbing -------------------------------------------------------

    def _emit(self, events: list[Event]) -> None:
        for event in events:
            self.log.append(event)
            self.state.apply(event)
        self._maybe_snapshot()
        self._updates.notify_all()

    def _event(self, patient_id: Optional[str], at: datetime, kind: str,
               payload: dict, offset: int = 0) -> Event:
        return Event(
            seq=self.state.last_seq + 1 + offset,
            patient_id=patient_id,
            at=at,
            kind=kind,
            payload=payload,
        )

    def _maybe_snapshot(self) -> None:
        if self.snapshot_path is None:
            return
        if self.state.last_seq % SNAPSHOT_EVERY == 0 and self.state.last_seq > 0:
            tmp = self.snapshot_path.with_suffix(".tmp")
            tmp.write_text(self.state.snapshot_json(), "utf-8")
            tmp.replace(self.snapshot_path)

    def _send_event(self, message: OutboundMessage, purpose: str, at: datetime,
                    offset: int) -> Event:
        state = self.notifier.send(message)
        return self._event(
            message.related_patient_id,
            at,
            "message_sent",
            {
                "message_id": message.message_id,
                "channel": message.channel,
                "recipient": message.recipient,
                "body": message.body,
                "purpose": purpose,
                "delivery_state": state,
                "attempts": message.attempts,
            },
            offset,
        )

    # --- commands ---------------------------------------------------------------

    def enroll(self, form: dict, now: datetime) -> str:
        """Create a monitored patient; returns the new patient_id."""
        with self._lock:
            external_ref = form["external_ref"]
            if external_ref in self.state.external_refs:
                raise DuplicatePatient(external_ref)
            eligibility = Eligibility(**form["eligibility"])
            if not check_eligibility(eligibility):
                raise NotEligible(eligibility.failing_criteria())
            patient_id = self._next_patient_id()
            per_day = int(form.get("reports_per_day", self.config.default_reports_per_day))
            if per_day not in (1, 2):
                raise ServiceError(f"baseline reports_per_day must be 1 or 2, got {per_day}")
            schedule = MonitoringSchedule.baseline(per_day, self.config.overdue_after)
            schedule.next_dispatch_at = scheduler.next_dispatch(
                schedule, now, self.config.anchor_hour_utc
            )
            patient = Patient(
                patient_id=patient_id,
                external_ref=external_ref,
                phone=form["phone"],
                gp_contact=form.get("gp_contact"),
                enrolled_at=now,
                eligibility=eligibility,
                schedule=schedule,
            )
            events = [
                self._event(
                    patient_id,
                    now,
                    "enrolled",
                    {
                        "external_ref": external_ref,
                        "phone": patient.phone,
                        "gp_contact": patient.gp_contact,
                        "eligibility": vars(eligibility),
                        "schedule": schedule.to_dict(),
                    },
                )
            ]
            try:
                notice = self.notifier.notify_gp_enrollment(patient)
            except MissingGPContact:
                notice = None
                events.append(
                    self._event(
                        patient_id,
                        now,
                        "action_created",
                        {
                            "action_id": self._next_action_id(),
                            "trigger": ActionTrigger.DeliveryFailure.value,
                            "kind": ActionKind.Review.value,
                            "reason": "missing GP contact; obtain and notify manually",
                        },
                        offset=1,
                    )
                )
            if notice is not None:
                events.append(self._send_event(notice, "gp_enrollment", now, offset=1))
            self._emit(events)
            heapq.heappush(self._dispatch_heap, (schedule.next_dispatch_at, patient_id))
            return patient_id

    def tick(self, now: datetime) -> dict:
        """Send due questionnaires and flag newly overdue dispatches.

        One logical driver calls this; per-patient failures become error
        events and never abort the pass.
        """
        with self._lock:
            dispatched = 0
            overdue = 0
            while self._dispatch_heap and self._dispatch_heap[0][0] <= now:
                due_at, patient_id = heapq.heappop(self._dispatch_heap)
                view = self.state.patients.get(patient_id)
                if view is None:
                    continue
                schedule = view.patient.schedule
                # stale entry after escalation / hospitalization
                if (
                    not scheduler.should_dispatch(view.patient.status, schedule, now)
                    or schedule.next_dispatch_at != due_at
                ):
                    continue
                self._dispatch_one(view, now)
                dispatched += 1
            while self._overdue_heap and self._overdue_heap[0][0] <= now:
                deadline, dispatch_id = heapq.heappop(self._overdue_heap)
                pending = self.state.pending.get(dispatch_id)
                if pending is None or pending.responded or pending.overdue_flagged:
                    continue
                if not scheduler.is_overdue(
                    pending.at, pending.responded, now, self.config.overdue_after
                ):
                    # boundary is strict: exactly +8h is not overdue yet
                    heapq.heappush(
                        self._overdue_heap, (now + timedelta(minutes=1), dispatch_id)
                    )
                    continue
                events = [
                    self._event(
                        pending.patient_id,
                        now,
                        "overdue_detected",
                        {"dispatch_id": dispatch_id, "dispatched_at": pending.at.isoformat()},
                    ),
                    self._event(
                        pending.patient_id,
                        now,
                        "action_created",
                        {
                            "action_id": self._next_action_id(),
                            "trigger": ActionTrigger.NonResponder.value,
                            "kind": ActionKind.Call.value,
                        },
                        offset=1,
                    ),
                ]
                self._emit(events)
                overdue += 1
            return {"dispatched": dispatched, "overdue_detected": overdue}

    def _dispatch_one(self, view: PatientView, now: datetime) -> None:
        patient = view.patient
        dispatch_id = self._next_dispatch_id()
        issued = self.tokens.issue(patient.patient_id, dispatch_id, now)
        link = self.config.link_for(issued.token)
        next_at = scheduler.next_dispatch(patient.schedule, now, self.config.anchor_hour_utc)
        events = [
            self._event(
                patient.patient_id,
                now,
                "dispatched",
                {
                    "dispatch_id": dispatch_id,
                    "next_dispatch_at": next_at.isoformat(),
                    "expires_at": issued.expires_at.isoformat(),
                },
            )
        ]
        try:
            sms = self.notifier.render_questionnaire_sms(patient, link, now)
            events.append(self._send_event(sms, "questionnaire", now, offset=1))
        except Exception as exc:  # per-patient failure never aborts the tick
            events.append(
                self._event(
                    patient.patient_id,
                    now,
                    "error",
                    {"code": "dispatch_render_failed", "message": str(exc)},
                    offset=1,
                )
            )
        self._emit(events)
        heapq.heappush(self._dispatch_heap, (next_at, patient.patient_id))
        heapq.heappush(self._overdue_heap, (now + self.config.overdue_after, dispatch_id))

    def questionnaire_for(self, token: str, now: datetime) -> dict:
        """The form definition behind a link; does not consume the token."""
        with self._lock:
            self.tokens.peek(token, now)
            return self.config.questionnaire.to_dict()

    def submit_report(self, token: str, raw_answers: dict, now: datetime) -> SubmitResult:
        """The full intake pipeline, atomic: redeem -> validate -> classify ->
        escalate/de-escalate -> action or reassurance -> GP summary -> events."""
        with self._lock:
            try:
                patient_id, dispatch_id = self.tokens.redeem(token, now)
            except TokenError as exc:
                self._emit([
                    self._event(None, now, "error",
                                {"code": exc.code, "message": str(exc) or exc.code})
                ])
                raise
            view = self.state.patients[patient_id]
            patient = view.patient
            try:
                report = validate_report(
                    self.config.questionnaire, raw_answers, now, patient_id
                )
            except ValidationError as exc:
                self._emit([
                    self._event(patient_id, now, "error",
                                {"code": exc.code, "message": str(exc)})
                ])
                raise
            previous = None
            if view.last_answers is not None:
                previous = SymptomReport(
                    patient_id=patient_id,
                    received_at=view.last_report_at,
                    answers=view.last_answers,
                )
            category = classify(self.config.ruleset, report, previous)
            fired = [name for name, _ in explain(self.config.ruleset, report, previous)]
            if self.fault_after_classify is not None:
                try:
                    self.fault_after_classify()
                except Exception:
                    self._emit([
                        self._event(patient_id, now, "error",
                                    {"code": "pipeline_fault", "message": "injected"})
                    ])
                    raise

            previous_category = patient.current_category
            report_ref = f"{patient_id}/{dispatch_id}"
            events = [
                self._event(
                    patient_id,
                    now,
                    "report_received",
                    {
                        "dispatch_id": dispatch_id,
                        "answers": report.answers,
                        "category": category.name,
                        "previous_category": previous_category.name,
                        "fired_rules": fired,
                        "ruleset_version": self.config.ruleset.version,
                    },
                )
            ]
            offset = 1
            if category != previous_category:
                events.append(
                    self._event(
                        patient_id,
                        now,
                        "flag_changed",
                        {
                            "from": previous_category.name,
                            "to": category.name,
                            "ruleset_version": self.config.ruleset.version,
                        },
                        offset,
                    )
                )
                offset += 1

            schedule = patient.schedule
            new_schedule = scheduler.escalate(schedule, category, self.config.escalation_factor)
            reason = "escalated"
            if new_schedule is schedule:
                recent = view.recent_categories + [category]
                new_schedule = scheduler.maybe_deescalate(
                    schedule, recent, self.config.calm_streak
                )
                reason = "deescalated"
            if new_schedule is not schedule:
                next_at = scheduler.next_dispatch(
                    new_schedule, now, self.config.anchor_hour_utc
                )
                events.append(
                    self._event(
                        patient_id,
                        now,
                        "schedule_changed",
                        {
                            "reports_per_day": new_schedule.reports_per_day,
                            "escalated": new_schedule.escalated,
                            "next_dispatch_at": next_at.isoformat(),
                            "reason": reason,
                        },
                        offset,
                    )
                )
                offset += 1
                heapq.heappush(self._dispatch_heap, (next_at, patient_id))

            actions_taken: list[str] = []
            message_body = ACKNOWLEDGEMENT
            if category >= TriageCategory.Orange:
                trigger = (
                    ActionTrigger.RedFlag
                    if category == TriageCategory.Red
                    else ActionTrigger.OrangeFlag
                )
                action_id = self._next_action_id()
                events.append(
                    self._event(
                        patient_id,
                        now,
                        "action_created",
                        {
                            "action_id": action_id,
                            "trigger": trigger.value,
                            "kind": ActionKind.Review.value,
                        },
                        offset,
                    )
                )
                offset += 1
                actions_taken.append(f"{trigger.value}:{action_id}")
            else:
                reassurance = self.notifier.render_reassurance(patient, category, now)
                events.append(self._send_event(reassurance, "reassurance", now, offset))
                offset += 1
                message_body = reassurance.body

            summary = GPSummary(
                patient_id=patient_id,
                report_at=now,
                category=category,
                category_change=category != previous_category,
                fired_rules=tuple(fired),
                actions=tuple(actions_taken),
            )
            recorded, gp_message = self.notifier.emit_gp_summary(patient, summary, report_ref)
            if recorded is not None:
                events.append(
                    self._event(
                        patient_id,
                        now,
                        "gp_summary_sent",
                        {
                            "report_ref": report_ref,
                            "category": category.name,
                            "category_change": summary.category_change,
                            "fired_rules": fired,
                            "actions": list(summary.actions),
                            "delivered": gp_message is not None,
                        },
                        offset,
                    )
                )
                offset += 1
                if gp_message is not None:
                    events.append(self._send_event(gp_message, "gp_summary", now, offset))
                    offset += 1
            self._emit(events)
            return SubmitResult(
                patient_id=patient_id,
                category=category,
                message_to_patient=message_body,
            )

    def patient_contact(self, patient_id: str, now: datetime) -> str:
        """Patient-initiated emergency contact; opens a Call action."""
        with self._lock:
            if patient_id not in self.state.patients:
                raise NotFound(patient_id)
            action_id = self._next_action_id()
            self._emit([
                self._event(
                    patient_id,
                    now,
                    "action_created",
                    {
                        "action_id": action_id,
                        "trigger": ActionTrigger.PatientInitiated.value,
                        "kind": ActionKind.Call.value,
                    },
                )
            ])
            return action_id

    def act(
        self,
        action_id: str,
        transition: str,
        now: datetime,
        kind: Optional[str] = None,
        note: Optional[str] = None,
    ) -> dict:
        """acknowledge or resolve(kind, note); transitions are Open ->
        Acknowledged -> Resolved, nothing else."""
        with self._lock:
            action = self.state.actions.get(action_id)
            if action is None:
                raise NotFound(action_id)
            if transition == "acknowledge":
                if action.status != ActionStatus.Open:
                    raise IllegalTransition(f"acknowledge from {action.status.value}")
                self._emit([
                    self._event(action.patient_id, now, "action_acknowledged",
                                {"action_id": action_id})
                ])
                return self.state.actions[action_id].to_dict()
            if transition == "resolve":
                if action.status != ActionStatus.Acknowledged:
                    raise IllegalTransition(f"resolve from {action.status.value}")
                if not note or not note.strip():
                    raise IllegalTransition("resolution requires a note")
                resolved_kind = ActionKind(kind) if kind else action.kind
                events = [
                    self._event(
                        action.patient_id,
                        now,
                        "action_resolved",
                        {"action_id": action_id, "kind": resolved_kind.value, "note": note},
                    )
                ]
                view = self.state.patients[action.patient_id]
                offset = 1
                if resolved_kind == ActionKind.IntensifyMonitoring:
                    schedule = view.patient.schedule
                    new_schedule = scheduler.force_escalate(
                        schedule, self.config.escalation_factor
                    )
                    if new_schedule is not schedule:
                        next_at = scheduler.next_dispatch(
                            new_schedule, now, self.config.anchor_hour_utc
                        )
                        events.append(
                            self._event(
                                action.patient_id,
                                now,
                                "schedule_changed",
                                {
                                    "reports_per_day": new_schedule.reports_per_day,
                                    "escalated": True,
                                    "next_dispatch_at": next_at.isoformat(),
                                    "reason": "intensify_monitoring",
                                },
                                offset,
                            )
                        )
                        offset += 1
                        heapq.heappush(self._dispatch_heap, (next_at, action.patient_id))
                elif resolved_kind == ActionKind.Hospitalize:
                    events.append(
                        self._event(
                            action.patient_id,
                            now,
                            "status_changed",
                            {"status": PatientStatus.Hospitalized.value},
                            offset,
                        )
                    )
                    offset += 1
                self._emit(events)
                return self.state.actions[action_id].to_dict()
            raise IllegalTransition(f"unknown transition: {transition}")

    def discharge(self, patient_id: str, now: datetime) -> None:
        with self._lock:
            if patient_id not in self.state.patients:
                raise NotFound(patient_id)
            self._emit([
                self._event(patient_id, now, "status_changed",
                            {"status": PatientStatus.Discharged.value})
            ])

    # --- queries ------------------------------------------------------------------

    def list_patients(
        self,
        category: Optional[str] = None,
        overdue: Optional[bool] = None,
        needs_action: Optional[bool] = None,
        search: Optional[str] = None,
        cursor: Optional[str] = None,
    ) -> dict:
        """Dashboard rows: severity desc, then oldest report first. Paged."""
        with self._lock:
            rows = []
            for view in self.state.patients.values():
                p = view.patient
                if category is not None and p.current_category.name != category:
                    continue
                if overdue is not None and p.overdue != overdue:
                    continue
                if needs_action is not None and bool(view.open_action_ids) != needs_action:
                    continue
                if search and search.lower() not in (
                    p.patient_id.lower() + " " + p.external_ref.lower()
                ):
                    continue
                rows.append(self._row(view))
            rows.sort(
                key=lambda r: (
                    -TriageCategory.from_name(r["category"]),
                    r["last_report_at"] or _EPOCH.isoformat(),
                    r["patient_id"],
                )
            )
            offset = 0
            if cursor:
                offset = int(base64.urlsafe_b64decode(cursor.encode()).decode())
            page = rows[offset : offset + self.config.page_size]
            next_cursor = None
            if offset + self.config.page_size < len(rows):
                next_cursor = base64.urlsafe_b64encode(
                    str(offset + self.config.page_size).encode()
                ).decode()
            return {"rows": page, "total": len(rows), "next_cursor": next_cursor}

    def _row(self, view: PatientView) -> dict:
        p = view.patient
        return {
            "patient_id": p.patient_id,
            "status": p.status.value,
            "category": p.current_category.name,
            "overdue": p.overdue,
            "last_report_at": (
                view.last_report_at.isoformat() if view.last_report_at else None
            ),
            "key_symptoms": {
                k: view.last_answers.get(k)
                for k in ("temperature_c", "dyspnea", "pain")
            }
            if view.last_answers
            else None,
            "open_actions": len(view.open_action_ids),
            "reports_per_day": p.schedule.reports_per_day,
            "escalated": p.schedule.escalated,
        }

    def patient_detail(self, patient_id: str) -> dict:
        """Chronological timeline, read straight off the event log."""
        with self._lock:
            view = self.state.patients.get(patient_id)
            if view is None:
                raise NotFound(patient_id)
            timeline = [
                {
                    "seq": e.seq,
                    "at": e.at.isoformat(),
                    "kind": e.kind,
                    "payload": {
                        k: v for k, v in e.payload.items() if k != "recipient"
                    },
                }
                for e in self.log.iter_events()
                if e.patient_id == patient_id
            ]
            return {
                "patient": self._row(view),
                "recent_categories": [c.name for c in view.recent_categories],
                "actions": [
                    self.state.actions[aid].to_dict()
                    for aid in sorted(
                        a.action_id
                        for a in self.state.actions.values()
                        if a.patient_id == patient_id
                    )
                ],
                "timeline": timeline,
            }

    def centre_stats(self) -> dict:
        with self._lock:
            return self.state.stats()

    def dead_letters(self) -> list[str]:
        with self._lock:
            return list(self.state.dead_letters)

    def next_wakeup(self) -> Optional[datetime]:
        """Earliest time at which tick could have work (may be early, never late)."""
        with self._lock:
            candidates = []
            if self._dispatch_heap:
                candidates.append(self._dispatch_heap[0][0])
            if self._overdue_heap:
                candidates.append(self._overdue_heap[0][0])
            return min(candidates) if candidates else None

    # --- update stream -----------------------------------------------------------

    def updates_since(self, since_seq: int = 0) -> list[dict]:
        with self._lock:
            return [
                self._feed_item(e) for e in self.log.iter_events(from_seq=since_seq)
            ]

    def wait_for_updates(self, since_seq: int, timeout: float = 5.0) -> list[dict]:
        with self._updates:
            if self.state.last_seq <= since_seq:
                self._updates.wait(timeout)
            return self.updates_since(since_seq)

    @staticmethod
    def _feed_item(event: Event) -> dict:
        payload = {k: v for k, v in event.payload.items()
                   if k not in ("recipient", "body", "answers",
                                "phone", "gp_contact")}
        return {
            "seq": event.seq,
            "at": event.at.isoformat(),
            "patient_id": event.patient_id,
            "kind": event.kind,
            "payload": payload,
        }

    def close(self) -> None:
        self.log.close()
