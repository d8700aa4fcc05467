"""Outbound communications: questionnaire links, automatic reassurance,
GP enrollment notices and per-report GP summaries.

Everything goes through a MessageGateway; the shipped implementations
write JSON lines to a file or to stdout. Real carrier integrations are a
deployment concern and deliberately absent.
"""
from __future__ import annotations

import json
import sys
import threading
import time as _time
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Optional, Protocol

from .model import Patient, TriageCategory

SMS_BODY_LIMIT = 480
RETRY_BACKOFF_SECONDS = (1.0, 4.0)  # waits before attempt 2 and 3
MAX_ATTEMPTS = 3


class NotifyError(Exception):
    code = "notify_error"


class BodyTooLong(NotifyError):
    code = "body_too_long"


class MissingGPContact(NotifyError):
    code = "missing_gp_contact"


@dataclass
class OutboundMessage:
    message_id: str
    channel: str  # "SMS" | "GPChannel"
    recipient: str
    body: str
    related_patient_id: str
    created_at: datetime
    delivery_state: str = "Pending"  # Pending -> Sent | Failed
    attempts: int = 0

    def to_dict(self) -> dict:
        return {
            "message_id": self.message_id,
            "channel": self.channel,
            "recipient": self.recipient,
            "body": self.body,
            "created_at": self.created_at.isoformat(),
            "delivery_state": self.delivery_state,
        }


@dataclass(frozen=True)
class GPSummary:
    patient_id: str
    report_at: datetime
    category: TriageCategory
    category_change: bool
    fired_rules: tuple[str, ...]
    actions: tuple[str, ...]

    def body(self) -> str:
        parts = [
            f"Patient {self.patient_id} report {self.report_at.isoformat()}:",
            f"flag {self.category.name}"
            + (" (changed)" if self.category_change else " (unchanged)"),
            "rules: " + (", ".join(self.fired_rules) or "none"),
        ]
        if self.actions:
            parts.append("actions: " + ", ".join(self.actions))
        return " ".join(parts)


class MessageGateway(Protocol):
    def deliver(self, message: OutboundMessage) -> None:
        """Raise on delivery failure."""


class FileGateway:
    """Appends one JSON object per line; consumed by tests and the simulator."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        self._fh = open(path, "a", encoding="utf-8")

    def deliver(self, message: OutboundMessage) -> None:
        line = json.dumps(message.to_dict(), ensure_ascii=False)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()


class StdoutGateway:
    def deliver(self, message: OutboundMessage) -> None:
        sys.stdout.write(json.dumps(message.to_dict(), ensure_ascii=False) + "\n")


class MemoryGateway:
    """Collects messages in memory; used by fast in-process simulation runs."""

    def __init__(self):
        self.messages: list[OutboundMessage] = []

    def deliver(self, message: OutboundMessage) -> None:
        self.messages.append(message)


class CallbackGateway:
    """Hands each delivered message to a callable; keeps nothing."""

    def __init__(self, on_message: Callable[[OutboundMessage], None]):
        self._on_message = on_message

    def deliver(self, message: OutboundMessage) -> None:
        self._on_message(message)


REASSURANCE = {
    TriageCategory.Green: (
        "Thank you for completing your questionnaire. Your answers show no "
        "warning signs. Please keep completing your regular questionnaires."
    ),
    TriageCategory.Yellow: (
        "Thank you for completing your questionnaire. Your condition appears "
        "stable. Please keep completing your regular questionnaires."
    ),
}


def auto_reassure(category: TriageCategory) -> Optional[str]:
    """Reassurance + reminder text for Green/Yellow; none when humans take over."""
    return REASSURANCE.get(category)


class Notifier:
    def __init__(
        self,
        gateway: MessageGateway,
        id_factory: Callable[[], str],
        sleep: Callable[[float], None] = _time.sleep,
    ):
        self._gateway = gateway
        self._id_factory = id_factory
        self._sleep = sleep
        self.dead_letters: list[OutboundMessage] = []
        self._gp_notified: set[str] = set()
        self._summarized: set[str] = set()
        self._lock = threading.Lock()

    # --- rendering -------------------------------------------------------

    def render_questionnaire_sms(
        self, patient: Patient, link: str, created_at: datetime
    ) -> OutboundMessage:
        body = (
            "Time for your health check. Please fill in your questionnaire: "
            f"{link} The link works for 24 hours and can be used once."
        )
        if len(body) > SMS_BODY_LIMIT:
            raise BodyTooLong(f"SMS body is {len(body)} chars (limit {SMS_BODY_LIMIT})")
        return self._message("SMS", patient.phone, body, patient.patient_id, created_at)

    def render_reassurance(self, patient: Patient, category: TriageCategory,
                           created_at: datetime) -> Optional[OutboundMessage]:
        body = auto_reassure(category)
        if body is None:
            return None
        return self._message("SMS", patient.phone, body, patient.patient_id, created_at)

    def notify_gp_enrollment(self, patient: Patient) -> Optional[OutboundMessage]:
        """One enrollment notice per patient; repeat calls are no-ops."""
        with self._lock:
            if patient.patient_id in self._gp_notified:
                return None
            if not patient.gp_contact:
                raise MissingGPContact(patient.patient_id)
            self._gp_notified.add(patient.patient_id)
        body = (
            f"Your patient {patient.patient_id} has been confirmed with Covid-19 "
            "and is now being monitored at home by the Command Centre."
        )
        return self._message(
            "GPChannel", patient.gp_contact, body, patient.patient_id, patient.enrolled_at
        )

    def emit_gp_summary(
        self,
        patient: Patient,
        summary: GPSummary,
        report_ref: str,
    ) -> tuple[Optional[GPSummary], Optional[OutboundMessage]]:
        """At most one summary per accepted report, keyed by report_ref.

        Returns (summary, message); message is None and the summary is still
        recorded when the GP contact is missing (delivery degrades, the
        record does not).
        """
        with self._lock:
            if report_ref in self._summarized:
                return None, None
            self._summarized.add(report_ref)
        if not patient.gp_contact:
            return summary, None
        message = self._message(
            "GPChannel", patient.gp_contact, summary.body(), patient.patient_id,
            summary.report_at,
        )
        return summary, message

    # --- delivery --------------------------------------------------------

    def send(self, message: OutboundMessage) -> str:
        """Deliver with up to 3 attempts and exponential backoff.

        Gateway errors never propagate; they end up in delivery_state and,
        on exhaustion, the dead-letter list.
        """
        assert message.delivery_state == "Pending"
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                self._sleep(RETRY_BACKOFF_SECONDS[attempt - 1])
            message.attempts = attempt + 1
            try:
                message.delivery_state = "Sent"
                self._gateway.deliver(message)
                return "Sent"
            except Exception:
                message.delivery_state = "Pending"
        message.delivery_state = "Failed"
        try:
            self._gateway.deliver(message)  # best-effort trace of the failure
        except Exception:
            pass
        self.dead_letters.append(message)
        return "Failed"

    def _message(self, channel: str, recipient: str, body: str,
                 patient_id: str, created_at: datetime) -> OutboundMessage:
        return OutboundMessage(
            message_id=self._id_factory(),
            channel=channel,
            recipient=recipient,
            body=body,
            related_patient_id=patient_id,
            created_at=created_at,
        )
