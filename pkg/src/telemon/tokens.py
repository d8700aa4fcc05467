"""Secret, no-login, 24h, single-use questionnaire link tokens.

Tokens are random handles (256 bits, URL-safe), never encodings of patient
data, and are stored hashed; the raw value exists only in the outbound
message. Redemption is an atomic test-and-set, so concurrent redeems of
the same token succeed exactly once.
"""
from __future__ import annotations

import hashlib
import secrets
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Callable, Optional

TOKEN_TTL = timedelta(hours=24)


class TokenError(Exception):
    code = "token_error"


class UnknownToken(TokenError):
    code = "token_unknown"


class ExpiredToken(TokenError):
    code = "token_expired"


class ConsumedToken(TokenError):
    code = "token_consumed"


class PatientNotMonitoring(TokenError):
    code = "patient_not_monitoring"


def _hash(token: str) -> str:
    return hashlib.sha256(token.encode("ascii")).hexdigest()


@dataclass
class TokenRecord:
    token_hash: str
    patient_id: str
    dispatch_id: str
    issued_at: datetime
    expires_at: datetime
    consumed: bool = False


@dataclass(frozen=True)
class IssuedToken:
    token: str  # raw secret; not retained by the store
    patient_id: str
    dispatch_id: str
    issued_at: datetime
    expires_at: datetime


class TokenService:
    """In-memory store of hashed link tokens.

    `monitoring_check(patient_id) -> bool` gates issuance on lifecycle.
    """

    def __init__(
        self,
        monitoring_check: Optional[Callable[[str], bool]] = None,
        ttl: timedelta = TOKEN_TTL,
    ):
        self._records: dict[str, TokenRecord] = {}
        self._lock = threading.Lock()
        self._monitoring_check = monitoring_check
        self._ttl = ttl

    def issue(self, patient_id: str, dispatch_id: str, now: datetime) -> IssuedToken:
        if self._monitoring_check is not None and not self._monitoring_check(patient_id):
            raise PatientNotMonitoring(patient_id)
        while True:
            raw = secrets.token_urlsafe(32)
            key = _hash(raw)
            with self._lock:
                if key in self._records:  # astronomically unlikely
                    continue
                self._records[key] = TokenRecord(
                    token_hash=key,
                    patient_id=patient_id,
                    dispatch_id=dispatch_id,
                    issued_at=now,
                    expires_at=now + self._ttl,
                )
            return IssuedToken(
                token=raw,
                patient_id=patient_id,
                dispatch_id=dispatch_id,
                issued_at=now,
                expires_at=now + self._ttl,
            )

    def peek(self, token: str, now: datetime) -> TokenRecord:
        """Validate without consuming (serves the questionnaire form page)."""
        record = self._records.get(_hash(token))
        if record is None:
            raise UnknownToken()
        if now > record.expires_at:
            raise ExpiredToken()
        if record.consumed:
            raise ConsumedToken()
        return record

    def redeem(self, token: str, now: datetime) -> tuple[str, str]:
        """Consume the token; expiry boundary is inclusive (exactly +24h is valid)."""
        key = _hash(token)
        with self._lock:
            record = self._records.get(key)
            if record is None:
                raise UnknownToken()
            if now > record.expires_at:
                raise ExpiredToken()
            if record.consumed:
                raise ConsumedToken()
            record.consumed = True
        return record.patient_id, record.dispatch_id

    def __len__(self) -> int:
        return len(self._records)
