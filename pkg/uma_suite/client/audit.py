"""Audit records: every access grant a client obtained, kept as proof.

Records are appended to one JSON-lines file per client identity and never
rewritten. ``verify_audit`` checks a record's token against the AS key set
without any validity-window check, so an expired grant stays a valid
historical proof of authorization.
"""

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Optional

from ..clock import format_instant, from_epoch, parse_instant
from ..errors import AuditError, PolicyError, TokenError
from ..models.types import AccessGrant, Permission, UsageRequirement
from ..security.keys import KeySet
from ..security.tokens import AccessTokenClaims, decode_signed

logger = logging.getLogger(__name__)

AUDIT_SUFFIX = ".audit.jsonl"


@dataclass(frozen=True)
class AuditRecord:
    obtained_at: datetime
    as_issuer: str
    rs_origin: str
    access_token: str
    permissions: tuple[Permission, ...]
    usage_requirements: tuple[UsageRequirement, ...] = ()
    ticket_trail: tuple[str, ...] = ()

    @classmethod
    def from_grant(
        cls,
        grant: AccessGrant,
        obtained_at: datetime,
        as_issuer: str,
        rs_origin: str,
        ticket_trail: tuple[str, ...] = (),
    ) -> "AuditRecord":
        """Build a record from the grant response body; the token itself stays opaque."""
        return cls(
            obtained_at=obtained_at,
            as_issuer=as_issuer,
            rs_origin=rs_origin,
            access_token=grant.access_token,
            permissions=grant.permissions,
            usage_requirements=grant.usage_requirements,
            ticket_trail=tuple(ticket_trail),
        )

    def to_dict(self) -> dict:
        return {
            "obtained_at": format_instant(self.obtained_at),
            "as_issuer": self.as_issuer,
            "rs_origin": self.rs_origin,
            "access_token": self.access_token,
            "permissions": [p.to_dict() for p in self.permissions],
            "usage_requirements": [u.to_dict() for u in self.usage_requirements],
            "ticket_trail": list(self.ticket_trail),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AuditRecord":
        """
        Raises:
            AuditError: ``malformed-record`` on missing or invalid fields.
        """
        try:
            return cls(
                obtained_at=parse_instant(data["obtained_at"]),
                as_issuer=data["as_issuer"],
                rs_origin=data["rs_origin"],
                access_token=data["access_token"],
                permissions=tuple(Permission.from_dict(p) for p in data["permissions"]),
                usage_requirements=tuple(UsageRequirement.from_dict(u) for u in data.get("usage_requirements", [])),
                ticket_trail=tuple(data.get("ticket_trail", [])),
            )
        except (KeyError, TypeError, ValueError, PolicyError) as e:
            raise AuditError(f"malformed audit record: {e}") from e


def load_records(path: Path) -> list[AuditRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise AuditError(f"{path}:{number}: not JSON: {e}") from e
            records.append(AuditRecord.from_dict(data))
    return records


class AuditStore:
    """Append-only audit file of one client identity."""

    def __init__(self, directory: Path, identity: str = "default"):
        self.directory = Path(directory)
        self.identity = identity
        self._lock = threading.Lock()

    @property
    def path(self) -> Path:
        return self.directory / f"{self.identity}{AUDIT_SUFFIX}"

    def append(self, record: AuditRecord) -> None:
        line = json.dumps(record.to_dict(), sort_keys=True) + "\n"
        self.directory.mkdir(parents=True, exist_ok=True)
        with self._lock, open(self.path, "a", encoding="utf-8") as f:
            f.write(line)
            f.flush()
            os.fsync(f.fileno())
        logger.info(f"Audit record stored for {[p.resource_id for p in record.permissions]}")

    def records(self) -> list[AuditRecord]:
        if not self.path.exists():
            return []
        return load_records(self.path)


@dataclass(frozen=True)
class AuditReport:
    signature_valid: bool
    window: Optional[tuple[datetime, datetime]] = None
    permissions: tuple[Permission, ...] = ()
    usage_requirements: tuple[UsageRequirement, ...] = ()
    mismatches: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.signature_valid and not self.mismatches

    def to_dict(self) -> dict:
        return {
            "signature_valid": self.signature_valid,
            "window": [format_instant(t) for t in self.window] if self.window else None,
            "permissions": [p.to_dict() for p in self.permissions],
            "usage_requirements": [u.to_dict() for u in self.usage_requirements],
            "mismatches": list(self.mismatches),
        }


def verify_audit(record: AuditRecord, as_keys: KeySet) -> AuditReport:
    """Check a record's token signature and compare the record with the token.

    The token's time window is reported, not enforced.
    """
    try:
        claims = AccessTokenClaims.from_payload(decode_signed(record.access_token, as_keys))
    except TokenError as e:
        logger.warning(f"Audit record token does not verify: {e.code}")
        return AuditReport(signature_valid=False)

    mismatches = []
    if claims.iss != record.as_issuer:
        mismatches.append("as_issuer")
    if record.rs_origin and record.rs_origin not in claims.aud:
        mismatches.append("rs_origin")
    if set(claims.permissions) != set(record.permissions):
        mismatches.append("permissions")
    if set(claims.usage) != set(record.usage_requirements):
        mismatches.append("usage_requirements")

    return AuditReport(
        signature_valid=True,
        window=(from_epoch(claims.iat), from_epoch(claims.exp)),
        permissions=claims.permissions,
        usage_requirements=claims.usage,
        mismatches=tuple(mismatches),
    )
