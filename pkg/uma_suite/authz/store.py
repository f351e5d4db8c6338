"""Registration and ticket stores of the authorization server.

Both stores are in-memory and guard every check-and-mutate sequence with a
lock: a ticket is consumed by exactly one request, and of two racing
registrations of the same resource exactly one wins.
"""

import logging
import secrets
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timedelta
from typing import Optional

from ..errors import OAuthError
from ..models.types import Action

logger = logging.getLogger(__name__)


def new_opaque_id() -> str:
    """256 bits of randomness, URL-safe."""
    return secrets.token_urlsafe(32)


@dataclass(frozen=True)
class ResourceRegistration:
    """A resource set registered by a resource server."""

    id: str
    rs_origin: str
    resource_id: str
    scopes: tuple[Action, ...]
    name: Optional[str] = None
    resource_type: Optional[str] = None

    def to_dict(self) -> dict:
        body = {
            "_id": self.id,
            "resource_id": self.resource_id,
            "resource_scopes": [s.value for s in self.scopes],
        }
        if self.name:
            body["name"] = self.name
        if self.resource_type:
            body["type"] = self.resource_type
        return body


@dataclass(frozen=True)
class RequestedPermission:
    registration_id: str
    scopes: tuple[Action, ...]
    purpose: Optional[str] = None


@dataclass(frozen=True)
class PermissionTicket:
    value: str
    issued_at: datetime
    requested: tuple[RequestedPermission, ...]
    ttl_seconds: int = 300
    round: int = 0

    def expired(self, now: datetime) -> bool:
        return now >= self.issued_at + timedelta(seconds=self.ttl_seconds)


class RegistrationStore:
    """Resource registrations keyed by id and by (rs_origin, resource_id)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._by_id: dict[str, ResourceRegistration] = {}
        self._by_resource: dict[tuple[str, str], str] = {}

    def add(
        self,
        rs_origin: str,
        resource_id: str,
        scopes: tuple[Action, ...],
        name: Optional[str] = None,
        resource_type: Optional[str] = None,
    ) -> ResourceRegistration:
        """Insert a registration.

        Raises:
            OAuthError: 409 when the RS already registered this resource.
        """
        with self._lock:
            key = (rs_origin, resource_id)
            if key in self._by_resource:
                raise OAuthError("conflict", f"{resource_id} is already registered", status=409)
            registration = ResourceRegistration(
                id=new_opaque_id(),
                rs_origin=rs_origin,
                resource_id=resource_id,
                scopes=scopes,
                name=name,
                resource_type=resource_type,
            )
            self._by_id[registration.id] = registration
            self._by_resource[key] = registration.id
        logger.info(f"Registered {resource_id} from {rs_origin} as {registration.id[:12]}")
        return registration

    def update(
        self,
        registration_id: str,
        scopes: tuple[Action, ...],
        name: Optional[str] = None,
        resource_type: Optional[str] = None,
    ) -> ResourceRegistration:
        with self._lock:
            current = self._by_id[registration_id]
            updated = replace(current, scopes=scopes, name=name, resource_type=resource_type)
            self._by_id[registration_id] = updated
        return updated

    def delete(self, registration_id: str) -> Optional[ResourceRegistration]:
        with self._lock:
            registration = self._by_id.pop(registration_id, None)
            if registration:
                self._by_resource.pop((registration.rs_origin, registration.resource_id), None)
        return registration

    def get(self, registration_id: str) -> Optional[ResourceRegistration]:
        return self._by_id.get(registration_id)

    def find(self, rs_origin: str, resource_id: str) -> Optional[ResourceRegistration]:
        registration_id = self._by_resource.get((rs_origin, resource_id))
        return self._by_id.get(registration_id) if registration_id else None

    def by_resource_id(self, resource_id: str) -> list[ResourceRegistration]:
        return [r for r in self._snapshot() if r.resource_id == resource_id]

    def by_type(self, resource_type: str) -> list[ResourceRegistration]:
        return [r for r in self._snapshot() if r.resource_type == resource_type]

    def owned_by(self, rs_origin: str) -> list[ResourceRegistration]:
        return [r for r in self._snapshot() if r.rs_origin == rs_origin]

    def _snapshot(self) -> list[ResourceRegistration]:
        with self._lock:
            return sorted(self._by_id.values(), key=lambda r: (r.rs_origin, r.resource_id))


class TicketStore:
    """Live permission tickets; every ticket is consumed at most once."""

    def __init__(self, ttl_seconds: int = 300):
        self.ttl_seconds = ttl_seconds
        self._lock = threading.Lock()
        self._tickets: dict[str, PermissionTicket] = {}

    def issue(
        self, requested: tuple[RequestedPermission, ...], now: datetime, round: int = 0
    ) -> PermissionTicket:
        ticket = PermissionTicket(
            value=new_opaque_id(),
            issued_at=now,
            requested=requested,
            ttl_seconds=self.ttl_seconds,
            round=round,
        )
        with self._lock:
            self._purge_expired(now)
            self._tickets[ticket.value] = ticket
        return ticket

    def _purge_expired(self, now: datetime) -> int:
        """Drop expired tickets from the front; caller holds the lock.

        All tickets share one TTL, so insertion order is expiry order.
        """
        purged = 0
        while self._tickets:
            oldest = next(iter(self._tickets.values()))
            if not oldest.expired(now):
                break
            del self._tickets[oldest.value]
            purged += 1
        if purged:
            logger.debug(f"Purged {purged} expired tickets")
        return purged

    def consume(self, value: str, now: datetime) -> Optional[PermissionTicket]:
        """Remove and return a live ticket; None if unknown, replayed or expired."""
        with self._lock:
            ticket = self._tickets.pop(value, None)
        if ticket is None or ticket.expired(now):
            return None
        return ticket

    def invalidate_registration(self, registration_id: str) -> int:
        with self._lock:
            doomed = [
                value for value, ticket in self._tickets.items()
                if any(p.registration_id == registration_id for p in ticket.requested)
            ]
            for value in doomed:
                del self._tickets[value]
        return len(doomed)

    def __len__(self) -> int:
        return len(self._tickets)
