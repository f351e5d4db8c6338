"""Wire-level data types shared by the AS, the RS and the client.

Everything here is an immutable value with a ``to_dict``/``from_dict`` pair
matching the JSON shapes exchanged on the wire.
"""

import json
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Optional

from ..clock import format_instant, parse_instant
from ..errors import PolicyError

# Claim token format URIs
OIDC_FORMAT = "https://openid.net/specs/openid-connect-core-1_0.html#IDToken"
VC_FORMAT = "urn:uma-suite:vc+jwt"  # suite-defined, not a registered URI

UMA_TICKET_GRANT = "urn:ietf:params:oauth:grant-type:uma-ticket"


class Action(str, Enum):
    """Policy actions; identical to the scopes registered at the AS."""

    READ = "read"
    APPEND = "append"
    WRITE = "write"
    DELETE = "delete"

    @classmethod
    def parse(cls, value: Any) -> "Action":
        try:
            return cls(value)
        except ValueError:
            raise PolicyError(f"unknown action: {value!r}", code="unknown-action") from None


ALL_SCOPES: tuple[Action, ...] = tuple(Action)


@dataclass(frozen=True)
class TimeWindow:
    """Half-open interval [not_before, not_after)."""

    not_before: datetime
    not_after: datetime

    def __post_init__(self):
        if self.not_before >= self.not_after:
            raise PolicyError(
                f"window notBefore {self.not_before} is not before notAfter {self.not_after}",
                code="invalid-window",
            )

    def contains(self, instant: datetime) -> bool:
        return self.not_before <= instant < self.not_after


@dataclass(frozen=True)
class Constraint:
    """Exactly one of a temporal window or a purpose IRI."""

    window: Optional[TimeWindow] = None
    purpose: Optional[str] = None

    def __post_init__(self):
        if (self.window is None) == (self.purpose is None):
            raise PolicyError(
                "constraint must carry exactly one of window, purpose",
                code="malformed-document",
            )

    @property
    def kind(self) -> "RequirementKind":
        return RequirementKind.TEMPORAL if self.window else RequirementKind.PURPOSE

    def holds(self, now: datetime, purpose: Optional[str]) -> bool:
        if self.window is not None:
            return self.window.contains(now)
        return purpose == self.purpose

    def to_dict(self) -> dict:
        if self.window is not None:
            return {
                "window": {
                    "notBefore": format_instant(self.window.not_before),
                    "notAfter": format_instant(self.window.not_after),
                }
            }
        return {"purpose": self.purpose}

    @classmethod
    def from_dict(cls, data: Any) -> "Constraint":
        if not isinstance(data, dict) or len(data) != 1:
            raise PolicyError(f"constraint must have exactly one key: {data!r}")
        if "window" in data:
            window = data["window"]
            if not isinstance(window, dict) or set(window) != {"notBefore", "notAfter"}:
                raise PolicyError(f"window needs notBefore and notAfter: {window!r}")
            try:
                not_before = parse_instant(window["notBefore"])
                not_after = parse_instant(window["notAfter"])
            except (TypeError, ValueError) as e:
                raise PolicyError(f"bad window timestamp: {e}") from e
            return cls(window=TimeWindow(not_before, not_after))
        if "purpose" in data:
            purpose = data["purpose"]
            if not isinstance(purpose, str) or not purpose:
                raise PolicyError(f"purpose must be an IRI: {purpose!r}")
            return cls(purpose=purpose)
        raise PolicyError(f"unknown constraint kind: {sorted(data)}")


class RequirementKind(str, Enum):
    TEMPORAL = "temporal"
    PURPOSE = "purpose"


@dataclass(frozen=True)
class UsageRequirement:
    """A satisfied constraint of a granting rule, returned with the grant."""

    kind: RequirementKind
    detail: Constraint

    @classmethod
    def of(cls, constraint: Constraint) -> "UsageRequirement":
        return cls(kind=constraint.kind, detail=constraint)

    def sort_key(self) -> tuple[str, str]:
        return (self.kind.value, json.dumps(self.detail.to_dict(), sort_keys=True))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "detail": self.detail.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "UsageRequirement":
        detail = Constraint.from_dict(data["detail"])
        kind = RequirementKind(data["kind"])
        if kind != detail.kind:
            raise PolicyError(f"usage requirement kind {kind.value} does not match its detail")
        return cls(kind=kind, detail=detail)


@dataclass(frozen=True)
class ClaimRequirement:
    """A claim the AS still needs before it can grant."""

    claim_type: str
    accepted_formats: tuple[str, ...]
    hint: Optional[str] = None

    def to_dict(self) -> dict:
        body = {"claim_type": self.claim_type, "claim_token_format": list(self.accepted_formats)}
        if self.hint:
            body["hint"] = self.hint
        return body

    @classmethod
    def from_dict(cls, data: dict) -> "ClaimRequirement":
        return cls(
            claim_type=data["claim_type"],
            accepted_formats=tuple(data.get("claim_token_format") or ()),
            hint=data.get("hint"),
        )


@dataclass(frozen=True)
class VerifiedClaim:
    """A claim extracted from a claim token whose signature and issuer checked out."""

    claim_type: str
    value: str
    issuer: str
    format: str

    def __post_init__(self):
        if not (self.claim_type and self.value and self.issuer and self.format):
            raise ValueError("verified claim fields must be non-empty")


@dataclass(frozen=True)
class ClaimToken:
    """Pushed claim material as sent in ``claim_token``/``claim_token_format``."""

    format: str
    raw: str


@dataclass(frozen=True)
class Permission:
    """Scopes granted (or requested) on one resource IRI."""

    resource_id: str
    scopes: tuple[Action, ...]

    def covers(self, resource_id: str, scope: Action) -> bool:
        return self.resource_id == resource_id and scope in self.scopes

    def to_dict(self) -> dict:
        return {"resource_id": self.resource_id, "resource_scopes": [s.value for s in self.scopes]}

    @classmethod
    def from_dict(cls, data: dict) -> "Permission":
        return cls(
            resource_id=data["resource_id"],
            scopes=tuple(Action.parse(s) for s in data["resource_scopes"]),
        )


@dataclass(frozen=True)
class AccessGrant:
    """Successful token response: the grant in context."""

    access_token: str
    expires_in: int
    permissions: tuple[Permission, ...]
    usage_requirements: tuple[UsageRequirement, ...] = ()
    token_type: str = "Bearer"

    def to_dict(self) -> dict:
        return {
            "access_token": self.access_token,
            "token_type": self.token_type,
            "expires_in": self.expires_in,
            "permissions": [p.to_dict() for p in self.permissions],
            "usage_requirements": [u.to_dict() for u in self.usage_requirements],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AccessGrant":
        return cls(
            access_token=data["access_token"],
            token_type=data.get("token_type", "Bearer"),
            expires_in=int(data["expires_in"]),
            permissions=tuple(Permission.from_dict(p) for p in data["permissions"]),
            usage_requirements=tuple(
                UsageRequirement.from_dict(u) for u in data.get("usage_requirements", [])
            ),
        )


@dataclass(frozen=True)
class PermissionDescriptor:
    """Ticketless request entry: a resource IRI or a resource type, plus scopes."""

    scopes: tuple[Action, ...]
    resource_id: Optional[str] = None
    resource_type: Optional[str] = None
    purpose: Optional[str] = None

    def __post_init__(self):
        if (self.resource_id is None) == (self.resource_type is None):
            raise ValueError("descriptor needs exactly one of resource_id, resource_type")
        if not self.scopes:
            raise ValueError("descriptor needs at least one scope")

    def to_dict(self) -> dict:
        body: dict = {"resource_scopes": [s.value for s in self.scopes]}
        if self.resource_id is not None:
            body["resource_id"] = self.resource_id
        else:
            body["resource_type"] = self.resource_type
        if self.purpose:
            body["purpose"] = self.purpose
        return body

    @classmethod
    def from_dict(cls, data: dict) -> "PermissionDescriptor":
        return cls(
            scopes=tuple(Action.parse(s) for s in data.get("resource_scopes", [])),
            resource_id=data.get("resource_id"),
            resource_type=data.get("resource_type"),
            purpose=data.get("purpose"),
        )

