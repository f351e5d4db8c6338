"""Policy profile: documents, rules, matchers, requests and decisions."""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union
from urllib.parse import urlparse

from ..errors import PolicyError
from ..models.types import Action, ClaimRequirement, Constraint, UsageRequirement, VerifiedClaim


def is_absolute_iri(value: object) -> bool:
    if not isinstance(value, str) or not value:
        return False
    parsed = urlparse(value)
    return bool(parsed.scheme) and bool(parsed.netloc or parsed.path)


@dataclass(frozen=True)
class TargetMatcher:
    """Exactly one of an exact resource IRI, a resource type, or an IRI prefix."""

    resource: Optional[str] = None
    resource_type: Optional[str] = None
    resource_prefix: Optional[str] = None

    def __post_init__(self):
        populated = [v for v in (self.resource, self.resource_type, self.resource_prefix) if v]
        if len(populated) != 1:
            raise PolicyError("target must carry exactly one matcher", code="invalid-matcher")
        if self.resource_prefix is not None and not self.resource_prefix.endswith("/"):
            raise PolicyError(
                f"resourcePrefix must end with '/': {self.resource_prefix}",
                code="invalid-matcher",
            )

    def matches(self, request: "AccessRequest") -> bool:
        if self.resource is not None:
            return request.resource_id == self.resource
        if self.resource_type is not None:
            return request.resource_type == self.resource_type
        return request.resource_id.startswith(self.resource_prefix)


@dataclass(frozen=True)
class ClaimMatcher:
    """A claim a party must prove, issued by one trusted issuer."""

    claim_type: str
    expected_value: str
    accepted_formats: tuple[str, ...]
    trusted_issuer: str

    def __post_init__(self):
        if not (self.claim_type and self.expected_value and self.trusted_issuer):
            raise PolicyError("claim matcher fields must be non-empty", code="invalid-matcher")
        if not self.accepted_formats:
            raise PolicyError("claim matcher needs at least one format", code="invalid-matcher")

    def satisfied_by(self, claim: VerifiedClaim) -> bool:
        return (
            claim.claim_type == self.claim_type
            and claim.value == self.expected_value
            and claim.issuer == self.trusted_issuer
            and claim.format in self.accepted_formats
        )

    def requirement(self) -> ClaimRequirement:
        return ClaimRequirement(
            claim_type=f"{self.claim_type}:{self.expected_value}",
            accepted_formats=self.accepted_formats,
            hint=f"present a '{self.claim_type}' claim with value '{self.expected_value}'",
        )


@dataclass(frozen=True)
class PartyMatcher:
    """Exactly one of ``anyone``, a WebID, or a claim requirement."""

    anyone: bool = False
    webid: Optional[str] = None
    claim: Optional[ClaimMatcher] = None

    def __post_init__(self):
        populated = sum((self.anyone, self.webid is not None, self.claim is not None))
        if populated != 1:
            raise PolicyError("assignee must carry exactly one matcher", code="invalid-matcher")

    def matches(self, claims: tuple[VerifiedClaim, ...]) -> bool:
        if self.anyone:
            return True
        if self.webid is not None:
            return any(c.claim_type == "webid" and c.value == self.webid for c in claims)
        return any(self.claim.satisfied_by(c) for c in claims)


@dataclass(frozen=True)
class Rule:
    target: TargetMatcher
    action: Action
    assignee: PartyMatcher
    constraints: tuple[Constraint, ...] = ()

    def applies_to(self, request: "AccessRequest") -> bool:
        return self.action == request.action and self.target.matches(request)

    def constraints_hold(self, request: "AccessRequest", now) -> bool:
        return all(c.holds(now, request.purpose) for c in self.constraints)


@dataclass(frozen=True)
class PolicyDocument:
    uid: str
    permissions: tuple[Rule, ...] = ()
    prohibitions: tuple[Rule, ...] = ()

    def __post_init__(self):
        if not is_absolute_iri(self.uid):
            raise PolicyError(f"policy uid must be an absolute IRI: {self.uid!r}")
        if not self.permissions and not self.prohibitions:
            raise PolicyError(f"policy {self.uid} has no rules")


@dataclass(frozen=True)
class AccessRequest:
    resource_id: str
    action: Action
    resource_type: Optional[str] = None
    purpose: Optional[str] = None

    def __post_init__(self):
        if not is_absolute_iri(self.resource_id):
            raise ValueError(f"resource id must be absolute: {self.resource_id!r}")


class DenyReason(str, Enum):
    NO_MATCHING_RULE = "no-matching-rule"
    PROHIBITED = "prohibited"
    CONSTRAINT_FAILED = "constraint-failed"


@dataclass(frozen=True)
class Grant:
    granted_action: Action
    usage_requirements: tuple[UsageRequirement, ...] = ()


@dataclass(frozen=True)
class Deny:
    reason: DenyReason


@dataclass(frozen=True)
class NeedClaims:
    required: tuple[ClaimRequirement, ...]

    def __post_init__(self):
        if not self.required:
            raise ValueError("NeedClaims requires at least one claim requirement")


Decision = Union[Grant, Deny, NeedClaims]
