"""Shared wire types."""

from .types import (
    ALL_SCOPES,
    OIDC_FORMAT,
    UMA_TICKET_GRANT,
    VC_FORMAT,
    AccessGrant,
    Action,
    ClaimRequirement,
    ClaimToken,
    Constraint,
    Permission,
    PermissionDescriptor,
    RequirementKind,
    TimeWindow,
    UsageRequirement,
    VerifiedClaim,
)

__all__ = [
    "ALL_SCOPES",
    "OIDC_FORMAT",
    "UMA_TICKET_GRANT",
    "VC_FORMAT",
    "AccessGrant",
    "Action",
    "ClaimRequirement",
    "ClaimToken",
    "Constraint",
    "Permission",
    "PermissionDescriptor",
    "RequirementKind",
    "TimeWindow",
    "UsageRequirement",
    "VerifiedClaim",
]
