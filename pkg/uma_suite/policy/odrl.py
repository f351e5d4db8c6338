"""ODRL-profile policy evaluation.

Decision procedure, over ALL applicable rules (no first-match):

1. permissions whose target and action match the request;
2. prohibitions whose target and action match the request;
3. a prohibition whose assignee matches and whose constraints hold -> Deny(prohibited);
4. a permission whose assignee matches and whose constraints hold -> Grant;
5. a permission whose constraints hold and whose only failure is an unmet
   claim matcher -> NeedClaims;
6. Deny(no-matching-rule) when nothing matched target+action,
   Deny(constraint-failed) otherwise.
"""

import logging
from datetime import datetime
from typing import Optional, Sequence

from ..models.types import Action, UsageRequirement, VerifiedClaim
from .base import PolicyEngine
from .model import (
    AccessRequest,
    Decision,
    Deny,
    DenyReason,
    Grant,
    NeedClaims,
    PolicyDocument,
)
from .store import PolicyStore

logger = logging.getLogger(__name__)


def evaluate(
    request: AccessRequest,
    claims: Sequence[VerifiedClaim],
    policies: Sequence[PolicyDocument],
    now: datetime,
) -> Decision:
    """Evaluate a request against a policy set. Pure and order-independent."""
    claims = tuple(claims)
    permissions = [r for p in policies for r in p.permissions if r.applies_to(request)]
    prohibitions = [r for p in policies for r in p.prohibitions if r.applies_to(request)]

    for rule in prohibitions:
        if rule.assignee.matches(claims) and rule.constraints_hold(request, now):
            return Deny(DenyReason.PROHIBITED)

    granting = [
        r for r in permissions
        if r.assignee.matches(claims) and r.constraints_hold(request, now)
    ]
    if granting:
        requirements = {UsageRequirement.of(c) for r in granting for c in r.constraints}
        return Grant(
            granted_action=request.action,
            usage_requirements=tuple(sorted(requirements, key=UsageRequirement.sort_key)),
        )

    missing = {
        r.assignee.claim.requirement()
        for r in permissions
        if r.assignee.claim is not None and r.constraints_hold(request, now)
    }
    if missing:
        return NeedClaims(
            required=tuple(sorted(missing, key=lambda m: (m.claim_type, m.accepted_formats)))
        )

    if not permissions and not prohibitions:
        return Deny(DenyReason.NO_MATCHING_RULE)
    return Deny(DenyReason.CONSTRAINT_FAILED)


def is_public(
    resource_id: str,
    resource_type: Optional[str],
    action: Action,
    policies: Sequence[PolicyDocument],
    now: datetime,
) -> bool:
    """True iff an anonymous request without purpose would be granted."""
    request = AccessRequest(resource_id=resource_id, resource_type=resource_type, action=action)
    return isinstance(evaluate(request, (), policies, now), Grant)


class OdrlPolicyEngine(PolicyEngine):
    """PolicyEngine over the policies of a PolicyStore.

    Example:
        store = PolicyStore.from_directory(Path("./policies"))
        engine = OdrlPolicyEngine(store)
        decision = engine.evaluate(request, claims, now)
    """

    def __init__(self, store: PolicyStore):
        self.store = store

    def evaluate(
        self, request: AccessRequest, claims: Sequence[VerifiedClaim], now: datetime
    ) -> Decision:
        # one snapshot per evaluation so a concurrent reload is never seen half-applied
        return evaluate(request, claims, self.store.snapshot(), now)

    def is_public(
        self,
        resource_id: str,
        resource_type: Optional[str],
        action: Action,
        now: datetime,
    ) -> bool:
        return is_public(resource_id, resource_type, action, self.store.snapshot(), now)
