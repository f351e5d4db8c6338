"""Base class for policy engines."""

from abc import ABC, abstractmethod
from datetime import datetime
from typing import Optional, Sequence

from ..models.types import Action, VerifiedClaim
from .model import AccessRequest, Decision


class PolicyEngine(ABC):
    """Abstract policy decision point used by the authorization server.

    Engines decide over their own policy snapshot; the AS only ever passes the
    request, the verified claims and the decision instant.
    """

    @abstractmethod
    def evaluate(
        self, request: AccessRequest, claims: Sequence[VerifiedClaim], now: datetime
    ) -> Decision:
        """Decide a single (resource, action) request.

        Args:
            request: The access request.
            claims: Claims verified for the requesting party.
            now: Decision instant (UTC), supplied by the caller.

        Returns:
            Grant, Deny or NeedClaims.
        """

    @abstractmethod
    def is_public(
        self,
        resource_id: str,
        resource_type: Optional[str],
        action: Action,
        now: datetime,
    ) -> bool:
        """Whether an anonymous party would be granted the action right now."""
