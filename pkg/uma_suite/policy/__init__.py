"""ODRL-profile policy engine."""

from .base import PolicyEngine
from .model import (
    AccessRequest,
    ClaimMatcher,
    Decision,
    Deny,
    DenyReason,
    Grant,
    NeedClaims,
    PartyMatcher,
    PolicyDocument,
    Rule,
    TargetMatcher,
)
from .odrl import OdrlPolicyEngine, evaluate, is_public
from .parser import load_policy_dir, parse_policy
from .store import PolicyStore

__all__ = [
    "AccessRequest",
    "ClaimMatcher",
    "Decision",
    "Deny",
    "DenyReason",
    "Grant",
    "NeedClaims",
    "OdrlPolicyEngine",
    "PartyMatcher",
    "PolicyDocument",
    "PolicyEngine",
    "PolicyStore",
    "Rule",
    "TargetMatcher",
    "evaluate",
    "is_public",
    "load_policy_dir",
    "parse_policy",
]
