"""uma_suite - UMA 2.0 authorization with usage-control policies.

This package provides:
1. An authorization server (discovery, resource registration, permission
   tickets, token endpoint with need_info negotiation, ticketless requests,
   introspection) backed by an ODRL-profile policy engine
2. A resource server that stores resources and defers every decision to the AS
3. A client that negotiates grants, keeps an audit trail, and a harness that
   runs AS, RS and client together on loopback

Example:
    from uma_suite import run_scenario

    transcript = await run_scenario(Path("scenarios/shoe-size.scenario.json"))
    for exchange in transcript.exchanges:
        print(exchange.party, exchange.target, exchange.method, exchange.path, exchange.status)
"""

from .authz import AuthorizationServer, AuthorizationService, RsKeyDirectory
from .claims import ClaimVerifier, TrustedIssuer, load_trust_file
from .client import AuditStore, ScenarioHarness, StaticClaimsProvider, UmaClient, run_scenario, verify_audit
from .clock import ManualClock, system_clock
from .errors import UmaClientError, UmaError
from .models import AccessGrant, Action, ClaimToken, Permission, PermissionDescriptor
from .policy import OdrlPolicyEngine, PolicyEngine, PolicyStore
from .rs import AsClient, ResourceServer, ResourceStore
from .security import KeyRing, KeySet, SigningKeyPair

__version__ = "0.1.0"

__all__ = [
    # Parties
    "AuthorizationServer",
    "AuthorizationService",
    "ResourceServer",
    "UmaClient",
    # Building blocks
    "AsClient",
    "AuditStore",
    "ClaimVerifier",
    "KeyRing",
    "KeySet",
    "ManualClock",
    "OdrlPolicyEngine",
    "PolicyEngine",
    "PolicyStore",
    "ResourceStore",
    "RsKeyDirectory",
    "ScenarioHarness",
    "SigningKeyPair",
    "StaticClaimsProvider",
    "TrustedIssuer",
    # Models
    "AccessGrant",
    "Action",
    "ClaimToken",
    "Permission",
    "PermissionDescriptor",
    # Errors
    "UmaClientError",
    "UmaError",
    # Functions
    "load_trust_file",
    "run_scenario",
    "system_clock",
    "verify_audit",
]
