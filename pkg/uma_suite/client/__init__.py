"""UMA client library, audit trail and in-process scenario harness."""

from .audit import AuditRecord, AuditReport, AuditStore, load_records, verify_audit
from .harness import (
    AS_ORIGIN,
    POD_ORIGIN,
    ScenarioHarness,
    StepOutcome,
    Transcript,
    load_script,
    run_scenario,
)
from .negotiator import (
    AccessResult,
    ClaimsProvider,
    StaticClaimsProvider,
    UmaClient,
    parse_challenge,
)
from .transport import Exchange, ExchangeLog, LoopbackTransport, Route, loopback_client

__all__ = [
    "AS_ORIGIN",
    "POD_ORIGIN",
    "AccessResult",
    "AuditRecord",
    "AuditReport",
    "AuditStore",
    "ClaimsProvider",
    "Exchange",
    "ExchangeLog",
    "LoopbackTransport",
    "Route",
    "ScenarioHarness",
    "StaticClaimsProvider",
    "StepOutcome",
    "Transcript",
    "UmaClient",
    "load_records",
    "load_script",
    "loopback_client",
    "parse_challenge",
    "run_scenario",
    "verify_audit",
]
