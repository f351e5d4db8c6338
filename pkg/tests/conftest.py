"""Shared fixtures: a fixed clock, claim issuers and a running AS with its pod."""

import json
import os
from datetime import datetime, timezone
from pathlib import Path

import pytest

from uma_suite.claims import OidcIdTokenFormat, TrustedIssuer, VcJwtFormat
from uma_suite.client.harness import Credential, ScenarioHarness
from uma_suite.clock import ManualClock
from uma_suite.models.types import OIDC_FORMAT, VC_FORMAT, ClaimToken
from uma_suite.policy import parse_policy
from uma_suite.rs import StoredResource
from uma_suite.security import KeySet, SigningKeyPair

SCENARIOS_DIR = Path(__file__).parent.parent / "scenarios"
POLICIES_DIR = SCENARIOS_DIR / "policies"

NOW = datetime(2026, 6, 1, 12, 0, tzinfo=timezone.utc)
BIRTHDAY = datetime(2026, 6, 15, tzinfo=timezone.utc)

REGISTRY = "https://flemish-enterprise-registry.example"
IDP = "https://idp.example"
FAVORITE = "https://favorite.example/id"
POD = "https://pod.example"
SHOE_SIZE = POD + "/alice/profile/shoe-size"


def load_fixture_policy(name: str):
    return parse_policy((POLICIES_DIR / f"{name}.policy.json").read_bytes())


def policy_doc(uid: str, permission=(), prohibition=()) -> bytes:
    body = {"uid": uid}
    if permission:
        body["permission"] = list(permission)
    if prohibition:
        body["prohibition"] = list(prohibition)
    return json.dumps(body).encode("utf-8")


@pytest.fixture
def clock() -> ManualClock:
    return ManualClock(NOW)


@pytest.fixture(scope="session")
def registry_key() -> SigningKeyPair:
    return SigningKeyPair.generate()


@pytest.fixture(scope="session")
def idp_key() -> SigningKeyPair:
    return SigningKeyPair.generate()


@pytest.fixture
def trust(registry_key, idp_key) -> list[TrustedIssuer]:
    return [
        TrustedIssuer(REGISTRY, KeySet.of(registry_key)),
        TrustedIssuer(IDP, KeySet.of(idp_key)),
    ]


@pytest.fixture
def seller_vc(registry_key):
    """Factory for a shoe-seller credential issued at a given instant."""
    def issue(at: datetime = NOW, ttl_seconds: int = 3600) -> ClaimToken:
        raw = VcJwtFormat.issue(
            registry_key, REGISTRY, "https://seller.example/id", {"role": "shoe-seller"}, at,
            ttl_seconds=ttl_seconds,
        )
        return ClaimToken(format=VC_FORMAT, raw=raw)
    return issue


@pytest.fixture
def favorite_id_token(idp_key):
    """Factory for an ID token naming the favorite WebID."""
    def issue(at: datetime = NOW, ttl_seconds: int = 3600) -> ClaimToken:
        raw = OidcIdTokenFormat.issue(idp_key, IDP, "friend", at, ttl_seconds=ttl_seconds, webid=FAVORITE)
        return ClaimToken(format=OIDC_FORMAT, raw=raw)
    return issue


SELLER = Credential(VC_FORMAT, REGISTRY, "https://seller.example/id", {"role": "shoe-seller"})
FRIEND = Credential(OIDC_FORMAT, IDP, "friend", webid=FAVORITE)
INBOX_TYPE = "https://pod.example/types#Inbox"

POD_RESOURCES = [
    StoredResource("/alice/profile/shoe-size", "text/plain", b"42"),
    StoredResource("/alice/public/card", "text/plain", b"hello"),
    StoredResource("/alice/inbox/", "application/json", b"", INBOX_TYPE),
]


@pytest.fixture
async def deployment(clock, tmp_path):
    """A running AS and pod on loopback, loaded with the fixture policies."""
    policies = [load_fixture_policy(n) for n in ("shoe-size", "public-card", "birthday-card")]
    harness = ScenarioHarness(clock, policies, POD_RESOURCES, issuers=[REGISTRY, IDP], workdir=tmp_path)
    async with harness:
        yield harness


@pytest.fixture
def isolated_env(monkeypatch, tmp_path):
    """A private copy of os.environ, and no project .env, so config tests see only their own files."""
    monkeypatch.setattr("umax.config.PROJECT_ROOT", tmp_path)
    environ = {k: v for k, v in os.environ.items() if not k.startswith("UMA_")}
    monkeypatch.setattr(os, "environ", environ)
    return environ
