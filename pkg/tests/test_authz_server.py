"""Test the authorization server over HTTP, with signed resource server calls."""

from datetime import timedelta

import pytest

from uma_suite.client import AS_ORIGIN, POD_ORIGIN, StaticClaimsProvider
from uma_suite.errors import OAuthError
from uma_suite.models.types import UMA_TICKET_GRANT, VC_FORMAT, Action
from uma_suite.rs import AsClient
from uma_suite.security import JWKS_PATH, SigningKeyPair
from tests.conftest import SELLER, SHOE_SIZE

DISCOVERY = AS_ORIGIN + "/.well-known/uma2-configuration"
PUBLIC_CARD = POD_ORIGIN + "/alice/public/card"


async def test_discovery_document(deployment):
    response = await deployment.client.http.get(DISCOVERY)
    assert response.status_code == 200
    document = response.json()
    assert document["issuer"] == AS_ORIGIN
    assert document["token_endpoint"] == AS_ORIGIN + "/token"
    assert UMA_TICKET_GRANT in document["grant_types_supported"]


async def test_jwks_publishes_current_key(deployment):
    response = await deployment.client.http.get(AS_ORIGIN + JWKS_PATH)
    kids = [k["kid"] for k in response.json()["keys"]]
    assert deployment.as_keyring.current.key_id in kids
    assert all("d" not in k for k in response.json()["keys"]), "private key material leaked"


async def test_unsigned_permission_request_is_rejected(deployment):
    response = await deployment.client.http.post(
        AS_ORIGIN + "/perm", json={"resource_id": SHOE_SIZE, "resource_scopes": ["read"]}
    )
    assert response.status_code == 401
    assert response.json()["error"] == "unauthenticated_rs"


async def test_unlisted_key_is_rejected(deployment):
    stranger = AsClient(AS_ORIGIN, SigningKeyPair.generate(), deployment.rs.as_client.http, deployment.clock)
    await stranger.discover()
    with pytest.raises(OAuthError) as e:
        await stranger.request_permission(SHOE_SIZE, [Action.READ])
    assert e.value.status == 401
    assert e.value.description == "unknown-key"


async def test_stale_signature_is_rejected(deployment, clock):
    late = AsClient(
        AS_ORIGIN, deployment.rs_key, deployment.rs.as_client.http, lambda: clock() - timedelta(seconds=121)
    )
    late.configuration = deployment.rs.as_client.configuration
    with pytest.raises(OAuthError) as e:
        await late.request_permission(SHOE_SIZE, [Action.READ])
    assert e.value.description == "stale-signature"


async def test_registration_lifecycle(deployment):
    as_client = deployment.rs.as_client
    registration_id = await as_client.lookup(SHOE_SIZE)
    assert registration_id == deployment.store.meta("/alice/profile/shoe-size").registration_id

    again, created = await as_client.register(SHOE_SIZE, [Action.READ])
    assert (again, created) == (registration_id, False)

    await as_client.deregister(registration_id)
    assert await as_client.lookup(SHOE_SIZE) is None
    outcome = await as_client.request_permission(SHOE_SIZE, [Action.READ])
    assert outcome.status == 400

    # deregistering twice is tolerated
    await as_client.deregister(registration_id)


async def test_permission_endpoint_ticket_and_public_hint(deployment):
    as_client = deployment.rs.as_client

    protected = await as_client.request_permission(SHOE_SIZE, [Action.READ])
    assert protected.status == 201 and protected.ticket

    public = await as_client.request_permission(PUBLIC_CARD, [Action.READ])
    assert public.public
    assert public.public_scopes == (Action.READ,)


async def test_token_endpoint_need_info(deployment):
    ticket = (await deployment.rs.as_client.request_permission(SHOE_SIZE, [Action.READ])).ticket
    response = await deployment.client.http.post(
        AS_ORIGIN + "/token", data={"grant_type": UMA_TICKET_GRANT, "ticket": ticket}
    )

    assert response.status_code == 403
    assert response.headers["Cache-Control"] == "no-store"
    body = response.json()
    assert body["error"] == "need_info"
    assert body["ticket"] != ticket
    assert body["required_claims"] == [{"claim_type": "role", "claim_token_format": [VC_FORMAT]}]


async def test_token_endpoint_pairs_claim_fields(deployment):
    response = await deployment.client.http.post(
        AS_ORIGIN + "/token",
        data={"grant_type": UMA_TICKET_GRANT, "ticket": "x", "claim_token": "abc"},
    )
    assert response.status_code == 400
    assert response.json()["error"] == "invalid_request"


async def test_token_endpoint_unknown_ticket(deployment):
    response = await deployment.client.http.post(
        AS_ORIGIN + "/token", data={"grant_type": UMA_TICKET_GRANT, "ticket": "no-such-ticket"}
    )
    assert response.status_code == 400
    assert response.json()["error"] == "invalid_grant"


async def test_signed_introspection(deployment, clock):
    result = await deployment.client.access(
        POD_ORIGIN + "/alice/profile/shoe-size",
        provider=StaticClaimsProvider([deployment.issue(SELLER)]),
    )
    token = result.audit_record.access_token

    active = await deployment.rs.as_client.introspect(token)
    assert active["active"] is True
    assert active["aud"] == [POD_ORIGIN]

    clock.advance(600)
    assert await deployment.rs.as_client.introspect(token) == {"active": False}


async def test_unsigned_introspection_is_rejected(deployment):
    response = await deployment.client.http.post(AS_ORIGIN + "/introspect", data={"token": "x"})
    assert response.status_code == 401
