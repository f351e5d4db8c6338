"""Test the resource store, and the resource server in front of a live or a scripted AS."""

import asyncio
import json

import pytest
from aiohttp import web
from aiohttp.test_utils import TestServer

from uma_suite.client import AS_ORIGIN, POD_ORIGIN, Route, StaticClaimsProvider, loopback_client, parse_challenge
from uma_suite.clock import to_epoch
from uma_suite.errors import AsUnreachable, StorageError
from uma_suite.models.types import Action, Permission
from uma_suite.rs import AsClient, ResourceServer, ResourceStore, StoredResource, normalize_path
from uma_suite.security import AccessTokenClaims, KeySet, SigningKeyPair, mint_token, new_jti
from tests.conftest import BIRTHDAY, FRIEND, INBOX_TYPE, POD_RESOURCES, SELLER

SHOE_SIZE_URL = POD_ORIGIN + "/alice/profile/shoe-size"
CARD_URL = POD_ORIGIN + "/alice/public/card"
INBOX_URL = POD_ORIGIN + "/alice/inbox/"


# --- storage ---------------------------------------------------------------------


@pytest.mark.parametrize("path", ["relative", "/a//b", "/a/../b", "/a/./b", "/.resources.json", "/a\\b"])
def test_unnormalized_paths_are_rejected(path):
    with pytest.raises(StorageError) as e:
        normalize_path(path)
    assert e.value.code == "invalid-path"


def test_put_creates_missing_containers(tmp_path):
    store = ResourceStore(tmp_path)
    created = store.put("/alice/notes/today", b"hi", "text/plain")

    assert created == ["/alice/", "/alice/notes/", "/alice/notes/today"]
    assert store.get("/alice/notes/today").body == b"hi"
    assert json.loads(store.get("/alice/").body) == {"contains": ["/alice/notes/"]}


def test_replace_keeps_registration_and_type(tmp_path):
    store = ResourceStore(tmp_path)
    store.put("/card", b"v1", "text/plain", resource_type="https://pod.example/types#Card")
    store.set_registration("/card", "reg-1")

    assert store.put("/card", b"v2", "text/markdown") == []
    meta = store.meta("/card")
    assert (meta.content_type, meta.resource_type, meta.registration_id) == (
        "text/markdown", "https://pod.example/types#Card", "reg-1"
    )


def test_index_survives_restart(tmp_path):
    ResourceStore(tmp_path).seed(POD_RESOURCES)
    reopened = ResourceStore(tmp_path)

    assert reopened.get("/alice/profile/shoe-size").body == b"42"
    assert reopened.meta("/alice/inbox/").resource_type == INBOX_TYPE
    assert "/alice/public/card" in reopened.unregistered()


def test_delete_rules(tmp_path):
    store = ResourceStore(tmp_path)
    store.put("/box/item", b"x", "text/plain")

    for path, code in [("/", "root"), ("/box/", "container-not-empty"), ("/missing", "not-found")]:
        with pytest.raises(StorageError) as e:
            store.delete(path)
        assert e.value.code == code, f"delete {path}"

    store.delete("/box/item")
    store.delete("/box/")
    assert store.paths() == ["/"]


def test_container_cannot_have_a_body(tmp_path):
    with pytest.raises(StorageError):
        ResourceStore(tmp_path).put("/box/", b"x", "text/plain")


# --- resource server -----------------------------------------------------------


async def _granted_token(deployment, url=SHOE_SIZE_URL, credential=SELLER) -> str:
    result = await deployment.client.access(url, provider=StaticClaimsProvider([deployment.issue(credential)]))
    assert result.response.status_code == 200
    return result.audit_record.access_token


async def test_startup_registers_every_resource(deployment):
    assert deployment.store.unregistered() == []
    assert len(deployment.service.list_resources(POD_ORIGIN)) == len(deployment.store.paths())
    assert await deployment.rs.register_all() == 0


async def test_protected_resource_answers_uma_challenge(deployment):
    response = await deployment.client.http.get(SHOE_SIZE_URL)

    assert response.status_code == 401
    challenge = parse_challenge(response.headers["WWW-Authenticate"])
    assert challenge["as_uri"] == AS_ORIGIN
    assert challenge["realm"] == POD_ORIGIN
    assert challenge["ticket"]


async def test_public_resource_is_served_without_token(deployment):
    response = await deployment.client.http.get(CARD_URL)
    assert response.status_code == 200
    assert response.text == "hello"

    # only read is public
    assert (await deployment.client.http.put(CARD_URL, content=b"defaced")).status_code == 401


async def test_token_grants_access(deployment):
    token = await _granted_token(deployment)
    response = await deployment.client.http.get(SHOE_SIZE_URL, headers={"Authorization": f"Bearer {token}"})
    assert response.status_code == 200
    assert response.text == "42"


async def test_token_for_other_resource_is_insufficient(deployment):
    token = await _granted_token(deployment)
    response = await deployment.client.http.get(CARD_URL, headers={"Authorization": f"Bearer {token}"})
    assert response.status_code == 403
    assert response.json() == {"error": "insufficient_scope"}


async def test_token_for_other_scope_is_insufficient(deployment):
    token = await _granted_token(deployment)
    response = await deployment.client.http.put(
        SHOE_SIZE_URL, content=b"44", headers={"Authorization": f"Bearer {token}"}
    )
    assert response.status_code == 403


@pytest.mark.parametrize("header", ["Bearer not-a-token", "Basic dXNlcjpwdw=="])
async def test_unusable_credentials_fall_back_to_challenge(deployment, header):
    response = await deployment.client.http.get(SHOE_SIZE_URL, headers={"Authorization": header})
    assert response.status_code == 401
    assert "ticket=" in response.headers["WWW-Authenticate"]


async def test_expired_token_falls_back_to_challenge(deployment, clock):
    token = await _granted_token(deployment)
    clock.advance(600)
    response = await deployment.client.http.get(SHOE_SIZE_URL, headers={"Authorization": f"Bearer {token}"})
    assert response.status_code == 401


async def test_post_to_a_resource_is_not_allowed(deployment):
    response = await deployment.client.http.post(SHOE_SIZE_URL, content=b"x")
    assert response.status_code == 405


async def test_append_creates_and_registers_child(deployment, clock):
    clock.set(BIRTHDAY)
    result = await deployment.client.access(
        INBOX_URL,
        method="POST",
        body=b"Happy birthday!",
        headers={"Content-Type": "text/plain", "Slug": "card"},
        pushed=[deployment.issue(FRIEND)],
    )

    assert result.response.status_code == 201
    location = result.response.headers["Location"]
    assert location == INBOX_URL + "card"
    assert deployment.store.get("/alice/inbox/card").body == b"Happy birthday!"
    assert deployment.service.list_resources(POD_ORIGIN, location), "child was not registered at the AS"

    # a second append with the same slug does not overwrite the first
    again = await deployment.client.access(
        INBOX_URL, method="POST", body=b"Again!", headers={"Slug": "card"}, pushed=[deployment.issue(FRIEND)],
    )
    assert again.response.headers["Location"] != location


async def test_resource_server_needs_its_as(tmp_path, clock):
    store = ResourceStore(tmp_path)
    store.seed([StoredResource("/a", "text/plain", b"a")])
    http = loopback_client("rs", {})
    try:
        server = ResourceServer(POD_ORIGIN, store, AsClient(AS_ORIGIN, SigningKeyPair.generate(), http, clock))
        with pytest.raises(AsUnreachable):
            await server.start()
    finally:
        await http.aclose()


# --- resource server against a scripted AS -------------------------------------------


class StubAs:
    """Canned AS: discovery, a key set, registration and a scripted permission endpoint."""

    def __init__(self, clock):
        self.clock = clock
        self.key = SigningKeyPair.generate()
        self.registered: dict[str, str] = {}
        self.permission_answers: dict[str, tuple[int, dict]] = {}
        self.jwks_fetches = 0

    def build_app(self) -> web.Application:
        app = web.Application()
        app.router.add_get("/.well-known/uma2-configuration", self.discovery)
        app.router.add_get("/.well-known/jwks.json", self.jwks)
        app.router.add_post("/rreg/", self.register)
        app.router.add_get("/rreg/", self.lookup)
        app.router.add_post("/perm", self.permission)
        return app

    async def discovery(self, request):
        return web.json_response({
            "issuer": AS_ORIGIN,
            "jwks_uri": AS_ORIGIN + "/.well-known/jwks.json",
            "resource_registration_endpoint": AS_ORIGIN + "/rreg/",
            "permission_endpoint": AS_ORIGIN + "/perm",
            "token_endpoint": AS_ORIGIN + "/token",
            "introspection_endpoint": AS_ORIGIN + "/introspect",
        })

    async def jwks(self, request):
        self.jwks_fetches += 1
        return web.json_response(KeySet.of(self.key).to_jwks())

    async def register(self, request):
        resource_id = (await request.json())["resource_id"]
        if resource_id in self.registered:
            return web.json_response({"error": "conflict"}, status=409)
        self.registered[resource_id] = f"reg-{len(self.registered)}"
        return web.json_response({"_id": self.registered[resource_id]}, status=201)

    async def lookup(self, request):
        found = self.registered.get(request.query.get("resource_id"))
        return web.json_response([found] if found else [])

    async def permission(self, request):
        resource_id = (await request.json())["resource_id"]
        if resource_id in self.permission_answers:
            status, body = self.permission_answers[resource_id]
            return web.json_response(body, status=status)
        if resource_id not in self.registered:
            return web.json_response({"error": "invalid_resource_id"}, status=400)
        return web.json_response({"ticket": "stub-ticket"}, status=201)

    def token(self, resource_id: str, scopes=(Action.READ,), iss: str = AS_ORIGIN, key=None) -> str:
        iat = to_epoch(self.clock())
        claims = AccessTokenClaims(
            iss=iss, sub="anonymous", aud=(POD_ORIGIN,), iat=iat, exp=iat + 600,
            jti=new_jti(), permissions=(Permission(resource_id, tuple(scopes)),),
        )
        return mint_token(claims, key or self.key)


@pytest.fixture
async def stubbed_pod(tmp_path, clock):
    """A real pod whose AS is a StubAs; yields (stub, pod http client, routes)."""
    stub = StubAs(clock)
    routes: dict[str, Route] = {}
    servers, clients = [], []

    async def serve(party, origin, app):
        server = TestServer(app, host="127.0.0.1")
        await server.start_server()
        servers.append(server)
        routes[origin] = Route(party, f"http://127.0.0.1:{server.port}")

    await serve("as", AS_ORIGIN, stub.build_app())
    store = ResourceStore(tmp_path / "pod")
    store.seed(POD_RESOURCES)
    rs_http = loopback_client("rs", routes)
    client_http = loopback_client("client", routes)
    clients += [rs_http, client_http]
    rs = ResourceServer(POD_ORIGIN, store, AsClient(AS_ORIGIN, SigningKeyPair.generate(), rs_http, clock))
    await serve("rs", POD_ORIGIN, rs.build_app())
    await rs.start()
    try:
        yield stub, client_http, routes
    finally:
        for http in clients:
            await http.aclose()
        for server in servers:
            await server.close()


async def test_stub_ticket_becomes_the_challenge(stubbed_pod):
    stub, http, _ = stubbed_pod
    assert {SHOE_SIZE_URL, CARD_URL, INBOX_URL} <= set(stub.registered)

    response = await http.get(SHOE_SIZE_URL)
    assert response.status_code == 401
    assert parse_challenge(response.headers["WWW-Authenticate"])["ticket"] == "stub-ticket"


async def test_unknown_path_gets_a_challenge_without_ticket(stubbed_pod):
    _, http, _ = stubbed_pod
    response = await http.get(POD_ORIGIN + "/alice/diary")
    assert response.status_code == 401
    challenge = parse_challenge(response.headers["WWW-Authenticate"])
    assert challenge["as_uri"] == AS_ORIGIN
    assert "ticket" not in challenge


async def test_stub_public_hint_serves_directly(stubbed_pod):
    stub, http, _ = stubbed_pod
    stub.permission_answers[SHOE_SIZE_URL] = (200, {"public_scopes": ["read"]})
    response = await http.get(SHOE_SIZE_URL)
    assert response.status_code == 200
    assert response.text == "42"


async def test_stub_token_is_validated_locally(stubbed_pod):
    stub, http, _ = stubbed_pod

    granted = await http.get(SHOE_SIZE_URL, headers={"Authorization": f"Bearer {stub.token(SHOE_SIZE_URL)}"})
    assert granted.status_code == 200

    other = await http.get(SHOE_SIZE_URL, headers={"Authorization": f"Bearer {stub.token(CARD_URL)}"})
    assert other.status_code == 403
    assert other.json() == {"error": "insufficient_scope"}

    foreign = await http.get(
        SHOE_SIZE_URL, headers={"Authorization": f"Bearer {stub.token(SHOE_SIZE_URL, iss='https://rogue.example')}"}
    )
    assert foreign.status_code == 401


async def test_as_error_becomes_bad_gateway(stubbed_pod):
    stub, http, _ = stubbed_pod
    stub.permission_answers[SHOE_SIZE_URL] = (500, {"error": "server_error"})
    response = await http.get(SHOE_SIZE_URL)
    assert response.status_code == 502
    assert response.json() == {"error": "as_unavailable"}


async def test_unreachable_as_becomes_bad_gateway(stubbed_pod):
    _, http, routes = stubbed_pod
    del routes[AS_ORIGIN]
    response = await http.get(SHOE_SIZE_URL)
    assert response.status_code == 502


async def test_unknown_signing_keys_are_refetched_at_most_every_interval(stubbed_pod, clock):
    stub, http, _ = stubbed_pod
    fetched = stub.jwks_fetches
    stranger = SigningKeyPair.generate()

    for _ in range(20):
        forged = stub.token(SHOE_SIZE_URL, key=stranger)
        response = await http.get(SHOE_SIZE_URL, headers={"Authorization": f"Bearer {forged}"})
        assert response.status_code == 401
    assert stub.jwks_fetches == fetched

    clock.advance(30)
    await http.get(SHOE_SIZE_URL, headers={"Authorization": f"Bearer {stub.token(SHOE_SIZE_URL, key=stranger)}"})
    assert stub.jwks_fetches == fetched + 1


async def test_concurrent_creates_of_one_path_register_it_once(stubbed_pod):
    stub, http, _ = stubbed_pod
    new_url = POD_ORIGIN + "/alice/public/new"
    stub.permission_answers[POD_ORIGIN + "/alice/public/"] = (200, {"public_scopes": ["append"]})
    stub.permission_answers[new_url] = (200, {"public_scopes": ["write"]})

    responses = await asyncio.gather(*[
        http.put(new_url, content=body, headers={"Content-Type": "text/plain"}) for body in (b"one", b"two")
    ])

    assert sorted(r.status_code for r in responses) == [201, 204]
    assert list(stub.registered).count(new_url) == 1
    assert (await http.get(new_url)).text in ("one", "two")


async def test_path_locks_are_dropped_once_idle(tmp_path):
    store = ResourceStore(tmp_path)
    order = []

    async def write(body: bytes):
        async with store.lock("/a"):
            assert "/a" in store._locks
            await asyncio.sleep(0)
            store.put("/a", body, "text/plain")
            order.append(body)

    await asyncio.gather(write(b"1"), write(b"2"))
    assert order == [b"1", b"2"]
    assert store._locks == {}

    async with store.lock("/a"):
        store.delete("/a")
    assert store._locks == {}
