"""Test the UMA client against scripted stubs and a live deployment."""

import pytest
from aiohttp import web
from aiohttp.test_utils import TestServer

from uma_suite.client import (
    AS_ORIGIN,
    POD_ORIGIN,
    AuditStore,
    ExchangeLog,
    Route,
    StaticClaimsProvider,
    UmaClient,
    loopback_client,
    parse_challenge,
)
from uma_suite.errors import (
    AuthorizationDenied,
    ChallengeMalformed,
    ClaimsUnavailable,
    RoundsExhausted,
    TokenRequestError,
)
from uma_suite.models.types import OIDC_FORMAT, VC_FORMAT, Action, ClaimRequirement, ClaimToken, PermissionDescriptor
from tests.conftest import BIRTHDAY, FRIEND, INBOX_TYPE, SELLER

STUB_AS = "https://stub-as.example"
STUB_RS = "https://stub-rs.example"
SECRET_URL = STUB_RS + "/secret"

ROLE_NEEDED = [{"claim_type": "role", "claim_token_format": [VC_FORMAT]}]


class StubAs:
    """Token endpoint answering from a script; records every form it receives."""

    def __init__(self, answer):
        self.answer = answer
        self.forms: list[dict] = []

    async def discovery(self, request: web.Request) -> web.Response:
        return web.json_response({"issuer": STUB_AS, "token_endpoint": STUB_AS + "/token"})

    async def token(self, request: web.Request) -> web.Response:
        form = await request.post()
        self.forms.append({
            "ticket": form.get("ticket"),
            "claim_token": form.getall("claim_token", []),
            "claim_token_format": form.getall("claim_token_format", []),
        })
        status, body = self.answer(len(self.forms))
        return web.json_response(body, status=status)

    def build_app(self) -> web.Application:
        app = web.Application()
        app.router.add_get("/.well-known/uma2-configuration", self.discovery)
        app.router.add_post("/token", self.token)
        return app


def stub_rs(challenge: str) -> web.Application:
    async def handle(request: web.Request) -> web.Response:
        if request.headers.get("Authorization") == "Bearer opaque":
            return web.Response(text="secret")
        if request.path == "/open":
            return web.Response(text="open")
        return web.Response(status=401, headers={"WWW-Authenticate": challenge})

    app = web.Application()
    app.router.add_route("*", "/{tail:.*}", handle)
    return app


def always_need_info(n):
    return 403, {"error": "need_info", "ticket": f"t{n}", "required_claims": ROLE_NEEDED}


def grant_on_first(n):
    return 200, {
        "access_token": "opaque",
        "token_type": "Bearer",
        "expires_in": 600,
        "permissions": [{"resource_id": SECRET_URL, "resource_scopes": ["read"]}],
    }


def fresh_tokens():
    """Provider that always has something new to offer."""
    counter = iter(range(1_000))
    return lambda required: [ClaimToken(VC_FORMAT, f"vc-{next(counter)}")]


@pytest.fixture
async def stubs(tmp_path, clock):
    """Start a stub RS and a stub AS; returns a factory taking the AS answer script."""
    routes: dict[str, Route] = {}
    servers = []
    log = ExchangeLog()
    http = loopback_client("client", routes, log)

    async def serve(origin, app):
        server = TestServer(app, host="127.0.0.1")
        await server.start_server()
        servers.append(server)
        routes[origin] = Route(origin, f"http://127.0.0.1:{server.port}")

    async def start(answer, challenge=f'UMA realm="stub", as_uri="{STUB_AS}", ticket="t0"'):
        stub_as = StubAs(answer)
        await serve(STUB_AS, stub_as.build_app())
        await serve(STUB_RS, stub_rs(challenge))
        return UmaClient(http, AuditStore(tmp_path / "audit"), clock), stub_as, log

    yield start

    await http.aclose()
    for server in servers:
        await server.close()


# --- challenge parsing -------------------------------------------------------------


def test_parse_challenge():
    values = parse_challenge('UMA realm="pod", as_uri="https://as.example", ticket="abc"')
    assert values == {"realm": "pod", "as_uri": "https://as.example", "ticket": "abc"}


@pytest.mark.parametrize("header", ['Bearer realm="pod"', 'UMA realm="pod", ticket="abc"', ""])
def test_parse_challenge_rejects(header):
    with pytest.raises(ChallengeMalformed):
        parse_challenge(header)


def test_static_provider_filters_by_accepted_format():
    vc, oidc = ClaimToken(VC_FORMAT, "a"), ClaimToken(OIDC_FORMAT, "b")
    provider = StaticClaimsProvider([vc, oidc])
    assert provider([ClaimRequirement("role", (VC_FORMAT,))]) == [vc]
    assert provider([ClaimRequirement("role", ())]) == [vc, oidc]


# --- negotiation against stubs ------------------------------------------------------


async def test_adversarial_need_info_is_bounded(stubs):
    """An AS that never stops asking gets exactly max_rounds token requests."""
    client, stub_as, _ = await stubs(always_need_info)

    with pytest.raises(RoundsExhausted):
        await client.access(SECRET_URL, provider=fresh_tokens())

    assert len(stub_as.forms) == 5
    assert [f["ticket"] for f in stub_as.forms] == ["t0", "t1", "t2", "t3", "t4"]


async def test_round_bound_is_configurable(stubs):
    client, stub_as, _ = await stubs(always_need_info)
    with pytest.raises(RoundsExhausted):
        await client.access(SECRET_URL, provider=fresh_tokens(), max_rounds=2)
    assert len(stub_as.forms) == 2


async def test_as_round_limit_counts_as_exhausted(stubs):
    def cut_off_after_two(n):
        if n <= 2:
            return always_need_info(n)
        return 400, {"error": "too_many_rounds", "error_description": "negotiation exceeded 2 rounds"}

    client, stub_as, _ = await stubs(cut_off_after_two)
    with pytest.raises(RoundsExhausted) as e:
        await client.access(SECRET_URL, provider=fresh_tokens())

    assert e.value.exit_code == 3
    assert len(stub_as.forms) == 3


async def test_claims_accumulate_across_rounds(stubs):
    client, stub_as, _ = await stubs(always_need_info)
    with pytest.raises(RoundsExhausted):
        await client.access(SECRET_URL, provider=fresh_tokens(), max_rounds=3)
    assert [len(f["claim_token"]) for f in stub_as.forms] == [0, 1, 2]
    assert all(len(f["claim_token"]) == len(f["claim_token_format"]) for f in stub_as.forms)


async def test_empty_provider_stops_negotiation(stubs):
    client, stub_as, _ = await stubs(always_need_info)
    with pytest.raises(ClaimsUnavailable):
        await client.access(SECRET_URL, provider=StaticClaimsProvider())
    assert len(stub_as.forms) == 1


async def test_provider_repeating_itself_stops_negotiation(stubs):
    client, stub_as, _ = await stubs(always_need_info)
    same = ClaimToken(VC_FORMAT, "same")
    with pytest.raises(ClaimsUnavailable):
        await client.access(SECRET_URL, provider=StaticClaimsProvider([same]))
    assert len(stub_as.forms) == 2


async def test_async_provider(stubs):
    client, stub_as, _ = await stubs(always_need_info)

    async def provider(required):
        return [ClaimToken(VC_FORMAT, f"async-{len(stub_as.forms)}")]

    with pytest.raises(RoundsExhausted):
        await client.access(SECRET_URL, provider=provider)
    assert stub_as.forms[1]["claim_token"] == ["async-1"]


async def test_pushed_tokens_go_with_first_request(stubs):
    client, stub_as, _ = await stubs(grant_on_first)
    pushed = [ClaimToken(OIDC_FORMAT, "id-token"), ClaimToken(VC_FORMAT, "vc")]

    result = await client.access(SECRET_URL, pushed=pushed)

    assert result.response.text == "secret"
    assert stub_as.forms[0]["claim_token"] == ["id-token", "vc"]
    assert stub_as.forms[0]["claim_token_format"] == [OIDC_FORMAT, VC_FORMAT]


async def test_request_denied(stubs):
    client, _, _ = await stubs(lambda n: (403, {"error": "request_denied"}))
    with pytest.raises(AuthorizationDenied) as e:
        await client.access(SECRET_URL, provider=fresh_tokens())
    assert e.value.code == "request_denied"


async def test_other_token_errors_are_surfaced_verbatim(stubs):
    client, _, _ = await stubs(lambda n: (400, {"error": "invalid_grant", "error_description": "gone"}))
    with pytest.raises(TokenRequestError) as e:
        await client.access(SECRET_URL)
    assert (e.value.error, e.value.description) == ("invalid_grant", "gone")


async def test_grant_is_audited(stubs):
    client, _, log = await stubs(grant_on_first)

    result = await client.access(SECRET_URL)

    assert result.response.status_code == 200
    (record,) = client.audit_store.records()
    assert record == result.audit_record
    assert record.ticket_trail == ("t0",)
    assert record.rs_origin == STUB_RS
    assert [(e.target, e.status) for e in log.exchanges] == [
        (STUB_RS, 401), (STUB_AS, 200), (STUB_AS, 200), (STUB_RS, 200),
    ]


async def test_response_without_challenge_passes_through(stubs):
    client, stub_as, _ = await stubs(grant_on_first)
    result = await client.access(STUB_RS + "/open")
    assert result.response.text == "open"
    assert result.audit_record is None
    assert stub_as.forms == []


async def test_challenge_without_ticket_is_returned(stubs):
    client, stub_as, _ = await stubs(grant_on_first, challenge=f'UMA realm="stub", as_uri="{STUB_AS}"')
    result = await client.access(SECRET_URL)
    assert result.response.status_code == 401
    assert stub_as.forms == []


async def test_non_uma_challenge_is_malformed(stubs):
    client, _, _ = await stubs(grant_on_first, challenge='Bearer realm="stub"')
    with pytest.raises(ChallengeMalformed):
        await client.access(SECRET_URL)


# --- against a live deployment ------------------------------------------------------


async def test_need_info_negotiation_rotates_tickets(deployment):
    result = await deployment.client.access(
        POD_ORIGIN + "/alice/profile/shoe-size",
        provider=StaticClaimsProvider([deployment.issue(SELLER)]),
    )

    assert result.response.text == "42"
    trail = result.audit_record.ticket_trail
    assert len(trail) == 2 and trail[0] != trail[1]


async def test_direct_request_by_type(deployment, clock):
    clock.set(BIRTHDAY)
    descriptor = PermissionDescriptor(scopes=(Action.APPEND,), resource_type=INBOX_TYPE)

    grant = await deployment.client.request_direct(AS_ORIGIN, [descriptor], [deployment.issue(FRIEND)])

    assert [p.resource_id for p in grant.permissions] == [POD_ORIGIN + "/alice/inbox/"]
    assert deployment.audit_store.records()[-1].rs_origin == POD_ORIGIN


async def test_direct_request_surfaces_need_info(deployment):
    descriptor = PermissionDescriptor(scopes=(Action.READ,), resource_id=POD_ORIGIN + "/alice/profile/shoe-size")
    with pytest.raises(TokenRequestError) as e:
        await deployment.client.request_direct(AS_ORIGIN, [descriptor])
    assert e.value.error == "need_info"
    assert e.value.body["required_claims"][0]["claim_type"] == "role"
