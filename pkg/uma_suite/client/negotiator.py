"""UMA client: turns a 401 challenge into an access grant.

The client treats access tokens as opaque. Everything it knows about a grant
comes from the token response body.
"""

import inspect
import json
import logging
import re
from dataclasses import dataclass
from typing import Awaitable, Callable, Optional, Sequence, Union

import httpx

from ..clock import Clock, system_clock
from ..errors import (
    AsUnreachable,
    AuthorizationDenied,
    ChallengeMalformed,
    ClaimsUnavailable,
    PolicyError,
    RoundsExhausted,
    TokenRequestError,
)
from ..models.types import (
    UMA_TICKET_GRANT,
    AccessGrant,
    ClaimRequirement,
    ClaimToken,
    PermissionDescriptor,
)
from .audit import AuditRecord, AuditStore
from .transport import origin_of

logger = logging.getLogger(__name__)

DISCOVERY_PATH = "/.well-known/uma2-configuration"
DEFAULT_MAX_ROUNDS = 5

_CHALLENGE_PARAM_RE = re.compile(r'(\w+)="([^"]*)"')

# (outstanding requirements) -> claim tokens; empty means "cannot satisfy"
ClaimsProvider = Callable[
    [Sequence[ClaimRequirement]],
    Union[Sequence[ClaimToken], Awaitable[Sequence[ClaimToken]]],
]


def parse_challenge(header: str) -> dict[str, str]:
    """Parse ``UMA realm="...", as_uri="...", ticket="..."``.

    Raises:
        ChallengeMalformed: If the header is not a UMA challenge with an as_uri.
    """
    scheme, _, params = header.strip().partition(" ")
    if scheme.upper() != "UMA":
        raise ChallengeMalformed(f"not a UMA challenge: {header!r}")
    values = dict(_CHALLENGE_PARAM_RE.findall(params))
    if not values.get("as_uri"):
        raise ChallengeMalformed(f"UMA challenge without as_uri: {header!r}")
    return values


class StaticClaimsProvider:
    """Offers a fixed set of claim tokens, filtered by the formats the AS accepts."""

    def __init__(self, tokens: Sequence[ClaimToken] = ()):
        self.tokens = tuple(tokens)

    def __call__(self, required: Sequence[ClaimRequirement]) -> list[ClaimToken]:
        accepted = {f for r in required for f in r.accepted_formats}
        return [t for t in self.tokens if not accepted or t.format in accepted]


@dataclass
class AccessResult:
    response: httpx.Response
    audit_record: Optional[AuditRecord] = None


@dataclass(frozen=True)
class NeedInfo:
    ticket: str
    required: tuple[ClaimRequirement, ...]


class UmaClient:
    """Drives the UMA negotiation for one requesting party.

    Example:
        async with httpx.AsyncClient() as http:
            client = UmaClient(http, AuditStore(Path("./audit")))
            result = await client.access(
                "https://pod.example/alice/profile/shoe-size",
                provider=StaticClaimsProvider([ClaimToken(VC_FORMAT, vc)]),
            )
            print(result.response.status_code, result.audit_record)
    """

    def __init__(
        self,
        http: httpx.AsyncClient,
        audit_store: Optional[AuditStore] = None,
        clock: Clock = system_clock,
        max_rounds: int = DEFAULT_MAX_ROUNDS,
    ):
        self.http = http
        self.audit_store = audit_store
        self.clock = clock
        self.max_rounds = max_rounds
        self._discovery: dict[str, dict] = {}

    async def discover(self, as_uri: str) -> dict:
        as_uri = as_uri.rstrip("/")
        if as_uri not in self._discovery:
            try:
                response = await self.http.get(as_uri + DISCOVERY_PATH)
                response.raise_for_status()
                self._discovery[as_uri] = response.json()
            except (httpx.HTTPError, ValueError) as e:
                raise AsUnreachable(f"cannot discover AS at {as_uri}: {e}") from e
        return self._discovery[as_uri]

    async def access(
        self,
        url: str,
        method: str = "GET",
        body: Optional[bytes] = None,
        headers: Optional[dict[str, str]] = None,
        provider: Optional[ClaimsProvider] = None,
        max_rounds: Optional[int] = None,
        pushed: Sequence[ClaimToken] = (),
    ) -> AccessResult:
        """Request ``url``, negotiating a grant if the RS answers with a UMA challenge.

        ``pushed`` tokens go with the first token request; ``provider`` is only
        asked after a need_info. WebID-gated rules never answer need_info, so
        their credentials must be pushed.

        Returns:
            The final RS response; ``audit_record`` is set when a grant was obtained.

        Raises:
            AuthorizationDenied: The AS answered ``request_denied``.
            ClaimsUnavailable: The provider had nothing new for a need_info.
            RoundsExhausted: ``max_rounds`` need_info answers without a grant,
                or the AS answered ``too_many_rounds``.
            TokenRequestError: Any other token endpoint error.
            AsUnreachable: The RS or AS could not be reached.
            ChallengeMalformed: The 401 carried no usable UMA challenge.
        """
        response = await self._send(method, url, body, headers)
        if response.status_code != 401:
            return AccessResult(response)

        challenge = parse_challenge(response.headers.get("WWW-Authenticate", ""))
        ticket = challenge.get("ticket")
        if not ticket:
            logger.info(f"{url}: challenge without ticket, nothing to negotiate")
            return AccessResult(response)

        configuration = await self.discover(challenge["as_uri"])
        grant, trail = await self._negotiate(
            configuration["token_endpoint"], ticket, provider, max_rounds or self.max_rounds, pushed
        )
        record = self._persist(grant, configuration, origin_of(httpx.URL(url)), trail)

        authorized = dict(headers or {})
        authorized["Authorization"] = f"{grant.token_type} {grant.access_token}"
        return AccessResult(await self._send(method, url, body, authorized), record)

    async def _send(
        self, method: str, url: str, body: Optional[bytes], headers: Optional[dict[str, str]]
    ) -> httpx.Response:
        try:
            return await self.http.request(method, url, content=body, headers=headers)
        except httpx.HTTPError as e:
            raise AsUnreachable(f"{method} {url} failed: {e}") from e

    async def _negotiate(
        self,
        token_endpoint: str,
        ticket: str,
        provider: Optional[ClaimsProvider],
        max_rounds: int,
        pushed: Sequence[ClaimToken] = (),
    ) -> tuple[AccessGrant, tuple[str, ...]]:
        tokens: list[ClaimToken] = list(pushed)
        trail = [ticket]
        rounds = 0
        while True:
            result = await self._token_request(token_endpoint, [("ticket", ticket)], tokens)
            if isinstance(result, AccessGrant):
                return result, tuple(trail)

            rounds += 1
            logger.info(f"need_info round {rounds}: {[r.claim_type for r in result.required]}")
            if rounds >= max_rounds:
                raise RoundsExhausted(f"no grant after {rounds} need_info rounds")

            offered = await self._ask(provider, result.required)
            fresh = [t for t in offered if t not in tokens]
            if not fresh:
                raise ClaimsUnavailable(
                    f"no new claims for {[r.claim_type for r in result.required]}"
                )
            tokens.extend(fresh)
            ticket = result.ticket
            trail.append(ticket)

    @staticmethod
    async def _ask(provider: Optional[ClaimsProvider], required: Sequence[ClaimRequirement]) -> list[ClaimToken]:
        if provider is None:
            return []
        offered = provider(required)
        if inspect.isawaitable(offered):
            offered = await offered
        return list(offered)

    async def _token_request(
        self,
        token_endpoint: str,
        fields: list[tuple[str, str]],
        tokens: Sequence[ClaimToken],
    ) -> Union[AccessGrant, NeedInfo]:
        form: dict[str, Union[str, list[str]]] = {"grant_type": UMA_TICKET_GRANT, **dict(fields)}
        if tokens:
            # repeated fields, paired by position
            form["claim_token"] = [t.raw for t in tokens]
            form["claim_token_format"] = [t.format for t in tokens]
        try:
            response = await self.http.post(token_endpoint, data=form)
        except httpx.HTTPError as e:
            raise AsUnreachable(f"token request to {token_endpoint} failed: {e}") from e

        try:
            body = response.json()
        except ValueError:
            raise TokenRequestError("invalid_response", f"non-JSON token response ({response.status_code})") from None

        if response.status_code == 200:
            try:
                return AccessGrant.from_dict(body)
            except (KeyError, TypeError, ValueError, PolicyError) as e:
                raise TokenRequestError("invalid_response", f"unreadable grant: {e}", body) from e
        error = body.get("error", "invalid_response")
        if error == "need_info":
            if not body.get("ticket"):
                raise TokenRequestError("invalid_response", "need_info without a ticket", body)
            return NeedInfo(
                ticket=body["ticket"],
                required=tuple(ClaimRequirement.from_dict(r) for r in body.get("required_claims", [])),
            )
        description = body.get("error_description", "")
        if error == "request_denied":
            raise AuthorizationDenied(error, description, body)
        if error == "too_many_rounds":
            raise RoundsExhausted(f"AS ended the negotiation: {description or error}")
        raise TokenRequestError(error, description, body)

    async def request_direct(
        self,
        as_uri: str,
        descriptors: Sequence[PermissionDescriptor],
        tokens: Sequence[ClaimToken] = (),
    ) -> AccessGrant:
        """Ask the AS for a grant without a ticket, in a single token request.

        Raises:
            TokenRequestError: The AS error, verbatim; a need_info answer is
                surfaced as ``need_info`` since there is no second round.
        """
        configuration = await self.discover(as_uri)
        permissions = json.dumps([d.to_dict() for d in descriptors])
        result = await self._token_request(configuration["token_endpoint"], [("permissions", permissions)], tokens)
        if isinstance(result, NeedInfo):
            raise TokenRequestError(
                "need_info",
                f"claims required: {[r.claim_type for r in result.required]}",
                {"ticket": result.ticket, "required_claims": [r.to_dict() for r in result.required]},
            )
        origins = sorted({origin_of(httpx.URL(p.resource_id)) for p in result.permissions})
        self._persist(result, configuration, origins[0] if len(origins) == 1 else "", ())
        return result

    def _persist(
        self, grant: AccessGrant, configuration: dict, rs_origin: str, trail: tuple[str, ...]
    ) -> AuditRecord:
        record = AuditRecord.from_grant(
            grant,
            obtained_at=self.clock(),
            as_issuer=configuration.get("issuer", ""),
            rs_origin=rs_origin,
            ticket_trail=trail,
        )
        if self.audit_store is not None:
            self.audit_store.append(record)
        return record
