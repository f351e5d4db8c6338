"""Signed client for the resource server's calls to its authorization server."""

import json
import logging
from dataclasses import dataclass
from datetime import datetime
from typing import Optional, Sequence
from urllib.parse import urlencode

import httpx

from ..clock import Clock
from ..errors import AsUnreachable, OAuthError, TokenError
from ..models.types import Action
from ..security.http_signatures import SignableRequest, sign_http_message
from ..security.keys import KeySet, SigningKeyPair
from ..security.tokens import AccessTokenClaims, verify_token

logger = logging.getLogger(__name__)

DISCOVERY_PATH = "/.well-known/uma2-configuration"


@dataclass(frozen=True)
class PermissionOutcome:
    """What the AS said about a tokenless request.

    ``status`` is 201 (ticket issued), 200 (public) or 400 (the AS does not
    know the resource).
    """

    status: int
    ticket: Optional[str] = None
    public_scopes: tuple[Action, ...] = ()

    @property
    def public(self) -> bool:
        return self.status == 200


class AsClient:
    """Talks to the AS on behalf of one resource server.

    Every request is signed with the RS key over method, target URI and
    Content-Digest. The AS key set is fetched at ``discover()`` and refetched
    when a bearer token does not verify, at most once per
    ``min_key_refresh_seconds``.
    """

    def __init__(
        self,
        as_uri: str,
        key: SigningKeyPair,
        http: httpx.AsyncClient,
        clock: Clock,
        min_key_refresh_seconds: float = 30.0,
    ):
        self.as_uri = as_uri.rstrip("/")
        self.key = key
        self.http = http
        self.clock = clock
        self.configuration: dict = {}
        self.keys = KeySet()
        self.min_key_refresh_seconds = min_key_refresh_seconds
        self._keys_fetched_at: Optional[datetime] = None

    async def discover(self) -> dict:
        """Fetch the discovery document and the AS key set.

        Raises:
            AsUnreachable: If either document cannot be fetched.
        """
        try:
            response = await self.http.get(self.as_uri + DISCOVERY_PATH)
            response.raise_for_status()
            self.configuration = response.json()
        except (httpx.HTTPError, ValueError) as e:
            raise AsUnreachable(f"cannot discover AS at {self.as_uri}: {e}") from e
        await self.refresh_keys()
        logger.info(f"Discovered AS {self.configuration.get('issuer')} with {len(self.keys)} keys")
        return self.configuration

    async def refresh_keys(self) -> None:
        self._keys_fetched_at = self.clock()
        try:
            response = await self.http.get(self.configuration["jwks_uri"])
            response.raise_for_status()
            self.keys = KeySet.from_jwks(response.json())
        except (httpx.HTTPError, KeyError, ValueError) as e:
            raise AsUnreachable(f"cannot fetch AS key set: {e}") from e

    @property
    def issuer(self) -> str:
        return self.configuration.get("issuer", self.as_uri)

    def _endpoint(self, name: str) -> str:
        if not self.configuration:
            raise AsUnreachable("AS not discovered yet")
        return self.configuration[name]

    async def _signed(
        self, method: str, url: str, body: bytes = b"", content_type: Optional[str] = None
    ) -> httpx.Response:
        headers = {"content-type": content_type} if content_type else {}
        signed = sign_http_message(
            SignableRequest(method=method, target_uri=url, headers=headers, body=body),
            self.key,
            self.clock(),
        )
        try:
            return await self.http.request(method, url, content=body, headers=signed.headers)
        except httpx.HTTPError as e:
            raise AsUnreachable(f"{method} {url} failed: {e}") from e

    async def _signed_json(self, method: str, url: str, payload) -> httpx.Response:
        return await self._signed(method, url, json.dumps(payload).encode("utf-8"), "application/json")

    @staticmethod
    def _raise_for_error(response: httpx.Response) -> None:
        if response.status_code < 400:
            return
        try:
            body = response.json()
        except ValueError:
            body = {}
        raise OAuthError(
            body.get("error", "server_error"),
            body.get("error_description", response.text[:200]),
            status=response.status_code,
        )

    async def request_permission(self, resource_id: str, scopes: Sequence[Action]) -> PermissionOutcome:
        response = await self._signed_json(
            "POST",
            self._endpoint("permission_endpoint"),
            {"resource_id": resource_id, "resource_scopes": [s.value for s in scopes]},
        )
        if response.status_code == 201:
            return PermissionOutcome(status=201, ticket=response.json()["ticket"])
        if response.status_code == 200:
            scopes = tuple(Action(s) for s in response.json().get("public_scopes", []))
            return PermissionOutcome(status=200, public_scopes=scopes)
        if response.status_code == 400 and response.json().get("error") == "invalid_resource_id":
            return PermissionOutcome(status=400)
        self._raise_for_error(response)
        raise AsUnreachable(f"unexpected permission endpoint status {response.status_code}")

    async def register(
        self,
        resource_id: str,
        scopes: Sequence[Action],
        resource_type: Optional[str] = None,
        name: Optional[str] = None,
    ) -> tuple[str, bool]:
        """Register a resource; an existing registration is looked up instead.

        Returns:
            The AS registration id, and whether the AS created it just now.
        """
        body = {"resource_id": resource_id, "resource_scopes": [s.value for s in scopes]}
        if name:
            body["name"] = name
        if resource_type:
            body["type"] = resource_type
        response = await self._signed_json("POST", self._endpoint("resource_registration_endpoint"), body)
        if response.status_code == 409:
            existing = await self.lookup(resource_id)
            if existing is None:
                raise OAuthError("conflict", f"{resource_id} conflicts but cannot be found", status=409)
            logger.debug(f"{resource_id} already registered as {existing[:12]}")
            return existing, False
        self._raise_for_error(response)
        return response.json()["_id"], True

    async def lookup(self, resource_id: str) -> Optional[str]:
        url = self._endpoint("resource_registration_endpoint") + "?" + urlencode({"resource_id": resource_id})
        response = await self._signed("GET", url)
        self._raise_for_error(response)
        ids = response.json()
        return ids[0] if ids else None

    async def deregister(self, registration_id: str) -> None:
        response = await self._signed("DELETE", self._endpoint("resource_registration_endpoint") + registration_id)
        if response.status_code == 404:
            logger.warning(f"Registration {registration_id[:12]} was already gone at the AS")
            return
        self._raise_for_error(response)

    async def introspect(self, token: str) -> dict:
        response = await self._signed(
            "POST",
            self._endpoint("introspection_endpoint"),
            urlencode({"token": token}).encode("ascii"),
            "application/x-www-form-urlencoded",
        )
        self._raise_for_error(response)
        return response.json()

    def _key_refresh_due(self, now: datetime) -> bool:
        return (
            self._keys_fetched_at is None
            or (now - self._keys_fetched_at).total_seconds() >= self.min_key_refresh_seconds
        )

    async def verify_bearer(self, token: str) -> AccessTokenClaims:
        """Validate an access token locally against the AS key set.

        Raises:
            TokenError: If the token does not verify, after one key refresh
                when the key id is unknown.
        """
        now = self.clock()
        try:
            claims = verify_token(token, self.keys, now)
        except TokenError as e:
            if e.code != "bad-signature" or not self._key_refresh_due(now):
                raise
            try:
                await self.refresh_keys()
            except AsUnreachable as unreachable:
                logger.warning(f"Keeping the current AS key set: {unreachable}")
                raise e from unreachable
            claims = verify_token(token, self.keys, now)
        if claims.iss != self.issuer:
            raise TokenError(f"token issued by {claims.iss}", code="wrong-issuer")
        return claims
