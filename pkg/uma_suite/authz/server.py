"""aiohttp front end of the authorization server.

Routes:
    GET    /.well-known/uma2-configuration   discovery
    GET    /.well-known/jwks.json            AS signing keys
    POST   /rreg/                            register (signed RS)
    GET    /rreg/                            list own registrations (signed RS)
    GET    /rreg/{id}                        read (signed RS)
    PUT    /rreg/{id}                        update (signed RS)
    DELETE /rreg/{id}                        deregister (signed RS)
    POST   /perm                             permission ticket or public hint (signed RS)
    POST   /token                            UMA grant
    POST   /introspect                       token introspection (signed RS)
"""

import json
import logging
from typing import Optional

from aiohttp import web

from ..errors import HttpSignatureError, OAuthError
from ..models.types import AccessGrant
from ..security.http_signatures import SignableRequest
from ..security.keys import JWKS_PATH
from .rs_keys import RsKeyDirectory
from .service import (
    DISCOVERY_PATH,
    INTROSPECTION_PATH,
    PERMISSION_PATH,
    REGISTRATION_PATH,
    TOKEN_PATH,
    AuthorizationService,
    TokenRequestForm,
)

logger = logging.getLogger(__name__)

_NO_STORE = {"Cache-Control": "no-store"}


@web.middleware
async def oauth_error_middleware(request: web.Request, handler):
    """Answer OAuthError as a JSON error body; anything unexpected as a 500."""
    try:
        return await handler(request)
    except OAuthError as e:
        if e.status >= 500:
            logger.error(f"{request.method} {request.path}: {e.error}")
        return web.json_response(e.to_dict(), status=e.status, headers=_NO_STORE)
    except web.HTTPException:
        raise
    except Exception:
        logger.exception(f"Unhandled error on {request.method} {request.path}")
        return web.json_response({"error": "server_error"}, status=500)


def _json_object(body: bytes) -> dict:
    try:
        data = json.loads(body or b"{}")
    except json.JSONDecodeError as e:
        raise OAuthError("invalid_request", f"body is not JSON: {e}") from e
    if not isinstance(data, dict):
        raise OAuthError("invalid_request", "body must be a JSON object")
    return data


class AuthorizationServer:
    """Serves an ``AuthorizationService`` over HTTP.

    Resource servers authenticate every call with an HTTP message signature;
    the target URI is rebuilt from the configured public origin so signatures
    survive proxies and loopback routing.
    """

    def __init__(
        self,
        service: AuthorizationService,
        rs_keys: RsKeyDirectory,
        origin: Optional[str] = None,
    ):
        self.service = service
        self.rs_keys = rs_keys
        self.origin = (origin or service.issuer).rstrip("/")

    def build_app(self) -> web.Application:
        app = web.Application(middlewares=[oauth_error_middleware])
        app.router.add_get(DISCOVERY_PATH, self.handle_discovery)
        app.router.add_get(JWKS_PATH, self.handle_jwks)
        app.router.add_post(REGISTRATION_PATH, self.handle_register)
        app.router.add_get(REGISTRATION_PATH, self.handle_list)
        app.router.add_get(REGISTRATION_PATH + "{id}", self.handle_get)
        app.router.add_put(REGISTRATION_PATH + "{id}", self.handle_update)
        app.router.add_delete(REGISTRATION_PATH + "{id}", self.handle_delete)
        app.router.add_post(PERMISSION_PATH, self.handle_permission)
        app.router.add_post(TOKEN_PATH, self.handle_token)
        app.router.add_post(INTROSPECTION_PATH, self.handle_introspect)
        app.on_startup.append(self._on_startup)
        return app

    async def _on_startup(self, app: web.Application) -> None:
        await self.rs_keys.refresh()
        logger.info(f"Authorization server ready at {self.origin}, {len(self.rs_keys.origins)} RS allowlisted")

    async def _authenticated_rs(self, request: web.Request) -> tuple[str, bytes]:
        body = await request.read()
        signable = SignableRequest(
            method=request.method,
            target_uri=self.origin + request.raw_path,
            headers={k.lower(): v for k, v in request.headers.items()},
            body=body,
        )
        try:
            rs_origin = await self.rs_keys.authenticate(signable, self.service.clock())
        except HttpSignatureError as e:
            logger.warning(f"Rejected unsigned or badly signed {request.method} {request.path}: {e.code}")
            raise OAuthError("unauthenticated_rs", e.code, status=401) from e
        return rs_origin, body

    async def handle_discovery(self, request: web.Request) -> web.Response:
        return web.json_response(self.service.discovery().to_dict())

    async def handle_jwks(self, request: web.Request) -> web.Response:
        return web.json_response(self.service.keyring.key_set(self.service.clock()).to_jwks())

    async def handle_register(self, request: web.Request) -> web.Response:
        rs_origin, body = await self._authenticated_rs(request)
        registration = self.service.register_resource(rs_origin, _json_object(body))
        return web.json_response({"_id": registration.id}, status=201)

    async def handle_list(self, request: web.Request) -> web.Response:
        rs_origin, _ = await self._authenticated_rs(request)
        ids = self.service.list_resources(rs_origin, request.query.get("resource_id"))
        return web.json_response(ids)

    async def handle_get(self, request: web.Request) -> web.Response:
        rs_origin, _ = await self._authenticated_rs(request)
        registration = self.service.get_resource(rs_origin, request.match_info["id"])
        return web.json_response(registration.to_dict())

    async def handle_update(self, request: web.Request) -> web.Response:
        rs_origin, body = await self._authenticated_rs(request)
        registration = self.service.update_resource(rs_origin, request.match_info["id"], _json_object(body))
        return web.json_response({"_id": registration.id})

    async def handle_delete(self, request: web.Request) -> web.Response:
        rs_origin, _ = await self._authenticated_rs(request)
        self.service.delete_resource(rs_origin, request.match_info["id"])
        return web.Response(status=204)

    async def handle_permission(self, request: web.Request) -> web.Response:
        rs_origin, body = await self._authenticated_rs(request)
        result = self.service.create_permission(rs_origin, _json_object(body))
        return web.json_response(result.to_dict(), status=result.status)

    async def handle_token(self, request: web.Request) -> web.Response:
        form = TokenRequestForm.from_multidict(await request.post())
        result = self.service.handle_token_request(form)
        if isinstance(result, AccessGrant):
            return web.json_response(result.to_dict(), headers=_NO_STORE)
        return web.json_response(result.to_dict(), status=403, headers=_NO_STORE)

    async def handle_introspect(self, request: web.Request) -> web.Response:
        await self._authenticated_rs(request)
        form = await request.post()
        token = form.get("token")
        if not token:
            raise OAuthError("invalid_request", "token is required")
        return web.json_response(self.service.introspect(token))
