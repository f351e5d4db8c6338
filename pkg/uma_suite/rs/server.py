"""aiohttp resource server that delegates every access decision to the AS.

The RS knows nothing about policies. For each request it learns one of three
things from the AS: the resource is public right now (200 hint), a ticket to
put in a UMA challenge (201), or, via a bearer token it validates locally,
which (resource, scope) pairs the client was granted.
"""

import logging
import uuid
from typing import Optional

from aiohttp import web

from ..errors import AsUnreachable, OAuthError, StorageError, TokenError
from ..models.types import ALL_SCOPES, Action
from ..security.keys import JWKS_PATH, KeySet
from ..security.tokens import AccessTokenClaims
from .as_client import AsClient
from .storage import ResourceStore, is_container, normalize_path, parent_of

logger = logging.getLogger(__name__)

SCOPE_FOR_METHOD = {
    "GET": Action.READ,
    "HEAD": Action.READ,
    "POST": Action.APPEND,
    "PUT": Action.WRITE,
    "PATCH": Action.WRITE,
    "DELETE": Action.DELETE,
}
RESOURCE_TYPE_HEADER = "X-Resource-Type"


def uma_challenge(realm: str, as_uri: str, ticket: Optional[str]) -> str:
    challenge = f'UMA realm="{realm}", as_uri="{as_uri}"'
    if ticket:
        challenge += f', ticket="{ticket}"'
    return challenge


def bearer_token(request: web.Request) -> Optional[str]:
    scheme, _, value = request.headers.get("Authorization", "").partition(" ")
    if scheme.lower() == "bearer" and value.strip():
        return value.strip()
    return None


@web.middleware
async def storage_error_middleware(request: web.Request, handler):
    try:
        return await handler(request)
    except StorageError as e:
        status = {"invalid-path": 400, "not-found": 404}.get(e.code, 409)
        return web.json_response({"error": e.code, "error_description": str(e)}, status=status)
    except (AsUnreachable, OAuthError) as e:
        logger.error(f"AS call failed during {request.method} {request.path}: {e}")
        return web.json_response({"error": "as_unavailable"}, status=502)
    except web.HTTPException:
        raise
    except Exception:
        logger.exception(f"Unhandled error on {request.method} {request.path}")
        return web.json_response({"error": "server_error"}, status=500)


class ResourceServer:
    """A minimal Solid-style pod protected by a UMA authorization server.

    Example:
        store = ResourceStore(Path("./pod"))
        as_client = AsClient("https://as.example", key, httpx.AsyncClient(), system_clock)
        server = ResourceServer("https://pod.example", store, as_client)
        await server.start()
        web.run_app(server.build_app())
    """

    def __init__(self, origin: str, store: ResourceStore, as_client: AsClient):
        self.origin = origin.rstrip("/")
        self.store = store
        self.as_client = as_client

    def resource_id(self, path: str) -> str:
        return self.origin + path

    def build_app(self) -> web.Application:
        app = web.Application(middlewares=[storage_error_middleware])
        app.router.add_get(JWKS_PATH, self.handle_jwks)
        app.router.add_route("*", "/{tail:.*}", self.handle_request)
        return app

    async def start(self) -> int:
        """Discover the AS and synchronize registrations.

        Raises:
            AsUnreachable: If the AS cannot be reached; the RS must not serve
                without it.
        """
        await self.as_client.discover()
        return await self.register_all()

    async def register_all(self) -> int:
        """Register every stored resource; returns how many the AS did not know yet."""
        created = 0
        for path in self.store.paths():
            meta = self.store.meta(path)
            registration_id, is_new = await self.as_client.register(
                self.resource_id(path), ALL_SCOPES, resource_type=meta.resource_type, name=path
            )
            if meta.registration_id != registration_id:
                self.store.set_registration(path, registration_id)
            created += is_new
        logger.info(f"Registry synchronized: {len(self.store.paths())} resources, {created} new")
        return created

    async def handle_jwks(self, request: web.Request) -> web.Response:
        return web.json_response(KeySet.of(self.as_client.key).to_jwks())

    def _authorization_target(self, method: str, path: str) -> str:
        """Path whose registration governs the request.

        Creating a resource with PUT is an append on the nearest existing
        container above it.
        """
        if method == "PUT" and not self.store.exists(path):
            parent = parent_of(path)
            while parent is not None and not self.store.exists(parent):
                parent = parent_of(parent)
            return parent or "/"
        return path

    async def _verified_claims(self, token: Optional[str]) -> Optional[AccessTokenClaims]:
        if token is None:
            return None
        try:
            claims = await self.as_client.verify_bearer(token)
        except TokenError as e:
            logger.info(f"Ignoring bearer token {token[:12]}...: {e.code}")
            return None
        if self.origin not in claims.aud:
            logger.info(f"Ignoring bearer token for audience {claims.aud}")
            return None
        return claims

    async def handle_request(self, request: web.Request) -> web.StreamResponse:
        path = normalize_path(request.path)
        scope = SCOPE_FOR_METHOD.get(request.method)
        if scope is None:
            raise web.HTTPMethodNotAllowed(request.method, list(SCOPE_FOR_METHOD))
        if request.method == "POST" and not is_container(path):
            raise web.HTTPMethodNotAllowed("POST", [m for m in SCOPE_FOR_METHOD if m != "POST"])

        target = self._authorization_target(request.method, path)
        if target != path:
            scope = Action.APPEND
        resource_id = self.resource_id(target)

        claims = await self._verified_claims(bearer_token(request))
        if claims is not None:
            if not any(p.covers(resource_id, scope) for p in claims.permissions):
                logger.info(f"Token of {claims.sub} does not cover {scope.value} on {target}")
                return web.json_response({"error": "insufficient_scope"}, status=403)
            if not self.store.exists(target):
                return web.json_response({"error": "not_found"}, status=404)
            return await self._serve(request, path)

        outcome = await self.as_client.request_permission(resource_id, [scope])
        if outcome.public:
            logger.debug(f"{scope.value} on {target} is public")
            return await self._serve(request, path)
        return web.json_response(
            {"error": "unauthorized"},
            status=401,
            headers={"WWW-Authenticate": uma_challenge(self.origin, self.as_client.as_uri, outcome.ticket)},
        )

    async def _serve(self, request: web.Request, path: str) -> web.StreamResponse:
        if request.method in ("GET", "HEAD"):
            resource = self.store.get(path)
            if resource is None:
                return web.json_response({"error": "not_found"}, status=404)
            headers = {"Content-Type": resource.content_type}
            if resource.resource_type:
                headers[RESOURCE_TYPE_HEADER] = resource.resource_type
            if request.method == "HEAD":
                return web.Response(status=200, headers=headers)
            return web.Response(body=resource.body, headers=headers)

        if request.method == "PUT":
            return await self._create_or_replace(request, path)

        if request.method == "POST":
            slug = request.headers.get("Slug", "").strip("/") or uuid.uuid4().hex
            child = path + slug
            if self.store.exists(child) or self.store.exists(child + "/"):
                child = path + f"{slug}-{uuid.uuid4().hex[:8]}"
            return await self._create_or_replace(request, child)

        if request.method == "PATCH":
            async with self.store.lock(path):
                meta = self.store.meta(path)
                if meta is None or is_container(path):
                    return web.json_response({"error": "not_found"}, status=404)
                self.store.put(path, await request.read(), request.headers.get("Content-Type", meta.content_type))
            return web.Response(status=204)

        return await self._delete(path)

    async def _create_or_replace(self, request: web.Request, path: str) -> web.Response:
        body = await request.read()
        async with self.store.lock(path):
            created = self.store.put(
                path,
                body,
                request.content_type,
                resource_type=request.headers.get(RESOURCE_TYPE_HEADER),
            )
            try:
                for new_path in created:
                    meta = self.store.meta(new_path)
                    registration_id, _ = await self.as_client.register(
                        self.resource_id(new_path), ALL_SCOPES, resource_type=meta.resource_type, name=new_path
                    )
                    self.store.set_registration(new_path, registration_id)
            except (AsUnreachable, OAuthError):
                for new_path in reversed(created):
                    meta = self.store.delete(new_path)
                    if meta.registration_id:
                        await self._deregister_quietly(meta.registration_id)
                raise
        if path in created:
            logger.info(f"Created {path}")
            return web.Response(status=201, headers={"Location": self.resource_id(path)})
        return web.Response(status=204)

    async def _deregister_quietly(self, registration_id: str) -> None:
        try:
            await self.as_client.deregister(registration_id)
        except (AsUnreachable, OAuthError) as e:
            logger.warning(f"Could not roll back registration {registration_id[:12]}: {e}")

    async def _delete(self, path: str) -> web.Response:
        async with self.store.lock(path):
            previous = self.store.get(path)
            meta = self.store.delete(path)
            if meta.registration_id:
                try:
                    await self.as_client.deregister(meta.registration_id)
                except (AsUnreachable, OAuthError):
                    self.store.put(path, b"" if is_container(path) else previous.body,
                                   meta.content_type, meta.resource_type)
                    self.store.set_registration(path, meta.registration_id)
                    raise
        logger.info(f"Deleted {path}")
        return web.Response(status=204)
