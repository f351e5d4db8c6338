"""httpx transport that routes logical origins to local listeners.

Parties address each other by their public origins (``https://as.example``),
so signed target URIs and token audiences are the same as in a real
deployment. The transport rewrites only the connection target; the Host
header still names the logical origin.
"""

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import httpx

logger = logging.getLogger(__name__)


def origin_of(url: httpx.URL) -> str:
    port = f":{url.port}" if url.port else ""
    return f"{url.scheme}://{url.host}{port}"


@dataclass(frozen=True)
class Route:
    party: str
    base_url: str


@dataclass(frozen=True)
class Exchange:
    """One HTTP request/response pair seen on the wire."""

    party: str
    target: str
    method: str
    path: str
    status: int
    step: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "party": self.party,
            "target": self.target,
            "method": self.method,
            "path": self.path,
            "status": self.status,
            "step": self.step,
        }


@dataclass
class ExchangeLog:
    """Append-only record of exchanges, tagged with the current step."""

    exchanges: list[Exchange] = field(default_factory=list)
    step: Optional[int] = None

    def record(self, party: str, target: str, method: str, path: str, status: int) -> None:
        self.exchanges.append(Exchange(party, target, method, path, status, self.step))

    def between(self, party: str, target: str, step: Optional[int] = None) -> list[Exchange]:
        return [
            e for e in self.exchanges
            if e.party == party and e.target == target and (step is None or e.step == step)
        ]


class LoopbackTransport(httpx.AsyncBaseTransport):
    """Sends requests for known origins to their local listeners.

    Args:
        party: Name recorded as the sender of every exchange.
        routes: Logical origin -> Route; shared between transports and may be
            filled in after construction.
        log: Exchange log every completed exchange is appended to.
    """

    def __init__(
        self,
        party: str,
        routes: Mapping[str, Route],
        log: Optional[ExchangeLog] = None,
    ):
        self.party = party
        self.routes = routes
        self.log = log
        self._inner = httpx.AsyncHTTPTransport()

    async def handle_async_request(self, request: httpx.Request) -> httpx.Response:
        logical = request.url
        route = self.routes.get(origin_of(logical))
        if route is None:
            raise httpx.ConnectError(f"no route to {origin_of(logical)}", request=request)

        local = httpx.URL(route.base_url)
        request.url = logical.copy_with(scheme=local.scheme, host=local.host, port=local.port)
        try:
            response = await self._inner.handle_async_request(request)
        finally:
            request.url = logical

        if self.log is not None:
            self.log.record(self.party, route.party, request.method, logical.path, response.status_code)
        logger.debug(f"{self.party} -> {route.party}: {request.method} {logical} {response.status_code}")
        return response

    async def aclose(self) -> None:
        await self._inner.aclose()


def loopback_client(
    party: str, routes: Mapping[str, Route], log: Optional[ExchangeLog] = None, **kwargs
) -> httpx.AsyncClient:
    return httpx.AsyncClient(transport=LoopbackTransport(party, routes, log), **kwargs)
