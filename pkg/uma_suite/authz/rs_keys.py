"""Key sets of the resource servers allowed to call the authorization server."""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Mapping, Optional, Union

import httpx

from ..errors import HttpSignatureError
from ..security.http_signatures import SignableRequest, verify_http_message
from ..security.keys import KeySet

logger = logging.getLogger(__name__)

KeySource = Union[str, KeySet]


def load_allowlist(path: Path) -> dict[str, KeySource]:
    """Load an RS allowlist file.

    Format::

        {"https://pod.example": "https://pod.example/.well-known/jwks.json",
         "https://other.example": {"keys": [...]}}
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"{path}: allowlist must map RS origins to jwks URIs or documents")
    return {
        origin.rstrip("/"): source if isinstance(source, str) else KeySet.from_jwks(source)
        for origin, source in data.items()
    }


class RsKeyDirectory:
    """Resolves allowlisted RS origins to their published key sets.

    Inline key sets are used as-is. URI sources are fetched lazily on first use
    and refetched when a request names a key id no known set contains, which
    is how an RS key rotation becomes visible. Refetches are at least
    ``min_refresh_seconds`` apart.
    """

    def __init__(
        self,
        allowlist: Mapping[str, KeySource],
        http: Optional[httpx.AsyncClient] = None,
        min_refresh_seconds: float = 30.0,
    ):
        self._sources = dict(allowlist)
        self._key_sets: dict[str, KeySet] = {
            origin: source for origin, source in self._sources.items() if isinstance(source, KeySet)
        }
        self._http = http
        self.min_refresh_seconds = min_refresh_seconds
        self._refreshed_at: Optional[datetime] = None

    @property
    def origins(self) -> tuple[str, ...]:
        return tuple(self._sources)

    def allow(self, origin: str, source: KeySource) -> None:
        self._sources[origin] = source
        if isinstance(source, KeySet):
            self._key_sets[origin] = source

    def _refresh_due(self, now: datetime) -> bool:
        return (
            self._refreshed_at is None
            or (now - self._refreshed_at).total_seconds() >= self.min_refresh_seconds
        )

    async def refresh(self, now: Optional[datetime] = None) -> None:
        """Fetch every URI-backed key set; failures keep the previous set."""
        if self._http is None:
            return
        self._refreshed_at = now
        for origin, source in self._sources.items():
            if isinstance(source, KeySet):
                continue
            try:
                response = await self._http.get(source)
                response.raise_for_status()
                self._key_sets[origin] = KeySet.from_jwks(response.json())
                logger.debug(f"Fetched {len(self._key_sets[origin])} keys for RS {origin}")
            except (httpx.HTTPError, ValueError) as e:
                logger.warning(f"Could not fetch key set of RS {origin}: {e}")

    async def authenticate(self, request: SignableRequest, clock: datetime) -> str:
        """Return the allowlisted origin that signed ``request``.

        Raises:
            HttpSignatureError: If the signature does not verify against any
                allowlisted key, after at most one refresh.
        """
        if len(self._key_sets) < len(self._sources) and self._refresh_due(clock):
            await self.refresh(clock)
        try:
            return verify_http_message(request, self._key_sets, clock)
        except HttpSignatureError as e:
            if e.code != "unknown-key" or not self._refresh_due(clock):
                raise
        await self.refresh(clock)
        return verify_http_message(request, self._key_sets, clock)
