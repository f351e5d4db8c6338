"""Verification of pushed claim tokens against configured trusted issuers."""

import json
import logging
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Mapping, Optional, Sequence

import httpx
import jwt

from ..clock import to_epoch
from ..errors import ClaimTokenError, TokenError
from ..models.types import ClaimToken, VerifiedClaim
from ..security.keys import KeySet
from ..security.tokens import decode_signed
from .base import ClaimFormat
from .oidc import OidcIdTokenFormat
from .vc import VcJwtFormat

logger = logging.getLogger(__name__)

CLOCK_SKEW_SECONDS = 30

# format URI -> handler; register new formats here
CLAIM_FORMATS: dict[str, ClaimFormat] = {
    fmt.uri: fmt for fmt in (OidcIdTokenFormat(), VcJwtFormat())
}


@dataclass(frozen=True)
class TrustedIssuer:
    """An issuer whose claim tokens the AS accepts.

    Either ``keys`` is given inline, or ``jwks_uri`` is fetched once at startup
    by ``prefetch_key_sets``.
    """

    issuer: str
    keys: Optional[KeySet] = None
    jwks_uri: Optional[str] = None


def load_trust_file(path: Path) -> list[TrustedIssuer]:
    """Load trusted issuers from JSON.

    Format::

        {"issuers": [{"issuer": "https://idp.example", "jwks": {"keys": [...]}},
                     {"issuer": "https://registry.example", "jwks_uri": "https://..."}]}
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    trust, seen = [], set()
    for entry in data.get("issuers", []):
        issuer = entry["issuer"]
        if issuer in seen:
            raise ValueError(f"duplicate trusted issuer: {issuer}")
        seen.add(issuer)
        keys = KeySet.from_jwks(entry["jwks"]) if "jwks" in entry else None
        if keys is None and "jwks_uri" not in entry:
            raise ValueError(f"trusted issuer {issuer} needs jwks or jwks_uri")
        trust.append(TrustedIssuer(issuer=issuer, keys=keys, jwks_uri=entry.get("jwks_uri")))
    return trust


async def prefetch_key_sets(
    trust: Sequence[TrustedIssuer], http: httpx.AsyncClient
) -> list[TrustedIssuer]:
    """Resolve every ``jwks_uri`` into an inline key set."""
    resolved = []
    for entry in trust:
        if entry.keys is None and entry.jwks_uri:
            response = await http.get(entry.jwks_uri)
            response.raise_for_status()
            entry = replace(entry, keys=KeySet.from_jwks(response.json()))
            logger.info(f"Fetched {len(entry.keys)} keys for issuer {entry.issuer}")
        resolved.append(entry)
    return resolved


def verify_claim_token(
    token: ClaimToken,
    trust: Sequence[TrustedIssuer],
    clock: datetime,
    formats: Optional[Mapping[str, ClaimFormat]] = None,
) -> list[VerifiedClaim]:
    """Verify one claim token and normalize it into claims.

    Raises:
        ClaimTokenError: ``unsupported-format``, ``unknown-issuer``,
            ``bad-signature``, ``token-expired``, ``token-not-yet-valid`` or
            ``missing-subject``.
    """
    handler = (formats or CLAIM_FORMATS).get(token.format)
    if handler is None:
        raise ClaimTokenError(f"unsupported claim token format: {token.format}", code="unsupported-format")

    try:
        unverified = jwt.decode(token.raw, options={"verify_signature": False})
    except jwt.InvalidTokenError as e:
        raise ClaimTokenError(f"unparseable claim token: {e}", code="bad-signature") from e

    issuer_id = unverified.get("iss")
    issuer = next((t for t in trust if t.issuer == issuer_id), None)
    if issuer is None:
        raise ClaimTokenError(f"issuer {issuer_id!r} is not trusted", code="unknown-issuer")
    if issuer.keys is None:
        logger.warning(f"No keys resolved for trusted issuer {issuer.issuer}")
        raise ClaimTokenError(f"no keys for issuer {issuer.issuer}", code="bad-signature")

    try:
        payload = decode_signed(token.raw, issuer.keys)
    except TokenError as e:
        raise ClaimTokenError(str(e), code="bad-signature") from e
    if payload.get("iss") != issuer.issuer:
        raise ClaimTokenError("issuer changed between parse and verify", code="bad-signature")

    _check_validity(payload, to_epoch(clock))
    return handler.extract(payload, issuer.issuer)


def _check_validity(payload: dict, now: int) -> None:
    try:
        iat = int(payload["iat"])
        exp = int(payload["exp"])
        nbf = int(payload.get("nbf", iat))
    except (KeyError, TypeError, ValueError) as e:
        raise ClaimTokenError(f"claim token lacks a validity window: {e}", code="bad-signature") from e

    if now < max(iat, nbf) - CLOCK_SKEW_SECONDS:
        raise ClaimTokenError("claim token is not yet valid", code="token-not-yet-valid")
    if now > exp + CLOCK_SKEW_SECONDS:
        raise ClaimTokenError("claim token has expired", code="token-expired")


class ClaimVerifier:
    """Verifies a batch of pushed claim tokens for one token request."""

    def __init__(self, trust: Sequence[TrustedIssuer], formats: Optional[Mapping[str, ClaimFormat]] = None):
        self.trust = tuple(trust)
        self.formats = dict(formats or CLAIM_FORMATS)

    @property
    def supported_formats(self) -> tuple[str, ...]:
        return tuple(self.formats)

    def verify_all(self, tokens: Sequence[ClaimToken], clock: datetime) -> list[VerifiedClaim]:
        claims: list[VerifiedClaim] = []
        for token in tokens:
            claims.extend(verify_claim_token(token, self.trust, clock, self.formats))
        return claims
