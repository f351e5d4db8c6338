"""Signed compact tokens (JWS, EdDSA).

Time checks are done here against an injected clock, never by PyJWT against
the system clock.
"""

import logging
import secrets
from dataclasses import dataclass
from datetime import datetime
from typing import Any, Union

import jwt

from ..clock import to_epoch
from ..errors import TokenError
from ..models.types import Permission, UsageRequirement
from .keys import ALGORITHM, KeySet, SigningKeyPair

logger = logging.getLogger(__name__)

_NO_TIME_CHECKS = {
    "verify_signature": True,
    "verify_exp": False,
    "verify_nbf": False,
    "verify_iat": False,
    "verify_aud": False,
    "verify_iss": False,
}


@dataclass(frozen=True)
class AccessTokenClaims:
    """Payload of an access token minted by the AS."""

    iss: str
    sub: str
    aud: tuple[str, ...]
    iat: int
    exp: int
    jti: str
    permissions: tuple[Permission, ...]
    usage: tuple[UsageRequirement, ...] = ()

    def __post_init__(self):
        if self.iat >= self.exp:
            raise ValueError(f"token iat {self.iat} must precede exp {self.exp}")

    def to_payload(self) -> dict:
        return {
            "iss": self.iss,
            "sub": self.sub,
            "aud": self.aud[0] if len(self.aud) == 1 else list(self.aud),
            "iat": self.iat,
            "exp": self.exp,
            "jti": self.jti,
            "permissions": [p.to_dict() for p in self.permissions],
            "usage": [u.to_dict() for u in self.usage],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "AccessTokenClaims":
        try:
            aud = payload["aud"]
            return cls(
                iss=payload["iss"],
                sub=payload["sub"],
                aud=(aud,) if isinstance(aud, str) else tuple(aud),
                iat=int(payload["iat"]),
                exp=int(payload["exp"]),
                jti=payload["jti"],
                permissions=tuple(Permission.from_dict(p) for p in payload["permissions"]),
                usage=tuple(UsageRequirement.from_dict(u) for u in payload.get("usage", [])),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise TokenError(f"token payload is incomplete: {e}", code="malformed-token") from e


def new_jti() -> str:
    return secrets.token_urlsafe(16)


def sign_payload(payload: dict, key: SigningKeyPair, typ: str = "JWT") -> str:
    return jwt.encode(
        payload,
        key.private_key,
        algorithm=ALGORITHM,
        headers={"kid": key.key_id, "typ": typ},
    )


def decode_signed(token: str, keys: KeySet) -> dict[str, Any]:
    """Verify a compact token's signature against a key set; no time checks.

    The ``kid`` header selects the key; tokens without a ``kid`` are tried
    against every key in the set.

    Raises:
        TokenError: ``malformed-token`` or ``bad-signature``.
    """
    try:
        header = jwt.get_unverified_header(token)
    except jwt.DecodeError as e:
        raise TokenError(f"cannot parse token header: {e}", code="malformed-token") from e

    kid = header.get("kid")
    if kid is not None:
        entry = keys.find(kid)
        candidates = [entry] if entry else []
    else:
        candidates = list(keys.entries)
    if not candidates:
        raise TokenError(f"no key {kid!r} in key set", code="bad-signature")

    for entry in candidates:
        try:
            return jwt.decode(token, entry.public_key, algorithms=[ALGORITHM], options=_NO_TIME_CHECKS)
        except jwt.InvalidSignatureError:
            continue
        except jwt.DecodeError as e:
            raise TokenError(f"malformed token: {e}", code="malformed-token") from e
        except jwt.InvalidTokenError as e:
            raise TokenError(f"invalid token: {e}", code="malformed-token") from e
    raise TokenError("signature does not verify", code="bad-signature")


def mint_token(claims: AccessTokenClaims, key: SigningKeyPair) -> str:
    """Sign access-token claims into a compact token."""
    return sign_payload(claims.to_payload(), key, typ="at+jwt")


def verify_token(token: str, keys: KeySet, clock: Union[datetime, int]) -> AccessTokenClaims:
    """Verify an access token at a given instant.

    Returns:
        The embedded claims, when the signature verifies and iat <= clock < exp.

    Raises:
        TokenError: ``bad-signature``, ``token-expired``, ``token-not-yet-valid``
            or ``malformed-token``.
    """
    claims = AccessTokenClaims.from_payload(decode_signed(token, keys))
    now = clock if isinstance(clock, int) else to_epoch(clock)
    if now < claims.iat:
        raise TokenError(f"token not valid before {claims.iat}", code="token-not-yet-valid")
    if now >= claims.exp:
        raise TokenError(f"token expired at {claims.exp}", code="token-expired")
    return claims
