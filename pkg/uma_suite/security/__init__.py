"""Keys, signed access tokens and HTTP message signatures."""

from .http_signatures import (
    FRESHNESS_SECONDS,
    SignableRequest,
    content_digest,
    sign_http_message,
    verify_http_message,
)
from .keys import JWKS_PATH, KeyRing, KeySet, PublicKeyEntry, SigningKeyPair
from .tokens import AccessTokenClaims, decode_signed, mint_token, new_jti, sign_payload, verify_token

__all__ = [
    "FRESHNESS_SECONDS",
    "JWKS_PATH",
    "AccessTokenClaims",
    "KeyRing",
    "KeySet",
    "PublicKeyEntry",
    "SignableRequest",
    "SigningKeyPair",
    "content_digest",
    "decode_signed",
    "mint_token",
    "new_jti",
    "sign_http_message",
    "sign_payload",
    "verify_http_message",
    "verify_token",
]
