"""Verifiable credentials encoded as signed tokens with a flat ``claims`` map."""

from datetime import datetime

from ..clock import to_epoch
from ..errors import ClaimTokenError
from ..models.types import VC_FORMAT, VerifiedClaim
from ..security.keys import SigningKeyPair
from ..security.tokens import new_jti, sign_payload
from .base import ClaimFormat


class VcJwtFormat(ClaimFormat):
    """One claim per ``claims`` entry, e.g. ``{"role": "shoe-seller"}``."""

    uri = VC_FORMAT

    def extract(self, payload: dict, issuer: str) -> list[VerifiedClaim]:
        if not payload.get("sub"):
            raise ClaimTokenError("credential has no subject", code="missing-subject")
        claims = payload.get("claims")
        if not isinstance(claims, dict):
            raise ClaimTokenError("credential has no claims map", code="malformed-token")
        return [
            VerifiedClaim(claim_type=str(k), value=str(v), issuer=issuer, format=self.uri)
            for k, v in sorted(claims.items())
            if k and v
        ]

    @staticmethod
    def issue(
        key: SigningKeyPair,
        issuer: str,
        subject: str,
        claims: dict[str, str],
        issued_at: datetime,
        ttl_seconds: int = 3600,
    ) -> str:
        iat = to_epoch(issued_at)
        return sign_payload(
            {
                "iss": issuer,
                "sub": subject,
                "iat": iat,
                "exp": iat + ttl_seconds,
                "jti": new_jti(),
                "claims": dict(claims),
            },
            key,
            typ="vc+jwt",
        )
