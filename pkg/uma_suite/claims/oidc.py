"""OpenID Connect ID tokens: prove a WebID."""

from datetime import datetime
from typing import Optional

from ..clock import to_epoch
from ..errors import ClaimTokenError
from ..models.types import OIDC_FORMAT, VerifiedClaim
from ..security.keys import SigningKeyPair
from ..security.tokens import new_jti, sign_payload
from .base import ClaimFormat


class OidcIdTokenFormat(ClaimFormat):
    """Yields exactly one ``webid`` claim: the ``webid`` claim if present, else ``sub``."""

    uri = OIDC_FORMAT

    def extract(self, payload: dict, issuer: str) -> list[VerifiedClaim]:
        webid = payload.get("webid") or payload.get("sub")
        if not webid or not isinstance(webid, str):
            raise ClaimTokenError("ID token has neither webid nor sub", code="missing-subject")
        return [VerifiedClaim(claim_type="webid", value=webid, issuer=issuer, format=self.uri)]

    @staticmethod
    def issue(
        key: SigningKeyPair,
        issuer: str,
        subject: str,
        issued_at: datetime,
        ttl_seconds: int = 3600,
        webid: Optional[str] = None,
        audience: str = "solid",
    ) -> str:
        iat = to_epoch(issued_at)
        payload = {
            "iss": issuer,
            "sub": subject,
            "aud": audience,
            "iat": iat,
            "exp": iat + ttl_seconds,
            "jti": new_jti(),
        }
        if webid:
            payload["webid"] = webid
        return sign_payload(payload, key)
