"""Claim token verification (OIDC ID tokens and VC-style signed tokens)."""

from .base import ClaimFormat
from .oidc import OidcIdTokenFormat
from .vc import VcJwtFormat
from .verifier import (
    CLAIM_FORMATS,
    CLOCK_SKEW_SECONDS,
    ClaimVerifier,
    TrustedIssuer,
    load_trust_file,
    prefetch_key_sets,
    verify_claim_token,
)

__all__ = [
    "CLAIM_FORMATS",
    "CLOCK_SKEW_SECONDS",
    "ClaimFormat",
    "ClaimVerifier",
    "OidcIdTokenFormat",
    "TrustedIssuer",
    "VcJwtFormat",
    "load_trust_file",
    "prefetch_key_sets",
    "verify_claim_token",
]
