"""Test claim token verification for both supported formats."""

import json
from datetime import timedelta

import pytest

from uma_suite.claims import (
    CLAIM_FORMATS,
    CLOCK_SKEW_SECONDS,
    ClaimFormat,
    ClaimVerifier,
    OidcIdTokenFormat,
    VcJwtFormat,
    load_trust_file,
    verify_claim_token,
)
from uma_suite.errors import ClaimTokenError
from uma_suite.models.types import OIDC_FORMAT, VC_FORMAT, ClaimToken, VerifiedClaim
from uma_suite.security import KeySet, SigningKeyPair, sign_payload
from tests.conftest import FAVORITE, IDP, NOW, REGISTRY


def test_oidc_token_yields_webid(trust, favorite_id_token):
    claims = verify_claim_token(favorite_id_token(), trust, NOW)
    assert claims == [VerifiedClaim("webid", FAVORITE, IDP, OIDC_FORMAT)]


def test_oidc_token_without_webid_falls_back_to_sub(trust, idp_key):
    raw = OidcIdTokenFormat.issue(idp_key, IDP, "https://sub.example/id", NOW)
    (claim,) = verify_claim_token(ClaimToken(OIDC_FORMAT, raw), trust, NOW)
    assert claim.value == "https://sub.example/id"


def test_vc_token_yields_one_claim_per_entry(trust, registry_key):
    raw = VcJwtFormat.issue(registry_key, REGISTRY, "s", {"role": "shoe-seller", "country": "BE"}, NOW)
    claims = verify_claim_token(ClaimToken(VC_FORMAT, raw), trust, NOW)

    assert VerifiedClaim("role", "shoe-seller", REGISTRY, VC_FORMAT) in claims
    assert VerifiedClaim("country", "BE", REGISTRY, VC_FORMAT) in claims
    assert len(claims) == 2


def test_unknown_issuer_is_rejected(trust):
    stranger = SigningKeyPair.generate()
    raw = VcJwtFormat.issue(stranger, "https://stranger.example", "s", {"role": "shoe-seller"}, NOW)
    with pytest.raises(ClaimTokenError) as e:
        verify_claim_token(ClaimToken(VC_FORMAT, raw), trust, NOW)
    assert e.value.code == "unknown-issuer"


def test_trusted_issuer_name_with_wrong_key_is_rejected(trust):
    impostor = SigningKeyPair.generate()
    raw = VcJwtFormat.issue(impostor, REGISTRY, "s", {"role": "shoe-seller"}, NOW)
    with pytest.raises(ClaimTokenError) as e:
        verify_claim_token(ClaimToken(VC_FORMAT, raw), trust, NOW)
    assert e.value.code == "bad-signature"


def test_tampered_signature_is_rejected(trust, seller_vc):
    header, payload, signature = seller_vc().raw.split(".")
    flipped = signature[:10] + ("A" if signature[10] != "A" else "B") + signature[11:]
    with pytest.raises(ClaimTokenError) as e:
        verify_claim_token(ClaimToken(VC_FORMAT, f"{header}.{payload}.{flipped}"), trust, NOW)
    assert e.value.code == "bad-signature"


def test_unsupported_format(trust, seller_vc):
    with pytest.raises(ClaimTokenError) as e:
        verify_claim_token(ClaimToken("urn:example:sd-jwt", seller_vc().raw), trust, NOW)
    assert e.value.code == "unsupported-format"


def test_validity_window_allows_skew(trust, seller_vc):
    """Valid from iat-30s to exp+30s inclusive."""
    token = seller_vc(at=NOW, ttl_seconds=600)
    skew = timedelta(seconds=CLOCK_SKEW_SECONDS)

    assert verify_claim_token(token, trust, NOW - skew)
    assert verify_claim_token(token, trust, NOW + timedelta(seconds=600) + skew)

    with pytest.raises(ClaimTokenError) as e:
        verify_claim_token(token, trust, NOW - skew - timedelta(seconds=1))
    assert e.value.code == "token-not-yet-valid"

    with pytest.raises(ClaimTokenError) as e:
        verify_claim_token(token, trust, NOW + timedelta(seconds=601) + skew)
    assert e.value.code == "token-expired"


def test_verifier_checks_every_token(trust, seller_vc, favorite_id_token):
    verifier = ClaimVerifier(trust)
    claims = verifier.verify_all([seller_vc(), favorite_id_token()], NOW)
    assert {c.claim_type for c in claims} == {"role", "webid"}
    assert set(verifier.supported_formats) == {OIDC_FORMAT, VC_FORMAT}


class EmailFormat(ClaimFormat):
    uri = "urn:example:email+jwt"

    def extract(self, payload: dict, issuer: str) -> list[VerifiedClaim]:
        return [VerifiedClaim("email", payload["email"], issuer, self.uri)]


def test_third_format_plugs_in_through_registry(trust, idp_key):
    """A new format is a ClaimFormat subclass plus a registry entry."""
    raw = sign_payload(
        {"iss": IDP, "sub": "x", "iat": int(NOW.timestamp()), "exp": int(NOW.timestamp()) + 60, "email": "a@b.example"},
        idp_key,
    )
    verifier = ClaimVerifier(trust, {**CLAIM_FORMATS, EmailFormat.uri: EmailFormat()})

    claims = verifier.verify_all([ClaimToken(EmailFormat.uri, raw)], NOW)
    assert claims == [VerifiedClaim("email", "a@b.example", IDP, EmailFormat.uri)]


def test_load_trust_file(tmp_path, registry_key):
    path = tmp_path / "trust.json"
    path.write_text(json.dumps({"issuers": [
        {"issuer": REGISTRY, "jwks": KeySet.of(registry_key).to_jwks()},
        {"issuer": IDP, "jwks_uri": "https://idp.example/jwks"},
    ]}), encoding="utf-8")

    registry, idp = load_trust_file(path)
    assert registry.issuer == REGISTRY
    assert registry_key.key_id in registry.keys
    assert idp.keys is None and idp.jwks_uri == "https://idp.example/jwks"


def test_load_trust_file_rejects_duplicates(tmp_path):
    path = tmp_path / "trust.json"
    entry = {"issuer": IDP, "jwks_uri": "https://idp.example/jwks"}
    path.write_text(json.dumps({"issuers": [entry, entry]}), encoding="utf-8")
    with pytest.raises(ValueError):
        load_trust_file(path)
