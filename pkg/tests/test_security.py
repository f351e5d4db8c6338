"""Test keys, access tokens and HTTP message signatures."""

import base64
import json
import random
import stat
import string
from datetime import timedelta

import pytest
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey

from uma_suite.clock import from_epoch, to_epoch
from uma_suite.errors import HttpSignatureError, TokenError
from uma_suite.models.types import Action, Constraint, Permission, TimeWindow, UsageRequirement
from uma_suite.security import (
    FRESHNESS_SECONDS,
    AccessTokenClaims,
    KeyRing,
    KeySet,
    SignableRequest,
    SigningKeyPair,
    content_digest,
    decode_signed,
    mint_token,
    new_jti,
    sign_http_message,
    verify_http_message,
    verify_token,
)
from uma_suite.security.keys import key_id_for
from tests.conftest import NOW, POD

_B64URL = string.ascii_uppercase + string.ascii_lowercase + string.digits + "-_"

AS_KEY = SigningKeyPair.generate()
AS_KEYS = KeySet.of(AS_KEY)


def _claims(**overrides) -> AccessTokenClaims:
    iat = to_epoch(NOW)
    values = dict(
        iss="https://as.example",
        sub="anonymous",
        aud=(POD,),
        iat=iat,
        exp=iat + 600,
        jti=new_jti(),
        permissions=(Permission(POD + "/alice/profile/shoe-size", (Action.READ,)),),
    )
    values.update(overrides)
    return AccessTokenClaims(**values)


# --- keys ---------------------------------------------------------------------


def test_key_file_roundtrip(tmp_path):
    path = tmp_path / "keys" / "as.pem"
    key = SigningKeyPair.load_or_generate(path)

    assert stat.S_IMODE(path.stat().st_mode) == 0o600
    assert SigningKeyPair.load_or_generate(path).key_id == key.key_id


def test_key_id_is_the_jwk_thumbprint():
    # Ed25519 example key with its published thumbprint
    x = "11qYAYKxCrfVS_7TyWQHOg7hcvPapiMlrwIaaPcHURo"
    public_key = Ed25519PublicKey.from_public_bytes(base64.urlsafe_b64decode(x + "="))
    assert key_id_for(public_key) == "kPrK_qmxVWaYVA9wwBF6Iuo3vVzz7TxHCTwXBygrS4k"

    key = SigningKeyPair.generate()
    assert key.key_id == key_id_for(key.private_key.public_key())


def test_jwks_roundtrip_keeps_key_ids():
    keys = KeySet.of(SigningKeyPair.generate(), SigningKeyPair.generate())
    parsed = KeySet.from_jwks(json.loads(json.dumps(keys.to_jwks())))
    assert [e.key_id for e in parsed.entries] == [e.key_id for e in keys.entries]


def test_jwks_with_private_material_is_rejected():
    jwk = AS_KEYS.to_jwks()["keys"][0]
    with pytest.raises(ValueError):
        KeySet.from_jwks({"keys": [{**jwk, "d": "AAAA"}]})


def test_jwks_skips_foreign_key_types():
    document = {"keys": [{"kty": "RSA", "kid": "r1", "n": "xx", "e": "AQAB"}, *AS_KEYS.to_jwks()["keys"]]}
    assert len(KeySet.from_jwks(document)) == 1


def test_rotation_keeps_old_key_for_overlap():
    old, new = SigningKeyPair.generate(), SigningKeyPair.generate()
    ring = KeyRing(old, overlap_seconds=3600)
    token = mint_token(_claims(), old)

    ring.rotate(new, NOW)
    assert ring.current is new
    within = ring.key_set(NOW + timedelta(minutes=30))
    assert old.key_id in within and new.key_id in within
    assert verify_token(token, within, NOW).jti

    after = ring.key_set(NOW + timedelta(hours=2))
    assert old.key_id not in after
    with pytest.raises(TokenError):
        verify_token(token, after, NOW)


# --- access tokens ----------------------------------------------------------------


def _random_claims(rng: random.Random) -> AccessTokenClaims:
    origins = [POD, "https://pod2.example", "https://pod3.example"]
    iat = rng.randint(1_700_000_000, 1_900_000_000)
    permissions = []
    for _ in range(rng.randint(1, 4)):
        scopes = tuple(a for a in Action if rng.random() < 0.5) or (Action.READ,)
        permissions.append(Permission(f"{rng.choice(origins)}/r/{rng.randint(0, 999)}", scopes))
    usage = []
    if rng.random() < 0.5:
        start = from_epoch(iat - rng.randint(0, 86400))
        usage.append(UsageRequirement.of(Constraint(window=TimeWindow(start, start + timedelta(days=rng.randint(1, 14))))))
    if rng.random() < 0.5:
        usage.append(UsageRequirement.of(Constraint(purpose=f"https://purposes.example/{rng.randint(0, 9)}")))
    return AccessTokenClaims(
        iss="https://as.example",
        sub=rng.choice(["anonymous", "https://favorite.example/id", "https://seller.example/id"]),
        aud=tuple(sorted(rng.sample(origins, rng.randint(1, 3)))),
        iat=iat,
        exp=iat + rng.randint(1, 86400),
        jti=new_jti(),
        permissions=tuple(permissions),
        usage=tuple(sorted(usage, key=UsageRequirement.sort_key)),
    )


def test_mint_verify_roundtrip_random_claims():
    rng = random.Random(1234)
    for _ in range(1000):
        claims = _random_claims(rng)
        token = mint_token(claims, AS_KEY)
        assert verify_token(token, AS_KEYS, claims.iat) == claims


def test_single_character_tamper_is_detected():
    rng = random.Random(99)
    token = mint_token(_claims(), AS_KEY)
    positions = [i for i, c in enumerate(token) if c != "."]
    for position in rng.sample(positions, 200):
        replacement = _B64URL[_B64URL.index(token[position]) ^ 32]
        tampered = token[:position] + replacement + token[position + 1:]
        with pytest.raises(TokenError):
            verify_token(tampered, AS_KEYS, NOW)


def test_expiry_boundary_is_exact():
    claims = _claims()
    token = mint_token(claims, AS_KEY)

    assert verify_token(token, AS_KEYS, claims.exp - 1) == claims
    with pytest.raises(TokenError) as e:
        verify_token(token, AS_KEYS, claims.exp)
    assert e.value.code == "token-expired"
    with pytest.raises(TokenError) as e:
        verify_token(token, AS_KEYS, claims.iat - 1)
    assert e.value.code == "token-not-yet-valid"


def test_token_from_unknown_key_is_rejected():
    token = mint_token(_claims(), SigningKeyPair.generate())
    with pytest.raises(TokenError) as e:
        verify_token(token, AS_KEYS, NOW)
    assert e.value.code == "bad-signature"


def test_decode_signed_skips_time_checks():
    claims = _claims()
    payload = decode_signed(mint_token(claims, AS_KEY), AS_KEYS)
    assert payload["exp"] == claims.exp


# --- HTTP message signatures ------------------------------------------------------

RS_KEY = SigningKeyPair.generate()
ALLOWLIST = {POD: KeySet.of(RS_KEY)}


def _signed(body: bytes = b'{"resource_id": "https://pod.example/a"}') -> SignableRequest:
    request = SignableRequest(
        method="POST",
        target_uri="https://as.example/perm",
        headers={"Content-Type": "application/json"},
        body=body,
    )
    return sign_http_message(request, RS_KEY, NOW)


def _with(request: SignableRequest, **changes) -> SignableRequest:
    values = {"method": request.method, "target_uri": request.target_uri, "headers": dict(request.headers), "body": request.body}
    values.update(changes)
    return SignableRequest(**values)


def test_signed_request_verifies():
    request = _signed()
    assert request.header("content-digest") == content_digest(request.body)
    assert verify_http_message(request, ALLOWLIST, NOW) == POD


def test_tampered_body_is_rejected():
    request = _signed()
    tampered = _with(request, body=request.body.replace(b"/a", b"/b"))
    with pytest.raises(HttpSignatureError) as e:
        verify_http_message(tampered, ALLOWLIST, NOW)
    assert e.value.code == "digest-mismatch"


def test_tampered_body_with_fresh_digest_is_rejected():
    request = _signed()
    body = request.body.replace(b"/a", b"/b")
    headers = {**request.headers, "content-digest": content_digest(body)}
    with pytest.raises(HttpSignatureError) as e:
        verify_http_message(_with(request, body=body, headers=headers), ALLOWLIST, NOW)
    assert e.value.code == "bad-signature"


def test_stale_signature_is_rejected():
    request = _signed()
    assert verify_http_message(request, ALLOWLIST, NOW + timedelta(seconds=FRESHNESS_SECONDS))
    with pytest.raises(HttpSignatureError) as e:
        verify_http_message(request, ALLOWLIST, NOW + timedelta(seconds=FRESHNESS_SECONDS + 1))
    assert e.value.code == "stale-signature"


def test_unlisted_key_is_rejected():
    with pytest.raises(HttpSignatureError) as e:
        verify_http_message(_signed(), {POD: KeySet.of(SigningKeyPair.generate())}, NOW)
    assert e.value.code == "unknown-key"


def test_other_target_uri_is_rejected():
    request = _with(_signed(), target_uri="https://as.example/rreg/")
    with pytest.raises(HttpSignatureError) as e:
        verify_http_message(request, ALLOWLIST, NOW)
    assert e.value.code == "bad-signature"


def test_unsigned_request_is_rejected():
    with pytest.raises(HttpSignatureError) as e:
        verify_http_message(SignableRequest("GET", "https://as.example/rreg/"), ALLOWLIST, NOW)
    assert e.value.code == "no-signature"
