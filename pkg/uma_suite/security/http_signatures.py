"""HTTP Message Signatures (RFC 9421) with Content-Digest (RFC 9530).

Fixed profile used between resource servers and the authorization server:

- covered components: ``@method``, ``@target-uri``, ``content-digest``
- signature parameters: ``created``, ``keyid``, ``alg="ed25519"``
- label ``sig1``; digest ``sha-256``
- freshness window: 120 seconds around ``created``
"""

import base64
import hashlib
import logging
import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Mapping

from cryptography.exceptions import InvalidSignature

from ..clock import to_epoch
from ..errors import HttpSignatureError
from .keys import KeySet, SigningKeyPair

logger = logging.getLogger(__name__)

SIGNATURE_LABEL = "sig1"
SIGNATURE_ALG = "ed25519"
COVERED_COMPONENTS = ("@method", "@target-uri", "content-digest")
FRESHNESS_SECONDS = 120

_SIGNATURE_INPUT_RE = re.compile(r'^(?P<label>[\w-]+)=\((?P<components>[^)]*)\)(?P<params>(;[^;]+)*)$')
_SIGNATURE_RE = re.compile(r"^(?P<label>[\w-]+)=:(?P<value>[A-Za-z0-9+/=]*):$")
_DIGEST_RE = re.compile(r"^sha-256=:(?P<value>[A-Za-z0-9+/=]*):$")


@dataclass(frozen=True)
class SignableRequest:
    """An outgoing or incoming HTTP request in the shape the signer needs.

    Header names are stored lower-case.
    """

    method: str
    target_uri: str
    headers: dict[str, str] = field(default_factory=dict)
    body: bytes = b""

    def header(self, name: str) -> str:
        return self.headers.get(name.lower(), "")


def content_digest(body: bytes) -> str:
    digest = base64.b64encode(hashlib.sha256(body).digest()).decode("ascii")
    return f"sha-256=:{digest}:"


def _signature_params(created: int, key_id: str) -> str:
    components = " ".join(f'"{c}"' for c in COVERED_COMPONENTS)
    return f'({components});created={created};keyid="{key_id}";alg="{SIGNATURE_ALG}"'


def _signature_base(request: SignableRequest, digest: str, params: str) -> bytes:
    lines = [
        f'"@method": {request.method.upper()}',
        f'"@target-uri": {request.target_uri}',
        f'"content-digest": {digest}',
        f'"@signature-params": {params}',
    ]
    return "\n".join(lines).encode("utf-8")


def sign_http_message(
    request: SignableRequest, key: SigningKeyPair, created: datetime
) -> SignableRequest:
    """Return a copy of the request carrying Content-Digest, Signature-Input and Signature."""
    digest = content_digest(request.body)
    params = _signature_params(to_epoch(created), key.key_id)
    signature = key.sign(_signature_base(request, digest, params))

    headers = {k.lower(): v for k, v in request.headers.items()}
    headers["content-digest"] = digest
    headers["signature-input"] = f"{SIGNATURE_LABEL}={params}"
    headers["signature"] = f"{SIGNATURE_LABEL}=:{base64.b64encode(signature).decode('ascii')}:"
    return replace(request, headers=headers)


def _parse_signature_input(value: str) -> tuple[str, int, str]:
    """Returns (params string, created, keyid) for the fixed profile."""
    match = _SIGNATURE_INPUT_RE.match(value.strip())
    if not match or match.group("label") != SIGNATURE_LABEL:
        raise HttpSignatureError(f"unparseable Signature-Input: {value!r}", code="no-signature")

    components = tuple(c.strip('"') for c in match.group("components").split())
    if components != COVERED_COMPONENTS:
        raise HttpSignatureError(f"unexpected covered components {components}", code="bad-signature")

    params = dict(
        p.split("=", 1) for p in match.group("params").strip(";").split(";") if "=" in p
    )
    try:
        created = int(params["created"])
        key_id = params["keyid"].strip('"')
    except (KeyError, ValueError) as e:
        raise HttpSignatureError(f"missing signature parameter: {e}", code="bad-signature") from e
    if params.get("alg", f'"{SIGNATURE_ALG}"').strip('"') != SIGNATURE_ALG:
        raise HttpSignatureError(f"unsupported alg {params.get('alg')}", code="bad-signature")

    return value.strip()[len(SIGNATURE_LABEL) + 1:], created, key_id


def verify_http_message(
    request: SignableRequest, allowlist: Mapping[str, KeySet], clock: datetime
) -> str:
    """Verify a signed request against the allowlisted parties' key sets.

    Args:
        request: The received request; ``target_uri`` must be reconstructed by
            the receiver from its own configured origin.
        allowlist: Party origin -> that party's published key set.
        clock: Verification instant.

    Returns:
        The origin whose key verified the signature.

    Raises:
        HttpSignatureError: ``no-signature``, ``unknown-key``, ``bad-signature``,
            ``stale-signature`` or ``digest-mismatch``.
    """
    signature_input = request.header("signature-input")
    signature_header = request.header("signature")
    if not signature_input or not signature_header:
        raise HttpSignatureError("request is not signed", code="no-signature")

    params, created, key_id = _parse_signature_input(signature_input)

    if abs(to_epoch(clock) - created) > FRESHNESS_SECONDS:
        raise HttpSignatureError(f"signature created at {created} is stale", code="stale-signature")

    digest = request.header("content-digest")
    if not _DIGEST_RE.match(digest) or digest != content_digest(request.body):
        raise HttpSignatureError("Content-Digest does not match body", code="digest-mismatch")

    origin, entry = None, None
    for candidate_origin, key_set in allowlist.items():
        entry = key_set.find(key_id)
        if entry is not None:
            origin = candidate_origin
            break
    if entry is None:
        raise HttpSignatureError(f"key {key_id} is not allowlisted", code="unknown-key")

    sig_match = _SIGNATURE_RE.match(signature_header.strip())
    if not sig_match or sig_match.group("label") != SIGNATURE_LABEL:
        raise HttpSignatureError("unparseable Signature header", code="bad-signature")
    try:
        signature = base64.b64decode(sig_match.group("value"), validate=True)
        entry.public_key.verify(signature, _signature_base(request, digest, params))
    except (InvalidSignature, ValueError) as e:
        raise HttpSignatureError("signature does not verify", code="bad-signature") from e

    return origin
