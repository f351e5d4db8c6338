"""Ed25519 key material, JWKS documents and key rotation."""

import base64
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Iterable, Optional

import jwt
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from jwt.algorithms import OKPAlgorithm

logger = logging.getLogger(__name__)

ALGORITHM = "EdDSA"
JWKS_PATH = "/.well-known/jwks.json"

# Fields of a JWK that carry private material
_PRIVATE_JWK_FIELDS = {"d", "p", "q", "dp", "dq", "qi", "k"}


def _raw_public(public_key: Ed25519PublicKey) -> bytes:
    return public_key.public_bytes(
        encoding=serialization.Encoding.Raw,
        format=serialization.PublicFormat.Raw,
    )


def _b64url(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).decode("ascii").rstrip("=")


def key_id_for(public_key: Ed25519PublicKey) -> str:
    """RFC 7638 JWK thumbprint of the public key, used as its key id."""
    # required members only, lexicographic order, no whitespace
    members = {"crv": "Ed25519", "kty": "OKP", "x": _b64url(_raw_public(public_key))}
    canonical = json.dumps(members, separators=(",", ":"), sort_keys=True)
    return _b64url(hashlib.sha256(canonical.encode("utf-8")).digest())


@dataclass(frozen=True)
class PublicKeyEntry:
    key_id: str
    public_key: Ed25519PublicKey

    @property
    def public_bytes(self) -> bytes:
        return _raw_public(self.public_key)

    def to_jwk(self) -> dict:
        jwk = OKPAlgorithm.to_jwk(self.public_key, as_dict=True)
        jwk.update({"kid": self.key_id, "alg": ALGORITHM, "use": "sig"})
        return jwk


@dataclass(frozen=True)
class SigningKeyPair:
    """An Ed25519 signing key with its key id."""

    key_id: str
    private_key: Ed25519PrivateKey

    @classmethod
    def generate(cls, key_id: Optional[str] = None) -> "SigningKeyPair":
        private_key = Ed25519PrivateKey.generate()
        return cls(key_id=key_id or key_id_for(private_key.public_key()), private_key=private_key)

    @classmethod
    def load(cls, path: Path) -> "SigningKeyPair":
        """Load a PEM (PKCS8) private key; the key id is derived from the public key."""
        private_key = serialization.load_pem_private_key(Path(path).read_bytes(), password=None)
        if not isinstance(private_key, Ed25519PrivateKey):
            raise ValueError(f"{path} does not hold an Ed25519 private key")
        return cls(key_id=key_id_for(private_key.public_key()), private_key=private_key)

    @classmethod
    def load_or_generate(cls, path: Path) -> "SigningKeyPair":
        path = Path(path)
        if path.exists():
            return cls.load(path)
        key = cls.generate()
        key.save(path)
        logger.info(f"Generated new signing key {key.key_id} at {path}")
        return key

    def save(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(
            self.private_key.private_bytes(
                encoding=serialization.Encoding.PEM,
                format=serialization.PrivateFormat.PKCS8,
                encryption_algorithm=serialization.NoEncryption(),
            )
        )
        os.chmod(path, 0o600)

    @property
    def public(self) -> PublicKeyEntry:
        return PublicKeyEntry(key_id=self.key_id, public_key=self.private_key.public_key())

    def sign(self, data: bytes) -> bytes:
        return self.private_key.sign(data)


class KeySet:
    """Public keys of one party; serializes to a standard JWKS document."""

    def __init__(self, entries: Iterable[PublicKeyEntry] = ()):
        self.entries: tuple[PublicKeyEntry, ...] = tuple(entries)
        ids = [e.key_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate key ids in key set")

    @classmethod
    def of(cls, *keys: SigningKeyPair) -> "KeySet":
        return cls(k.public for k in keys)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key_id: str) -> bool:
        return self.find(key_id) is not None

    def find(self, key_id: str) -> Optional[PublicKeyEntry]:
        for entry in self.entries:
            if entry.key_id == key_id:
                return entry
        return None

    def to_jwks(self) -> dict:
        return {"keys": [e.to_jwk() for e in self.entries]}

    @classmethod
    def from_jwks(cls, document: Any) -> "KeySet":
        """Parse a JWKS document, keeping only Ed25519 keys with a kid.

        Raises:
            ValueError: If the document is not a JWKS or carries private material.
        """
        if not isinstance(document, dict) or not isinstance(document.get("keys"), list):
            raise ValueError("not a JWKS document")
        entries = []
        for jwk in document["keys"]:
            if _PRIVATE_JWK_FIELDS & set(jwk):
                raise ValueError("JWKS document contains private key material")
            if jwk.get("kty") != "OKP" or jwk.get("crv") != "Ed25519" or "kid" not in jwk:
                logger.debug(f"Skipping unsupported JWK: kty={jwk.get('kty')} crv={jwk.get('crv')}")
                continue
            parsed = jwt.PyJWK(jwk, algorithm=ALGORITHM)
            entries.append(PublicKeyEntry(key_id=parsed.key_id, public_key=parsed.key))
        return cls(entries)


class KeyRing:
    """A party's signing keys: one current key plus retired keys still published.

    After ``rotate()``, the previous key stays in the served key set for the
    overlap window so tokens and messages it signed keep verifying.
    """

    def __init__(self, current: SigningKeyPair, overlap_seconds: int = 3600):
        self.overlap = timedelta(seconds=overlap_seconds)
        self._current = current
        self._retired: tuple[tuple[SigningKeyPair, datetime], ...] = ()

    @property
    def current(self) -> SigningKeyPair:
        return self._current

    def rotate(self, new_key: SigningKeyPair, now: datetime) -> None:
        retired = tuple((k, until) for k, until in self._retired if until > now)
        self._retired = retired + ((self._current, now + self.overlap),)
        self._current = new_key
        logger.info(f"Rotated signing key to {new_key.key_id}")

    def key_set(self, now: datetime) -> KeySet:
        live = [k for k, until in self._retired if until > now]
        return KeySet.of(self._current, *live)
