"""Configuration management for the umax servers and client."""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

PROJECT_ROOT = Path(__file__).parent.parent.resolve()

DEFAULT_AS_BIND = "127.0.0.1:8180"
DEFAULT_RS_BIND = "127.0.0.1:8181"


def load_environment(env_path: Optional[Path] = None) -> None:
    # .env overrides the shell so project config is authoritative
    load_dotenv(env_path or PROJECT_ROOT / ".env", override=True)


def parse_bind(value: str) -> tuple[str, int]:
    """Split ``host:port``.

    Raises:
        ValueError: If the port is missing or not a number.
    """
    host, sep, port = value.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ValueError(f"bind address must be host:port, got {value!r}")
    return host, int(port)


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name, str(default))
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}") from None
    if value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def _optional_path(name: str) -> Optional[Path]:
    value = os.getenv(name)
    return Path(value) if value else None


@dataclass
class AsConfig:
    """Authorization server configuration loaded from environment variables."""

    bind: str
    origin: str
    policies_dir: Path
    key_path: Path
    rs_allowlist_path: Optional[Path]
    trust_path: Optional[Path]

    # Lifetimes in seconds
    ticket_ttl: int
    token_ttl: int
    key_overlap: int

    max_rounds: int

    @classmethod
    def load(cls, env_path: Optional[Path] = None) -> "AsConfig":
        """Load AS configuration.

        Args:
            env_path: Optional path to a .env file; defaults to the project root.

        Returns:
            AsConfig instance.

        Raises:
            ValueError: If UMA_POLICIES_DIR is missing or a value is malformed.
        """
        load_environment(env_path)

        policies_dir = os.getenv("UMA_POLICIES_DIR")
        if not policies_dir:
            raise ValueError("UMA_POLICIES_DIR is required")

        bind = os.getenv("UMA_AS_BIND", DEFAULT_AS_BIND)
        parse_bind(bind)

        return cls(
            bind=bind,
            origin=os.getenv("UMA_AS_ORIGIN") or f"http://{bind}",
            policies_dir=Path(policies_dir),
            key_path=Path(os.getenv("UMA_AS_KEY", "keys/as.pem")),
            rs_allowlist_path=_optional_path("UMA_RS_ALLOWLIST"),
            trust_path=_optional_path("UMA_TRUST"),
            ticket_ttl=_int_env("UMA_TICKET_TTL", 300),
            token_ttl=_int_env("UMA_TOKEN_TTL", 600),
            key_overlap=_int_env("UMA_KEY_OVERLAP", 3600),
            max_rounds=_int_env("UMA_MAX_ROUNDS", 5),
        )

    def validate(self) -> list[str]:
        """Return warnings for settings that will work but probably are not intended."""
        warnings = []
        if not self.policies_dir.is_dir():
            warnings.append(f"Policies directory {self.policies_dir} does not exist - every request will be denied")
        if self.rs_allowlist_path is None:
            warnings.append("UMA_RS_ALLOWLIST not set - no resource server can register resources")
        if self.trust_path is None:
            warnings.append("UMA_TRUST not set - no claim token will be accepted")
        if self.origin.startswith("http://") and not self.origin.startswith(("http://127.", "http://localhost")):
            warnings.append(f"AS origin {self.origin} is not HTTPS")
        if self.ticket_ttl >= self.token_ttl:
            warnings.append("UMA_TICKET_TTL is not shorter than UMA_TOKEN_TTL")
        return warnings


@dataclass
class RsConfig:
    """Resource server configuration loaded from environment variables."""

    bind: str
    origin: str
    as_uri: str
    root_dir: Path
    key_path: Path

    @classmethod
    def load(cls, env_path: Optional[Path] = None) -> "RsConfig":
        """Load RS configuration.

        Raises:
            ValueError: If UMA_AS_URI or UMA_RS_ROOT is missing.
        """
        load_environment(env_path)

        as_uri = os.getenv("UMA_AS_URI")
        if not as_uri:
            raise ValueError("UMA_AS_URI is required")

        root_dir = os.getenv("UMA_RS_ROOT")
        if not root_dir:
            raise ValueError("UMA_RS_ROOT is required")

        bind = os.getenv("UMA_RS_BIND", DEFAULT_RS_BIND)
        parse_bind(bind)

        return cls(
            bind=bind,
            origin=os.getenv("UMA_RS_ORIGIN") or f"http://{bind}",
            as_uri=as_uri,
            root_dir=Path(root_dir),
            key_path=Path(os.getenv("UMA_RS_KEY", "keys/rs.pem")),
        )

    def validate(self) -> list[str]:
        warnings = []
        if not self.root_dir.exists():
            warnings.append(f"Storage root {self.root_dir} does not exist yet - starting with an empty pod")
        if not self.key_path.exists():
            warnings.append(f"RS key {self.key_path} not found - a new key will be generated and must be allowlisted at the AS")
        return warnings


@dataclass
class ClientConfig:
    """Client settings; nothing is required."""

    audit_dir: Path
    client_id: str
    max_rounds: int

    @classmethod
    def load(cls, env_path: Optional[Path] = None) -> "ClientConfig":
        load_environment(env_path)
        return cls(
            audit_dir=Path(os.getenv("UMA_AUDIT_DIR", "./audit")),
            client_id=os.getenv("UMA_CLIENT_ID", "default"),
            max_rounds=_int_env("UMA_MAX_ROUNDS", 5),
        )
