"""Exception hierarchy shared by every uma_suite component.

Every error carries a stable, machine-readable ``code`` so callers (the HTTP
layer, the CLI, tests) can branch on it without parsing messages.
"""

from typing import Optional


class UmaError(Exception):
    """Base class for all suite errors."""

    code = "uma-error"

    def __init__(self, message: str = "", code: Optional[str] = None):
        if code:
            self.code = code
        super().__init__(message or self.code)


class PolicyError(UmaError):
    """A policy document is malformed or violates the profile."""

    code = "malformed-document"


class ClaimTokenError(UmaError):
    """A pushed claim token could not be verified."""

    code = "bad-signature"


class TokenError(UmaError):
    """An access token failed verification."""

    code = "bad-signature"


class HttpSignatureError(UmaError):
    """A signed HTTP message failed verification."""

    code = "bad-signature"


class StorageError(UmaError):
    """The resource store rejected an operation."""

    code = "storage-error"


class OAuthError(UmaError):
    """Protocol-level error answered to a peer as an OAuth error body."""

    def __init__(self, error: str, description: str = "", status: int = 400):
        self.error = error
        self.description = description
        self.status = status
        super().__init__(description or error, code=error)

    def to_dict(self) -> dict:
        body = {"error": self.error}
        if self.description:
            body["error_description"] = self.description
        return body


class UmaClientError(UmaError):
    """Client-side negotiation failure; ``exit_code`` is used by the CLI."""

    code = "client-error"
    exit_code = 4


class TokenRequestError(UmaClientError):
    """The AS answered the token request with an error, surfaced verbatim."""

    exit_code = 2

    def __init__(self, error: str, description: str = "", body: Optional[dict] = None):
        self.error = error
        self.description = description
        self.body = body or {}
        super().__init__(f"{error}: {description}" if description else error, code=error)


class AuthorizationDenied(TokenRequestError):
    """The AS refused the request (``request_denied``)."""


class ClaimsUnavailable(UmaClientError):
    """The claims provider could not supply anything new for a need_info."""

    code = "claims-unavailable"
    exit_code = 3


class RoundsExhausted(UmaClientError):
    """The negotiation hit its round bound."""

    code = "rounds-exhausted"
    exit_code = 3


class AsUnreachable(UmaClientError):
    code = "as-unreachable"
    exit_code = 4


class ChallengeMalformed(UmaClientError):
    code = "challenge-malformed"
    exit_code = 4


class AuditError(UmaClientError):
    code = "malformed-record"
    exit_code = 4


class ScriptInvalid(UmaClientError):
    code = "script-invalid"
    exit_code = 4
