"""Base class for claim token formats."""

from abc import ABC, abstractmethod

from ..models.types import VerifiedClaim


class ClaimFormat(ABC):
    """One supported claim token format.

    Signature, issuer and validity checks are shared (see ``verifier``); a
    format only turns a verified payload into normalized claims.
    """

    uri: str

    @abstractmethod
    def extract(self, payload: dict, issuer: str) -> list[VerifiedClaim]:
        """Normalize a verified token payload.

        Args:
            payload: Decoded, signature-verified token payload.
            issuer: The trusted issuer that signed it.

        Returns:
            The claims the token proves.

        Raises:
            ClaimTokenError: ``missing-subject`` when the payload names nobody.
        """
