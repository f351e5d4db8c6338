"""Policy set holder with atomic replacement."""

import logging
from pathlib import Path
from typing import Iterable, Optional

from ..errors import PolicyError
from .model import PolicyDocument
from .parser import load_policy_dir

logger = logging.getLogger(__name__)


class PolicyStore:
    """Holds an immutable snapshot of the active policies.

    Readers take ``snapshot()`` once per decision; writers swap the whole tuple,
    so evaluations never observe a partially reloaded set.
    """

    def __init__(self, policies: Iterable[PolicyDocument] = (), directory: Optional[Path] = None):
        self.directory = Path(directory) if directory else None
        self._policies: tuple[PolicyDocument, ...] = tuple(policies)

    @classmethod
    def from_directory(cls, directory: Path) -> "PolicyStore":
        return cls(load_policy_dir(directory), directory=directory)

    def snapshot(self) -> tuple[PolicyDocument, ...]:
        return self._policies

    def replace(self, policies: Iterable[PolicyDocument]) -> None:
        self._policies = tuple(policies)
        logger.info(f"Policy set replaced: {len(self._policies)} policies")

    def reload(self) -> bool:
        """Re-read the policies directory.

        Returns:
            True if the new set is active, False if parsing failed and the
            previous snapshot was kept.
        """
        if self.directory is None:
            logger.warning("Policy reload requested but no directory is configured")
            return False
        try:
            policies = load_policy_dir(self.directory)
        except PolicyError as e:
            logger.error(f"Policy reload failed, keeping previous set: {e}")
            return False
        self.replace(policies)
        return True
