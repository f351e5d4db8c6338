"""Filesystem-backed resource store of the resource server.

Resources live as plain files under a root directory; containers are
directories and their paths end with "/". Metadata that has no place in the
file itself (content type, resource type, AS registration id) is kept in an
index file at the root, rewritten atomically on every change.
"""

import asyncio
import json
import logging
import os
import posixpath
import tempfile
from contextlib import asynccontextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import AsyncIterator, Iterable, Optional

from ..errors import StorageError

logger = logging.getLogger(__name__)

INDEX_FILE = ".resources.json"
CONTAINER_TYPE = "application/json"


def normalize_path(path: str) -> str:
    """Validate a rooted resource path.

    Raises:
        StorageError: ``invalid-path`` on relative paths, dot segments or
            empty segments.
    """
    if not path.startswith("/"):
        raise StorageError(f"path must be rooted: {path!r}", code="invalid-path")
    segments = path.split("/")[1:]
    inner = segments[:-1] if path.endswith("/") else segments
    # dot-prefixed names are reserved for the index
    if any(s == "" or s.startswith(".") for s in inner) or "\\" in path or "\x00" in path:
        raise StorageError(f"path is not normalized: {path!r}", code="invalid-path")
    return path


def is_container(path: str) -> bool:
    return path.endswith("/")


def parent_of(path: str) -> Optional[str]:
    """Parent container path; None for the root."""
    if path == "/":
        return None
    return posixpath.dirname(path.rstrip("/")).rstrip("/") + "/"


@dataclass(frozen=True)
class ResourceMeta:
    content_type: str
    resource_type: Optional[str] = None
    registration_id: Optional[str] = None


@dataclass(frozen=True)
class StoredResource:
    path: str
    content_type: str
    body: bytes
    resource_type: Optional[str] = None


@dataclass
class _PathLock:
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    users: int = 0


class ResourceStore:
    """Flat hierarchy of resources and containers under ``root``.

    Callers serialize mutations of one path with ``lock(path)``; the store
    itself only guarantees that every index write is atomic.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._index_path = self.root / INDEX_FILE
        self._index: dict[str, ResourceMeta] = self._load_index()
        self._locks: dict[str, _PathLock] = {}
        if "/" not in self._index:
            self._index["/"] = ResourceMeta(content_type=CONTAINER_TYPE)
            self._save_index()

    def _load_index(self) -> dict[str, ResourceMeta]:
        if not self._index_path.exists():
            return {}
        try:
            raw = json.loads(self._index_path.read_text(encoding="utf-8"))
            return {path: ResourceMeta(**meta) for path, meta in raw.items()}
        except (json.JSONDecodeError, TypeError) as e:
            raise StorageError(f"corrupt index {self._index_path}: {e}", code="corrupt-index") from e

    def _save_index(self) -> None:
        data = {path: asdict(meta) for path, meta in sorted(self._index.items())}
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".index-")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2)
        os.replace(tmp, self._index_path)

    def _file_for(self, path: str) -> Path:
        return self.root / path.lstrip("/")

    @asynccontextmanager
    async def lock(self, path: str) -> AsyncIterator[None]:
        """Hold the mutation lock of ``path``.

        The entry exists only while someone holds or awaits it.
        """
        entry = self._locks.get(path)
        if entry is None:
            entry = self._locks[path] = _PathLock()
        entry.users += 1
        try:
            async with entry.lock:
                yield
        finally:
            entry.users -= 1
            if entry.users == 0:
                del self._locks[path]

    def paths(self) -> list[str]:
        return sorted(self._index)

    def exists(self, path: str) -> bool:
        return path in self._index

    def meta(self, path: str) -> Optional[ResourceMeta]:
        return self._index.get(path)

    def children(self, container: str) -> list[str]:
        return [p for p in self.paths() if p != container and parent_of(p) == container]

    def get(self, path: str) -> Optional[StoredResource]:
        meta = self._index.get(normalize_path(path))
        if meta is None:
            return None
        if is_container(path):
            body = json.dumps({"contains": self.children(path)}).encode("utf-8")
        else:
            body = self._file_for(path).read_bytes()
        return StoredResource(path, meta.content_type, body, meta.resource_type)

    def put(
        self,
        path: str,
        body: bytes,
        content_type: str,
        resource_type: Optional[str] = None,
    ) -> list[str]:
        """Create or replace a resource, creating missing parent containers.

        Returns:
            Paths that did not exist before the call, outermost container first.
        """
        path = normalize_path(path)
        if is_container(path) and body:
            raise StorageError("containers carry no body", code="container-body")

        created = []
        parent = parent_of(path)
        missing = []
        while parent is not None and parent not in self._index:
            missing.append(parent)
            parent = parent_of(parent)
        for container in reversed(missing):
            self._file_for(container).mkdir(parents=True, exist_ok=True)
            self._index[container] = ResourceMeta(content_type=CONTAINER_TYPE)
            created.append(container)

        previous = self._index.get(path)
        if is_container(path):
            self._file_for(path).mkdir(parents=True, exist_ok=True)
        else:
            target = self._file_for(path)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(body)
        self._index[path] = ResourceMeta(
            content_type=CONTAINER_TYPE if is_container(path) else content_type,
            resource_type=resource_type or (previous.resource_type if previous else None),
            registration_id=previous.registration_id if previous else None,
        )
        if previous is None:
            created.append(path)
        self._save_index()
        logger.debug(f"Stored {path} ({len(body)} bytes), new paths: {created}")
        return created

    def delete(self, path: str) -> ResourceMeta:
        """Remove a resource or an empty container.

        Raises:
            StorageError: ``not-found``, ``container-not-empty`` or ``root``.
        """
        path = normalize_path(path)
        if path == "/":
            raise StorageError("the root container cannot be deleted", code="root")
        meta = self._index.get(path)
        if meta is None:
            raise StorageError(f"{path} does not exist", code="not-found")
        if is_container(path):
            if self.children(path):
                raise StorageError(f"{path} is not empty", code="container-not-empty")
            self._file_for(path).rmdir()
        else:
            self._file_for(path).unlink(missing_ok=True)
        del self._index[path]
        self._save_index()
        return meta

    def set_registration(self, path: str, registration_id: Optional[str]) -> None:
        meta = self._index[path]
        self._index[path] = ResourceMeta(meta.content_type, meta.resource_type, registration_id)
        self._save_index()

    def unregistered(self) -> list[str]:
        return [p for p, meta in sorted(self._index.items()) if meta.registration_id is None]

    def seed(self, resources: Iterable[StoredResource]) -> None:
        """Bulk-load resources, e.g. from a scenario script."""
        for resource in resources:
            self.put(resource.path, resource.body, resource.content_type, resource.resource_type)
