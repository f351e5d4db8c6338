"""Resource server: a policy-free pod that defers every decision to the AS."""

from .as_client import AsClient, PermissionOutcome
from .server import (
    RESOURCE_TYPE_HEADER,
    SCOPE_FOR_METHOD,
    ResourceServer,
    bearer_token,
    uma_challenge,
)
from .storage import ResourceMeta, ResourceStore, StoredResource, normalize_path

__all__ = [
    "RESOURCE_TYPE_HEADER",
    "SCOPE_FOR_METHOD",
    "AsClient",
    "PermissionOutcome",
    "ResourceMeta",
    "ResourceServer",
    "ResourceStore",
    "StoredResource",
    "bearer_token",
    "normalize_path",
    "uma_challenge",
]
