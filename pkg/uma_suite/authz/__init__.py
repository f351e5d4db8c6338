"""UMA authorization server."""

from .rs_keys import RsKeyDirectory, load_allowlist
from .server import AuthorizationServer, oauth_error_middleware
from .service import (
    AsConfiguration,
    AuthorizationService,
    NeedInfoResponse,
    PermissionResult,
    TokenRequestForm,
)
from .store import (
    PermissionTicket,
    RegistrationStore,
    RequestedPermission,
    ResourceRegistration,
    TicketStore,
)

__all__ = [
    "AsConfiguration",
    "AuthorizationServer",
    "AuthorizationService",
    "NeedInfoResponse",
    "PermissionResult",
    "PermissionTicket",
    "RegistrationStore",
    "RequestedPermission",
    "ResourceRegistration",
    "RsKeyDirectory",
    "TicketStore",
    "TokenRequestForm",
    "load_allowlist",
    "oauth_error_middleware",
]
