"""Protocol logic of the UMA authorization server, independent of HTTP.

The aiohttp layer in ``server`` authenticates resource servers, parses bodies
and calls into ``AuthorizationService``; everything here works on plain values
and raises ``OAuthError`` for protocol errors.
"""

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from typing import Mapping, Optional, Sequence, Union

from ..clock import Clock, to_epoch
from ..errors import ClaimTokenError, OAuthError, PolicyError, TokenError
from ..models.types import (
    UMA_TICKET_GRANT,
    AccessGrant,
    Action,
    ClaimRequirement,
    ClaimToken,
    Permission,
    PermissionDescriptor,
    UsageRequirement,
    VerifiedClaim,
)
from ..policy import AccessRequest, Deny, Grant, NeedClaims, PolicyEngine
from ..policy.model import is_absolute_iri
from ..claims import ClaimVerifier
from ..security.keys import JWKS_PATH, KeyRing
from ..security.tokens import AccessTokenClaims, mint_token, new_jti, verify_token
from .store import (
    PermissionTicket,
    RegistrationStore,
    RequestedPermission,
    ResourceRegistration,
    TicketStore,
    new_opaque_id,
)

logger = logging.getLogger(__name__)

DISCOVERY_PATH = "/.well-known/uma2-configuration"
REGISTRATION_PATH = "/rreg/"
PERMISSION_PATH = "/perm"
TOKEN_PATH = "/token"
INTROSPECTION_PATH = "/introspect"


@dataclass(frozen=True)
class AsConfiguration:
    """UMA discovery document."""

    issuer: str
    token_endpoint: str
    permission_endpoint: str
    resource_registration_endpoint: str
    introspection_endpoint: str
    jwks_uri: str
    claim_token_profiles_supported: tuple[str, ...] = ()

    @classmethod
    def for_origin(cls, origin: str, claim_formats: Sequence[str] = ()) -> "AsConfiguration":
        origin = origin.rstrip("/")
        return cls(
            issuer=origin,
            token_endpoint=origin + TOKEN_PATH,
            permission_endpoint=origin + PERMISSION_PATH,
            resource_registration_endpoint=origin + REGISTRATION_PATH,
            introspection_endpoint=origin + INTROSPECTION_PATH,
            jwks_uri=origin + JWKS_PATH,
            claim_token_profiles_supported=tuple(claim_formats),
        )

    def to_dict(self) -> dict:
        return {
            "issuer": self.issuer,
            "token_endpoint": self.token_endpoint,
            "permission_endpoint": self.permission_endpoint,
            "resource_registration_endpoint": self.resource_registration_endpoint,
            "introspection_endpoint": self.introspection_endpoint,
            "jwks_uri": self.jwks_uri,
            "grant_types_supported": [UMA_TICKET_GRANT],
            "claim_token_profiles_supported": list(self.claim_token_profiles_supported),
        }


@dataclass(frozen=True)
class PermissionResult:
    """Answer of the permission endpoint: 201 with a ticket, or the 200 public hint."""

    status: int
    ticket: Optional[str] = None
    public_scopes: tuple[Action, ...] = ()

    def to_dict(self) -> dict:
        if self.status == 201:
            return {"ticket": self.ticket}
        return {"public_scopes": [s.value for s in self.public_scopes]}


@dataclass(frozen=True)
class NeedInfoResponse:
    ticket: str
    required_claims: tuple[ClaimRequirement, ...]
    error: str = "need_info"

    def to_dict(self) -> dict:
        return {
            "error": self.error,
            "ticket": self.ticket,
            "required_claims": [c.to_dict() for c in self.required_claims],
        }


@dataclass
class TokenRequestForm:
    """Fields of a form-encoded UMA grant request."""

    grant_type: str = ""
    ticket: Optional[str] = None
    permissions: Optional[str] = None
    claim_tokens: list[ClaimToken] = field(default_factory=list)

    @classmethod
    def from_multidict(cls, form) -> "TokenRequestForm":
        """Build from an aiohttp/multidict form, pairing repeated claim fields in order."""
        tokens = form.getall("claim_token", [])
        formats = form.getall("claim_token_format", [])
        if len(tokens) != len(formats):
            raise OAuthError("invalid_request", "every claim_token needs a claim_token_format")
        return cls(
            grant_type=form.get("grant_type", ""),
            ticket=form.get("ticket") or None,
            permissions=form.get("permissions") or None,
            claim_tokens=[ClaimToken(format=f, raw=t) for t, f in zip(tokens, formats)],
        )


def _parse_scopes(raw, error: str = "invalid_scope") -> tuple[Action, ...]:
    if not isinstance(raw, list) or not raw:
        raise OAuthError("invalid_request", "resource_scopes must be a non-empty list")
    try:
        scopes = {Action(s) for s in raw}
    except ValueError:
        raise OAuthError(error, f"unknown scope in {raw}") from None
    return tuple(a for a in Action if a in scopes)


class AuthorizationService:
    """The UMA authorization server's protocol state machine.

    Example:
        service = AuthorizationService(
            issuer="https://as.example",
            engine=OdrlPolicyEngine(PolicyStore.from_directory(Path("policies"))),
            verifier=ClaimVerifier(trust),
            keyring=KeyRing(SigningKeyPair.generate()),
            clock=system_clock,
        )
        result = service.create_permission("https://pod.example", {...})
    """

    def __init__(
        self,
        issuer: str,
        engine: PolicyEngine,
        verifier: ClaimVerifier,
        keyring: KeyRing,
        clock: Clock,
        ticket_ttl: int = 300,
        token_ttl: int = 600,
        max_rounds: int = 5,
    ):
        self.issuer = issuer.rstrip("/")
        self.engine = engine
        self.verifier = verifier
        self.keyring = keyring
        self.clock = clock
        self.token_ttl = token_ttl
        self.max_rounds = max_rounds
        self.registrations = RegistrationStore()
        self.tickets = TicketStore(ttl_seconds=ticket_ttl)
        self.configuration = AsConfiguration.for_origin(self.issuer, verifier.supported_formats)

    def discovery(self) -> AsConfiguration:
        return self.configuration

    # Resource registration

    def register_resource(self, rs_origin: str, body: Mapping) -> ResourceRegistration:
        """Register a resource set; ``rs_origin`` comes from the verified signature, never the body."""
        resource_id = body.get("resource_id")
        if not isinstance(resource_id, str) or not is_absolute_iri(resource_id):
            raise OAuthError("invalid_request", "resource_id must be an absolute IRI")
        return self.registrations.add(
            rs_origin=rs_origin,
            resource_id=resource_id,
            scopes=_parse_scopes(body.get("resource_scopes"), error="invalid_request"),
            name=body.get("name"),
            resource_type=body.get("type"),
        )

    def get_resource(self, rs_origin: str, registration_id: str) -> ResourceRegistration:
        registration = self.registrations.get(registration_id)
        if registration is None or registration.rs_origin != rs_origin:
            raise OAuthError("not_found", "unknown resource registration", status=404)
        return registration

    def list_resources(self, rs_origin: str, resource_id: Optional[str] = None) -> list[str]:
        return [
            r.id for r in self.registrations.owned_by(rs_origin)
            if resource_id is None or r.resource_id == resource_id
        ]

    def update_resource(self, rs_origin: str, registration_id: str, body: Mapping) -> ResourceRegistration:
        current = self.get_resource(rs_origin, registration_id)
        if body.get("resource_id", current.resource_id) != current.resource_id:
            raise OAuthError("invalid_request", "resource_id cannot change")
        return self.registrations.update(
            registration_id,
            scopes=_parse_scopes(body.get("resource_scopes"), error="invalid_request"),
            name=body.get("name"),
            resource_type=body.get("type"),
        )

    def delete_resource(self, rs_origin: str, registration_id: str) -> None:
        self.get_resource(rs_origin, registration_id)
        self.registrations.delete(registration_id)
        dropped = self.tickets.invalidate_registration(registration_id)
        logger.info(f"Deleted registration {registration_id[:12]}, invalidated {dropped} tickets")

    # Permission endpoint

    def create_permission(self, rs_origin: str, body: Mapping) -> PermissionResult:
        """Issue a ticket, or answer 200 when every requested scope is public right now."""
        resource_id = body.get("resource_id")
        registration = self.registrations.find(rs_origin, resource_id) if isinstance(resource_id, str) else None
        if registration is None:
            raise OAuthError("invalid_resource_id", f"{resource_id} is not registered")

        scopes = _parse_scopes(body.get("resource_scopes"))
        if not set(scopes) <= set(registration.scopes):
            raise OAuthError("invalid_scope", f"scopes {[s.value for s in scopes]} not registered")

        now = self.clock()
        if all(
            self.engine.is_public(registration.resource_id, registration.resource_type, s, now)
            for s in scopes
        ):
            logger.info(f"Public hint for {registration.resource_id} {[s.value for s in scopes]}")
            return PermissionResult(status=200, public_scopes=scopes)

        ticket = self.tickets.issue((RequestedPermission(registration.id, scopes),), now)
        return PermissionResult(status=201, ticket=ticket.value)

    # Token endpoint

    def handle_token_request(
        self, form: TokenRequestForm, clock: Optional[datetime] = None
    ) -> Union[AccessGrant, NeedInfoResponse]:
        """Run one round of the UMA grant negotiation.

        Returns:
            An AccessGrant, or a NeedInfoResponse carrying a rotated ticket.

        Raises:
            OAuthError: ``invalid_grant``, ``invalid_request``, ``invalid_scope``,
                ``invalid_resource_id``, ``invalid_claim_token``, ``request_denied``,
                ``too_many_rounds`` or ``unsupported_grant_type``.
        """
        now = clock or self.clock()
        if form.grant_type != UMA_TICKET_GRANT:
            raise OAuthError("unsupported_grant_type", f"expected {UMA_TICKET_GRANT}")

        if form.ticket:
            ticket = self.tickets.consume(form.ticket, now)
            if ticket is None:
                raise OAuthError("invalid_grant", "ticket is unknown, expired or already used")
        elif form.permissions:
            ticket = self._synthesize_ticket(form.permissions, now)
        else:
            raise OAuthError("invalid_request", "either ticket or permissions is required")

        try:
            claims = self.verifier.verify_all(form.claim_tokens, now)
        except ClaimTokenError as e:
            logger.warning(f"Claim token rejected: {e.code}")
            raise OAuthError("invalid_claim_token", e.code) from e

        return self._decide(ticket, claims, now)

    def _synthesize_ticket(self, raw_permissions: str, now: datetime) -> PermissionTicket:
        try:
            descriptors = [PermissionDescriptor.from_dict(d) for d in json.loads(raw_permissions)]
        except PolicyError as e:
            raise OAuthError("invalid_scope", str(e)) from e
        except (json.JSONDecodeError, TypeError, AttributeError, ValueError) as e:
            raise OAuthError("invalid_request", f"permissions is not a valid descriptor list: {e}") from e
        if not descriptors:
            raise OAuthError("invalid_request", "permissions is empty")

        requested = []
        for descriptor in descriptors:
            if descriptor.resource_id is not None:
                matches = self.registrations.by_resource_id(descriptor.resource_id)
            else:
                matches = self.registrations.by_type(descriptor.resource_type)
            if not matches:
                target = descriptor.resource_id or descriptor.resource_type
                raise OAuthError("invalid_resource_id", f"no registered resource matches {target}")
            for registration in matches:
                if not set(descriptor.scopes) <= set(registration.scopes):
                    raise OAuthError("invalid_scope", f"scopes not registered for {registration.resource_id}")
                requested.append(RequestedPermission(registration.id, descriptor.scopes, descriptor.purpose))

        return PermissionTicket(value=new_opaque_id(), issued_at=now, requested=tuple(requested))

    def _decide(
        self, ticket: PermissionTicket, claims: list[VerifiedClaim], now: datetime
    ) -> Union[AccessGrant, NeedInfoResponse]:
        granted: dict[str, set[Action]] = {}
        audiences: set[str] = set()
        usage: set[UsageRequirement] = set()
        missing: set[ClaimRequirement] = set()
        denials = []

        for requested in ticket.requested:
            registration = self.registrations.get(requested.registration_id)
            if registration is None:
                raise OAuthError("invalid_grant", "a requested resource is no longer registered")
            for scope in requested.scopes:
                request = AccessRequest(
                    resource_id=registration.resource_id,
                    action=scope,
                    resource_type=registration.resource_type,
                    purpose=requested.purpose,
                )
                decision = self.engine.evaluate(request, claims, now)
                if isinstance(decision, Grant):
                    granted.setdefault(registration.resource_id, set()).add(scope)
                    audiences.add(registration.rs_origin)
                    usage.update(decision.usage_requirements)
                elif isinstance(decision, NeedClaims):
                    missing.update(decision.required)
                elif isinstance(decision, Deny):
                    denials.append((registration.resource_id, scope.value, decision.reason.value))

        if denials:
            # precise reasons stay in the log; the client only learns request_denied
            logger.info(f"Denied: {denials}")
            raise OAuthError("request_denied", "the request was denied", status=403)

        if missing:
            if ticket.round + 1 > self.max_rounds:
                raise OAuthError("too_many_rounds", f"negotiation exceeded {self.max_rounds} rounds")
            rotated = self.tickets.issue(ticket.requested, now, round=ticket.round + 1)
            required = tuple(sorted(missing, key=lambda m: (m.claim_type, m.accepted_formats)))
            logger.info(f"need_info round {rotated.round}: {[r.claim_type for r in required]}")
            return NeedInfoResponse(ticket=rotated.value, required_claims=required)

        permissions = tuple(
            Permission(resource_id, tuple(a for a in Action if a in scopes))
            for resource_id, scopes in granted.items()
        )
        usage_requirements = tuple(sorted(usage, key=UsageRequirement.sort_key))
        iat = to_epoch(now)
        token_claims = AccessTokenClaims(
            iss=self.issuer,
            sub=next((c.value for c in claims if c.claim_type == "webid"), "anonymous"),
            aud=tuple(sorted(audiences)),
            iat=iat,
            exp=iat + self.token_ttl,
            jti=new_jti(),
            permissions=permissions,
            usage=usage_requirements,
        )
        logger.info(f"Granted {[p.to_dict() for p in permissions]} to {token_claims.sub}")
        return AccessGrant(
            access_token=mint_token(token_claims, self.keyring.current),
            expires_in=self.token_ttl,
            permissions=permissions,
            usage_requirements=usage_requirements,
        )

    # Introspection

    def introspect(self, token: str, clock: Optional[datetime] = None) -> dict:
        now = clock or self.clock()
        try:
            claims = verify_token(token, self.keyring.key_set(now), now)
        except TokenError as e:
            logger.debug(f"Introspection: inactive token ({e.code})")
            return {"active": False}
        if claims.iss != self.issuer:
            return {"active": False}
        return {
            "active": True,
            "token_type": "Bearer",
            "iss": claims.iss,
            "sub": claims.sub,
            "aud": list(claims.aud),
            "iat": claims.iat,
            "exp": claims.exp,
            "permissions": [p.to_dict() for p in claims.permissions],
        }
