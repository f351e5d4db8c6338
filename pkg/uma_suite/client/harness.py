"""In-process scenario harness: one AS, one pod and one client on loopback.

Both servers are real aiohttp applications on local ports. All parties talk
to the logical origins ``https://as.example`` and ``https://pod.example``
through ``LoopbackTransport``, which also records every exchange. One
``ManualClock`` is shared by everyone and advanced only by the script.

Script format (JSON)::

    {
      "name": "shoe-size",
      "clock": "2026-06-01T12:00:00Z",
      "settings": {"maxRounds": 5, "ticketTtl": 300, "tokenTtl": 600},
      "issuers": ["https://flemish-enterprise-registry.example"],
      "credentials": {
        "seller": {"format": "vc", "issuer": "https://flemish-enterprise-registry.example",
                   "subject": "https://seller.example/id", "claims": {"role": "shoe-seller"}}
      },
      "policies": ["policies/shoe-size.policy.json"],
      "resources": [{"path": "/alice/profile/shoe-size", "contentType": "text/plain", "body": "42"}],
      "steps": [
        {"clientAccess": {"path": "/alice/profile/shoe-size", "credentials": ["seller"]}},
        {"assertStatus": {"status": 200}},
        {"assertRoundTrips": {"from": "client", "to": "as", "count": 3}}
      ]
    }

Step types: advanceClock, setPolicy, clientAccess, directRequest,
assertStatus, assertRoundTrips, verifyAudit.

In clientAccess, ``credentials`` are offered when the AS answers need_info and
``push`` credentials go with the first token request.
"""

import json
import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import httpx
from aiohttp.test_utils import TestServer

from ..authz import AuthorizationServer, AuthorizationService, RsKeyDirectory
from ..claims import ClaimVerifier, OidcIdTokenFormat, TrustedIssuer, VcJwtFormat
from ..clock import ManualClock, parse_instant
from ..errors import PolicyError, ScriptInvalid, UmaClientError
from ..models.types import OIDC_FORMAT, VC_FORMAT, ClaimToken, PermissionDescriptor
from ..policy import OdrlPolicyEngine, PolicyDocument, PolicyStore, parse_policy
from ..rs import AsClient, ResourceServer, ResourceStore, StoredResource
from ..security.keys import JWKS_PATH, KeyRing, KeySet, SigningKeyPair
from .audit import AuditRecord, AuditStore, verify_audit
from .negotiator import StaticClaimsProvider, UmaClient
from .transport import Exchange, ExchangeLog, Route, loopback_client

logger = logging.getLogger(__name__)

AS_ORIGIN = "https://as.example"
POD_ORIGIN = "https://pod.example"
STEP_TYPES = (
    "advanceClock",
    "setPolicy",
    "clientAccess",
    "directRequest",
    "assertStatus",
    "assertRoundTrips",
    "verifyAudit",
)
_FORMATS = {"oidc": OIDC_FORMAT, "vc": VC_FORMAT}


@dataclass(frozen=True)
class StepOutcome:
    index: int
    kind: str
    status: Optional[int] = None
    outcome: str = "ok"
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "kind": self.kind,
            "status": self.status,
            "outcome": self.outcome,
            "detail": self.detail,
        }


@dataclass
class Transcript:
    name: str
    exchanges: list[Exchange] = field(default_factory=list)
    steps: list[StepOutcome] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def between(self, party: str, target: str, step: Optional[int] = None) -> list[Exchange]:
        return [
            e for e in self.exchanges
            if e.party == party and e.target == target and (step is None or e.step == step)
        ]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "exchanges": [e.to_dict() for e in self.exchanges],
            "steps": [s.to_dict() for s in self.steps],
            "failures": list(self.failures),
        }


@dataclass(frozen=True)
class Credential:
    format: str
    issuer: str
    subject: str
    claims: dict = field(default_factory=dict)
    webid: Optional[str] = None
    ttl_seconds: int = 3600
    untrusted_key: bool = False


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ScriptInvalid(message)


def _parse_credential(name: str, raw: Any) -> Credential:
    _require(isinstance(raw, dict), f"credential {name} must be an object")
    _require(raw.get("format") in _FORMATS, f"credential {name}: format must be one of {sorted(_FORMATS)}")
    _require(bool(raw.get("issuer")) and bool(raw.get("subject")), f"credential {name}: issuer and subject required")
    return Credential(
        format=_FORMATS[raw["format"]],
        issuer=raw["issuer"],
        subject=raw["subject"],
        claims=dict(raw.get("claims", {})),
        webid=raw.get("webid"),
        ttl_seconds=int(raw.get("ttl", 3600)),
        untrusted_key=bool(raw.get("untrustedKey", False)),
    )


class ScenarioHarness:
    """Wires an AS, a pod and a UMA client together for one run.

    Example:
        async with ScenarioHarness(clock, policies, resources, issuers=[...], workdir=tmp) as h:
            result = await h.client.access(h.url("/alice/profile/shoe-size"), provider=...)
    """

    def __init__(
        self,
        clock: ManualClock,
        policies: Sequence[PolicyDocument],
        resources: Sequence[StoredResource],
        issuers: Sequence[str] = (),
        workdir: Optional[Path] = None,
        max_rounds: int = 5,
        ticket_ttl: int = 300,
        token_ttl: int = 600,
    ):
        self.clock = clock
        self.resources = tuple(resources)
        self.issuer_keys = {issuer: SigningKeyPair.generate() for issuer in issuers}
        self.policy_store = PolicyStore(policies)
        self.log = ExchangeLog()
        self.routes: dict[str, Route] = {}
        self._tempdir = None if workdir else tempfile.TemporaryDirectory(prefix="uma-scenario-")
        self.workdir = Path(workdir or self._tempdir.name)
        self.max_rounds = max_rounds

        trust = [TrustedIssuer(issuer, KeySet.of(key)) for issuer, key in self.issuer_keys.items()]
        self.as_keyring = KeyRing(SigningKeyPair.generate())
        self.rs_key = SigningKeyPair.generate()
        self.service = AuthorizationService(
            issuer=AS_ORIGIN,
            engine=OdrlPolicyEngine(self.policy_store),
            verifier=ClaimVerifier(trust),
            keyring=self.as_keyring,
            clock=clock,
            ticket_ttl=ticket_ttl,
            token_ttl=token_ttl,
            max_rounds=max_rounds,
        )
        self._http: list[httpx.AsyncClient] = []
        self._servers: list[TestServer] = []
        self.store: Optional[ResourceStore] = None
        self.rs: Optional[ResourceServer] = None
        self.client: Optional[UmaClient] = None
        self.audit_store = AuditStore(self.workdir / "audit", "scenario")

    def _http_for(self, party: str) -> httpx.AsyncClient:
        http = loopback_client(party, self.routes, self.log)
        self._http.append(http)
        return http

    async def _serve(self, party: str, origin: str, app) -> None:
        server = TestServer(app, host="127.0.0.1")
        await server.start_server()
        self._servers.append(server)
        self.routes[origin] = Route(party, f"http://127.0.0.1:{server.port}")

    async def start(self) -> "ScenarioHarness":
        rs_keys = RsKeyDirectory({POD_ORIGIN: POD_ORIGIN + JWKS_PATH}, http=self._http_for("as"))
        await self._serve("as", AS_ORIGIN, AuthorizationServer(self.service, rs_keys).build_app())

        self.store = ResourceStore(self.workdir / "pod")
        self.store.seed(self.resources)
        as_client = AsClient(AS_ORIGIN, self.rs_key, self._http_for("rs"), self.clock)
        self.rs = ResourceServer(POD_ORIGIN, self.store, as_client)
        await self._serve("rs", POD_ORIGIN, self.rs.build_app())
        await self.rs.start()

        self.client = UmaClient(self._http_for("client"), self.audit_store, self.clock, self.max_rounds)
        logger.info(f"Harness up: AS {self.routes[AS_ORIGIN].base_url}, pod {self.routes[POD_ORIGIN].base_url}")
        return self

    async def close(self) -> None:
        for http in self._http:
            await http.aclose()
        for server in self._servers:
            await server.close()
        if self._tempdir is not None:
            self._tempdir.cleanup()

    async def __aenter__(self) -> "ScenarioHarness":
        return await self.start()

    async def __aexit__(self, *exc) -> None:
        await self.close()

    def url(self, path: str) -> str:
        return POD_ORIGIN + path

    def issue(self, credential: Credential) -> ClaimToken:
        """Sign a claim token at the current scenario time."""
        if credential.issuer not in self.issuer_keys and not credential.untrusted_key:
            raise ScriptInvalid(f"issuer {credential.issuer} is not declared")
        key = SigningKeyPair.generate() if credential.untrusted_key else self.issuer_keys[credential.issuer]
        if credential.format == OIDC_FORMAT:
            raw = OidcIdTokenFormat.issue(
                key, credential.issuer, credential.subject, self.clock(),
                ttl_seconds=credential.ttl_seconds, webid=credential.webid,
            )
        else:
            raw = VcJwtFormat.issue(
                key, credential.issuer, credential.subject, credential.claims, self.clock(),
                ttl_seconds=credential.ttl_seconds,
            )
        return ClaimToken(format=credential.format, raw=raw)

    def as_key_set(self) -> KeySet:
        return self.as_keyring.key_set(self.clock())


class ScenarioRunner:
    """Executes script steps against a started harness, filling a transcript."""

    def __init__(self, harness: ScenarioHarness, script: dict, base_dir: Path, transcript: Transcript):
        self.harness = harness
        self.script = script
        self.base_dir = base_dir
        self.transcript = transcript
        self.credentials = {
            name: _parse_credential(name, raw) for name, raw in script.get("credentials", {}).items()
        }
        self.last_access: Optional[StepOutcome] = None
        self.last_record: Optional[AuditRecord] = None
        self.last_record_keys: Optional[KeySet] = None

    def _tokens(self, names: Sequence[str]) -> list[ClaimToken]:
        missing = [n for n in names if n not in self.credentials]
        _require(not missing, f"unknown credentials: {missing}")
        return [self.harness.issue(self.credentials[n]) for n in names]

    async def run(self) -> None:
        steps = self.script.get("steps")
        _require(isinstance(steps, list), "script needs a steps list")
        for index, step in enumerate(steps):
            _require(isinstance(step, dict) and len(step) == 1, f"step {index} must have exactly one key")
            (kind, args), = step.items()
            _require(kind in STEP_TYPES, f"step {index}: unknown step type {kind!r}")
            _require(isinstance(args, dict), f"step {index}: arguments must be an object")
            self.harness.log.step = index
            handler = getattr(self, f"_step_{kind}")
            outcome = await handler(index, args)
            if outcome is not None:
                self.transcript.steps.append(outcome)
        self.harness.log.step = None

    def _fail(self, index: int, message: str) -> None:
        logger.warning(f"Step {index}: {message}")
        self.transcript.failures.append(f"step {index}: {message}")

    async def _step_advanceClock(self, index: int, args: dict) -> StepOutcome:
        if "to" in args:
            self.harness.clock.set(parse_instant(args["to"]))
        else:
            self.harness.clock.advance(seconds=float(args.get("seconds", 0)), days=float(args.get("days", 0)))
        return StepOutcome(index, "advanceClock", detail=self.harness.clock().isoformat())

    async def _step_setPolicy(self, index: int, args: dict) -> StepOutcome:
        try:
            policies = [parse_policy(json.dumps(doc).encode("utf-8")) for doc in args.get("policies", [])]
            for name in args.get("files", []):
                policies.append(parse_policy((self.base_dir / name).read_bytes()))
        except (OSError, TypeError, PolicyError) as e:
            raise ScriptInvalid(f"step {index}: cannot load policies: {e}") from e
        self.harness.policy_store.replace(policies)
        return StepOutcome(index, "setPolicy", detail=f"{len(policies)} policies")

    async def _step_clientAccess(self, index: int, args: dict) -> StepOutcome:
        _require(isinstance(args.get("path"), str), f"step {index}: clientAccess needs a path")
        url = self.harness.url(args["path"])
        method = args.get("method", "GET").upper()
        body = args["body"].encode("utf-8") if "body" in args else None
        headers = {}
        if "contentType" in args:
            headers["Content-Type"] = args["contentType"]
        if "resourceType" in args:
            headers["X-Resource-Type"] = args["resourceType"]

        client = self.harness.client
        if args.get("plain") or args.get("reuseToken"):
            if args.get("reuseToken"):
                _require(self.last_record is not None, f"step {index}: no earlier grant to reuse")
                headers["Authorization"] = f"Bearer {self.last_record.access_token}"
            response = await client.http.request(method, url, content=body, headers=headers)
            outcome = StepOutcome(index, "clientAccess", response.status_code, "ok")
        else:
            provider = StaticClaimsProvider(self._tokens(args.get("credentials", [])))
            pushed = self._tokens(args.get("push", []))
            try:
                result = await client.access(url, method, body, headers, provider, args.get("maxRounds"), pushed)
            except UmaClientError as e:
                outcome = StepOutcome(index, "clientAccess", None, e.code, str(e))
            else:
                if result.audit_record is not None:
                    self.last_record = result.audit_record
                    self.last_record_keys = self.harness.as_key_set()
                outcome = StepOutcome(
                    index,
                    "clientAccess",
                    result.response.status_code,
                    "granted" if result.audit_record else "ok",
                )
        self.last_access = outcome
        return outcome

    async def _step_directRequest(self, index: int, args: dict) -> StepOutcome:
        try:
            descriptors = [PermissionDescriptor.from_dict(d) for d in args.get("permissions", [])]
        except (ValueError, PolicyError) as e:
            raise ScriptInvalid(f"step {index}: bad permission descriptor: {e}") from e
        client = self.harness.client
        try:
            grant = await client.request_direct(AS_ORIGIN, descriptors, self._tokens(args.get("credentials", [])))
        except UmaClientError as e:
            outcome = StepOutcome(index, "directRequest", None, e.code, str(e))
        else:
            self.last_record = self.harness.audit_store.records()[-1]
            self.last_record_keys = self.harness.as_key_set()
            detail = json.dumps([p.to_dict() for p in grant.permissions], sort_keys=True)
            outcome = StepOutcome(index, "directRequest", 200, "granted", detail)
        self.last_access = outcome
        return outcome

    async def _step_assertStatus(self, index: int, args: dict) -> None:
        last = self.last_access
        if last is None:
            self._fail(index, "assertStatus before any access step")
            return None
        if "status" in args and last.status != args["status"]:
            self._fail(index, f"expected status {args['status']}, got {last.status} ({last.outcome})")
        if "outcome" in args and last.outcome != args["outcome"]:
            self._fail(index, f"expected outcome {args['outcome']}, got {last.outcome}")
        return None

    async def _step_assertRoundTrips(self, index: int, args: dict) -> None:
        _require(self.last_access is not None, f"step {index}: assertRoundTrips before any access step")
        source, target = args.get("from"), args.get("to")
        _require(bool(source) and bool(target) and "count" in args, f"step {index}: from, to and count required")
        seen = self.harness.log.between(source, target, self.last_access.index)
        if len(seen) != args["count"]:
            self._fail(index, f"expected {args['count']} {source}->{target} exchanges, saw {len(seen)}")
        return None

    async def _step_verifyAudit(self, index: int, args: dict) -> StepOutcome:
        _require(self.last_record is not None, f"step {index}: no audit record to verify")
        report = verify_audit(self.last_record, self.last_record_keys)
        if "signatureValid" in args and report.signature_valid != args["signatureValid"]:
            self._fail(index, f"expected signatureValid={args['signatureValid']}")
        if "usageRequirements" in args:
            actual = [u.to_dict() for u in report.usage_requirements]
            if actual != args["usageRequirements"]:
                self._fail(index, f"usage requirements differ: {actual}")
        if "expired" in args:
            expired = report.window is not None and self.harness.clock() >= report.window[1]
            if expired != args["expired"]:
                self._fail(index, f"expected expired={args['expired']}")
        if report.mismatches:
            self._fail(index, f"audit mismatches: {list(report.mismatches)}")
        return StepOutcome(index, "verifyAudit", outcome="valid" if report.ok else "invalid")


def load_script(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ScriptInvalid(f"cannot read scenario {path}: {e}") from e


def _load_resources(raw: Any) -> list[StoredResource]:
    _require(isinstance(raw, list), "resources must be a list")
    resources = []
    for entry in raw:
        _require(isinstance(entry, dict) and "path" in entry, f"bad resource entry: {entry!r}")
        resources.append(StoredResource(
            path=entry["path"],
            content_type=entry.get("contentType", "application/octet-stream"),
            body=entry.get("body", "").encode("utf-8"),
            resource_type=entry.get("resourceType"),
        ))
    return resources


async def run_scenario(
    script: Union[dict, Path],
    base_dir: Optional[Path] = None,
    workdir: Optional[Path] = None,
) -> Transcript:
    """Run a scenario script end to end.

    Args:
        script: Parsed script or path to a ``*.scenario.json`` file.
        base_dir: Directory policy file names are resolved against; defaults
            to the script's directory.
        workdir: Where the pod and audit files are written; a temporary
            directory by default.

    Raises:
        ScriptInvalid: If the script is malformed or references unknown
            credentials, issuers or files.
    """
    if not isinstance(script, dict):
        base_dir = base_dir or Path(script).parent
        script = load_script(Path(script))
    base_dir = Path(base_dir or ".")

    try:
        clock = ManualClock(parse_instant(script["clock"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ScriptInvalid(f"script needs an RFC 3339 clock: {e}") from e
    try:
        policies = [parse_policy((base_dir / name).read_bytes()) for name in script.get("policies", [])]
    except (OSError, PolicyError) as e:
        raise ScriptInvalid(f"cannot load scenario policies: {e}") from e

    settings = script.get("settings", {})
    harness = ScenarioHarness(
        clock=clock,
        policies=policies,
        resources=_load_resources(script.get("resources", [])),
        issuers=script.get("issuers", []),
        workdir=workdir,
        max_rounds=int(settings.get("maxRounds", 5)),
        ticket_ttl=int(settings.get("ticketTtl", 300)),
        token_ttl=int(settings.get("tokenTtl", 600)),
    )
    transcript = Transcript(name=script.get("name", "scenario"))
    async with harness:
        runner = ScenarioRunner(harness, script, base_dir, transcript)
        try:
            await runner.run()
        finally:
            transcript.exchanges = list(harness.log.exchanges)
    logger.info(f"Scenario {transcript.name}: {'passed' if transcript.passed else 'FAILED'}")
    return transcript
