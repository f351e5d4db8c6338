#!/usr/bin/env python3
"""umax - run and exercise a UMA authorization server and a pod.

Usage:
    python -m umax.main serve-as --policies scenarios/policies
    python -m umax.main serve-rs --as http://127.0.0.1:8180 --root ./pod
    python -m umax.main access http://127.0.0.1:8181/alice/profile/shoe-size --claim vc.jwt:vc
    python -m umax.main scenario scenarios/shoe-size.scenario.json

Exit codes: 0 success, 1 failed check (scenario, audit or HTTP status),
2 authorization denied, 3 negotiation exhausted, 4 transport or
configuration error.
"""

import argparse
import asyncio
import json
import logging
import os
import signal
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import httpx
from aiohttp import web

from uma_suite.authz import AuthorizationServer, AuthorizationService, RsKeyDirectory, load_allowlist
from uma_suite.claims import ClaimVerifier, load_trust_file, prefetch_key_sets
from uma_suite.client import AuditStore, StaticClaimsProvider, UmaClient, load_records, run_scenario, verify_audit
from uma_suite.clock import system_clock
from uma_suite.errors import PolicyError, StorageError, UmaClientError
from uma_suite.models.types import OIDC_FORMAT, VC_FORMAT, Action, ClaimToken, PermissionDescriptor
from uma_suite.policy import OdrlPolicyEngine, PolicyStore
from uma_suite.rs import AsClient, ResourceServer, ResourceStore
from uma_suite.security import KeyRing, KeySet, SigningKeyPair

from .config import AsConfig, ClientConfig, RsConfig, load_environment, parse_bind

# Configure logging
logging.basicConfig(
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    level=logging.INFO,
)
logging.getLogger("httpx").setLevel(logging.WARNING)
logging.getLogger("aiohttp.access").setLevel(logging.WARNING)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 4

HTTP_TIMEOUT = 10.0
FORMAT_ALIASES = {"oidc": OIDC_FORMAT, "vc": VC_FORMAT}


class ServerProcess:
    """A long-running aiohttp server stopped by SIGINT/SIGTERM."""

    def __init__(self, bind: str):
        self.bind = bind
        self._shutdown_event: Optional[asyncio.Event] = None
        self._runner: Optional[web.AppRunner] = None

    async def _serve(self, app: web.Application) -> None:
        host, port = parse_bind(self.bind)
        self._runner = web.AppRunner(app)
        await self._runner.setup()
        await web.TCPSite(self._runner, host, port).start()
        logger.info(f"Listening on {host}:{port}")

    async def _wait_and_stop(self) -> None:
        logger.info("Running. Press Ctrl+C to stop.")
        await self._shutdown_event.wait()
        logger.info("Shutting down...")
        await self._runner.cleanup()

    def request_shutdown(self) -> None:
        if self._shutdown_event:
            self._shutdown_event.set()

    def request_reload(self) -> None:
        logger.info("Nothing to reload")


class AuthorizationServerProcess(ServerProcess):
    """The AS: policies, trusted issuers, RS allowlist and its signing keys."""

    def __init__(self, config: AsConfig):
        super().__init__(config.bind)
        self.config = config
        self.policy_store: Optional[PolicyStore] = None

    async def setup(self, http: httpx.AsyncClient) -> AuthorizationServer:
        """Load policies, trust and keys.

        Raises:
            PolicyError: If a policy file does not parse.
            ValueError: If the trust or allowlist file is malformed.
            httpx.HTTPError: If an issuer key set cannot be fetched.
        """
        config = self.config
        self.policy_store = PolicyStore.from_directory(config.policies_dir)

        trust = load_trust_file(config.trust_path) if config.trust_path else []
        trust = await prefetch_key_sets(trust, http)
        allowlist = load_allowlist(config.rs_allowlist_path) if config.rs_allowlist_path else {}

        keyring = KeyRing(SigningKeyPair.load_or_generate(config.key_path), overlap_seconds=config.key_overlap)
        service = AuthorizationService(
            issuer=config.origin,
            engine=OdrlPolicyEngine(self.policy_store),
            verifier=ClaimVerifier(trust),
            keyring=keyring,
            clock=system_clock,
            ticket_ttl=config.ticket_ttl,
            token_ttl=config.token_ttl,
            max_rounds=config.max_rounds,
        )
        logger.info(
            f"AS {config.origin}: key {keyring.current.key_id}, {len(trust)} trusted issuers, "
            f"{len(allowlist)} allowlisted RS, max {config.max_rounds} rounds"
        )
        return AuthorizationServer(service, RsKeyDirectory(allowlist, http=http), origin=config.origin)

    async def run(self) -> None:
        self._shutdown_event = asyncio.Event()
        async with httpx.AsyncClient(timeout=HTTP_TIMEOUT) as http:
            server = await self.setup(http)
            await self._serve(server.build_app())
            await self._wait_and_stop()

    def request_reload(self) -> None:
        if self.policy_store is not None:
            self.policy_store.reload()


class ResourceServerProcess(ServerProcess):
    """The pod: serves its key set first, then registers its resources at the AS."""

    def __init__(self, config: RsConfig):
        super().__init__(config.bind)
        self.config = config

    async def run(self) -> None:
        """Serve the pod.

        Raises:
            AsUnreachable: If the AS cannot be discovered at startup.
        """
        self._shutdown_event = asyncio.Event()
        config = self.config
        key = SigningKeyPair.load_or_generate(config.key_path)
        logger.info(f"RS {config.origin}: key {key.key_id}, storage {config.root_dir}")

        async with httpx.AsyncClient(timeout=HTTP_TIMEOUT) as http:
            as_client = AsClient(config.as_uri, key, http, system_clock)
            server = ResourceServer(config.origin, ResourceStore(config.root_dir), as_client)
            # The AS fetches our key set while verifying the first registration
            await self._serve(server.build_app())
            try:
                await server.start()
            except UmaClientError:
                await self._runner.cleanup()
                raise
            await self._wait_and_stop()


def setup_signal_handlers(process: ServerProcess) -> None:
    """Set up signal handlers for graceful shutdown and policy reload.

    Args:
        process: Server to stop or reload.
    """
    def shutdown_handler(signum, frame):
        logger.info(f"Received signal {signum}")
        process.request_shutdown()

    def reload_handler(signum, frame):
        logger.info("Received SIGHUP, reloading")
        process.request_reload()

    signal.signal(signal.SIGINT, shutdown_handler)
    signal.signal(signal.SIGTERM, shutdown_handler)
    if hasattr(signal, "SIGHUP"):
        signal.signal(signal.SIGHUP, reload_handler)


def _apply_log_level() -> None:
    level = os.getenv("LOG_LEVEL", "INFO").upper()
    try:
        logging.getLogger().setLevel(level)
    except ValueError:
        logger.warning(f"Unknown LOG_LEVEL {level}, keeping INFO")


def _overrides(config, **values):
    return replace(config, **{k: v for k, v in values.items() if v is not None})


def parse_claim_arg(value: str) -> tuple[Path, str]:
    """Split ``<file>:<format>`` at the first colon; ``oidc``/``vc`` are accepted as format aliases."""
    path, sep, claim_format = value.partition(":")
    if not sep or not path or not claim_format:
        raise argparse.ArgumentTypeError(f"expected <file>:<format>, got {value!r}")
    return Path(path), FORMAT_ALIASES.get(claim_format, claim_format)


def _read_claims(claims: list[tuple[Path, str]]) -> list[ClaimToken]:
    return [ClaimToken(format=claim_format, raw=path.read_text(encoding="utf-8").strip()) for path, claim_format in claims]


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def cmd_serve_as(args: argparse.Namespace) -> int:
    config = _overrides(
        AsConfig.load(),
        bind=args.bind,
        origin=args.origin,
        policies_dir=args.policies,
        key_path=args.key,
        rs_allowlist_path=args.rs_allowlist,
        trust_path=args.trust,
    )
    for warning in config.validate():
        logger.warning(warning)

    process = AuthorizationServerProcess(config)
    setup_signal_handlers(process)
    try:
        asyncio.run(process.run())
    except (PolicyError, ValueError, OSError, httpx.HTTPError) as e:
        logger.error(f"Authorization server failed to start: {e}")
        return EXIT_CONFIG
    return EXIT_OK


def cmd_serve_rs(args: argparse.Namespace) -> int:
    config = _overrides(
        RsConfig.load(),
        bind=args.bind,
        origin=args.origin,
        as_uri=args.as_uri,
        root_dir=args.root,
        key_path=args.key,
    )
    for warning in config.validate():
        logger.warning(warning)

    process = ResourceServerProcess(config)
    setup_signal_handlers(process)
    try:
        asyncio.run(process.run())
    except UmaClientError as e:
        logger.error(f"Resource server cannot start without its AS: {e}")
        return e.exit_code
    except (StorageError, ValueError, OSError) as e:
        logger.error(f"Resource server failed to start: {e}")
        return EXIT_CONFIG
    return EXIT_OK


async def _access(args: argparse.Namespace, config: ClientConfig) -> int:
    headers = {}
    if args.content_type:
        headers["Content-Type"] = args.content_type
    body = args.data.encode("utf-8") if args.data is not None else None
    provider = StaticClaimsProvider(_read_claims(args.claim))
    pushed = _read_claims(args.push)

    async with httpx.AsyncClient(timeout=HTTP_TIMEOUT) as http:
        client = UmaClient(http, AuditStore(config.audit_dir, config.client_id), system_clock, config.max_rounds)
        result = await client.access(args.url, args.method.upper(), body, headers, provider, pushed=pushed)

    response = result.response
    logger.info(f"{args.method.upper()} {args.url} -> {response.status_code}")
    sys.stdout.buffer.write(response.content)
    sys.stdout.flush()
    return EXIT_OK if response.status_code < 400 else EXIT_FAILED


def cmd_access(args: argparse.Namespace) -> int:
    config = _overrides(ClientConfig.load(), audit_dir=args.audit_dir, max_rounds=args.max_rounds)
    return asyncio.run(_access(args, config))


async def _request(args: argparse.Namespace, config: ClientConfig) -> int:
    descriptor = PermissionDescriptor(
        scopes=tuple(Action.parse(s) for s in args.scope),
        resource_id=args.resource,
        resource_type=args.resource_type,
        purpose=args.purpose,
    )
    async with httpx.AsyncClient(timeout=HTTP_TIMEOUT) as http:
        client = UmaClient(http, AuditStore(config.audit_dir, config.client_id), system_clock, config.max_rounds)
        grant = await client.request_direct(args.as_uri, [descriptor], _read_claims(args.claim))
    _print_json(grant.to_dict())
    return EXIT_OK


def cmd_request(args: argparse.Namespace) -> int:
    config = _overrides(ClientConfig.load(), audit_dir=args.audit_dir)
    try:
        return asyncio.run(_request(args, config))
    except PolicyError as e:
        logger.error(f"Bad scope: {e}")
        return EXIT_CONFIG


def _record_file(args: argparse.Namespace) -> Path:
    if args.record_file:
        return args.record_file
    config = ClientConfig.load()
    return AuditStore(config.audit_dir, config.client_id).path


def cmd_audit(args: argparse.Namespace) -> int:
    path = _record_file(args)
    records = load_records(path)
    if args.audit_command == "list":
        _print_json([r.to_dict() for r in records])
        return EXIT_OK

    as_keys = KeySet.from_jwks(json.loads(args.as_jwks.read_text(encoding="utf-8")))
    reports = [verify_audit(record, as_keys) for record in records]
    _print_json([r.to_dict() for r in reports])
    invalid = sum(not r.ok for r in reports)
    logger.info(f"{path}: {len(reports) - invalid} valid, {invalid} invalid")
    return EXIT_OK if invalid == 0 else EXIT_FAILED


def cmd_scenario(args: argparse.Namespace) -> int:
    transcript = asyncio.run(run_scenario(args.script, workdir=args.workdir))
    if args.transcript:
        args.transcript.write_text(json.dumps(transcript.to_dict(), indent=2), encoding="utf-8")
    for exchange in transcript.exchanges:
        print(f"[{exchange.step}] {exchange.party} -> {exchange.target}: {exchange.method} {exchange.path} {exchange.status}")
    for failure in transcript.failures:
        print(f"FAIL {failure}")
    print(f"{transcript.name}: {'passed' if transcript.passed else 'FAILED'}")
    return EXIT_OK if transcript.passed else EXIT_FAILED


def cmd_keygen(args: argparse.Namespace) -> int:
    if args.file.exists() and not args.force:
        logger.error(f"{args.file} exists, use --force to overwrite")
        return EXIT_CONFIG
    key = SigningKeyPair.generate()
    key.save(args.file)
    _print_json({"kid": key.key_id, "jwk": key.public.to_jwk()})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="umax", description="UMA authorization server, pod and client")
    commands = parser.add_subparsers(dest="command", required=True)

    serve_as = commands.add_parser("serve-as", help="run the authorization server")
    serve_as.add_argument("--bind")
    serve_as.add_argument("--origin", help="public origin, used as token issuer")
    serve_as.add_argument("--policies", type=Path)
    serve_as.add_argument("--key", type=Path)
    serve_as.add_argument("--rs-allowlist", type=Path)
    serve_as.add_argument("--trust", type=Path)
    serve_as.set_defaults(handler=cmd_serve_as)

    serve_rs = commands.add_parser("serve-rs", help="run the resource server")
    serve_rs.add_argument("--bind")
    serve_rs.add_argument("--origin")
    serve_rs.add_argument("--as", dest="as_uri")
    serve_rs.add_argument("--root", type=Path)
    serve_rs.add_argument("--key", type=Path)
    serve_rs.set_defaults(handler=cmd_serve_rs)

    access = commands.add_parser("access", help="fetch a resource, negotiating a grant if needed")
    access.add_argument("url")
    access.add_argument("--method", default="GET")
    access.add_argument("--data", help="request body")
    access.add_argument("--content-type")
    access.add_argument(
        "--claim", type=parse_claim_arg, action="append", default=[], metavar="FILE:FORMAT",
        help="claim token offered when the AS asks for more claims",
    )
    access.add_argument(
        "--push", type=parse_claim_arg, action="append", default=[], metavar="FILE:FORMAT",
        help="claim token sent with the first token request",
    )
    access.add_argument("--audit-dir", type=Path)
    access.add_argument("--max-rounds", type=int)
    access.set_defaults(handler=cmd_access)

    request = commands.add_parser("request", help="ticketless token request")
    request.add_argument("--as", dest="as_uri", required=True)
    target = request.add_mutually_exclusive_group(required=True)
    target.add_argument("--resource")
    target.add_argument("--resource-type")
    request.add_argument("--scope", action="append", required=True)
    request.add_argument("--purpose")
    request.add_argument("--claim", type=parse_claim_arg, action="append", default=[], metavar="FILE:FORMAT")
    request.add_argument("--audit-dir", type=Path)
    request.set_defaults(handler=cmd_request)

    audit = commands.add_parser("audit", help="inspect stored grants")
    audit_commands = audit.add_subparsers(dest="audit_command", required=True)
    audit_list = audit_commands.add_parser("list")
    audit_list.add_argument("record_file", type=Path, nargs="?")
    audit_verify = audit_commands.add_parser("verify")
    audit_verify.add_argument("record_file", type=Path, nargs="?")
    audit_verify.add_argument("--as-jwks", type=Path, required=True)
    audit.set_defaults(handler=cmd_audit)

    scenario = commands.add_parser("scenario", help="run a scenario script on loopback")
    scenario.add_argument("script", type=Path)
    scenario.add_argument("--workdir", type=Path)
    scenario.add_argument("--transcript", type=Path, help="write the transcript as JSON")
    scenario.set_defaults(handler=cmd_scenario)

    keygen = commands.add_parser("keygen", help="write a new Ed25519 signing key")
    keygen.add_argument("file", type=Path)
    keygen.add_argument("--force", action="store_true")
    keygen.set_defaults(handler=cmd_keygen)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    load_environment()
    _apply_log_level()
    try:
        code = args.handler(args)
    except ValueError as e:
        logger.error(f"Configuration error: {e}")
        logger.error("Please check your .env file and arguments")
        code = EXIT_CONFIG
    except UmaClientError as e:
        logger.error(f"{args.command} failed ({e.code}): {e}")
        code = e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}")
        code = EXIT_CONFIG
    return code


if __name__ == "__main__":
    sys.exit(main())
