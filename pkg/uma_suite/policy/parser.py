"""Parsing of ``profile-json`` policy documents.

Example document::

    {
      "uid": "https://alice.example/policies/shoe-size",
      "permission": [{
        "target": {"resource": "https://pod.example/alice/profile/shoe-size"},
        "action": "read",
        "assignee": {"claim": {"type": "role", "value": "shoe-seller",
                               "formats": ["urn:uma-suite:vc+jwt"],
                               "issuer": "https://flemish-enterprise-registry.example"}}
      }]
    }
"""

import json
import logging
from pathlib import Path
from typing import Any

from ..errors import PolicyError
from ..models.types import Action, Constraint
from .model import ClaimMatcher, PartyMatcher, PolicyDocument, Rule, TargetMatcher

logger = logging.getLogger(__name__)

PROFILE_JSON = "profile-json"
POLICY_GLOB = "*.policy.json"

_DOCUMENT_KEYS = {"uid", "permission", "prohibition"}
_RULE_KEYS = {"target", "action", "assignee", "constraint"}
_TARGET_KEYS = {"resource": "resource", "resourceType": "resource_type", "resourcePrefix": "resource_prefix"}
_CLAIM_KEYS = {"type", "value", "formats", "issuer"}


def parse_policy(document: bytes, format: str = PROFILE_JSON) -> PolicyDocument:
    """Parse one policy document.

    Args:
        document: Raw document bytes.
        format: Declared wire format; only ``profile-json`` is supported.

    Returns:
        A PolicyDocument satisfying every profile invariant.

    Raises:
        PolicyError: with code ``malformed-document``, ``unknown-action``,
            ``invalid-matcher`` or ``invalid-window``.
    """
    if format != PROFILE_JSON:
        raise PolicyError(f"unsupported policy format: {format}")
    try:
        data = json.loads(document)
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise PolicyError(f"policy is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise PolicyError("policy document must be a JSON object")

    unknown = set(data) - _DOCUMENT_KEYS
    if unknown:
        raise PolicyError(f"unknown top-level keys: {sorted(unknown)}")

    return PolicyDocument(
        uid=data.get("uid", ""),
        permissions=_parse_rules(data.get("permission", [])),
        prohibitions=_parse_rules(data.get("prohibition", [])),
    )


def load_policy_dir(directory: Path) -> list[PolicyDocument]:
    """Load every ``*.policy.json`` file in a directory, sorted by file name.

    Raises:
        PolicyError: If any file fails to parse (the message names the file).
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise PolicyError(f"policies directory not found: {directory}")

    policies = []
    for path in sorted(directory.glob(POLICY_GLOB)):
        try:
            policies.append(parse_policy(path.read_bytes()))
        except PolicyError as e:
            raise PolicyError(f"{path.name}: {e}", code=e.code) from e
    logger.info(f"Loaded {len(policies)} policies from {directory}")
    return policies


def _parse_rules(raw: Any) -> tuple[Rule, ...]:
    if not isinstance(raw, list):
        raise PolicyError("permission/prohibition must be arrays")
    return tuple(_parse_rule(item) for item in raw)


def _parse_rule(raw: Any) -> Rule:
    if not isinstance(raw, dict):
        raise PolicyError(f"rule must be an object: {raw!r}")
    unknown = set(raw) - _RULE_KEYS
    if unknown:
        raise PolicyError(f"unknown rule keys: {sorted(unknown)}")
    for key in ("target", "action", "assignee"):
        if key not in raw:
            raise PolicyError(f"rule is missing '{key}'")

    constraints = raw.get("constraint", [])
    if not isinstance(constraints, list):
        raise PolicyError("constraint must be an array")

    return Rule(
        target=_parse_target(raw["target"]),
        action=Action.parse(raw["action"]),
        assignee=_parse_assignee(raw["assignee"]),
        constraints=tuple(Constraint.from_dict(c) for c in constraints),
    )


def _parse_target(raw: Any) -> TargetMatcher:
    if not isinstance(raw, dict) or len(raw) != 1 or set(raw) - set(_TARGET_KEYS):
        raise PolicyError(f"target needs exactly one of {sorted(_TARGET_KEYS)}", code="invalid-matcher")
    (key, value), = raw.items()
    if not isinstance(value, str):
        raise PolicyError(f"target {key} must be a string", code="invalid-matcher")
    return TargetMatcher(**{_TARGET_KEYS[key]: value})


def _parse_assignee(raw: Any) -> PartyMatcher:
    if not isinstance(raw, dict) or len(raw) != 1:
        raise PolicyError("assignee needs exactly one of anyone, webid, claim", code="invalid-matcher")
    (key, value), = raw.items()

    if key == "anyone":
        if value is not True:
            raise PolicyError("assignee 'anyone' must be true", code="invalid-matcher")
        return PartyMatcher(anyone=True)
    if key == "webid":
        if not isinstance(value, str) or not value:
            raise PolicyError("assignee webid must be an IRI", code="invalid-matcher")
        return PartyMatcher(webid=value)
    if key == "claim":
        if not isinstance(value, dict) or set(value) != _CLAIM_KEYS:
            raise PolicyError(f"claim matcher needs keys {sorted(_CLAIM_KEYS)}", code="invalid-matcher")
        formats = value["formats"]
        if not isinstance(formats, list) or not all(isinstance(f, str) for f in formats):
            raise PolicyError("claim formats must be a list of URIs", code="invalid-matcher")
        return PartyMatcher(
            claim=ClaimMatcher(
                claim_type=value["type"],
                expected_value=value["value"],
                accepted_formats=tuple(formats),
                trusted_issuer=value["issuer"],
            )
        )
    raise PolicyError(f"unknown assignee kind: {key}", code="invalid-matcher")
