"""Fine-grained access control for cross-chain requests.

Each resource chain registers a table of permissive rules; a request is
allowed iff at least one rule matches on every dimension (default deny).
The wildcard token "*" matches anything in its field; resource paths
additionally support the suffix form "prefix/*".
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterable, Union

WILDCARD = "*"

OPERATIONS = ("read", "write", "invoke")

ChainPattern = Union[int, str]  # concrete chain ID or "*"
UserPattern = Union[tuple[bytes, ...], str]  # tuple of public keys or "*"


class AclError(ValueError):
    """Raised on malformed rules or table registration mistakes."""


@dataclass(frozen=True)
class AccessRule:
    """One permissive row of a chain's access-control table."""

    resource_blockchain: int
    authorized_blockchain: ChainPattern
    contract: str
    resource_path: str
    operate: str
    user_identity: UserPattern

    def __post_init__(self) -> None:
        if isinstance(self.authorized_blockchain, str) and self.authorized_blockchain != WILDCARD:
            raise AclError("authorized_blockchain must be a chain ID or '*'")
        if self.operate != WILDCARD and self.operate not in OPERATIONS:
            raise AclError(f"operate must be one of {OPERATIONS} or '*'")
        if isinstance(self.user_identity, str):
            if self.user_identity != WILDCARD:
                raise AclError("user_identity must be a key tuple or '*'")
        elif len(self.user_identity) == 0:
            raise AclError("user_identity key list must be non-empty (use '*' to match anyone)")


@dataclass(frozen=True)
class AccessRequest:
    """A fully concrete access request projected from a cross-chain payload."""

    resource_blockchain: int
    requesting_blockchain: int
    contract: str
    resource_path: str
    operation: str
    user: bytes


def path_matches(pattern: str, path: str) -> bool:
    """Path wildcard grammar: "*" matches any path, "prefix/*" any path
    starting with "prefix/", anything else matches exactly."""
    if pattern == WILDCARD:
        return True
    if pattern.endswith("/*"):
        return path.startswith(pattern[:-1])
    return pattern == path


def rule_matches(rule: AccessRule, request: AccessRequest) -> bool:
    if rule.resource_blockchain != request.resource_blockchain:
        return False
    if rule.authorized_blockchain != WILDCARD and rule.authorized_blockchain != request.requesting_blockchain:
        return False
    if rule.contract != WILDCARD and rule.contract != request.contract:
        return False
    if not path_matches(rule.resource_path, request.resource_path):
        return False
    if rule.operate != WILDCARD and rule.operate != request.operation:
        return False
    if rule.user_identity != WILDCARD and request.user not in rule.user_identity:
        return False
    return True


class AclStore:
    """Per-chain rule tables with atomic replacement and default deny.

    Checks read a snapshot reference, so a concurrent re-registration is
    either entirely visible or entirely invisible to any single check.
    """

    def __init__(self) -> None:
        self._tables: dict[int, tuple[AccessRule, ...]] = {}
        self._lock = threading.Lock()

    def register_table(self, chain: int, rules: Iterable[AccessRule]) -> None:
        """Store the table for ``chain``, replacing any previous one."""
        frozen = tuple(rules)
        for rule in frozen:
            if rule.resource_blockchain != chain:
                raise AclError(
                    f"rule for chain {rule.resource_blockchain} registered under chain {chain}"
                )
        with self._lock:
            tables = dict(self._tables)
            tables[chain] = frozen
            self._tables = tables

    def table(self, chain: int) -> tuple[AccessRule, ...]:
        return self._tables.get(chain, ())

    def chains(self) -> tuple[int, ...]:
        return tuple(self._tables)

    def check(self, request: AccessRequest) -> bool:
        """True iff some registered rule matches every request dimension."""
        rules = self._tables.get(request.resource_blockchain)
        if not rules:
            return False
        return any(rule_matches(rule, request) for rule in rules)


# -- human-readable file format ---------------------------------------------
#
# One rule per line, six "|"-separated columns:
#   resource_chain|authorized_chain|contract|resource_path|operate|users
# "*" for wildcards; the user column separates hex-encoded compressed
# public keys with ",". Blank lines and "#" comments are ignored.


def parse_rule_line(line: str) -> AccessRule:
    columns = [c.strip() for c in line.split("|")]
    if len(columns) != 6:
        raise AclError(f"expected 6 columns, got {len(columns)}: {line!r}")
    resource, authorized, contract, path, operate, users = columns
    try:
        resource_chain = int(resource)
    except ValueError:
        raise AclError(f"resource blockchain must be a chain ID: {resource!r}") from None
    authorized_pattern: ChainPattern
    if authorized == WILDCARD:
        authorized_pattern = WILDCARD
    else:
        try:
            authorized_pattern = int(authorized)
        except ValueError:
            raise AclError(f"authorized blockchain must be a chain ID or '*': {authorized!r}") from None
    users_pattern: UserPattern
    if users == WILDCARD:
        users_pattern = WILDCARD
    else:
        try:
            users_pattern = tuple(bytes.fromhex(u.strip()) for u in users.split(","))
        except ValueError:
            raise AclError(f"user column must be hex keys separated by ',': {users!r}") from None
    return AccessRule(resource_chain, authorized_pattern, contract, path, operate, users_pattern)


def parse_rules(text: str) -> list[AccessRule]:
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            rules.append(parse_rule_line(stripped))
        except AclError as exc:
            raise AclError(f"line {lineno}: {exc}") from None
    return rules


def format_rule(rule: AccessRule) -> str:
    users = (
        WILDCARD
        if isinstance(rule.user_identity, str)
        else ",".join(k.hex() for k in rule.user_identity)
    )
    return "|".join(
        [
            str(rule.resource_blockchain),
            str(rule.authorized_blockchain),
            rule.contract,
            rule.resource_path,
            rule.operate,
            users,
        ]
    )


def load_rules_file(path: str) -> list[AccessRule]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_rules(fh.read())
