"""Instance data model: topology, monotone set systems, validation, JSON I/O.

An aggregation instance is a star-of-stars topology (U servers, ``V_u``
users behind server u), a monotone family of protected input sets, a
monotone family of colluding user sets, and field/seed configuration.
Set systems are supplied as generators (the maximal sets) and expanded to
their full downward closure at validation time, because several derived
quantities depend on exact cardinalities and are not monotone in the set
indices.  The closure is deterministically ordered: the empty set first,
then by (size, lexicographic), which gives every set a stable 1-based
index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, NamedTuple, Sequence

from .gf import is_prime

DEFAULT_CLOSURE_CAP = 1 << 20


class UserId(NamedTuple):
    server: int
    slot: int

    def __str__(self) -> str:
        return f"({self.server},{self.slot})"


class BadTopology(ValueError):
    """Server/user counts outside the supported shape (U >= 3, V_u >= 1)."""


class TrivialSecuritySystem(ValueError):
    """The union of the protected input sets is empty."""


class OversizedColluder(ValueError):
    """A colluding generator has more than K - 2 members."""


class ClosureTooLarge(ValueError):
    """Monotone expansion would exceed the configured cap."""


class InvalidUserRef(ValueError):
    """A user id does not exist in the topology."""


@dataclass(frozen=True)
class Topology:
    """Server fan-out: ``users_per_server[u-1]`` users behind server u."""

    users_per_server: tuple[int, ...]

    def __post_init__(self):
        if len(self.users_per_server) < 3:
            raise BadTopology(f"need at least 3 servers, got {len(self.users_per_server)}")
        if any(v < 1 for v in self.users_per_server):
            raise BadTopology(f"every server needs at least one user: {self.users_per_server}")

    @property
    def server_count(self) -> int:
        return len(self.users_per_server)

    @property
    def total_users(self) -> int:
        return sum(self.users_per_server)

    def user_set(self, server: int) -> frozenset[UserId]:
        if not 1 <= server <= self.server_count:
            raise InvalidUserRef(f"server {server} out of range")
        return frozenset(UserId(server, v) for v in range(1, self.users_per_server[server - 1] + 1))

    @cached_property
    def all_users(self) -> tuple[UserId, ...]:
        return tuple(
            UserId(u, v)
            for u in range(1, self.server_count + 1)
            for v in range(1, self.users_per_server[u - 1] + 1)
        )

    @cached_property
    def user_universe(self) -> frozenset[UserId]:
        return frozenset(self.all_users)


def _canonical_sets(sets: Iterable[frozenset[UserId]]) -> tuple[frozenset[UserId], ...]:
    return tuple(sorted(sets, key=lambda s: (len(s), sorted(s))))


def closure_of(
    generators: Sequence[frozenset[UserId]],
    cap: int = DEFAULT_CLOSURE_CAP,
) -> tuple[frozenset[UserId], ...]:
    """All subsets of all generators, deduplicated and canonically sorted.

    The empty set is always a member (index 1 after sorting).  Raises
    ClosureTooLarge when the expansion would exceed ``cap`` sets.
    """
    seen: set[frozenset[UserId]] = {frozenset()}
    for gen in generators:
        members = sorted(gen)
        if 2 ** len(members) > cap:
            raise ClosureTooLarge(
                f"generator of size {len(members)} expands to 2^{len(members)} subsets (cap {cap})"
            )
        for r in range(1, len(members) + 1):
            for combo in combinations(members, r):
                seen.add(frozenset(combo))
                if len(seen) > cap:
                    raise ClosureTooLarge(f"closure exceeds cap of {cap} sets")
    return _canonical_sets(seen)


@dataclass(frozen=True)
class SetSystem:
    """A monotone family stored as generators plus its full closure."""

    generators: tuple[frozenset[UserId], ...]
    closure: tuple[frozenset[UserId], ...]

    @classmethod
    def from_generators(
        cls,
        generators: Iterable[frozenset[UserId]],
        cap: int = DEFAULT_CLOSURE_CAP,
    ) -> "SetSystem":
        gens = _canonical_sets({frozenset(g) for g in generators})
        return cls(generators=gens, closure=closure_of(gens, cap=cap))

    def __len__(self) -> int:
        return len(self.closure)

    def __iter__(self):
        return iter(self.closure)

    def set_at(self, index: int) -> frozenset[UserId]:
        """Member by 1-based index (the empty set is index 1)."""
        return self.closure[index - 1]

    def __contains__(self, member) -> bool:
        return frozenset(member) in set(self.closure)


@dataclass(frozen=True)
class Instance:
    """A validated aggregation instance."""

    topology: Topology
    security_system: SetSystem
    collusion_system: SetSystem
    field_modulus: int | None
    rng_seed: int

    @property
    def total_users(self) -> int:
        return self.topology.total_users

    @cached_property
    def explicit_security_union(self) -> frozenset[UserId]:
        out: frozenset[UserId] = frozenset()
        for s in self.security_system.generators:
            out |= s
        return out


def _parse_user(entry, topology: Topology) -> UserId:
    try:
        server, slot = int(entry[0]), int(entry[1])
    except (TypeError, ValueError, IndexError):
        raise InvalidUserRef(f"user id must be a [server, slot] pair, got {entry!r}")
    if not 1 <= server <= topology.server_count:
        raise InvalidUserRef(f"server index {server} out of range 1..{topology.server_count}")
    if not 1 <= slot <= topology.users_per_server[server - 1]:
        raise InvalidUserRef(
            f"user slot {slot} out of range 1..{topology.users_per_server[server - 1]} on server {server}"
        )
    return UserId(server, slot)


def _parse_generators(raw, topology: Topology, label: str) -> list[frozenset[UserId]]:
    if not isinstance(raw, list):
        raise InvalidUserRef(f"{label} must be a list of user-id lists")
    return [frozenset(_parse_user(u, topology) for u in gen) for gen in raw]


def validate_instance(raw: dict, closure_cap: int = DEFAULT_CLOSURE_CAP) -> Instance:
    """Validate a raw instance description and expand both closures.

    ``raw`` follows the external JSON format::

        {"servers": [V_1, ..., V_U],
         "security_generators":  [[[u, v], ...], ...],
         "collusion_generators": [[[u, v], ...], ...],
         "field_modulus": q | null,
         "seed": n}
    """
    servers = raw.get("servers")
    if not isinstance(servers, list) or not servers:
        raise BadTopology("missing or empty 'servers' list")
    try:
        topology = Topology(tuple(int(v) for v in servers))
    except (TypeError, ValueError):
        raise BadTopology(f"'servers' must be a list of positive integers: {servers!r}")

    sec_gens = _parse_generators(raw.get("security_generators", []), topology, "security_generators")
    col_gens = _parse_generators(raw.get("collusion_generators", []), topology, "collusion_generators")

    union_sec = frozenset().union(*sec_gens) if sec_gens else frozenset()
    if not union_sec:
        raise TrivialSecuritySystem("the union of the security generators is empty")

    k = topology.total_users
    for gen in col_gens:
        if len(gen) > k - 2:
            raise OversizedColluder(
                f"colluding generator {sorted(gen)} has {len(gen)} members; at most {k - 2} allowed"
            )

    modulus = raw.get("field_modulus")
    if modulus is not None:
        modulus = int(modulus)
        if not is_prime(modulus):
            raise ValueError(f"field_modulus must be prime, got {modulus}")

    seed = int(raw.get("seed", 0))

    return Instance(
        topology=topology,
        security_system=SetSystem.from_generators(sec_gens, cap=closure_cap),
        collusion_system=SetSystem.from_generators(col_gens, cap=closure_cap),
        field_modulus=modulus,
        rng_seed=seed,
    )


def users_to_json(users: Iterable[UserId]) -> list[list[int]]:
    return [[u.server, u.slot] for u in sorted(users)]


def instance_to_json(instance: Instance) -> dict:
    return {
        "servers": list(instance.topology.users_per_server),
        "security_generators": [users_to_json(g) for g in instance.security_system.generators],
        "collusion_generators": [users_to_json(g) for g in instance.collusion_system.generators],
        "field_modulus": instance.field_modulus,
        "seed": instance.rng_seed,
    }


def load_instance(path, closure_cap: int = DEFAULT_CLOSURE_CAP) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return validate_instance(raw, closure_cap=closure_cap)
