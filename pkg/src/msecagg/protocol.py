"""Two-hop protocol execution over a key scheme.

The links are error free, so the "network" is pure algebra: user (u,v)
uploads ``X_{u,v} = W_{u,v} + Z_{u,v}`` to its server, every server
broadcasts ``Y_u = sum_v X_{u,v}``, and each server decodes
``sum_v X_{k,v} + sum_{u != k} Y_u``.  Because the individual keys sum to
zero, the decoded value telescopes to the true aggregate.

Every protocol variable is a linear function of the joint source vector
(all input symbols followed by the source-key symbols), so alongside the
realized values the module exposes the coefficient rows of each message.
The security verifier consumes those rows to decide leakage exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .gf import _dtype_for, matvec
from .model import UserId


class InvalidColluder(ValueError):
    """The colluding set is not a member of the collusion closure."""


class MessageAlgebra:
    """Coefficient rows of every protocol variable over the joint source.

    Column layout: K blocks of L input symbols in lexicographic user
    order, then the source-key symbols.
    """

    def __init__(self, scheme):
        self.scheme = scheme
        self.q = scheme.q
        self.block_len = scheme.block_len
        self.users: tuple[UserId, ...] = tuple(sorted(scheme.coeffs))
        self.user_index = {u: i for i, u in enumerate(self.users)}
        self.servers = tuple(sorted({u.server for u in self.users}))
        self.total_dim = len(self.users) * self.block_len + scheme.source_dim
        self._dtype = _dtype_for(self.q)

    def _empty(self, rows: int) -> np.ndarray:
        return np.zeros((rows, self.total_dim), dtype=self._dtype)

    def input_rows(self, user: UserId) -> np.ndarray:
        rows = self._empty(self.block_len)
        off = self.user_index[user] * self.block_len
        for r in range(self.block_len):
            rows[r, off + r] = 1
        return rows

    def key_rows(self, user: UserId) -> np.ndarray:
        rows = self._empty(self.block_len)
        off = len(self.users) * self.block_len
        rows[:, off:] = self.scheme.coeffs[user].data
        return rows

    def x_rows(self, user: UserId) -> np.ndarray:
        return (self.input_rows(user) + self.key_rows(user)) % self.q

    def y_rows(self, server: int) -> np.ndarray:
        acc = self._empty(self.block_len)
        for user in self.users:
            if user.server == server:
                acc = (acc + self.x_rows(user)) % self.q
        return acc

    def global_sum_rows(self) -> np.ndarray:
        acc = self._empty(self.block_len)
        for user in self.users:
            acc = (acc + self.input_rows(user)) % self.q
        return acc

    def view_rows(self, server: int) -> np.ndarray:
        """Everything server ``k`` sees: broadcasts of the others, then its own uploads."""
        parts = [self.y_rows(u) for u in self.servers if u != server]
        parts += [self.x_rows(u) for u in self.users if u.server == server]
        return np.vstack(parts) % self.q

    def joint_source(self, transcript: "Transcript") -> np.ndarray:
        pieces = [transcript.inputs[u] for u in self.users] + [transcript.source_key]
        return np.concatenate(pieces).astype(self._dtype)


@dataclass(frozen=True)
class Transcript:
    """One protocol execution: sampled inputs and keys, both hops, decodes."""

    scheme: object = field(repr=False)
    inputs: dict[UserId, np.ndarray]
    source_key: np.ndarray
    keys: dict[UserId, np.ndarray]
    x_messages: dict[UserId, np.ndarray]
    y_messages: dict[int, np.ndarray]
    decoded: dict[int, np.ndarray]


@dataclass(frozen=True)
class CorrectnessReport:
    ok: bool
    expected: np.ndarray
    per_server: dict[int, bool]

    @property
    def failing_servers(self) -> list[int]:
        return sorted(k for k, good in self.per_server.items() if not good)


@dataclass(frozen=True)
class AdversaryView:
    """What server ``k`` plus the colluders in ``T`` jointly observe."""

    server: int
    colluders: tuple[UserId, ...]
    y_others: dict[int, np.ndarray]
    x_own: dict[UserId, np.ndarray]
    side_inputs: dict[UserId, np.ndarray]
    side_keys: dict[UserId, np.ndarray]
    global_sum: np.ndarray
    view_matrix: np.ndarray = field(repr=False)
    side_matrix: np.ndarray = field(repr=False)
    sum_matrix: np.ndarray = field(repr=False)


def run_protocol(scheme, rng: np.random.Generator) -> Transcript:
    """Sample uniform inputs and source key, run both hops, decode everywhere."""
    algebra = MessageAlgebra(scheme)
    q, L = scheme.q, scheme.block_len
    dtype = algebra._dtype

    inputs = {
        u: rng.integers(0, q, size=L, dtype=np.int64).astype(dtype) for u in algebra.users
    }
    source_key = rng.integers(0, q, size=scheme.source_dim, dtype=np.int64).astype(dtype)
    keys = {u: matvec(scheme.coeffs[u].data, source_key, q) for u in algebra.users}
    x_messages = {u: (inputs[u] + keys[u]) % q for u in algebra.users}

    y_messages = {}
    for server in algebra.servers:
        acc = np.zeros(L, dtype=dtype)
        for u in algebra.users:
            if u.server == server:
                acc = (acc + x_messages[u]) % q
        y_messages[server] = acc

    decoded = {}
    for server in algebra.servers:
        acc = np.zeros(L, dtype=dtype)
        for u in algebra.users:
            if u.server == server:
                acc = (acc + x_messages[u]) % q
        for other in algebra.servers:
            if other != server:
                acc = (acc + y_messages[other]) % q
        decoded[server] = acc

    return Transcript(
        scheme=scheme,
        inputs=inputs,
        source_key=source_key,
        keys=keys,
        x_messages=x_messages,
        y_messages=y_messages,
        decoded=decoded,
    )


def check_correctness(transcript: Transcript) -> CorrectnessReport:
    """Does every server decode the true aggregate of the inputs?"""
    scheme = transcript.scheme
    q = scheme.q
    users = sorted(transcript.inputs)
    expected = np.zeros(scheme.block_len, dtype=_dtype_for(q))
    for u in users:
        expected = (expected + transcript.inputs[u]) % q
    per_server = {
        k: bool(np.array_equal(v, expected)) for k, v in transcript.decoded.items()
    }
    return CorrectnessReport(ok=all(per_server.values()), expected=expected, per_server=per_server)


def adversary_view(
    transcript: Transcript,
    server: int,
    colluders,
    closure=None,
) -> AdversaryView:
    """Realized and symbolic view of one server plus a colluding user set.

    When ``closure`` (an iterable of frozensets) is supplied, the colluding
    set must be one of its members.
    """
    colluders = tuple(sorted(colluders))
    if closure is not None and frozenset(colluders) not in set(closure):
        raise InvalidColluder(f"{list(map(tuple, colluders))} is not an admissible colluding set")

    scheme = transcript.scheme
    algebra = MessageAlgebra(scheme)
    q = scheme.q

    y_others = {u: transcript.y_messages[u] for u in algebra.servers if u != server}
    x_own = {u: transcript.x_messages[u] for u in algebra.users if u.server == server}
    side_inputs = {u: transcript.inputs[u] for u in colluders}
    side_keys = {u: transcript.keys[u] for u in colluders}

    report = check_correctness(transcript)
    side_parts = [algebra.global_sum_rows()]
    for u in colluders:
        side_parts.append(algebra.input_rows(u))
        side_parts.append(algebra.key_rows(u))
    return AdversaryView(
        server=server,
        colluders=colluders,
        y_others=y_others,
        x_own=x_own,
        side_inputs=side_inputs,
        side_keys=side_keys,
        global_sum=report.expected,
        view_matrix=algebra.view_rows(server),
        side_matrix=np.vstack(side_parts) % q,
        sum_matrix=algebra.global_sum_rows(),
    )
