"""Exact leakage verification via rank arithmetic, with an enumeration oracle.

Every protocol variable is a linear image of one uniform source vector
over F_q, so joint entropies are ranks (in units of log q) and

    I(A; B | C) = rank[A;C] + rank[B;C] - rank[A;B;C] - rank[C].

``verify_all`` evaluates that quantity for every (server, protected set,
colluding set) triple of an instance and reports the violations.  The
independent oracle enumerates the full source space, tabulates the joint
distributions and recovers the same mutual information purely by
counting, which is what the rank path is cross-checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gf import DimensionMismatch, Echelon, _dtype_for
from .model import Instance
from .protocol import MessageAlgebra


class TooLarge(ValueError):
    """Source space too big to enumerate under the configured cap."""


@dataclass(frozen=True)
class LinearView:
    """Coefficient blocks of an adversary view over one uniform source.

    ``a`` is the observation, ``b`` the secrets, ``c`` the conditioning
    side information; all blocks share the source dimension (columns).
    """

    q: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        cols = {self.a.shape[1], self.b.shape[1], self.c.shape[1]}
        if len(cols) != 1:
            raise DimensionMismatch(f"blocks disagree on source dimension: {cols}")

    @property
    def source_dim(self) -> int:
        return self.a.shape[1]


def _rank_of(q: int, *blocks: np.ndarray) -> int:
    ech = Echelon(q, blocks[0].shape[1])
    for block in blocks:
        ech.add_rows(block)
    return ech.rank


def conditional_mi_rank(view: LinearView) -> int:
    """I(A; B | C) in units of log q, exact."""
    r_ac = _rank_of(view.q, view.a, view.c)
    r_bc = _rank_of(view.q, view.b, view.c)
    r_abc = _rank_of(view.q, view.a, view.b, view.c)
    r_c = _rank_of(view.q, view.c)
    return r_ac + r_bc - r_abc - r_c


@dataclass(frozen=True)
class Violation:
    k: int
    m: int
    n: int
    mi: int


@dataclass(frozen=True)
class SecurityReport:
    triples_checked: int
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def build_view(instance: Instance, scheme, k: int, m: int, n: int) -> LinearView:
    """LinearView of the security condition at one (k, m, n) triple."""
    algebra = MessageAlgebra(scheme)
    s = instance.security_system.set_at(m)
    t = instance.collusion_system.set_at(n)
    a = algebra.view_rows(k)
    b_parts = [algebra.input_rows(u) for u in sorted(s)]
    b = np.vstack(b_parts) if b_parts else algebra._empty(0)
    c_parts = [algebra.global_sum_rows()]
    for u in sorted(t):
        c_parts.append(algebra.input_rows(u))
        c_parts.append(algebra.key_rows(u))
    c = np.vstack(c_parts) % scheme.q
    return LinearView(q=scheme.q, a=a, b=b, c=c)


def verify_all(instance: Instance, scheme) -> SecurityReport:
    """Check zero leakage for every server against every (S_m, T_n) pair.

    Iterates the full monotone closures; echelon bases are shared across
    the loops so each triple costs only the incremental reduction of the
    new rows.
    """
    algebra = MessageAlgebra(scheme)
    q = scheme.q
    servers = algebra.servers
    views = {k: algebra.view_rows(k) for k in servers}
    input_rows = {u: algebra.input_rows(u) for u in algebra.users}
    key_rows = {u: algebra.key_rows(u) for u in algebra.users}
    sum_rows = algebra.global_sum_rows()

    violations: list[Violation] = []
    checked = 0
    sec_closure = instance.security_system.closure
    col_closure = instance.collusion_system.closure

    for n, t in enumerate(col_closure, start=1):
        ech_c = Echelon(q, algebra.total_dim)
        ech_c.add_rows(sum_rows)
        for u in sorted(t):
            ech_c.add_rows(input_rows[u])
            ech_c.add_rows(key_rows[u])
        r_c = ech_c.rank
        r_ac = {}
        for k in servers:
            ech = ech_c.copy()
            ech.add_rows(views[k])
            r_ac[k] = ech.rank
        for m, s in enumerate(sec_closure, start=1):
            ech_bc = ech_c.copy()
            for u in sorted(s):
                ech_bc.add_rows(input_rows[u])
            r_bc = ech_bc.rank
            for k in servers:
                ech = ech_bc.copy()
                ech.add_rows(views[k])
                mi = r_ac[k] + r_bc - ech.rank - r_c
                checked += 1
                if mi != 0:
                    violations.append(Violation(k=k, m=m, n=n, mi=mi))
    return SecurityReport(triples_checked=checked, violations=tuple(violations))


@dataclass(frozen=True)
class OracleEntropies:
    """Entropies in units of log q from full source enumeration."""

    h_ac: int
    h_bc: int
    h_abc: int
    h_c: int

    @property
    def mi(self) -> int:
        return self.h_ac + self.h_bc - self.h_abc - self.h_c


def entropy_oracle(view: LinearView, cap: int = 1 << 22) -> OracleEntropies:
    """Exact entropies by enumerating every source realization.

    All variables are linear images of the uniform source, so each joint
    distribution is uniform on its support; the oracle asserts that
    uniformity and converts support sizes (necessarily powers of q) into
    integer entropies.  Independent of the rank machinery.
    """
    q, dim = view.q, view.source_dim
    n_points = q**dim
    if n_points > cap:
        raise TooLarge(f"enumeration of q^dim = {n_points} exceeds cap {cap}")

    # Columns of `space` are all q^dim source vectors, mixed-radix order.
    idx = np.arange(n_points, dtype=np.int64)
    space = np.empty((dim, n_points), dtype=np.int64)
    for d in range(dim):
        space[d] = (idx // q**d) % q

    stacked = np.vstack([view.a, view.b, view.c]).astype(np.int64)
    values = np.zeros((stacked.shape[0], n_points), dtype=np.int64)
    for d in range(dim):  # accumulate mod q per source symbol; products stay below q*q
        values = (values + stacked[:, d : d + 1] * space[d][None, :]) % q
    na, nb = view.a.shape[0], view.b.shape[0]
    groups = {
        "h_ac": np.concatenate([np.arange(na), np.arange(na + nb, stacked.shape[0])]),
        "h_bc": np.arange(na, stacked.shape[0]),
        "h_abc": np.arange(stacked.shape[0]),
        "h_c": np.arange(na + nb, stacked.shape[0]),
    }
    out = {}
    for name, rows in groups.items():
        out[name] = _uniform_support_log(values[rows], q)
    return OracleEntropies(**out)


def _uniform_support_log(values: np.ndarray, q: int) -> int:
    """log_q of the support size of the empirical distribution of the columns."""
    n_points = values.shape[1]
    if values.shape[0] == 0:
        return 0
    codes = _pack_columns(values, q)
    _, counts = np.unique(codes, axis=0 if codes.ndim > 1 else None, return_counts=True)
    if counts.min() != counts.max():
        raise AssertionError("linear image of a uniform source must be uniform on its support")
    support = len(counts)
    h = 0
    while q**h < support:
        h += 1
    if q**h != support or support * int(counts[0]) != n_points:
        raise AssertionError("support size is not a power of the field size")
    return h


def _pack_columns(values: np.ndarray, q: int) -> np.ndarray:
    """Collapse each column to one code (or a few int64 chunks) for exact dedup."""
    rows = values.shape[0]
    per_chunk = max(1, int(62 / np.log2(q)))
    chunks = []
    for start in range(0, rows, per_chunk):
        block = values[start : start + per_chunk]
        weights = q ** np.arange(block.shape[0], dtype=np.int64)
        chunks.append(weights @ block)
    packed = np.stack(chunks, axis=1)
    return packed[:, 0] if packed.shape[1] == 1 else packed
