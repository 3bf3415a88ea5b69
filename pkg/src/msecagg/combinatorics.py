"""Derived security combinatorics of an instance.

For every pair (protected set S_m, colluding set T_n) each server is
classified by what it can see: servers whose whole user population is
swallowed by S_m v T_n while touching S_m directly ("covered" servers,
``u_set``), and servers that host colluders only (``f_set``).  From the
classification the module derives

* the implicit security set S_I: users never listed in any S_m whose
  values would nevertheless be pinned down by the aggregate once a
  critical triple reveals the other K - 1 inputs,
* the total security set S_bar = (union of S_m) v S_I,
* a*: the largest overlap of a critical triple's covered users with
  S_bar,
* e*: the largest number of inputs that must be simultaneously
  protected across all (server, S_m, T_n) triples, and
* Q: the union of covered-user sets of the maximising triples.

All scans iterate the full monotone closures; the exact-cardinality
conditions are not monotone, so no generator-level shortcut is sound.
Indices m and n are 1-based into the canonical closure order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .model import Instance, UserId


class Witness(NamedTuple):
    """A (server, S_m index, T_n index) triple achieving a maximum."""

    u: int
    m: int
    n: int


@dataclass(frozen=True)
class PairClassification:
    m: int
    n: int
    u_set: frozenset[int]
    f_set: frozenset[int]


@dataclass(frozen=True)
class SecurityAnalysis:
    implicit_set: frozenset[UserId]
    total_set: frozenset[UserId]
    a_star: int
    e_star: int
    q1: frozenset[UserId]
    q2: frozenset[UserId]
    q_set: frozenset[UserId]
    a_witnesses: tuple[Witness, ...]
    e_witnesses: tuple[Witness, ...]


def _cells(instance: Instance) -> dict[int, frozenset[UserId]]:
    topo = instance.topology
    return {u: topo.user_set(u) for u in range(1, topo.server_count + 1)}


def _u_set(s: frozenset, t: frozenset, cells: dict[int, frozenset]) -> frozenset[int]:
    union = s | t
    return frozenset(u for u, cell in cells.items() if (s & cell) and len(union & cell) == len(cell))


def _f_set(s: frozenset, t: frozenset, cells: dict[int, frozenset]) -> frozenset[int]:
    return frozenset(u for u, cell in cells.items() if not (s & cell) and len(t & cell) == len(cell))


def classify_pair(instance: Instance, m: int, n: int) -> PairClassification:
    """Server roles for the pair (S_m, T_n); m, n are 1-based closure indices."""
    cells = _cells(instance)
    s = instance.security_system.set_at(m)
    t = instance.collusion_system.set_at(n)
    return PairClassification(m=m, n=n, u_set=_u_set(s, t, cells), f_set=_f_set(s, t, cells))


def covered_set(instance: Instance, u: int, m: int, n: int) -> frozenset[UserId]:
    """Users visible to server u under (S_m, T_n): (S_m ^ K_u) v K_{u_set} v T_n."""
    cells = _cells(instance)
    s = instance.security_system.set_at(m)
    t = instance.collusion_system.set_at(n)
    us = _u_set(s, t, cells)
    ku = frozenset().union(*(cells[w] for w in us)) if us else frozenset()
    return (s & cells[u]) | ku | t


def implicit_security_set(instance: Instance) -> frozenset[UserId]:
    """Users outside every S_m that critical triples force to stay hidden.

    A triple contributes when its covered set has exactly K - 1 members;
    the single missing user is then determined by the aggregate and must
    be protected as well.
    """
    cells = _cells(instance)
    everyone = instance.topology.user_universe
    k = instance.total_users
    implied: set[UserId] = set()
    for s in instance.security_system.closure:
        s_by = {u: s & cell for u, cell in cells.items()}
        for t in instance.collusion_system.closure:
            us = _u_set(s, t, cells)
            base = (frozenset().union(*(cells[w] for w in us)) if us else frozenset()) | t
            for u in cells:
                covered = s_by[u] | base
                if len(covered) == k - 1:
                    implied |= everyone - covered
    return frozenset(implied) - instance.explicit_security_union


def total_security_set(instance: Instance) -> frozenset[UserId]:
    return instance.explicit_security_union | implicit_security_set(instance)


def _scan_maxima(instance: Instance, total: frozenset[UserId]):
    """One full triple scan; returns maxima, witnesses and the Q unions."""
    cells = _cells(instance)
    a_star, e_star = -1, -1
    a_wits: list[Witness] = []
    e_wits: list[Witness] = []
    q1: set[UserId] = set()
    e_covers: list[frozenset[UserId]] = []
    full = len(total)
    for m, s in enumerate(instance.security_system.closure, start=1):
        s_by = {u: s & cell for u, cell in cells.items()}
        for n, t in enumerate(instance.collusion_system.closure, start=1):
            us = _u_set(s, t, cells)
            ku = frozenset().union(*(cells[w] for w in us)) if us else frozenset()
            base = ku | t
            t_total = t & total
            for u in cells:
                covered = s_by[u] | base
                a_val = len(covered & total)
                if a_val > a_star:
                    a_star, a_wits = a_val, [Witness(u, m, n)]
                elif a_val == a_star:
                    a_wits.append(Witness(u, m, n))
                if a_val == full:
                    q1 |= covered
                e_val = len((s_by[u] & total) | t_total) + len(us - {u})
                if e_val > e_star:
                    e_star, e_wits, e_covers = e_val, [Witness(u, m, n)], [covered]
                elif e_val == e_star:
                    e_wits.append(Witness(u, m, n))
                    e_covers.append(covered)
    q2 = frozenset().union(*e_covers) if e_covers else frozenset()
    return a_star, e_star, tuple(a_wits), tuple(e_wits), frozenset(q1), q2


def compute_a_e_stars(instance: Instance):
    """(a*, e*, a-witnesses, e-witnesses) over every (u, m, n) triple."""
    total = total_security_set(instance)
    a_star, e_star, a_wits, e_wits, _, _ = _scan_maxima(instance, total)
    return a_star, e_star, a_wits, e_wits


def compute_q(instance: Instance):
    """(Q1, Q2, Q) per the critical-triple unions; Q is empty when Q1 is."""
    total = total_security_set(instance)
    _, _, _, _, q1, q2 = _scan_maxima(instance, total)
    q = (q1 | q2) if q1 else frozenset()
    return q1, q2, q


def analyze(instance: Instance) -> SecurityAnalysis:
    """Full derived-parameter analysis in two scans."""
    implicit = implicit_security_set(instance)
    total = instance.explicit_security_union | implicit
    a_star, e_star, a_wits, e_wits, q1, q2 = _scan_maxima(instance, total)
    q = (q1 | q2) if q1 else frozenset()
    return SecurityAnalysis(
        implicit_set=implicit,
        total_set=total,
        a_star=a_star,
        e_star=e_star,
        q1=q1,
        q2=q2,
        q_set=q,
        a_witnesses=a_wits,
        e_witnesses=e_wits,
    )
