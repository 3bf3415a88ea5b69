"""Construction of achievable finite-field key schemes.

A scheme maps the source key N (``source_dim`` uniform symbols) to one
``block_len x source_dim`` coefficient matrix per user; the individual key
of user (u,v) is ``coeffs[u,v] @ N``.  All four constructions share the
zero-sum property (the coefficient matrices add to the zero matrix), which
is what makes the decoded aggregate exact.

* FULL regime: unit rows for every user but the last, whose row cancels
  the rest; block length 1, source dimension K - 1.
* SLACK regime: random rows for the users in the total security set, the
  lexicographically last one cancelling the rest; everyone else gets the
  zero matrix; source dimension e*.
* TIGHT regime: as above but keyed on the total security set plus the
  lexicographically smallest user outside Q, which carries the cancelling
  row.
* REMAINING regime: block length q-bar (the LP denominator).  Users
  outside the total security set get rank-p_{u,v} matrices built as a
  random (q-bar x p) times (p x source_dim) product; users inside get full
  random matrices except the lexicographically smallest, which cancels
  everything.  Source dimension p-bar + e* * q-bar.

Random draws exist by a Schwartz-Zippel argument for large enough fields,
but nothing is trusted to probability: a candidate is accepted only after
explicit rank checks and an exact zero-leakage pass over every
(server, S_m, T_n) triple.  Failed draws are resampled up to a retry cap.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from math import comb
from typing import Mapping

import numpy as np

from . import security
from .combinatorics import SecurityAnalysis, _cells, _u_set
from .gf import (
    MAX_MODULUS_BITS,
    Echelon,
    FMatrix,
    _dtype_for,
    array_rank,
    matmul,
    smallest_prime_at_least,
)
from .model import Instance, UserId
from .rates import Regime

logger = logging.getLogger("msecagg.schemes")

RETRY_CAP = 64
_SUBSET_BATTERY_CAP = 200_000


class WrongRegime(ValueError):
    """Builder invoked for an instance in a different regime."""


class NoOutsideUser(RuntimeError):
    """No user outside Q is available (unreachable when |Q| <= K - 1)."""


class RetriesExhausted(RuntimeError):
    """No sampled coefficient set passed verification within the retry cap."""


@dataclass(frozen=True)
class KeyScheme:
    q: int
    block_len: int
    source_dim: int
    coeffs: Mapping[UserId, FMatrix]
    regime: Regime
    claimed_rate: Fraction

    def key_rank(self, user: UserId) -> int:
        return self.coeffs[user].rank()


@dataclass(frozen=True)
class SchemeCheck:
    ok: bool
    failures: tuple[str, ...]
    security_report: security.SecurityReport | None


def derive_rng(seed: int, stage: int) -> np.random.Generator:
    """Deterministic per-stage generator; stage 0 = scheme sampling,
    stage 1 = simulation trials, stage 2 = instance generation."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stage,)))


# ---------------------------------------------------------------------------
# Field selection
# ---------------------------------------------------------------------------

def _auto_field(instance: Instance, bound: int) -> int:
    """User-pinned modulus if present, else the smallest prime above ``bound``.

    Astronomical bounds fall back to a fixed medium prime and rely on the
    explicit verification (with prime-doubling escalation on failure).
    """
    if instance.field_modulus is not None:
        return instance.field_modulus
    if bound >= (1 << MAX_MODULUS_BITS):
        return smallest_prime_at_least(1 << 20)
    return smallest_prime_at_least(bound + 1)


def _grow_field(q: int) -> int:
    nxt = 2 * q
    if nxt >= (1 << MAX_MODULUS_BITS):
        raise OverflowError("field escalation exceeded the supported modulus range")
    return smallest_prime_at_least(nxt)


# ---------------------------------------------------------------------------
# Structural verification helpers
# ---------------------------------------------------------------------------

def _zero_sum_ok(scheme: KeyScheme) -> bool:
    acc = np.zeros((scheme.block_len, scheme.source_dim), dtype=_dtype_for(scheme.q))
    for mat in scheme.coeffs.values():
        acc = (acc + mat.data) % scheme.q
    return not acc.any()


def _support(scheme: KeyScheme) -> frozenset[UserId]:
    return frozenset(u for u, m in scheme.coeffs.items() if m.data.any())


def _quotient_support_rank(supports, kappa: int, q: int) -> int:
    """Rank of 0/1 support rows modulo the all-ones vector, over F_q.

    The keyed rows obey exactly one linear relation (they sum to zero), so
    a generic draw realizes exactly this rank on any indexed collection of
    per-user rows and per-server row sums.
    """
    ech = Echelon(q, kappa)
    ech.add_row(np.ones(kappa, dtype=np.int64))
    for s in supports:
        ech.add_row(s)
    return ech.rank - 1


def _needed_collection_failures(instance, analysis, scheme, keyed):
    """Rank check for every collection the leakage argument consumes.

    For each (server k, S_m, T_n): individual key rows of the covered
    keyed users together with the per-server key sums of the other covered
    servers must realize their structural generic rank.
    """
    q = scheme.q
    cells = _cells(instance)
    kappa = len(keyed)
    key_index = {u: i for i, u in enumerate(keyed)}
    rows = np.vstack([scheme.coeffs[u].data for u in keyed]) % q  # block_len == 1 here
    eye = np.eye(kappa, dtype=np.int64)
    supports_cache: dict[tuple, bool] = {}
    failures = []

    server_support = {}
    for srv, cell in cells.items():
        vec = np.zeros(kappa, dtype=np.int64)
        for u in cell & set(keyed):
            vec[key_index[u]] = 1
        server_support[srv] = vec

    for m, s in enumerate(instance.security_system.closure, start=1):
        s_by = {u: s & cell for u, cell in cells.items()}
        for n, t in enumerate(instance.collusion_system.closure, start=1):
            us = _u_set(s, t, cells)
            for k in cells:
                indiv = frozenset(
                    key_index[u] for u in ((s_by[k] | t) & frozenset(keyed))
                )
                sums = frozenset(us - {k})
                sig = (indiv, sums)
                if sig in supports_cache:
                    continue
                supports = [eye[i] for i in sorted(indiv)]
                supports += [server_support[srv] for srv in sorted(sums)]
                expected = _quotient_support_rank(supports, kappa, q)
                if supports:
                    stacked = np.vstack([(sup[None, :] @ rows) % q for sup in supports])
                    realized = array_rank(stacked % q, q)
                else:
                    realized = 0
                supports_cache[sig] = realized == expected
                if realized != expected:
                    failures.append(
                        f"key collection for (k={k}, m={m}, n={n}) has rank "
                        f"{realized}, structural rank {expected}"
                    )
    return failures


def _subset_battery_failures(scheme, keyed, e_star):
    """Every t-subset of the keyed rows must be independent, t = min(e*, keyed-1)."""
    q = scheme.q
    rows = [scheme.coeffs[u].data[0] for u in keyed]
    t = min(e_star, len(keyed) - 1)
    if t <= 0:
        return []
    if comb(len(keyed), t) > _SUBSET_BATTERY_CAP:
        return [f"subset battery of C({len(keyed)}, {t}) exceeds enumeration cap"]
    for combo in combinations(range(len(keyed)), t):
        mat = np.vstack([rows[i] for i in combo])
        if array_rank(mat, q) != t:
            return [f"keyed rows {', '.join(str(keyed[i]) for i in combo)} are dependent"]
    return []


def _sum_identity_failures(instance, analysis, scheme, lp_solution):
    """Block-rank identities behind the leakage argument of the LP scheme.

    For each (k, m, n): stacking the per-server key sums of the covered
    servers (other than k) with the individual keys of the covered users
    must have rank  q-bar * (#sums + #covered keyed users) + sum of p over
    covered outside users.  Triples where a covered server's unknown key
    material cannot generically supply q-bar fresh dimensions (colluders
    swallowed it) satisfy a weaker identity and are skipped; the exact
    leakage pass still covers them.
    """
    q, q_bar = scheme.q, scheme.block_len
    cells = _cells(instance)
    total = analysis.total_set
    p = lp_solution.numerators
    nonzero = {u for u, mat in scheme.coeffs.items() if mat.data.any()}
    dim = scheme.source_dim
    failures = []
    seen: set[tuple] = set()

    sum_blocks = {}
    for srv, cell in cells.items():
        acc = np.zeros((q_bar, dim), dtype=_dtype_for(q))
        for u in cell:
            acc = (acc + scheme.coeffs[u].data) % q
        sum_blocks[srv] = acc

    for m, s in enumerate(instance.security_system.closure, start=1):
        s_by = {u: s & cell for u, cell in cells.items()}
        for n, t in enumerate(instance.collusion_system.closure, start=1):
            us = _u_set(s, t, cells)
            for k in cells:
                indiv = (s_by[k] | t)
                sums = us - {k}
                sig = (frozenset(indiv), frozenset(sums))
                if sig in seen:
                    continue
                seen.add(sig)
                degenerate = False
                for srv in sums:
                    unknown_sbar = (cells[srv] & total) - indiv
                    unknown_p = sum(
                        p.get(u, 0) for u in (cells[srv] - total) - indiv
                    )
                    if not unknown_sbar and unknown_p < q_bar:
                        degenerate = True
                        break
                covered_all = set(indiv)
                for srv in sums:
                    covered_all |= cells[srv]
                if nonzero <= covered_all:
                    degenerate = True
                if degenerate:
                    continue
                expected = q_bar * (len(sums) + len(indiv & total)) + sum(
                    p.get(u, 0) for u in indiv - total
                )
                blocks = [sum_blocks[srv] for srv in sorted(sums)]
                blocks += [scheme.coeffs[u].data for u in sorted(indiv)]
                stacked = np.vstack(blocks) % q if blocks else np.zeros((0, dim), dtype=np.int64)
                realized = array_rank(stacked, q)
                if realized != expected:
                    failures.append(
                        f"key-sum identity at (k={k}, m={m}, n={n}): rank {realized}, "
                        f"expected {expected}"
                    )
    return failures


def check_scheme(
    instance: Instance,
    analysis: SecurityAnalysis,
    scheme: KeyScheme,
    lp_solution=None,
) -> SchemeCheck:
    """Full verification battery: structure, independence conditions, exact leakage."""
    failures: list[str] = []
    users = instance.topology.all_users
    k = instance.total_users

    if set(scheme.coeffs) != set(users):
        return SchemeCheck(
            ok=False,
            failures=("coefficient map does not cover exactly the user set",),
            security_report=None,
        )
    for u in users:
        mat = scheme.coeffs[u]
        if (mat.rows, mat.cols) != (scheme.block_len, scheme.source_dim):
            failures.append(f"coefficients of {u} have shape {(mat.rows, mat.cols)}")
    if scheme.claimed_rate != Fraction(scheme.source_dim, scheme.block_len):
        failures.append("claimed rate disagrees with source_dim / block_len")
    if not _zero_sum_ok(scheme):
        failures.append("coefficient matrices do not sum to zero")

    support = _support(scheme)
    total = analysis.total_set
    if scheme.regime is Regime.T1_CASE2:
        if not support <= total:
            failures.append("nonzero keys outside the total security set")
        keyed = tuple(sorted(total))
    elif scheme.regime is Regime.T1_CASE3:
        extra = support - total
        if len(extra) > 1:
            failures.append("more than one keyed user outside the total security set")
        elif extra and next(iter(extra)) in analysis.q_set:
            failures.append("the extra keyed user must lie outside Q")
        keyed = tuple(sorted(total | extra))
    else:
        keyed = tuple(sorted(total))

    if not failures and scheme.regime in (Regime.T1_CASE2, Regime.T1_CASE3):
        failures += _subset_battery_failures(scheme, keyed, analysis.e_star)
        failures += _needed_collection_failures(instance, analysis, scheme, keyed)

    if not failures and scheme.regime is Regime.T2_REMAINING:
        if lp_solution is None:
            failures.append("LP solution required to verify the remaining-regime scheme")
        else:
            if scheme.block_len != lp_solution.common_denominator:
                failures.append("block length differs from the LP denominator")
            expected_dim = lp_solution.p_bar + analysis.e_star * lp_solution.common_denominator
            if scheme.source_dim != expected_dim:
                failures.append(f"source dimension {scheme.source_dim} != {expected_dim}")
            for u in users:
                want = (
                    scheme.block_len
                    if u in total
                    else lp_solution.numerators.get(u, 0)
                )
                got = scheme.coeffs[u].rank()
                if got != want:
                    failures.append(f"key rank of {u} is {got}, allocation demands {want}")
            if not failures:
                failures += _sum_identity_failures(instance, analysis, scheme, lp_solution)

    report = None
    if not failures:
        report = security.verify_all(instance, scheme)
        if not report.ok:
            first = report.violations[0]
            failures.append(
                f"leakage at (k={first.k}, m={first.m}, n={first.n}): "
                f"{first.mi} log q units ({len(report.violations)} triples total)"
            )
    return SchemeCheck(ok=not failures, failures=tuple(failures), security_report=report)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def _finish(instance, analysis, regime, q, block_len, source_dim, coeff_map, lp_solution=None):
    scheme = KeyScheme(
        q=q,
        block_len=block_len,
        source_dim=source_dim,
        coeffs=coeff_map,
        regime=regime,
        claimed_rate=Fraction(source_dim, block_len),
    )
    return scheme, check_scheme(instance, analysis, scheme, lp_solution=lp_solution)


def build_case1(instance: Instance, analysis: SecurityAnalysis, q: int | None = None) -> KeyScheme:
    """All-critical construction: unit keys, last user cancels; rate K - 1."""
    k = instance.total_users
    if analysis.e_star < k:
        raise WrongRegime(f"e* = {analysis.e_star} < K = {k}")
    if q is None:
        q = instance.field_modulus or smallest_prime_at_least(2)
    users = instance.topology.all_users
    dim = k - 1
    dtype = _dtype_for(q)
    coeffs = {}
    for i, u in enumerate(users[:-1]):
        row = np.zeros((1, dim), dtype=dtype)
        row[0, i] = 1
        coeffs[u] = FMatrix(q, row)
    coeffs[users[-1]] = FMatrix(q, (-np.ones((1, dim), dtype=dtype)) % q)
    scheme, chk = _finish(instance, analysis, Regime.T1_CASE1, q, 1, dim, coeffs)
    if not chk.ok:  # deterministic construction: any failure is structural
        raise RetriesExhausted("; ".join(chk.failures))
    return scheme


def _build_single_row(instance, analysis, regime, keyed, anchor, q, rng):
    """Shared sampler for the SLACK and TIGHT constructions (block length 1)."""
    dim = analysis.e_star
    attempt_failures = None
    current_q = q
    for attempt in range(RETRY_CAP):
        dtype = _dtype_for(current_q)
        rows = rng.integers(0, current_q, size=(len(keyed), dim), dtype=np.int64).astype(dtype)
        anchor_i = keyed.index(anchor)
        others = (rows.sum(axis=0) - rows[anchor_i]) % current_q
        rows[anchor_i] = (-others) % current_q
        coeffs = {u: FMatrix(current_q, np.zeros((1, dim), dtype=dtype)) for u in instance.topology.all_users}
        for i, u in enumerate(keyed):
            coeffs[u] = FMatrix(current_q, rows[i : i + 1])
        scheme, chk = _finish(instance, analysis, regime, current_q, 1, dim, coeffs)
        if chk.ok:
            return scheme
        attempt_failures = chk.failures
        logger.debug("draw %d rejected over F_%d: %s", attempt + 1, current_q, chk.failures[:1])
        if (attempt + 1) % 16 == 0 and instance.field_modulus is None:
            current_q = _grow_field(current_q)
    raise RetriesExhausted(
        f"no valid coefficient draw after {RETRY_CAP} attempts over F_{current_q}; "
        f"last failures: {'; '.join(attempt_failures or ())}; a larger field may help"
    )


def build_case2(
    instance: Instance,
    analysis: SecurityAnalysis,
    rng: np.random.Generator | None = None,
    q: int | None = None,
) -> KeyScheme:
    """Keys on the total security set only; rate e*."""
    k = instance.total_users
    s_bar = len(analysis.total_set)
    if not (analysis.e_star <= k - 1 and analysis.a_star <= s_bar - 1):
        raise WrongRegime("instance is not in the slack regime")
    if rng is None:
        rng = derive_rng(instance.rng_seed, 0)
    if q is None:
        q = _auto_field(instance, analysis.e_star * comb(s_bar, min(analysis.e_star, s_bar)))
    keyed = tuple(sorted(analysis.total_set))
    return _build_single_row(instance, analysis, Regime.T1_CASE2, keyed, keyed[-1], q, rng)


def build_case3(
    instance: Instance,
    analysis: SecurityAnalysis,
    rng: np.random.Generator | None = None,
    q: int | None = None,
) -> KeyScheme:
    """Keys on the total security set plus one user outside Q; rate e*."""
    k = instance.total_users
    s_bar = len(analysis.total_set)
    if not (
        analysis.e_star <= k - 1
        and analysis.a_star == s_bar
        and len(analysis.q_set) <= k - 1
    ):
        raise WrongRegime("instance is not in the tight regime")
    outside = sorted(instance.topology.user_universe - analysis.q_set)
    if not outside:
        raise NoOutsideUser("every user lies in Q")  # defensive; |Q| <= K-1 here
    extra = outside[0]
    if rng is None:
        rng = derive_rng(instance.rng_seed, 0)
    if q is None:
        q = _auto_field(
            instance, analysis.e_star * comb(s_bar + 1, min(analysis.e_star, s_bar + 1))
        )
    keyed = tuple(sorted(analysis.total_set | {extra}))
    return _build_single_row(instance, analysis, Regime.T1_CASE3, keyed, extra, q, rng)


def build_theorem2(
    instance: Instance,
    analysis: SecurityAnalysis,
    lp_solution,
    rng: np.random.Generator | None = None,
    q: int | None = None,
) -> KeyScheme:
    """LP-driven construction for the remaining regime; rate e* + b*."""
    k = instance.total_users
    s_bar = len(analysis.total_set)
    if not (
        analysis.e_star <= k - 1
        and analysis.a_star == s_bar
        and len(analysis.q_set) == k
    ):
        raise WrongRegime("instance is not in the remaining regime")
    if rng is None:
        rng = derive_rng(instance.rng_seed, 0)
    q_bar = lp_solution.common_denominator
    p = lp_solution.numerators
    p_bar = lp_solution.p_bar
    dim = p_bar + analysis.e_star * q_bar
    total_rows = analysis.e_star * q_bar + p_bar  # == (e* + b*) * q_bar
    if q is None:
        bound = total_rows * comb(k * q_bar, min(total_rows, k * q_bar))
        q = _auto_field(instance, bound)

    total = analysis.total_set
    users = instance.topology.all_users
    anchor = min(total)
    current_q = q
    attempt_failures = None
    for attempt in range(RETRY_CAP):
        dtype = _dtype_for(current_q)
        coeffs: dict[UserId, FMatrix] = {}
        acc = np.zeros((q_bar, dim), dtype=dtype)
        for u in users:
            if u == anchor:
                continue
            if u in total:
                mat = rng.integers(0, current_q, size=(q_bar, dim), dtype=np.int64).astype(dtype)
            else:
                pu = p.get(u, 0)
                if pu == 0:
                    mat = np.zeros((q_bar, dim), dtype=dtype)
                else:
                    f = rng.integers(0, current_q, size=(q_bar, pu), dtype=np.int64).astype(dtype)
                    g = rng.integers(0, current_q, size=(pu, dim), dtype=np.int64).astype(dtype)
                    mat = matmul(f, g, current_q)
            coeffs[u] = FMatrix(current_q, mat)
            acc = (acc + mat) % current_q
        coeffs[anchor] = FMatrix(current_q, (-acc) % current_q)
        scheme, chk = _finish(
            instance, analysis, Regime.T2_REMAINING, current_q, q_bar, dim, coeffs,
            lp_solution=lp_solution,
        )
        if chk.ok:
            return scheme
        attempt_failures = chk.failures
        logger.debug("draw %d rejected over F_%d: %s", attempt + 1, current_q, chk.failures[:1])
        if (attempt + 1) % 16 == 0 and instance.field_modulus is None:
            current_q = _grow_field(current_q)
    raise RetriesExhausted(
        f"no valid coefficient draw after {RETRY_CAP} attempts over F_{current_q}; "
        f"last failures: {'; '.join(attempt_failures or ())}; a larger field may help"
    )


def build_scheme(
    instance: Instance,
    analysis: SecurityAnalysis,
    regime: Regime,
    lp_solution=None,
    rng: np.random.Generator | None = None,
    q: int | None = None,
) -> KeyScheme:
    if regime is Regime.T1_CASE1:
        return build_case1(instance, analysis, q=q)
    if regime is Regime.T1_CASE2:
        return build_case2(instance, analysis, rng=rng, q=q)
    if regime is Regime.T1_CASE3:
        return build_case3(instance, analysis, rng=rng, q=q)
    if lp_solution is None:
        raise ValueError("remaining regime requires the LP solution")
    return build_theorem2(instance, analysis, lp_solution, rng=rng, q=q)


# ---------------------------------------------------------------------------
# (De)serialization and injection
# ---------------------------------------------------------------------------

def scheme_to_json(scheme: KeyScheme) -> dict:
    return {
        "q": scheme.q,
        "L": scheme.block_len,
        "source_dim": scheme.source_dim,
        "regime": scheme.regime.value,
        "rate": f"{scheme.claimed_rate.numerator}/{scheme.claimed_rate.denominator}"
        if scheme.claimed_rate.denominator != 1
        else str(scheme.claimed_rate.numerator),
        "coeffs": {
            f"{u.server},{u.slot}": scheme.coeffs[u].tolist()
            for u in sorted(scheme.coeffs)
            if scheme.coeffs[u].data.any()
        },
    }


def scheme_from_json(data: dict, instance: Instance, regime: Regime) -> KeyScheme:
    """Load a fixed coefficient set (users absent from ``coeffs`` get zero)."""
    q = int(data["q"])
    block_len = int(data["L"])
    source_dim = int(data["source_dim"])
    coeffs = {}
    given = {}
    for key, mat in data.get("coeffs", {}).items():
        server, slot = (int(x) for x in key.split(","))
        given[UserId(server, slot)] = mat
    for u in instance.topology.all_users:
        if u in given:
            coeffs[u] = FMatrix(q, given[u])
        else:
            coeffs[u] = FMatrix.zeros(q, block_len, source_dim)
    return KeyScheme(
        q=q,
        block_len=block_len,
        source_dim=source_dim,
        coeffs=coeffs,
        regime=regime,
        claimed_rate=Fraction(source_dim, block_len),
    )


def load_injection(path, instance: Instance, regime: Regime) -> KeyScheme:
    with open(path, "r", encoding="utf-8") as fh:
        return scheme_from_json(json.load(fh), instance, regime)
