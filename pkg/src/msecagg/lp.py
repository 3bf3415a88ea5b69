"""Exact key-allocation linear program for the remaining regime.

Variables are the users outside the total security set.  Every critical
triple achieving a* contributes one covering constraint: the variables
that survive the triple's covered set must sum to at least 1.  Minimising
the total allocation gives b*; the common denominator of the optimal
values fixes the block length of the constructed scheme, so everything is
solved in exact rationals (``fractions.Fraction``) with a two-phase
simplex using Bland's anti-cycling pivot rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm

from .combinatorics import SecurityAnalysis, covered_set
from .model import Instance, UserId

ZERO = Fraction(0)
ONE = Fraction(1)


class InfeasibleConstraint(ValueError):
    """A critical triple leaves no free variable; the LP would be infeasible."""


class SimplexError(RuntimeError):
    """Internal solver failure (should be unreachable on well-formed input)."""


@dataclass(frozen=True)
class LpProblem:
    """min sum(x) subject to, for every constraint c, sum(x[i] for i in c) >= 1, x >= 0."""

    variables: tuple[UserId, ...]
    constraints: tuple[frozenset[int], ...]


@dataclass(frozen=True)
class LpSolution:
    values: dict[UserId, Fraction]
    objective: Fraction
    common_denominator: int
    numerators: dict[UserId, int]
    p_bar: int
    dual: tuple[Fraction, ...]


def build_lp(instance: Instance, analysis: SecurityAnalysis) -> LpProblem:
    """One covering constraint per a*-witness triple, deduplicated and pruned.

    A witness whose covered set leaves no variable at all is surfaced as
    InfeasibleConstraint rather than silently dropped: such an instance
    falls outside the achievable construction.  Dominated constraints
    (variable sets that are supersets of another constraint's set) are
    removed; with unit bounds and nonnegative variables they are implied,
    so the feasible region is unchanged.
    """
    variables = tuple(sorted(instance.topology.user_universe - analysis.total_set))
    index = {user: i for i, user in enumerate(variables)}
    everyone = instance.topology.user_universe
    subsets: set[frozenset[int]] = set()
    for wit in analysis.a_witnesses:
        covered = covered_set(instance, wit.u, wit.m, wit.n)
        free = everyone - covered
        subset = frozenset(index[user] for user in free if user in index)
        if not subset:
            raise InfeasibleConstraint(
                f"critical triple (u={wit.u}, m={wit.m}, n={wit.n}) covers every variable; "
                "no key allocation can satisfy it"
            )
        subsets.add(subset)
    minimal = [
        s for s in subsets if not any(other < s for other in subsets)
    ]
    constraints = tuple(sorted(minimal, key=sorted))
    return LpProblem(variables=variables, constraints=constraints)


def solve_lp(problem: LpProblem) -> LpSolution:
    """Exact optimum with a certified matching dual solution."""
    n = len(problem.variables)
    m = len(problem.constraints)
    if m == 0:
        values = {user: ZERO for user in problem.variables}
        return LpSolution(values, ZERO, 1, {u: 0 for u in problem.variables}, 0, ())

    a = [[ONE if j in row else ZERO for j in range(n)] for row in problem.constraints]
    costs = [ONE] * n
    x, duals, objective = _two_phase_simplex(a, [ONE] * m, costs)

    # Certify optimality: primal feasibility, dual feasibility, equal objectives.
    for row in problem.constraints:
        if sum(x[j] for j in row) < ONE:
            raise SimplexError("primal infeasible solution returned")
    if any(v < ZERO for v in x) or any(y < ZERO for y in duals):
        raise SimplexError("negative primal or dual value")
    for j in range(n):
        reduced = costs[j] - sum(duals[i] for i in range(m) if j in problem.constraints[i])
        if reduced < ZERO:
            raise SimplexError("dual infeasible certificate")
    if sum(duals) != objective:
        raise SimplexError("nonzero duality gap")

    values = {user: x[j] for j, user in enumerate(problem.variables)}
    q_bar = 1
    for v in values.values():
        q_bar = lcm(q_bar, v.denominator)
    numerators = {user: int(v * q_bar) for user, v in values.items()}
    p_bar = sum(numerators.values())
    if Fraction(p_bar, q_bar) != objective:
        raise SimplexError("denominator reconstruction mismatch")
    return LpSolution(
        values=values,
        objective=objective,
        common_denominator=q_bar,
        numerators=numerators,
        p_bar=p_bar,
        dual=tuple(duals),
    )


def _two_phase_simplex(a, b, costs):
    """min costs.x s.t. a x >= b, x >= 0 (all Fractions, b > 0).

    Column layout: n structural, then m surplus, then m artificial.
    Returns (x, duals, objective).
    """
    m, n = len(a), len(costs)
    width = n + m + m
    rows = []
    for i in range(m):
        row = list(a[i]) + [ZERO] * (2 * m) + [b[i]]
        row[n + i] = -ONE   # surplus
        row[n + m + i] = ONE  # artificial
        rows.append(row)
    basis = [n + m + i for i in range(m)]

    def run(cost_vec, active_width):
        obj = list(cost_vec) + [ZERO]
        for i, bv in enumerate(basis):
            cb = cost_vec[bv]
            if cb:
                for j in range(width + 1):
                    obj[j] -= cb * rows[i][j]
        while True:
            enter = next(
                (j for j in range(active_width) if j not in basis and obj[j] < ZERO),
                None,
            )
            if enter is None:
                return obj
            best_i, best_ratio = None, None
            for i in range(m):
                coef = rows[i][enter]
                if coef > ZERO:
                    ratio = rows[i][-1] / coef
                    if (
                        best_ratio is None
                        or ratio < best_ratio
                        or (ratio == best_ratio and basis[i] < basis[best_i])
                    ):
                        best_i, best_ratio = i, ratio
            if best_i is None:
                raise SimplexError("unbounded pivot column")  # impossible: objective >= 0
            _pivot(rows, obj, basis, best_i, enter)

    # Phase 1: drive the artificials out.
    phase1_costs = [ZERO] * (n + m) + [ONE] * m
    obj = run(phase1_costs, width)
    if -obj[-1] != ZERO:
        raise SimplexError("phase-1 optimum nonzero: infeasible system")
    for i in range(m):
        if basis[i] >= n + m:  # artificial stuck in basis at level zero
            pivot_col = next(
                (j for j in range(n + m) if j not in basis and rows[i][j] != ZERO), None
            )
            if pivot_col is not None:
                _pivot(rows, obj, basis, i, pivot_col)
            # else: redundant row; harmless to leave (level stays zero)

    # Phase 2 over structural + surplus columns only.
    phase2_costs = list(costs) + [ZERO] * m + [ZERO] * m
    obj = run(phase2_costs, n + m)

    x = [ZERO] * n
    for i, bv in enumerate(basis):
        if bv < n:
            x[bv] = rows[i][-1]
    # Reduced cost of surplus column i is exactly the dual price of row i.
    duals = [obj[n + i] for i in range(m)]
    objective = -obj[-1]
    return x, duals, objective


def _pivot(rows, obj, basis, pivot_row, pivot_col):
    m = len(rows)
    piv = rows[pivot_row][pivot_col]
    inv = ONE / piv
    rows[pivot_row] = [v * inv for v in rows[pivot_row]]
    for i in range(m):
        if i != pivot_row and rows[i][pivot_col] != ZERO:
            f = rows[i][pivot_col]
            rows[i] = [v - f * p for v, p in zip(rows[i], rows[pivot_row])]
    f = obj[pivot_col]
    if f != ZERO:
        for j in range(len(obj)):
            obj[j] -= f * rows[pivot_row][j]
    basis[pivot_row] = pivot_col


def format_fraction(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"
