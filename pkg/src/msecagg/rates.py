"""Regime classification and key/communication rate reporting.

Communication rates are always 1 symbol per input symbol in both hops.
The source-key rate depends on the regime:

* FULL (``T1_CASE1``): every input is critical, rate exactly K - 1.
* SLACK (``T1_CASE2``): a* leaves slack inside the total security set,
  rate exactly e*.
* TIGHT (``T1_CASE3``): some triple covers the whole total security set
  but the critical union Q misses at least one user, rate exactly e*.
* REMAINING (``T2_REMAINING``): Q covers everyone; the rate is bracketed
  by [e*, e* + b*] where b* comes from the key-allocation LP.

Rates are exact rationals throughout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from .combinatorics import SecurityAnalysis

ONE = Fraction(1)


class Regime(str, enum.Enum):
    T1_CASE1 = "T1_CASE1"
    T1_CASE2 = "T1_CASE2"
    T1_CASE3 = "T1_CASE3"
    T2_REMAINING = "T2_REMAINING"


class InternalInconsistency(RuntimeError):
    """No regime condition matched; indicates an analysis bug."""


class MissingBStar(ValueError):
    """The remaining regime needs the LP optimum to bound the key rate."""


@dataclass(frozen=True)
class RateReport:
    regime: Regime
    r_x_min: Fraction
    r_y_min: Fraction
    key_rate_lower: Fraction
    key_rate_upper: Fraction
    exact: bool


def classify_regime(analysis: SecurityAnalysis, total_users: int) -> Regime:
    """The unique regime of the instance.

    e* can exceed K on instances where colluders swallow entire covered
    servers; protection-wise those degenerate triples demand no more than
    the all-critical case, so e* >= K is classified as T1_CASE1.
    """
    k = total_users
    s_bar = len(analysis.total_set)
    if analysis.e_star >= k:
        return Regime.T1_CASE1
    if analysis.a_star > s_bar:
        raise InternalInconsistency(
            f"a* = {analysis.a_star} exceeds |total security set| = {s_bar}"
        )
    if analysis.a_star <= s_bar - 1:
        return Regime.T1_CASE2
    q_size = len(analysis.q_set)
    if q_size <= k - 1:
        return Regime.T1_CASE3
    if q_size == k:
        return Regime.T2_REMAINING
    raise InternalInconsistency(f"|Q| = {q_size} exceeds K = {k}")


def key_rate_bounds(
    analysis: SecurityAnalysis,
    total_users: int,
    b_star: Fraction | None = None,
) -> RateReport:
    """Rate report for the instance; ``b_star`` is required in the remaining regime."""
    regime = classify_regime(analysis, total_users)
    if regime is Regime.T1_CASE1:
        value = Fraction(total_users - 1)
        return RateReport(regime, ONE, ONE, value, value, exact=True)
    if regime in (Regime.T1_CASE2, Regime.T1_CASE3):
        value = Fraction(analysis.e_star)
        return RateReport(regime, ONE, ONE, value, value, exact=True)
    if b_star is None:
        raise MissingBStar("T2_REMAINING requires the LP optimum b*")
    lower = Fraction(analysis.e_star)
    return RateReport(regime, ONE, ONE, lower, lower + b_star, exact=False)
