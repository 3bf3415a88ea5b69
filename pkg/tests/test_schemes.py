"""Scheme construction: golden injections, all four builders, reproducibility."""

from fractions import Fraction

import numpy as np
import pytest

import msecagg as m
from msecagg.gf import FMatrix
from msecagg.model import UserId, validate_instance
from msecagg.rates import Regime
from msecagg.schemes import (
    KeyScheme,
    WrongRegime,
    build_case1,
    build_case2,
    build_case3,
    build_theorem2,
    check_scheme,
    derive_rng,
    scheme_from_json,
    scheme_to_json,
)

U = UserId


def _mini(servers, sec, col, seed=0, q=None):
    return validate_instance(
        {
            "servers": servers,
            "security_generators": sec,
            "collusion_generators": col,
            "field_modulus": q,
            "seed": seed,
        }
    )


class TestInjectedExample1:
    def test_passes_every_predicate(self, example1, example1_analysis, example1_scheme):
        chk = check_scheme(example1, example1_analysis, example1_scheme)
        assert chk.ok, chk.failures
        assert chk.security_report.triples_checked == 192

    def test_claimed_rate(self, example1_scheme):
        assert example1_scheme.claimed_rate == Fraction(2)

    def test_zero_sum(self, example1_scheme):
        total = sum(mat.data for mat in example1_scheme.coeffs.values()) % example1_scheme.q
        assert not total.any()


class TestInjectedExample2:
    def test_passes_every_predicate(self, example2, example2_analysis, example2_scheme, example2_lp):
        _, solution = example2_lp
        chk = check_scheme(example2, example2_analysis, example2_scheme, lp_solution=solution)
        assert chk.ok, chk.failures
        assert chk.security_report.triples_checked == 672

    def test_per_user_key_ranks(self, example2, example2_scheme):
        users = example2.topology.all_users
        ranks = [example2_scheme.key_rank(u) for u in users]
        assert ranks == [2, 0, 1, 1, 2, 2, 0, 1]

    def test_source_dimension_and_rate(self, example2_scheme):
        assert example2_scheme.source_dim == 7
        assert example2_scheme.block_len == 2
        assert example2_scheme.claimed_rate == Fraction(7, 2)


class TestCase1:
    @pytest.fixture()
    def full_instance(self):
        # Every user protected, single colluder allowed: e* reaches K.
        return _mini([1, 1, 1], [[[1, 1], [2, 1], [3, 1]]], [[[2, 1]]])

    def test_structure(self, full_instance):
        analysis = m.analyze(full_instance)
        scheme = build_case1(full_instance, analysis, q=5)
        users = full_instance.topology.all_users
        k = len(users)
        assert scheme.block_len == 1 and scheme.source_dim == k - 1
        for i, u in enumerate(users[:-1]):
            row = np.zeros(k - 1, dtype=np.int64)
            row[i] = 1
            assert list(scheme.coeffs[u].data[0]) == list(row)
        assert list(scheme.coeffs[users[-1]].data[0]) == [4, 4]
        assert scheme.claimed_rate == Fraction(k - 1)

    def test_verified(self, full_instance):
        analysis = m.analyze(full_instance)
        scheme = build_case1(full_instance, analysis)
        chk = check_scheme(full_instance, analysis, scheme)
        assert chk.ok, chk.failures

    def test_wrong_regime_rejected(self, example1, example1_analysis):
        with pytest.raises(WrongRegime):
            build_case1(example1, example1_analysis)


class TestCase2:
    def test_builds_and_verifies_example1(self, example1, example1_analysis):
        scheme = build_case2(example1, example1_analysis)
        chk = check_scheme(example1, example1_analysis, scheme)
        assert chk.ok, chk.failures
        assert scheme.claimed_rate == Fraction(example1_analysis.e_star)

    def test_keys_confined_to_total_security_set(self, example1, example1_analysis):
        scheme = build_case2(example1, example1_analysis)
        for u, mat in scheme.coeffs.items():
            if u not in example1_analysis.total_set:
                assert not mat.data.any()

    def test_field_bound_default(self, example1, example1_analysis):
        # e* * C(|S_bar|, e*) = 2 * 3 = 6, so the auto field is 7.
        scheme = build_case2(example1, example1_analysis)
        assert scheme.q == 7

    def test_reproducible_from_instance_seed(self, example1, example1_analysis):
        s1 = build_case2(example1, example1_analysis)
        s2 = build_case2(example1, example1_analysis)
        for u in example1.topology.all_users:
            assert s1.coeffs[u] == s2.coeffs[u]

    def test_every_e_star_subset_of_keyed_rows_is_independent(
        self, example1, example1_analysis
    ):
        from itertools import combinations

        scheme = build_case2(example1, example1_analysis)
        keyed = sorted(example1_analysis.total_set)
        e_star = example1_analysis.e_star
        for combo in combinations(keyed, e_star):
            stacked = np.vstack([scheme.coeffs[u].data for u in combo])
            assert m.FMatrix(scheme.q, stacked).rank() == e_star

    def test_wrong_regime_rejected(self, example2, example2_analysis):
        with pytest.raises(WrongRegime):
            build_case2(example2, example2_analysis)


class TestCase3:
    @pytest.fixture()
    def tight_instance(self):
        # Overlapping protected/colluding singleton: a* = |S_bar| = 1,
        # inflated e* = 2, |Q| = 1 <= K - 1.
        return _mini([1, 1, 1], [[[1, 1]]], [[[1, 1]]])

    def test_regime_and_build(self, tight_instance):
        analysis = m.analyze(tight_instance)
        assert m.classify_regime(analysis, tight_instance.total_users) is Regime.T1_CASE3
        scheme = build_case3(tight_instance, analysis)
        chk = check_scheme(tight_instance, analysis, scheme)
        assert chk.ok, chk.failures
        assert scheme.claimed_rate == Fraction(analysis.e_star)

    def test_extra_keyed_user_is_outside_q_and_total_set(self, tight_instance):
        analysis = m.analyze(tight_instance)
        scheme = build_case3(tight_instance, analysis)
        extras = {
            u
            for u, mat in scheme.coeffs.items()
            if mat.data.any() and u not in analysis.total_set
        }
        assert len(extras) == 1
        extra = next(iter(extras))
        assert extra not in analysis.q_set
        assert extra == min(tight_instance.topology.user_universe - analysis.q_set)

    def test_zero_sum_over_keyed_set(self, tight_instance):
        analysis = m.analyze(tight_instance)
        scheme = build_case3(tight_instance, analysis)
        total = sum(mat.data for mat in scheme.coeffs.values()) % scheme.q
        assert not total.any()

    def test_wrong_regime_rejected(self, example1, example1_analysis):
        with pytest.raises(WrongRegime):
            build_case3(example1, example1_analysis)


class TestRemainingRegimeBuilder:
    def test_builds_and_verifies_example2(self, example2, example2_analysis, example2_lp):
        _, solution = example2_lp
        scheme = build_theorem2(example2, example2_analysis, solution)
        chk = check_scheme(example2, example2_analysis, scheme, lp_solution=solution)
        assert chk.ok, chk.failures
        assert scheme.block_len == solution.common_denominator == 2
        assert scheme.source_dim == solution.p_bar + example2_analysis.e_star * 2 == 7
        assert scheme.claimed_rate == Fraction(7, 2)

    def test_rank_profile_matches_allocation(self, example2, example2_analysis, example2_lp):
        _, solution = example2_lp
        scheme = build_theorem2(example2, example2_analysis, solution)
        for u in example2.topology.all_users:
            if u in example2_analysis.total_set:
                assert scheme.key_rank(u) == scheme.block_len
            else:
                assert scheme.key_rank(u) == solution.numerators[u]

    def test_wrong_regime_rejected(self, example1, example1_analysis, example2_lp):
        _, solution = example2_lp
        with pytest.raises(WrongRegime):
            build_theorem2(example1, example1_analysis, solution)


class TestSerialization:
    def test_json_round_trip(self, example2, example2_scheme):
        data = scheme_to_json(example2_scheme)
        again = scheme_from_json(data, example2, Regime.T2_REMAINING)
        for u in example2.topology.all_users:
            assert again.coeffs[u] == example2_scheme.coeffs[u]
        assert again.claimed_rate == example2_scheme.claimed_rate

    def test_mismatched_coverage_is_flagged(self, example1, example1_analysis, example1_scheme):
        partial = dict(example1_scheme.coeffs)
        del partial[U(3, 2)]
        broken = KeyScheme(
            q=example1_scheme.q,
            block_len=1,
            source_dim=2,
            coeffs=partial,
            regime=example1_scheme.regime,
            claimed_rate=example1_scheme.claimed_rate,
        )
        chk = check_scheme(example1, example1_analysis, broken)
        assert not chk.ok
