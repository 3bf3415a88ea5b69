"""Shared fixtures: golden instances, injected key sets, the random corpus."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

import msecagg as m
from msecagg import gen, lp, rates, schemes

FIXTURES = Path(__file__).resolve().parent.parent / "src" / "msecagg" / "fixtures"

CORPUS_SIZE = 200
CORPUS_ENTROPY = 987654321
T2_SCAN_ENTROPY = 555
T2_SCAN_SIZE = 3000


@pytest.fixture(scope="session")
def example1():
    return m.load_instance(FIXTURES / "example1.json")


@pytest.fixture(scope="session")
def example2():
    return m.load_instance(FIXTURES / "example2.json")


@pytest.fixture(scope="session")
def example1_analysis(example1):
    return m.analyze(example1)


@pytest.fixture(scope="session")
def example2_analysis(example2):
    return m.analyze(example2)


@pytest.fixture(scope="session")
def example2_lp(example2, example2_analysis):
    problem = m.build_lp(example2, example2_analysis)
    return problem, m.solve_lp(problem)


@pytest.fixture(scope="session")
def example1_scheme(example1):
    return schemes.load_injection(FIXTURES / "example1_keys.json", example1, rates.Regime.T1_CASE2)


@pytest.fixture(scope="session")
def example2_scheme(example2):
    return schemes.load_injection(FIXTURES / "example2_keys.json", example2, rates.Regime.T2_REMAINING)


@dataclass
class CorpusEntry:
    seed: int
    instance: object
    analysis: object
    regime: object
    report: object
    lp_solution: object
    scheme: object
    build_error: str | None


def _build_entry(instance, seed) -> CorpusEntry:
    analysis = m.analyze(instance)
    regime = m.classify_regime(analysis, instance.total_users)
    solution = None
    scheme = None
    error = None
    try:
        if regime is rates.Regime.T2_REMAINING:
            solution = m.solve_lp(m.build_lp(instance, analysis))
            report = m.key_rate_bounds(analysis, instance.total_users, b_star=solution.objective)
            scheme = m.build_theorem2(instance, analysis, solution)
        else:
            report = m.key_rate_bounds(analysis, instance.total_users)
            scheme = m.build_scheme(instance, analysis, regime)
    except lp.InfeasibleConstraint as exc:
        report = None
        error = f"InfeasibleConstraint: {exc}"
    return CorpusEntry(
        seed=seed,
        instance=instance,
        analysis=analysis,
        regime=regime,
        report=report,
        lp_solution=solution,
        scheme=scheme,
        build_error=error,
    )


@pytest.fixture(scope="session")
def corpus():
    """The acceptance corpus: random instances with built schemes."""
    master = np.random.SeedSequence(entropy=CORPUS_ENTROPY, spawn_key=(2,))
    entries = []
    for i, child in enumerate(master.spawn(CORPUS_SIZE)):
        rng = np.random.default_rng(child)
        instance = gen.random_instance(rng, seed=1000 + i)
        entries.append(_build_entry(instance, seed=1000 + i))
    return entries


@pytest.fixture(scope="session")
def t2_corpus():
    """Instances from a heavier scan that land in the remaining regime."""
    master = np.random.SeedSequence(entropy=T2_SCAN_ENTROPY, spawn_key=(2,))
    entries = []
    for i, child in enumerate(master.spawn(T2_SCAN_SIZE)):
        rng = np.random.default_rng(child)
        instance = gen.random_instance(
            rng,
            server_range=(3, 4),
            users_range=(1, 2),
            max_generators=3,
            max_generator_size=4,
            seed=i,
        )
        analysis = m.analyze(instance)
        if m.classify_regime(analysis, instance.total_users) is rates.Regime.T2_REMAINING:
            entries.append(_build_entry(instance, seed=i))
    return entries


def load_fixture_json(name: str) -> dict:
    with open(FIXTURES / name, "r", encoding="utf-8") as fh:
        return json.load(fh)
