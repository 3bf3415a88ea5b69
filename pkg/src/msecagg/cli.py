"""Command-line front end.

Subcommands compose the pipeline: validate -> analyze -> rate -> (lp) ->
scheme -> simulate -> verify, plus `pipeline` to run everything and `gen`
to emit random instances.  Every subcommand reads the JSON instance
format; `--json` switches from human-readable summaries to machine
output.  Exit codes: 0 success, 1 correctness/security violations,
2 unusable input.

All randomness flows from the instance seed (or `--seed`) through a
splittable generator: stage 0 feeds scheme sampling, stage 1 the
simulation trials (one spawned child per trial), stage 2 instance
generation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import combinatorics, gen, lp, model, protocol, rates, schemes, security
from .lp import format_fraction

logger = logging.getLogger("msecagg")


def _emit(payload: dict, as_json: bool, lines=None):
    if as_json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in lines or []:
            print(line)


def _load(args) -> model.Instance:
    with open(args.instance, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    instance = model.validate_instance(raw)
    if getattr(args, "seed", None) is not None:
        instance = model.Instance(
            topology=instance.topology,
            security_system=instance.security_system,
            collusion_system=instance.collusion_system,
            field_modulus=instance.field_modulus,
            rng_seed=args.seed,
        )
    if getattr(args, "q", None) is not None:
        instance = model.Instance(
            topology=instance.topology,
            security_system=instance.security_system,
            collusion_system=instance.collusion_system,
            field_modulus=args.q,
            rng_seed=instance.rng_seed,
        )
    return instance


def _analysis_json(analysis: combinatorics.SecurityAnalysis) -> dict:
    return {
        "S_I": model.users_to_json(analysis.implicit_set),
        "S_bar": model.users_to_json(analysis.total_set),
        "a_star": analysis.a_star,
        "e_star": analysis.e_star,
        "Q": model.users_to_json(analysis.q_set),
        "witnesses": {
            "a_star": [[w.u, w.m, w.n] for w in analysis.a_witnesses],
            "e_star": [[w.u, w.m, w.n] for w in analysis.e_witnesses],
        },
    }


def _rate_json(report: rates.RateReport) -> dict:
    return {
        "regime": report.regime.value,
        "R_X": format_fraction(report.r_x_min),
        "R_Y": format_fraction(report.r_y_min),
        "R_Z_lower": format_fraction(report.key_rate_lower),
        "R_Z_upper": format_fraction(report.key_rate_upper),
        "exact": report.exact,
    }


def _lp_json(problem: lp.LpProblem, solution: lp.LpSolution) -> dict:
    return {
        "variables": [[u.server, u.slot] for u in problem.variables],
        "constraints": [sorted(c) for c in problem.constraints],
        "values": {
            f"{u.server},{u.slot}": format_fraction(v) for u, v in solution.values.items()
        },
        "b_star": format_fraction(solution.objective),
        "q_bar": solution.common_denominator,
        "p": {f"{u.server},{u.slot}": n for u, n in solution.numerators.items()},
        "p_bar": solution.p_bar,
        "dual": [format_fraction(y) for y in solution.dual],
    }


def _prepare(instance):
    """Analysis, rate report and (if needed) the LP, shared by several commands."""
    analysis = combinatorics.analyze(instance)
    regime = rates.classify_regime(analysis, instance.total_users)
    problem = solution = None
    if regime is rates.Regime.T2_REMAINING:
        problem = lp.build_lp(instance, analysis)
        solution = lp.solve_lp(problem)
        report = rates.key_rate_bounds(analysis, instance.total_users, b_star=solution.objective)
    else:
        report = rates.key_rate_bounds(analysis, instance.total_users)
    return analysis, report, problem, solution


def _obtain_scheme(instance, analysis, report, solution, args):
    if getattr(args, "inject", None):
        return schemes.load_injection(args.inject, instance, report.regime)
    rng = schemes.derive_rng(instance.rng_seed, 0)
    return schemes.build_scheme(
        instance, analysis, report.regime, lp_solution=solution, rng=rng
    )


def cmd_validate(args) -> int:
    instance = _load(args)
    payload = model.instance_to_json(instance)
    payload["total_users"] = instance.total_users
    payload["security_closure_size"] = len(instance.security_system)
    payload["collusion_closure_size"] = len(instance.collusion_system)
    _emit(
        payload,
        args.json,
        [
            f"valid instance: {instance.topology.server_count} servers, "
            f"{instance.total_users} users",
            f"security closure: {len(instance.security_system)} sets, "
            f"collusion closure: {len(instance.collusion_system)} sets",
        ],
    )
    return 0


def cmd_analyze(args) -> int:
    instance = _load(args)
    analysis = combinatorics.analyze(instance)
    payload = _analysis_json(analysis)
    _emit(
        payload,
        args.json,
        [
            f"S_I    = {sorted(analysis.implicit_set)}",
            f"S_bar  = {sorted(analysis.total_set)}",
            f"a*     = {analysis.a_star}",
            f"e*     = {analysis.e_star}",
            f"Q      = {sorted(analysis.q_set)}  (|Q| = {len(analysis.q_set)})",
        ],
    )
    return 0


def cmd_rate(args) -> int:
    instance = _load(args)
    _, report, _, _ = _prepare(instance)
    payload = _rate_json(report)
    _emit(
        payload,
        args.json,
        [
            f"regime: {report.regime.value}",
            f"R_X >= {format_fraction(report.r_x_min)}, R_Y >= {format_fraction(report.r_y_min)}",
            f"key rate in [{format_fraction(report.key_rate_lower)}, "
            f"{format_fraction(report.key_rate_upper)}]"
            + (" (exact)" if report.exact else " (bounded gap)"),
        ],
    )
    return 0


def cmd_lp(args) -> int:
    instance = _load(args)
    analysis = combinatorics.analyze(instance)
    regime = rates.classify_regime(analysis, instance.total_users)
    if regime is not rates.Regime.T2_REMAINING:
        print(f"instance is in regime {regime.value}; no key-allocation LP arises", file=sys.stderr)
        return 2
    problem = lp.build_lp(instance, analysis)
    solution = lp.solve_lp(problem)
    payload = _lp_json(problem, solution)
    _emit(
        payload,
        args.json,
        [
            f"variables: {[str(u) for u in problem.variables]}",
            f"constraints: {[sorted(c) for c in problem.constraints]}",
            f"b* = {format_fraction(solution.objective)} "
            f"(q_bar = {solution.common_denominator}, p_bar = {solution.p_bar})",
        ],
    )
    return 0


def cmd_scheme(args) -> int:
    instance = _load(args)
    analysis, report, _, solution = _prepare(instance)
    scheme = _obtain_scheme(instance, analysis, report, solution, args)
    chk = schemes.check_scheme(instance, analysis, scheme, lp_solution=solution)
    payload = schemes.scheme_to_json(scheme)
    payload["verified"] = chk.ok
    payload["failures"] = list(chk.failures)
    _emit(
        payload,
        args.json,
        [
            f"q = {scheme.q}, L = {scheme.block_len}, source_dim = {scheme.source_dim}",
            f"rate = {format_fraction(scheme.claimed_rate)}, regime = {scheme.regime.value}",
            f"verified: {chk.ok}" + (f" ({'; '.join(chk.failures)})" if chk.failures else ""),
        ],
    )
    return 0 if chk.ok else 1


def cmd_simulate(args) -> int:
    instance = _load(args)
    analysis, report, _, solution = _prepare(instance)
    scheme = _obtain_scheme(instance, analysis, report, solution, args)
    master = np.random.SeedSequence(entropy=instance.rng_seed, spawn_key=(1,))
    passed = 0
    first_failure = None
    for child in master.spawn(args.trials):
        transcript = protocol.run_protocol(scheme, np.random.default_rng(child))
        result = protocol.check_correctness(transcript)
        if result.ok:
            passed += 1
        elif first_failure is None:
            first_failure = {
                "failing_servers": result.failing_servers,
                "decoded": {str(k): [int(x) for x in v] for k, v in transcript.decoded.items()},
                "expected": [int(x) for x in result.expected],
            }
    payload = {"trials": args.trials, "passed": passed, "first_failure": first_failure}
    _emit(
        payload,
        args.json,
        [f"correctness trials: {passed}/{args.trials} passed"]
        + ([f"first failure: servers {first_failure['failing_servers']}"] if first_failure else []),
    )
    return 0 if passed == args.trials else 1


def cmd_verify(args) -> int:
    instance = _load(args)
    analysis, report, _, solution = _prepare(instance)
    scheme = _obtain_scheme(instance, analysis, report, solution, args)
    sec = security.verify_all(instance, scheme)
    payload = {
        "triples_checked": sec.triples_checked,
        "violations": [
            {"k": v.k, "m": v.m, "n": v.n, "mi": v.mi} for v in sec.violations
        ],
    }
    _emit(
        payload,
        args.json,
        [
            f"checked {sec.triples_checked} (server, S_m, T_n) triples: "
            f"{len(sec.violations)} violations"
        ],
    )
    return 0 if sec.ok else 1


def cmd_pipeline(args) -> int:
    t0 = time.perf_counter()
    instance = _load(args)
    timings = {}

    t = time.perf_counter()
    analysis, report, problem, solution = _prepare(instance)
    timings["analysis_s"] = time.perf_counter() - t

    t = time.perf_counter()
    scheme = _obtain_scheme(instance, analysis, report, solution, args)
    chk = schemes.check_scheme(instance, analysis, scheme, lp_solution=solution)
    timings["scheme_s"] = time.perf_counter() - t

    t = time.perf_counter()
    master = np.random.SeedSequence(entropy=instance.rng_seed, spawn_key=(1,))
    passed = 0
    for child in master.spawn(args.trials):
        transcript = protocol.run_protocol(scheme, np.random.default_rng(child))
        if protocol.check_correctness(transcript).ok:
            passed += 1
    timings["simulate_s"] = time.perf_counter() - t

    t = time.perf_counter()
    sec = security.verify_all(instance, scheme)
    timings["verify_s"] = time.perf_counter() - t
    timings["total_s"] = time.perf_counter() - t0
    logger.debug("pipeline timings: %s", timings)

    rate_consistent = scheme.claimed_rate == report.key_rate_upper
    ok = chk.ok and passed == args.trials and sec.ok and rate_consistent
    payload = {
        "instance": {
            "servers": list(instance.topology.users_per_server),
            "total_users": instance.total_users,
            "security_closure_size": len(instance.security_system),
            "collusion_closure_size": len(instance.collusion_system),
            "seed": instance.rng_seed,
        },
        "analysis": _analysis_json(analysis),
        "rates": _rate_json(report),
        "lp": _lp_json(problem, solution) if solution is not None else None,
        "scheme": {
            "q": scheme.q,
            "L": scheme.block_len,
            "source_dim": scheme.source_dim,
            "rate": format_fraction(scheme.claimed_rate),
            "rate_matches_bound": rate_consistent,
            "verified": chk.ok,
            "failures": list(chk.failures),
        },
        "correctness": {"trials": args.trials, "passed": passed},
        "security": {
            "triples_checked": sec.triples_checked,
            "violations": [{"k": v.k, "m": v.m, "n": v.n, "mi": v.mi} for v in sec.violations],
        },
        "ok": ok,
    }
    if args.json:
        payload["timings"] = {k: round(v, 6) for k, v in timings.items()}
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(f"regime:      {report.regime.value}")
        print(
            f"key rate:    [{format_fraction(report.key_rate_lower)}, "
            f"{format_fraction(report.key_rate_upper)}]"
            + (" exact" if report.exact else "")
        )
        if solution is not None:
            print(f"LP:          b* = {format_fraction(solution.objective)}")
        print(
            f"scheme:      q={scheme.q} L={scheme.block_len} "
            f"source_dim={scheme.source_dim} rate={format_fraction(scheme.claimed_rate)}"
        )
        print(f"correctness: {passed}/{args.trials} trials")
        print(f"security:    {sec.triples_checked} triples, {len(sec.violations)} violations")
        print(f"result:      {'OK' if ok else 'FAILED'}  ({timings['total_s']:.2f}s)")
    return 0 if ok else 1


def cmd_gen(args) -> int:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(2,)))
    instance = gen.random_instance(
        rng,
        server_range=(args.servers, args.servers) if args.servers else (3, 5),
        users_range=(1, args.max_users),
        seed=args.seed,
    )
    print(json.dumps(model.instance_to_json(instance), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msecagg",
        description="Multi-server secure aggregation: analysis, schemes, verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, helptext, needs_instance=True, scheme_flags=False, trials=None):
        p = sub.add_parser(name, help=helptext)
        if needs_instance:
            p.add_argument("instance", help="instance JSON file")
            p.add_argument("--seed", type=int, default=None, help="override the instance seed")
            p.add_argument("--q", type=int, default=None, help="override the field modulus")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        if scheme_flags:
            p.add_argument("--inject", default=None, help="load fixed coefficients from a JSON file")
        if trials is not None:
            p.add_argument("--trials", type=int, default=trials, help="number of protocol trials")
        p.set_defaults(fn=fn)
        return p

    add("validate", cmd_validate, "validate an instance and report closure sizes")
    add("analyze", cmd_analyze, "derived security parameters")
    add("rate", cmd_rate, "regime classification and key-rate bounds")
    add("lp", cmd_lp, "key-allocation LP of the remaining regime")
    add("scheme", cmd_scheme, "build (or inject) and verify a key scheme", scheme_flags=True)
    add("simulate", cmd_simulate, "run protocol trials", scheme_flags=True, trials=100)
    add("verify", cmd_verify, "exact leakage verification", scheme_flags=True)
    add("pipeline", cmd_pipeline, "full pipeline with report", scheme_flags=True, trials=100)

    g = sub.add_parser("gen", help="emit a random instance")
    g.add_argument("--servers", type=int, default=None, help="exact server count (default: 3..5)")
    g.add_argument("--max-users", type=int, default=3, help="max users per server")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(fn=cmd_gen)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MSECAGG_LOG_LEVEL", "WARNING").upper())
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (json.JSONDecodeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (schemes.RetriesExhausted, rates.InternalInconsistency) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
