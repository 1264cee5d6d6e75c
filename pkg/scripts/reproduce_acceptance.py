"""
Reproduce the acceptance runs at full scale.

Checks:
1. A~2 Garside set, normal forms and D-sets
2. Möbius inversion on random rational functions
3. Growth series: polynomial inversion, matrix powers and enumeration
4. 1/p0 against the Perron eigenvalue
5. Charney graph connectivity
6. Boundary chain of the uniform measure
7. Visual measures at k = 80
8. Exact sampler against the uniform law (chi-square)
9-10. Concentration and CLT at k = 300
11. Axiom checks

Usage: python scripts/reproduce_acceptance.py [--samples N] [--seed S] [--skip-monte-carlo]
"""
import argparse
import math
import os
import random
import sys
import time
from collections import Counter
from fractions import Fraction

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
from scipy import stats as scipy_stats

from app.config import configure_logging
from app.errors import ConsistencyError, IrreducibilityRequiredError
from app.services.cwg import build_cwg, partition_function, perron
from app.services.garside import charney_graph, check_axioms, compute_garside, is_type_fc, normal_form
from app.services.measures import Valuation, speedup, uniform_measure, visual_cylinder_mass
from app.services.mobius import MobiusService, smallest_root_p0
from app.services.presentation import braid, dihedral, dual_a, free, free_product, heap, parse_family, parse_presentation
from app.services.stats import concentration_experiment, height_statistic, sample_exact
from tests.oracles import elements_up_to, enumerate_classes

A2_TILDE = "generators: a b c\nm: a b = 3\nm: b c = 3\nm: a c = 3\n"
A2_TILDE_SIMPLES = [
    "", "a", "b", "c", "ab", "ac", "ba", "bc", "ca", "cb",
    "aba", "bcb", "cac", "abcb", "bcac", "caba",
]

failures: list[str] = []


def report(ok: bool, label: str) -> None:
    print(f"   [{'OK' if ok else 'FAIL'}] {label}")
    if not ok:
        failures.append(label)


def banner(title: str) -> None:
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def monoids() -> dict:
    a2 = parse_presentation(A2_TILDE)
    return {
        "braid3": compute_garside(braid(3)),
        "braid4": compute_garside(braid(4)),
        "A~2": compute_garside(a2),
        "heap3": compute_garside(heap(["a", "b", "c"], [("a", "c")])),
        "dual_a3": compute_garside(dual_a(3)),
    }


def check_a2_tilde(g, mobius: MobiusService) -> None:
    banner("1. A~2 fixture")
    started = time.perf_counter()
    report(len(g) == 16 and {g.index[tuple(w)] for w in A2_TILDE_SIMPLES} == set(range(16)), "16 simples")
    report(tuple("caba") in g.index and tuple("cab") not in g.index, "caba in S, cab not in S")
    report([g.format(i) for i in normal_form(g, tuple("abc")).normal] == ["ab", "c"], "abc -> ab | c")
    report([g.format(i) for i in normal_form(g, tuple("abcb")).normal] == ["abcb"], "abcb -> abcb")
    report({g.format(z) for z in mobius.d_indices(g.index[("a", "b")])} == {"a", "cb"}, "D(ab) = {a, cb}")
    report(not is_type_fc(g), "not of type FC")
    print(f"   runtime {time.perf_counter() - started:.2f}s")


def check_inversion(all_g: dict, services: dict, functions: int, max_length: int) -> None:
    banner(f"2. Mobius inversion ({functions} functions, support length <= {max_length})")
    rng = random.Random(0)
    for name, g in all_g.items():
        mobius = services[name]
        support = elements_up_to(g, max_length)
        points = elements_up_to(g, max_length - 1)
        ok = True
        for _ in range(functions):
            table = {x: Fraction(rng.randint(-9, 9), rng.randint(1, 9)) for x in support}

            def h(z, table=table):
                return table.get(z, Fraction(0))

            for x in points:
                t_star = mobius.inverse_graded_mobius(lambda z: mobius.graded_mobius(h, z), x)
                t = mobius.graded_mobius(lambda z: mobius.inverse_graded_mobius(h, z), x)
                if t_star != h(x) or t != h(x):
                    ok = False
                    break
            if not ok:
                break
        report(ok, f"{name}: T and T* are inverse")


def check_growth(all_g: dict, services: dict) -> None:
    banner("3. Growth series")
    for name, g in all_g.items():
        p = g.presentation
        classes = enumerate_classes(p, 6)
        series = services[name].growth_coefficients(None, 30)
        c = build_cwg(g, require_irreducible=False)
        report(series == [partition_function(c, k) for k in range(31)], f"{name}: series = matrix powers up to 30")
        report(series[:7] == [len(classes[k]) for k in range(7)], f"{name}: series = enumeration up to 6")
        omega = Valuation.from_length(p, Fraction(3, 7))
        weighted = services[name].growth_coefficients(omega, 30)
        c = build_cwg(g, omega, require_irreducible=False)
        report(weighted == [partition_function(c, k) for k in range(31)], f"{name}: weighted series exact")


def check_spectral(all_g: dict, services: dict) -> None:
    banner("4. Spectral consistency")
    for name, g in all_g.items():
        p0 = smallest_root_p0(services[name].mobius_polynomial())
        lam = perron(build_cwg(g)).lam
        report(abs(1 / p0 - lam) <= 1e-10 * lam, f"{name}: 1/p0 = {1 / p0:.12f}, lambda = {lam:.12f}")
    p0 = smallest_root_p0(services["braid3"].mobius_polynomial())
    report(abs(p0 - (math.sqrt(5) - 1) / 2) <= 1e-12, "braid3: p0 is the golden ratio conjugate")


def check_charney() -> None:
    banner("5. Charney graph")
    for family in ["braid:3", "braid:4", "braid:5", "dihedral:4", "dihedral:5", "dihedral:6", "dual-a:3", "dual-a:4"]:
        report(charney_graph(compute_garside(parse_family(family))).strongly_connected, f"{family} strongly connected")
    try:
        charney_graph(compute_garside(parse_family("heap:a-b")))
        report(False, "heap:a-b refused")
    except IrreducibilityRequiredError:
        report(True, "heap:a-b refused")


def check_boundary_chain(all_g: dict, services: dict) -> None:
    banner("6. Boundary chain")
    for name, g in all_g.items():
        bc = uniform_measure(g, services[name])
        h = np.array([float(v) for v in bc.h])
        report(abs(h[0]) <= 1e-10 and (h[1:] > 0).all(), f"{name}: h(e) = {h[0]:.1e}, h > 0")
        report(np.abs(bc.P.sum(axis=1) - 1).max() <= 1e-12, f"{name}: rows sum to 1")
        theta = bc.theta
        report(np.abs(theta @ bc.P - theta).max() <= 1e-12, f"{name}: theta is stationary")
        try:
            speedup(bc, verify=True, tolerance=1e-10)
            report(True, f"{name}: aggregation pi(x, i) = theta(x)/kappa, kappa = {bc.kappa:.12f}")
        except ConsistencyError as exc:
            report(False, f"{name}: aggregation ({exc.message})")


def check_visual(all_g: dict, services: dict) -> None:
    banner("7. Visual measures at k = 80")
    for name in ("braid3", "A~2"):
        g = all_g[name]
        omega = Valuation.uniform(g.presentation)
        lam = perron(build_cwg(g)).lam
        worst = max(
            abs(float(visual_cylinder_mass(g, omega, x, 80, services[name])) - lam ** -x.length)
            for x in elements_up_to(g, 3)
        )
        report(worst <= 1e-3, f"{name}: max deviation {worst:.2e}")


def check_sampler(all_g: dict, samples: int, seed: int) -> None:
    banner(f"8. Exact sampler ({samples} samples)")
    for name in ("braid3", "A~2"):
        g = all_g[name]
        c = build_cwg(g)
        for k in (4, 6):
            started = time.perf_counter()
            total = int(partition_function(c, k))
            counts = Counter(sample_exact(g, c, k, samples, seed))
            observed = list(counts.values()) + [0] * (total - len(counts))
            pvalue = scipy_stats.chisquare(observed).pvalue
            report(
                len(counts) <= total and pvalue > 1e-3,
                f"{name} k={k}: {total} elements, chi-square p = {pvalue:.3f} ({time.perf_counter() - started:.1f}s)",
            )


def check_limit_laws(all_g: dict, samples: int, seed: int) -> None:
    banner(f"9-10. Concentration and CLT (k = 300, {samples} samples)")
    for name in ("braid3", "A~2"):
        g = all_g[name]
        started = time.perf_counter()
        r = concentration_experiment(g, None, height_statistic(g), 300, samples, seed).report
        report(abs(r.mean_ratio - 1 / r.kappa) <= 0.005, f"{name}: mean tau/k {r.mean_ratio:.5f}, 1/kappa {1 / r.kappa:.5f}")
        report(abs(r.variance - r.s2) <= 0.1 * r.s2, f"{name}: variance {r.variance:.5f}, s2 {r.s2:.5f}")
        report(r.ks_statistic is not None and r.ks_statistic <= 0.02, f"{name}: KS distance {r.ks_statistic}")
        print(f"   runtime {time.perf_counter() - started:.1f}s")
    g = compute_garside(free(2))
    r = concentration_experiment(g, None, height_statistic(g), 300, 1000, seed).report
    report(r.degenerate and r.s2 == 0.0, "free(2): degenerate, s2 = 0")


def check_axioms_suite() -> None:
    banner("11. Axioms")
    report(check_axioms(compute_garside(dual_a(3))).passed, "dual_a(3) passes")
    report(check_axioms(compute_garside(free_product(free(1), braid(3)))).passed, "free(1) * braid(3) passes")
    for m in (4, 5, 6):
        notes = check_axioms(compute_garside(dihedral(m))).notes
        report(any("two generators" in n for n in notes), f"dihedral({m}): two-generator caveat reported")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--samples", type=int, default=100_000, help="Monte-Carlo sample count")
    parser.add_argument("--sampler-samples", type=int, default=1_000_000, help="samples for the chi-square check")
    parser.add_argument("--functions", type=int, default=200, help="random functions for the inversion check")
    parser.add_argument("--seed", type=int, default=20240101)
    parser.add_argument("--skip-monte-carlo", action="store_true")
    args = parser.parse_args()
    configure_logging("WARNING")

    all_g = monoids()
    services = {name: MobiusService(g) for name, g in all_g.items()}
    check_a2_tilde(all_g["A~2"], services["A~2"])
    check_inversion(all_g, services, args.functions, 6)
    check_growth(all_g, services)
    check_spectral(all_g, services)
    check_charney()
    check_boundary_chain(all_g, services)
    check_visual(all_g, services)
    if args.skip_monte_carlo:
        print("\n[WARN] Skipping Monte-Carlo checks 8-10")
    else:
        check_sampler(all_g, args.sampler_samples, args.seed)
        check_limit_laws(all_g, args.samples, args.seed)
    check_axioms_suite()

    banner("Summary")
    if failures:
        for label in failures:
            print(f"   [FAIL] {label}")
        return 1
    print("   [OK] all checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
