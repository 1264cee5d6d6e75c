"""
Exact sampling of elements of a given length and Monte-Carlo checks of the
concentration and central-limit behaviour of normal-additive statistics.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats as scipy_stats

from app.config import settings
from app.errors import ConsistencyError, EmptyPathSpaceError, StatisticNotDefinedError
from app.services.cwg import (
    Cwg,
    asymptotic_variance,
    backward_vectors,
    build_cwg,
    ensure_irreducible,
    finite_mean,
    lift_to_states,
    perron,
)
from app.services.garside import Element, GarsideStructure
from app.services.measures import Valuation, boundary_chain, normalize_to_mobius, walker_generator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Statistic:
    """Normal-additive statistic: F(x₁⋯x_n) = F(x₁) + … + F(x_n), given by its values on S."""

    name: str
    values: tuple[float, ...]

    def evaluate(self, x: Element) -> float:
        return float(sum(self.values[i] for i in x.blocks))

    def lift(self, c: Cwg, g: GarsideStructure) -> np.ndarray:
        return lift_to_states(c, g, self.values)

    def is_length_proportional(self, g: GarsideStructure) -> bool:
        ratios = {Fraction(self.values[x]).limit_denominator(10**9) / int(g.lengths[x]) for x in range(1, len(g))}
        return len(ratios) == 1


def height_statistic(g: GarsideStructure) -> Statistic:
    return Statistic("height", (0.0,) + (1.0,) * (len(g) - 1))


def generator_count_statistic(g: GarsideStructure, sigma: str) -> Statistic:
    """
    Occurrences of σ in any representative word.

    Raises:
        StatisticNotDefinedError: unknown generator, or a class whose words disagree on the count.
    """
    if sigma not in g.presentation.generators:
        raise StatisticNotDefinedError(f"unknown generator {sigma!r}")
    values = []
    for s in g.simples:
        counts = {member.count(sigma) for member in g.words.word_class(s).members}
        if len(counts) != 1:
            raise StatisticNotDefinedError(
                f"count of {sigma} is not constant on the class of {g.presentation.format_word(s)}",
                counts=sorted(counts),
            )
        values.append(float(counts.pop()))
    return Statistic(f"count:{sigma}", tuple(values))


def alternating_statistic(g: GarsideStructure) -> Statistic:
    """
    +1 on even alternating simples starting with the first generator, −1 on
    those starting with the second, 0 on odd lengths and on Δ.

    Raises:
        StatisticNotDefinedError: the monoid is not spherical with two generators.
    """
    p = g.presentation
    if g.delta is None or p.rank != 2:
        raise StatisticNotDefinedError("the alternating statistic needs a spherical monoid on two generators")
    first = p.generators[0]
    values = [0.0]
    for x in range(1, len(g)):
        s = g.simples[x]
        if x == g.delta or len(s) % 2:
            values.append(0.0)
        else:
            values.append(1.0 if s[0] == first else -1.0)
    return Statistic("alternating", tuple(values))


def statistic_by_name(g: GarsideStructure, name: str) -> Statistic:
    """``height``, ``count:<σ>`` or ``alternating``."""
    if name == "height":
        return height_statistic(g)
    if name.startswith("count:"):
        return generator_count_statistic(g, name.partition(":")[2])
    if name == "alternating":
        return alternating_statistic(g)
    raise StatisticNotDefinedError(f"unknown statistic {name!r}; expected height, count:<gen> or alternating")


def delta_power(g: GarsideStructure, x: Element) -> int:
    """Number of leading Δ blocks in the normal form of x."""
    if g.delta is None:
        return 0
    count = 0
    for block in x.blocks:
        if block != g.delta:
            break
        count += 1
    return count


def _randbelow(rng: np.random.Generator, n: int) -> int:
    """Uniform integer in [0, n) for arbitrarily large n."""
    if n < 2**62:
        return int(rng.integers(n))
    bits = n.bit_length()
    nbytes = (bits + 7) // 8
    while True:
        value = int.from_bytes(rng.bytes(nbytes), "big") >> (8 * nbytes - bits)
        if value < n:
            return value


class _ExactSampler:
    """Backward-vector sampler of μ_k on an exact CWG, in big integers."""

    def __init__(self, c: Cwg, k: int):
        denominators = [Fraction(w).denominator for _, _, w in c.entries]
        denominators += [Fraction(w).denominator for w in c.w_minus]
        scale = math.lcm(*denominators) if denominators else 1
        self.successors = tuple(
            tuple((j, int(Fraction(w) * scale)) for j, w in row) for row in c.rows
        )
        self.initial = tuple(
            (s, int(Fraction(w) * scale)) for s, w in enumerate(c.w_minus) if w
        )
        b = [list(map(int, c.w_plus))]
        for _ in range(1, k):
            prev = b[-1]
            b.append([sum(w * prev[j] for j, w in row) for row in self.successors])
        self.backward = b
        self.k = k
        self.total = sum(w * b[k - 1][s] for s, w in self.initial)

    def _choose(self, rng: np.random.Generator, options: Sequence[tuple[int, int]], tail: list[int]) -> int:
        weighted = [(s, w * tail[s]) for s, w in options]
        weighted = [(s, w) for s, w in weighted if w]
        if len(weighted) == 1:
            return weighted[0][0]
        target = _randbelow(rng, sum(w for _, w in weighted))
        for s, w in weighted:
            if target < w:
                return s
            target -= w
        raise ConsistencyError("exact sampler ran past its total weight")

    def path(self, rng: np.random.Generator) -> tuple[int, ...]:
        state = self._choose(rng, self.initial, self.backward[self.k - 1])
        path = [state]
        for m in range(self.k - 2, -1, -1):
            state = self._choose(rng, self.successors[state], self.backward[m])
            path.append(state)
        return tuple(path)


class _FloatSampler:
    """Same walk with backward vectors rescaled at every step."""

    def __init__(self, c: Cwg, k: int):
        vectors = backward_vectors(c, k, exact=False)
        self.backward = vectors.vectors
        self.matrix = c.matrix
        self.k = k
        self.w_minus = c.w_minus_array
        self.total = float(self.w_minus @ self.backward[k - 1])

    def _choose(self, rng: np.random.Generator, states: np.ndarray, weights: np.ndarray) -> int:
        if len(states) == 1:
            return int(states[0])
        cumulative = np.cumsum(weights)
        return int(states[np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right")])

    def path(self, rng: np.random.Generator) -> tuple[int, ...]:
        first = self.w_minus * self.backward[self.k - 1]
        support = np.flatnonzero(first)
        state = self._choose(rng, support, first[support])
        path = [state]
        M = self.matrix
        for m in range(self.k - 2, -1, -1):
            lo, hi = M.indptr[state], M.indptr[state + 1]
            targets = M.indices[lo:hi]
            weights = M.data[lo:hi] * self.backward[m][targets]
            keep = weights > 0
            state = self._choose(rng, targets[keep], weights[keep])
            path.append(state)
        return tuple(path)


def sample_paths(
    c: Cwg,
    k: int,
    count: int,
    seed: int,
    threads: int | None = None,
) -> list[tuple[int, ...]]:
    """
    ``count`` paths of k states drawn exactly from μ_k, walker w using stream (seed, w).

    Exact CWGs are sampled in big integers up to ``settings.EXACT_MAX_LENGTH``;
    beyond that, or for float weights, the backward vectors are renormalised floats.

    Raises:
        EmptyPathSpaceError: Z_k = 0.
    """
    if k < 1:
        raise EmptyPathSpaceError(f"no path of {k} states", k=k)
    if c.exact and k <= settings.EXACT_MAX_LENGTH:
        sampler = _ExactSampler(c, k)
    else:
        if c.exact:
            logger.warning(
                "float fallback k=%d above exact limit %d, relative error budget %.1e",
                k, settings.EXACT_MAX_LENGTH, k * np.finfo(float).eps,
            )
        sampler = _FloatSampler(c, k)
    if not sampler.total:
        raise EmptyPathSpaceError(f"no weighted path of {k} states", k=k)

    workers = max(1, min(settings.worker_count(threads), count))
    bounds = np.linspace(0, count, workers + 1).astype(int)

    def run(chunk: int) -> list[tuple[int, ...]]:
        return [
            sampler.path(walker_generator(seed, w))
            for w in range(bounds[chunk], bounds[chunk + 1])
        ]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(run, range(workers)))
    logger.info("sampled paths k=%d count=%d workers=%d seed=%d", k, count, workers, seed)
    return [path for chunk in chunks for path in chunk]


def element_of_path(c: Cwg, g: GarsideStructure, path: Sequence[int]) -> Element:
    """Cut a monoid-CWG path at the block ends (x, |x|)."""
    blocks = []
    for s in path:
        x, i = c.states[s]
        if i == g.lengths[x]:
            blocks.append(x)
    return g.element(blocks)


def sample_exact(
    g: GarsideStructure,
    c: Cwg,
    k: int,
    count: int,
    seed: int,
    threads: int | None = None,
) -> list[Element]:
    return [element_of_path(c, g, path) for path in sample_paths(c, k, count, seed, threads)]


def lattice_step(values: np.ndarray) -> float:
    """Span of the lattice carrying integer-valued samples; 0 for anything else."""
    rounded = np.round(values)
    if len(values) < 2 or not np.allclose(values, rounded, rtol=0.0, atol=1e-9):
        return 0.0
    offsets = (rounded - rounded.min()).astype(np.int64)
    return float(np.gcd.reduce(offsets))


def lattice_ks(sample: np.ndarray, step: float, sigma: float) -> tuple[float, float]:
    """
    Kolmogorov distance from N(0, σ²) with a continuity correction.

    Each atom of a sample living on a lattice of span ``step`` is compared with
    the normal mass up to the two midpoints of its cell. With ``step`` 0 this
    is the plain two-sided KS test.
    """
    if step <= 0:
        ks = scipy_stats.kstest(sample, "norm", args=(0.0, sigma))
        return float(ks.statistic), float(ks.pvalue)
    n = len(sample)
    atoms, counts = np.unique(sample, return_counts=True)
    upper = np.cumsum(counts) / n
    lower = upper - counts / n
    normal = scipy_stats.norm(0.0, sigma)
    half = step / 2
    distance = max(
        float(np.abs(upper - normal.cdf(atoms + half)).max()),
        float(np.abs(lower - normal.cdf(atoms - half)).max()),
    )
    return distance, float(scipy_stats.kstwo.sf(distance, n))


@dataclass(frozen=True)
class ExperimentReport:
    monoid: str
    statistic: str
    k: int
    count: int
    seed: int
    mean_ratio: float
    gamma: float
    finite_mean_ratio: float
    variance: float
    s2: float
    kappa: float
    ks_statistic: float | None
    ks_pvalue: float | None
    degenerate: bool
    caveats: tuple[str, ...] = ()
    runtime_seconds: float = 0.0


@dataclass(frozen=True, eq=False)
class Experiment:
    report: ExperimentReport
    elements: tuple[Element, ...]
    values: np.ndarray
    heights: np.ndarray
    normalized: np.ndarray
    delta_powers: np.ndarray | None = field(default=None)


def concentration_experiment(
    g: GarsideStructure,
    omega: Valuation | None,
    stat: Statistic,
    k: int,
    count: int,
    seed: int,
    threads: int | None = None,
) -> Experiment:
    """
    Sample ``count`` elements of length k and compare F/k with γ and
    (F − kγ)/√k with N(0, s²).

    γ = (1/κ)Σ θ(x)F(x) comes from the boundary chain of the normalised
    valuation and is checked against π·F̃ on the CWG; s² is the asymptotic
    variance of the lifted statistic.

    Raises:
        IrreducibilityRequiredError: reducible monoid.
        ConsistencyError: the two computations of γ disagree.
    """
    p = g.presentation
    ensure_irreducible(p)
    started = time.perf_counter()
    omega = omega or Valuation.uniform(p)
    c = build_cwg(g, omega)
    pd = perron(c)
    lifted = stat.lift(c, g)
    variance = asymptotic_variance(c, pd, lifted)

    bc = boundary_chain(g, normalize_to_mobius(g, omega))
    gamma = float(bc.theta @ np.array(stat.values[1:])) / bc.kappa
    if abs(gamma - variance.mean) > 1e-8 * max(1.0, abs(gamma)):
        raise ConsistencyError(
            f"asymptotic mean {gamma:.12g} from the boundary chain, {variance.mean:.12g} from the CWG"
        )

    caveats = []
    if stat.is_length_proportional(g):
        caveats.append("statistic is proportional to length: the limit law is degenerate")
    if g.delta is not None and p.rank == 2:
        caveats.append("spherical with two generators: the central limit clause may fail")
    for note in caveats:
        logger.info("caveat: %s", note)

    elements = tuple(sample_exact(g, c, k, count, seed, threads))
    values = np.array([stat.evaluate(x) for x in elements])
    heights = np.array([x.height for x in elements], dtype=float)
    normalized = (values - k * gamma) / math.sqrt(k)
    empirical = float(normalized.var(ddof=1)) if count > 1 else 0.0
    expected = finite_mean(c, k, lifted)
    ks_statistic = ks_pvalue = None
    if not variance.degenerate:
        # centred on the exact mean at length k rather than kγ
        ks_statistic, ks_pvalue = lattice_ks(
            (values - expected) / math.sqrt(k),
            lattice_step(values) / math.sqrt(k),
            math.sqrt(variance.sigma2),
        )
    powers = np.array([delta_power(g, x) for x in elements]) if g.delta is not None else None

    report = ExperimentReport(
        monoid=p.name or "monoid",
        statistic=stat.name,
        k=k,
        count=count,
        seed=seed,
        mean_ratio=float((values / k).mean()),
        gamma=gamma,
        finite_mean_ratio=expected / k,
        variance=empirical,
        s2=variance.sigma2,
        kappa=bc.kappa,
        ks_statistic=ks_statistic,
        ks_pvalue=ks_pvalue,
        degenerate=variance.degenerate,
        caveats=tuple(caveats),
        runtime_seconds=time.perf_counter() - started,
    )
    logger.info(
        "experiment %s stat=%s k=%d count=%d mean=%.6f gamma=%.6f var=%.6f s2=%.6f",
        report.monoid, stat.name, k, count, report.mean_ratio, gamma, empirical, variance.sigma2,
    )
    return Experiment(
        report=report,
        elements=elements,
        values=values,
        heights=heights,
        normalized=normalized,
        delta_powers=powers,
    )


@dataclass(frozen=True)
class DeltaMethodReport:
    k: int
    count: int
    kappa: float
    mean: float
    variance: float
    target_variance: float
    degenerate: bool


def delta_method_check(experiment: Experiment) -> DeltaMethodReport:
    """
    Law of √k(k/τ − κ) against its delta-method variance s²κ⁴.

    Raises:
        StatisticNotDefinedError: the experiment did not measure the height.
    """
    report = experiment.report
    if report.statistic != "height":
        raise StatisticNotDefinedError(
            f"the k/τ check needs the height statistic, experiment measured {report.statistic}"
        )
    k = report.k
    scaled = math.sqrt(k) * (k / experiment.heights - report.kappa)
    return DeltaMethodReport(
        k=k,
        count=report.count,
        kappa=report.kappa,
        mean=float((k / experiment.heights).mean()),
        variance=float(scaled.var(ddof=1)) if report.count > 1 else 0.0,
        target_variance=report.s2 * report.kappa**4,
        degenerate=report.degenerate,
    )
