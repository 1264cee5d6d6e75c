"""Valuations, Möbius valuations and the boundary Markov chain of multiplicative measures."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix, eye
from scipy.sparse.linalg import factorized

from app.config import settings
from app.errors import (
    ConsistencyError,
    NotMobiusValuationError,
    PerronConvergenceError,
    PresentationValueError,
)
from app.services import graphs
from app.services.cwg import build_cwg, ensure_irreducible, perron
from app.services.garside import UNIT, Element, GarsideStructure
from app.services.mobius import MobiusService, Number, smallest_root_p0
from app.services.presentation import MonoidPresentation, param_classes

logger = logging.getLogger(__name__)


def walker_generator(seed: int, walker: int) -> np.random.Generator:
    """PCG64 stream of one walker; identical (seed, walker) gives an identical stream."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(walker,))))


@dataclass(frozen=True)
class Valuation:
    """
    Positive weight per generator, extended multiplicatively to words.

    Weights are Fractions (exact) or floats.
    """

    weights: tuple[tuple[str, Number], ...]

    @cached_property
    def table(self) -> dict[str, Number]:
        return dict(self.weights)

    @property
    def exact(self) -> bool:
        return all(isinstance(w, (int, Fraction)) for _, w in self.weights)

    def __getitem__(self, generator: str) -> Number:
        return self.table[generator]

    def of_word(self, w: Sequence[str]) -> Number:
        value: Number = 1
        for letter in w:
            value = value * self.table[letter]
        return value

    def of_element(self, g: GarsideStructure, x: Element) -> Number:
        return self.of_word(g.word_of(x))

    def scaled(self, factor: Number) -> "Valuation":
        return Valuation(tuple((a, w * factor) for a, w in self.weights))

    def is_well_defined(self, p: MonoidPresentation) -> bool:
        """Π weights(u) = Π weights(v) for every relation (u, v)."""
        for u, v in p.relations:
            left, right = self.of_word(u), self.of_word(v)
            if self.exact and left != right:
                return False
            if not self.exact and abs(float(left) - float(right)) > 1e-12 * max(1.0, abs(float(left))):
                return False
        return True

    def is_class_constant(self, p: MonoidPresentation) -> bool:
        return all(
            len({self.table[a] for a in cls}) == 1 for cls in param_classes(p).classes
        )

    def format(self) -> str:
        return ",".join(f"{a}={w}" for a, w in self.weights)

    @classmethod
    def uniform(cls, p: MonoidPresentation) -> "Valuation":
        return cls(tuple((a, 1) for a in p.generators))

    @classmethod
    def from_length(cls, p: MonoidPresentation, t: Number) -> "Valuation":
        """x ↦ t^{|x|}."""
        return cls(tuple((a, t) for a in p.generators))

    @classmethod
    def from_class_weights(cls, p: MonoidPresentation, class_weights: Mapping[str, Number]) -> "Valuation":
        """
        Valuation constant on R̄-classes.

        Args:
            p: presentation
            class_weights: weight per class, keyed by any member of the class

        Raises:
            PresentationValueError: a class gets two weights, none, or a non-positive one.
        """
        classes = param_classes(p)
        assigned: dict[tuple[str, ...], Number] = {}
        for generator, weight in class_weights.items():
            if generator not in p.generators:
                raise PresentationValueError(f"unknown generator {generator!r} in valuation")
            if weight <= 0:
                raise PresentationValueError(f"weight of {generator} must be positive, got {weight}")
            cls_ = classes.class_of(generator)
            if cls_ in assigned and assigned[cls_] != weight:
                raise PresentationValueError(
                    f"class {{{', '.join(cls_)}}} gets two weights {assigned[cls_]} and {weight}"
                )
            assigned[cls_] = weight
        missing = [c for c in classes.classes if c not in assigned]
        if missing:
            raise PresentationValueError(
                f"no weight for class {{{', '.join(missing[0])}}}", classes=[list(c) for c in missing]
            )
        return cls(tuple((a, assigned[classes.class_of(a)]) for a in p.generators))

    @classmethod
    def parse(cls, p: MonoidPresentation, text: str) -> "Valuation":
        """Parse ``a=0.3,b=7/10``; decimals and fractions are read exactly."""
        weights: dict[str, Number] = {}
        for item in filter(None, (part.strip() for part in text.split(","))):
            name, sep, value = item.partition("=")
            if not sep:
                raise PresentationValueError(f"valuation item {item!r} is not of the form gen=weight")
            try:
                weights[name.strip()] = Fraction(value.strip())
            except (ValueError, ZeroDivisionError) as exc:
                raise PresentationValueError(f"invalid weight {value!r} for {name.strip()}") from exc
        return cls.from_class_weights(p, weights)


@dataclass(frozen=True)
class MobiusCheck:
    is_mobius: bool
    degenerate: bool
    h: tuple[Number, ...]

    @property
    def unit_value(self) -> Number:
        return self.h[UNIT]


def _transform_on_simples(g: GarsideStructure, f: Valuation, mobius: MobiusService) -> tuple[Number, ...]:
    return tuple(
        mobius.graded_mobius(lambda z: f.of_element(g, z), g.simple_element(x))
        for x in range(len(g))
    )


def is_mobius_valuation(
    g: GarsideStructure,
    f: Valuation,
    mobius: MobiusService | None = None,
) -> MobiusCheck:
    """
    h = Tf on S, with the Möbius test h(e) = 0 and h > 0 on S ∖ {e}.

    Exact for rational valuations; otherwise |h(e)| ≤ ``settings.MOBIUS_TOL``.
    The degenerate direction (h zero on S ∖ {e, Δ}, h(Δ) = 1) is flagged.
    """
    mobius = mobius or MobiusService(g)
    h = _transform_on_simples(g, f, mobius)
    tol = 0 if f.exact else settings.MOBIUS_TOL
    unit_ok = abs(h[UNIT]) <= tol
    positive = all(v > 0 for v in h[1:])
    degenerate = (
        g.delta is not None
        and unit_ok
        and abs(h[g.delta] - 1) <= tol
        and all(abs(h[x]) <= tol for x in range(1, len(g)) if x != g.delta)
    )
    if degenerate:
        logger.info("degenerate valuation: h vanishes off Δ and h(Δ) = 1")
    return MobiusCheck(is_mobius=unit_ok and positive, degenerate=degenerate, h=h)


def transfer_defects(
    g: GarsideStructure,
    f: Valuation,
    mobius: MobiusService | None = None,
) -> tuple[Number, ...]:
    """h(x) − f(x)·Σ_{y ∈ S, x → y} h(y) on S ∖ {e}; identically zero for every valuation."""
    mobius = mobius or MobiusService(g)
    h = _transform_on_simples(g, f, mobius)
    return tuple(
        h[x] - f.of_word(g.simples[x]) * sum((h[y] for y in np.flatnonzero(g.arrow[x])), 0)
        for x in range(1, len(g))
    )


def normalize_to_mobius(
    g: GarsideStructure,
    omega: Valuation,
    tol: float | None = None,
    max_iter: int | None = None,
) -> Valuation:
    """
    f = ω/λ with λ the Perron eigenvalue of the CWG of ω.

    Raises:
        IrreducibilityRequiredError: reducible monoid.
        PerronStructureError, PerronConvergenceError, CwgConditionError: spectral failure.
    """
    ensure_irreducible(g.presentation)
    pd = perron(build_cwg(g, omega), tol=tol, max_iter=max_iter)
    logger.info("normalised valuation %s by lambda=%.15g", omega.format(), pd.lam)
    return Valuation(tuple((a, float(w) / pd.lam) for a, w in omega.weights))


class AliasTable:
    """Vose alias tables for the rows of a stochastic matrix (plus one initial law)."""

    def __init__(self, weights: np.ndarray):
        n = len(weights)
        scaled = np.asarray(weights, dtype=float) * n / weights.sum()
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s, l = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            (small if scaled[l] < 1.0 else large).append(l)

    def draw(self, rng: np.random.Generator) -> int:
        i = int(rng.integers(len(self.prob)))
        return i if rng.random() < self.prob[i] else int(self.alias[i])


@dataclass(frozen=True, eq=False)
class BoundaryChain:
    """
    Markov chain of the blocks of a boundary point under the measure of f.

    Arrays ``P``, ``theta`` and ``initial`` are indexed by S ∖ {e}: position i
    is the simple i + 1. ``h`` is indexed by S.
    """

    g: GarsideStructure
    f: Valuation
    h: tuple[Number, ...]
    P: np.ndarray
    theta: np.ndarray
    kappa: float
    ergodic: tuple[int, ...]

    @property
    def initial(self) -> np.ndarray:
        law = np.array([float(v) for v in self.h[1:]])
        return law / law.sum()

    @cached_property
    def samplers(self) -> tuple[AliasTable, tuple[AliasTable, ...]]:
        return AliasTable(self.initial), tuple(AliasTable(row) for row in self.P)

    def cylinder_mass(self, x: Element) -> Number:
        """ν(𝒞_x) = f(x₁)⋯f(x_{n−1})·h(x_n)."""
        if x.is_unit:
            return self.h[UNIT]
        mass: Number = self.h[x.last]
        for block in x.normal[:-1]:
            mass = mass * self.f.of_word(self.g.simples[block])
        return mass


def _stationary(P: np.ndarray, eps: float = 1e-15, tol: float = 1e-14, maxiter: int = 100) -> np.ndarray:
    # backward iteration on Pᵀ at 1 − eps
    A = csr_matrix(P).T
    n = A.shape[0]
    try:
        solve = factorized((A - (1.0 - eps) * eye(n)).tocsc())
    except RuntimeError:
        solve = factorized((A - (1.0 - 1e-10) * eye(n)).tocsc())
    y = np.ones(n) / np.sqrt(n)
    for _ in range(maxiter):
        x = solve(y)
        r = 1.0 / np.linalg.norm(x)
        y = x * r
        if r <= tol:
            break
    else:
        raise PerronConvergenceError(
            f"stationary vector: backward iteration did not converge in {maxiter} steps, residuum {r:e}"
        )
    y = np.abs(y)
    return y / y.sum()


def boundary_chain(
    g: GarsideStructure,
    f: Valuation,
    mobius: MobiusService | None = None,
) -> BoundaryChain:
    """
    P_{x,y} = 1(x → y)·f(x)·h(y)/h(x) on S ∖ {e}, started from h.

    Raises:
        IrreducibilityRequiredError: reducible monoid.
        NotMobiusValuationError: f is not a Möbius valuation.
    """
    ensure_irreducible(g.presentation)
    check = is_mobius_valuation(g, f, mobius)
    if not check.is_mobius:
        raise NotMobiusValuationError(
            f"valuation {f.format()} is not Möbius: h(e) = {float(check.unit_value):.3e}",
            unit_value=float(check.unit_value),
            degenerate=check.degenerate,
        )
    n = len(g)
    h = np.array([float(v) for v in check.h])
    fv = np.array([float(f.of_word(g.simples[x])) for x in range(n)])
    arrow = g.arrow[1:, 1:].astype(float)
    P = arrow * (fv[1:] / h[1:])[:, None] * h[1:][None, :]
    P /= P.sum(axis=1, keepdims=True)

    count, labels = graphs.strong_components(arrow)
    closed = [
        c for c in range(count)
        if not (arrow[labels == c][:, labels != c]).any()
    ]
    if len(closed) != 1:
        raise ConsistencyError(f"boundary chain has {len(closed)} closed classes, expected one")
    ergodic = np.flatnonzero(labels == closed[0])
    theta = np.zeros(n - 1)
    theta[ergodic] = _stationary(P[np.ix_(ergodic, ergodic)])
    kappa = float(theta @ g.lengths[1:])
    logger.info("boundary chain simples=%d ergodic=%d kappa=%.15g", n - 1, len(ergodic), kappa)
    return BoundaryChain(
        g=g,
        f=f,
        h=check.h,
        P=P,
        theta=theta,
        kappa=kappa,
        ergodic=tuple(int(i) + 1 for i in ergodic),
    )


def speedup(bc: BoundaryChain, verify: bool = True, tolerance: float = 1e-10) -> float:
    """
    κ = Σ |x| θ(x).

    With ``verify`` the stationary law π of the CWG of f is aggregated back:
    π(x, i) must equal θ(x)/κ for every state.

    Raises:
        ConsistencyError: aggregation mismatch.
    """
    if verify:
        c = build_cwg(bc.g, bc.f)
        pd = perron(c)
        expected = np.array([bc.theta[x - 1] / bc.kappa for x, _ in c.states])
        gap = float(np.abs(pd.pi - expected).max())
        if gap > tolerance:
            raise ConsistencyError(
                f"CWG stationary law differs from θ/κ by {gap:.3e}", gap=gap
            )
        logger.debug("speedup aggregation gap=%.2e", gap)
    return bc.kappa


def sample_boundary_prefix(bc: BoundaryChain, j: int, seed: int, walker: int = 0) -> tuple[int, ...]:
    """
    First j blocks of a boundary point: X₁ ~ h, then j − 1 chain steps.

    Raises:
        ConsistencyError: two consecutive blocks are not normal.
    """
    if j < 1:
        raise ValueError(f"prefix length must be at least 1, got {j}")
    rng = walker_generator(seed, walker)
    first, rows = bc.samplers
    path = [first.draw(rng)]
    for _ in range(j - 1):
        path.append(rows[path[-1]].draw(rng))
    blocks = tuple(i + 1 for i in path)
    for x, y in zip(blocks, blocks[1:]):
        if not bc.g.arrow[x, y]:
            raise ConsistencyError(f"sampled blocks {bc.g.format(x)} | {bc.g.format(y)} are not normal")
    return blocks


def sample_boundary_prefixes(
    bc: BoundaryChain,
    j: int,
    count: int,
    seed: int,
    threads: int | None = None,
) -> list[tuple[int, ...]]:
    """One prefix per walker 0..count−1, independent of the thread count."""
    bc.samplers  # alias tables are built once, before the pool starts
    with ThreadPoolExecutor(max_workers=settings.worker_count(threads)) as pool:
        return list(pool.map(lambda w: sample_boundary_prefix(bc, j, seed, w), range(count)))


def uniform_measure(g: GarsideStructure, mobius: MobiusService | None = None) -> BoundaryChain:
    """Boundary chain of f = p₀^{|·|}."""
    mobius = mobius or MobiusService(g)
    p0 = smallest_root_p0(mobius.mobius_polynomial())
    return boundary_chain(g, Valuation.from_length(g.presentation, p0), mobius)


def visual_cylinder_mass(
    g: GarsideStructure,
    omega: Valuation,
    x: Element,
    k: int,
    mobius: MobiusService | None = None,
) -> Number:
    """m_{ω,k}(↑x) = ω(x)·Z_ω(k − |x|)/Z_ω(k), exact for rational ω."""
    if x.length > k:
        return 0
    mobius = mobius or MobiusService(g)
    series = mobius.growth_coefficients(omega, k, cross_check=False)
    numerator = omega.of_element(g, x) * series[k - x.length]
    if omega.exact:
        return Fraction(numerator) / Fraction(series[k])
    return float(numerator) / float(series[k])


def upper_set_mass(bc: BoundaryChain, x: Element, mobius: MobiusService | None = None) -> Number:
    """ν(↑̄x) as the sum of the cylinder masses over the Garside base A[x]."""
    mobius = mobius or MobiusService(bc.g)
    return sum((bc.cylinder_mass(y) for y in mobius.garside_base(x)), 0)