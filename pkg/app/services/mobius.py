"""Graded Möbius transform, its inverse, Möbius polynomials, growth series and p₀."""
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Callable, Iterable, Literal, Union

import numpy as np
from scipy.optimize import brentq

from app.errors import ConsistencyError, NoPerronRootError
from app.services.garside import UNIT, Element, GarsideStructure

if TYPE_CHECKING:
    from app.services.measures import Valuation

logger = logging.getLogger(__name__)

Number = Union[Fraction, float, int]
ElementFunction = Callable[[Element], Number]


@dataclass(frozen=True)
class MobiusPolynomial:
    """Coefficients c₀, c₁, … of Σ cᵢ Tⁱ (exact when the valuation is rational)."""

    coefficients: tuple[Number, ...]

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, t: Number) -> Number:
        value = 0
        for c in reversed(self.coefficients):
            value = value * t + c
        return value

    def as_floats(self) -> np.ndarray:
        return np.array([float(c) for c in self.coefficients])

    def format(self, variable: str = "T") -> str:
        terms = []
        for power, c in enumerate(self.coefficients):
            if c == 0:
                continue
            magnitude = abs(c)
            sign = "-" if c < 0 else "+"
            if power == 0:
                body = f"{magnitude}"
            else:
                monomial = variable if power == 1 else f"{variable}^{power}"
                body = monomial if magnitude == 1 else f"{magnitude}·{monomial}"
            terms.append((sign, body))
        if not terms:
            return "0"
        first_sign, first = terms[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in terms[1:]:
            text += f" {sign} {body}"
        return text


def _trim(coefficients: list) -> tuple:
    while len(coefficients) > 1 and coefficients[-1] == 0:
        coefficients.pop()
    return tuple(coefficients)


class MobiusService:
    """Exact combinatorics over one Garside structure: D-sets, Garside bases, T and T*."""

    def __init__(self, g: GarsideStructure):
        self.g = g
        self._d_sets = tuple(self._compute_d_set(u) for u in range(len(g)))
        self._signed_joins = tuple(self._signed_join_counts(d) for d in self._d_sets)
        self._bases: dict[Element, tuple[Element, ...]] = {}

    def _compute_d_set(self, u: int) -> tuple[int, ...]:
        # u·z ∈ S makes z a right divisor of a simple, so E(u) lives inside S.
        g = self.g
        if u == UNIT:
            return tuple(sorted(g.generator_index.values()))
        extensions = {
            int(g.quotient[u, w])
            for w in np.nonzero(g.leq_left[u])[0]
            if w != u
        }
        return tuple(
            z for z in sorted(extensions)
            if not any(o != z and g.leq_left[o, z] for o in extensions)
        )

    def _signed_join_counts(self, members: Iterable[int]) -> dict[int, int]:
        """Σ (−1)^{|D|} grouped by ⋁D, over subsets D whose join exists."""
        subsets: list[tuple[int, int]] = [(UNIT, 1)]
        for d in members:
            subsets += [
                (int(self.g.join[j, d]), -sign)
                for j, sign in subsets
                if self.g.join[j, d] >= 0
            ]
        counts: dict[int, int] = {}
        for j, sign in subsets:
            counts[j] = counts.get(j, 0) + sign
        return {j: c for j, c in counts.items() if c}

    def d_set(self, u: int) -> tuple[Element, ...]:
        """Minimal elements of E(u) for a simple u."""
        return tuple(self.g.simple_element(z) for z in self._d_sets[u])

    def d_indices(self, u: int) -> tuple[int, ...]:
        return self._d_sets[u]

    def garside_base(self, x: Element) -> tuple[Element, ...]:
        """
        A[x]: normal sequences y of height ≤ τ(x) with x ≤ₗ y and x not dividing y minus its last block.

        A[e] is the whole of S.
        """
        cached = self._bases.get(x)
        if cached is not None:
            return cached
        g = self.g
        if x.is_unit:
            base = tuple(g.simple_element(i) for i in range(len(g)))
        else:
            found: list[Element] = []
            height = x.height

            def extend(prefix: tuple[int, ...]) -> None:
                for y in range(1, len(g)):
                    if prefix and not g.arrow[prefix[-1], y]:
                        continue
                    candidate = g.element(prefix + (y,))
                    if g.left_divides(x, candidate):
                        found.append(candidate)
                    elif len(prefix) + 1 < height:
                        extend(prefix + (y,))

            extend(())
            base = tuple(found)
        self._bases[x] = base
        return base

    def graded_mobius(self, f: ElementFunction, x: Element) -> Number:
        """T f(x) = Σ_{D ⋐ D(x)} (−1)^{|D|} f(x·⋁D)."""
        g = self.g
        total: Number = 0
        for j, sign in self._signed_joins[x.last].items():
            target = x if j == UNIT else g.element(g.normalise(x.blocks + (j,)))
            total += sign * f(target)
        return total

    def inverse_graded_mobius(self, h: ElementFunction, x: Element) -> Number:
        """T* h(x) = Σ_{y ∈ A[x]} h(y)."""
        return sum((h(y) for y in self.garside_base(x)), 0)

    def mobius_polynomial(
        self,
        valuation: "Valuation | None" = None,
        subsets: Literal["sigma", "S"] = "sigma",
    ) -> MobiusPolynomial:
        """
        μ_ω = Σ (−1)^{|D|} ω(⋁D) T^{|⋁D|}.

        ``subsets="sigma"`` sums over D ⋐ Σ. ``subsets="S"`` sums over D ⋐ S ∖ {e},
        which collapses to Σ_z μ(e, z) ω(z) T^{|z|} with μ the Möbius function of (S, ≤ₗ).
        """
        g = self.g

        def weight(i: int) -> Number:
            return 1 if valuation is None else valuation.of_word(g.simples[i])

        coefficients: list[Number] = [0] * (int(g.lengths.max()) + 1)
        if subsets == "sigma":
            counts = self._signed_join_counts(sorted(g.generator_index.values()))
        else:
            counts = self._poset_mobius()
        for j, c in counts.items():
            coefficients[int(g.lengths[j])] += c * weight(j)
        return MobiusPolynomial(_trim(coefficients))

    def _poset_mobius(self) -> dict[int, int]:
        g = self.g
        mu = np.zeros(len(g), dtype=np.int64)
        mu[UNIT] = 1
        for z in range(1, len(g)):
            mu[z] = -mu[:z][g.leq_left[:z, z]].sum()
        return {z: int(m) for z, m in enumerate(mu) if m}

    def check_subset_ranges(self, valuation: "Valuation | None" = None) -> MobiusPolynomial:
        """
        μ_ω over D ⋐ Σ, after checking that the D ⋐ S range gives the same polynomial.

        Raises:
            ConsistencyError: the two ranges differ in some coefficient.
        """
        sigma = self.mobius_polynomial(valuation).coefficients
        over_s = self.mobius_polynomial(valuation, subsets="S").coefficients
        for degree in range(max(len(sigma), len(over_s))):
            a = sigma[degree] if degree < len(sigma) else 0
            b = over_s[degree] if degree < len(over_s) else 0
            if not _agree(a, b):
                raise ConsistencyError(
                    f"Möbius polynomial T^{degree}: subsets of Σ give {a}, subsets of S give {b}",
                    degree=degree,
                )
        return MobiusPolynomial(sigma)

    def growth_coefficients(
        self,
        valuation: "Valuation | None",
        k_max: int,
        cross_check: bool = True,
    ) -> list[Number]:
        """
        Z_ω(0..k_max) from 1/μ_ω, checked against w⁻·M^{k−1}·w⁺ of the CWG
        and against the D ⋐ S range of μ_ω.

        Raises:
            ConsistencyError: the two computations disagree, or the two subset ranges do.
        """
        if cross_check:
            mu = self.check_subset_ranges(valuation).coefficients
        else:
            mu = self.mobius_polynomial(valuation).coefficients
        series: list[Number] = [1]
        for k in range(1, k_max + 1):
            series.append(-sum(mu[i] * series[k - i] for i in range(1, min(k, len(mu) - 1) + 1)))
        if cross_check and k_max >= 1:
            from app.services.cwg import build_cwg, partition_function

            cwg = build_cwg(self.g, valuation, require_irreducible=False)
            for k in range(1, k_max + 1):
                expected = partition_function(cwg, k)
                if not _agree(series[k], expected):
                    raise ConsistencyError(
                        f"growth coefficient k={k}: series inversion gives {series[k]}, "
                        f"matrix powers give {expected}",
                        k=k,
                    )
        return series


def _agree(a: Number, b: Number) -> bool:
    if isinstance(a, (int, Fraction)) and isinstance(b, (int, Fraction)):
        return a == b
    return abs(float(a) - float(b)) <= 1e-9 * max(1.0, abs(float(b)))


def smallest_root_p0(mu: MobiusPolynomial, xtol: float = 1e-15) -> float:
    """
    Root of smallest modulus of μ, required real, simple and inside (0, 1).

    Raises:
        NoPerronRootError: no sign change in (0, 1) or a smaller complex root.
    """
    coefficients = mu.as_floats()
    if mu.degree < 1:
        raise NoPerronRootError(f"constant Möbius polynomial {mu.format()} has no root")
    roots = np.roots(coefficients[::-1])
    smallest = roots[np.argmin(np.abs(roots))]
    if abs(smallest.imag) > 1e-9 or not 0 < smallest.real < 1:
        raise NoPerronRootError(
            f"smallest root of {mu.format()} is {smallest}, not a real number in (0, 1)"
        )
    guess = float(smallest.real)

    def value(t: float) -> float:
        return float(np.polyval(coefficients[::-1], t))

    radius = 1e-9
    while radius < 0.5:
        low, high = max(guess - radius, 0.0), min(guess + radius, 1.0)
        if value(low) * value(high) < 0:
            break
        radius *= 8
    else:
        raise NoPerronRootError(f"no sign change of {mu.format()} around {guess}")
    root = brentq(value, low, high, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
    logger.debug("p0 root=%.16f polynomial=%s", root, mu.format())
    return root
