"""
Smallest Garside subset, normality relation and greedy normal forms.

The simples are enumerated once by closure and every later computation is a
lookup in tables over S:

- quotient[a, b] is the index of a⁻¹b when a ≤ₗ b, else -1;
- head[x, y], tail[x, y] renormalise the pair (x, y) so that head is the
  largest simple left-dividing x·y;
- arrow[x, y] is true iff head[x, y] == x.

Elements are greedy normal sequences of simple indices (index 0 is the unit).
"""
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from app.config import settings
from app.errors import (
    GarsideSetTooLargeError,
    IrreducibilityRequiredError,
    NonConformingPresentationError,
)
from app.services import graphs
from app.services.presentation import MonoidPresentation, Word, is_irreducible
from app.services.words import WordService

logger = logging.getLogger(__name__)

UNIT = 0


@dataclass(frozen=True)
class Element:
    """A monoid element as its normal sequence; the unit is the singleton (0,)."""

    normal: tuple[int, ...]
    length: int

    @property
    def height(self) -> int:
        return len(self.normal)

    @property
    def is_unit(self) -> bool:
        return self.normal == (UNIT,)

    @property
    def blocks(self) -> tuple[int, ...]:
        """Non-unit blocks (empty for the unit)."""
        return () if self.is_unit else self.normal

    @property
    def last(self) -> int:
        return self.normal[-1]


@dataclass(frozen=True)
class CharneyGraph:
    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    strongly_connected: bool
    components: tuple[tuple[int, ...], ...]

    def adjacency(self) -> np.ndarray:
        position = {v: i for i, v in enumerate(self.vertices)}
        matrix = np.zeros((len(self.vertices), len(self.vertices)), dtype=bool)
        for x, y in self.edges:
            matrix[position[x], position[y]] = True
        return matrix


@dataclass(frozen=True)
class AxiomCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class AxiomReport:
    checks: tuple[AxiomCheck, ...]
    notes: tuple[str, ...] = field(default=())

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> AxiomCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)


class GarsideStructure:
    """Simples of a presentation with their divisibility and renormalisation tables."""

    def __init__(self, presentation: MonoidPresentation, words: WordService, simples: Sequence[Word]):
        self.presentation = presentation
        self.words = words
        self.simples: tuple[Word, ...] = tuple(simples)
        n = len(self.simples)
        self.lengths = np.array([len(s) for s in self.simples], dtype=np.int64)

        self.index: dict[Word, int] = {}
        for i, s in enumerate(self.simples):
            for member in words.word_class(s).members:
                self.index[member] = i
        self.generator_index = {g: self.index[(g,)] for g in presentation.generators}
        self.generator_of = {i: g for g, i in self.generator_index.items()}

        quotient = np.full((n, n), -1, dtype=np.int64)
        leq_right = np.zeros((n, n), dtype=bool)
        letters: list[frozenset] = []
        closed_left = True
        for b, s in enumerate(self.simples):
            members = words.word_class(s).members
            letters.append(frozenset(x for m in members for x in m))
            for member in members:
                for k in range(len(s) + 1):
                    suffix = self.index[member[k:]]
                    leq_right[suffix, b] = True
                    prefix = self.index.get(member[:k])
                    if prefix is None:
                        closed_left = False
                    else:
                        quotient[prefix, b] = suffix
        self.quotient = quotient
        self.leq_left = quotient >= 0
        self.leq_right = leq_right
        self.letter_sets = tuple(letters)
        self.is_fc = closed_left

        tops = [d for d in range(n) if self.leq_left[:, d].all()]
        self.delta: int | None = tops[0] if tops else None

        self.join = self._join_table()
        self.head, self.tail = self._renorm_tables()
        self.arrow = self.head == np.arange(n)[:, None]
        self._head_rows = self.head.tolist()
        self._tail_rows = self.tail.tolist()
        for table in (self.quotient, self.leq_left, self.leq_right, self.join, self.head, self.tail, self.arrow):
            table.setflags(write=False)

    def __len__(self) -> int:
        return len(self.simples)

    @property
    def is_spherical(self) -> bool:
        return self.delta is not None

    def _join_table(self) -> np.ndarray:
        n = len(self.simples)
        join = np.full((n, n), -1, dtype=np.int64)
        for a in range(n):
            for b in range(a, n):
                upper = np.nonzero(self.leq_left[a] & self.leq_left[b])[0]
                if upper.size == 0:
                    continue
                least = upper[np.argmin(self.lengths[upper])]
                if not self.leq_left[least, upper].all():
                    raise NonConformingPresentationError(
                        f"simples {self.format(a)} and {self.format(b)} have no least common multiple in S"
                    )
                join[a, b] = join[b, a] = least
        return join

    def _renorm_tables(self) -> tuple[np.ndarray, np.ndarray]:
        # head(x·y) is the longest simple z with x ≤ₗ z and x⁻¹z ≤ₗ y.
        n = len(self.simples)
        head = np.empty((n, n), dtype=np.int64)
        tail = np.empty((n, n), dtype=np.int64)
        columns = np.arange(n)
        for x in range(n):
            above = np.nonzero(self.quotient[x] >= 0)[0]
            steps = self.quotient[x, above]
            fits = self.leq_left[steps, :].T
            scores = np.where(fits, self.lengths[above][None, :], -1)
            best = scores.argmax(axis=1)
            head[x] = above[best]
            tail[x] = self.quotient[steps[best], columns]
        return head, tail

    def format(self, i: int) -> str:
        return self.presentation.format_word(self.simples[i])

    def format_element(self, x: Element, separator: str = " | ") -> str:
        return separator.join(self.format(i) for i in x.normal)

    def element(self, normal: Sequence[int]) -> Element:
        normal = tuple(int(i) for i in normal) or (UNIT,)
        return Element(normal=normal, length=int(sum(self.lengths[i] for i in normal)))

    def simple_element(self, i: int) -> Element:
        return self.element((i,))

    @property
    def unit(self) -> Element:
        return self.element((UNIT,))

    def word_of(self, x: Element) -> Word:
        return tuple(letter for i in x.blocks for letter in self.simples[i])

    def normalise(self, factors: Sequence[int]) -> tuple[int, ...]:
        """Normal sequence of an arbitrary product of simples."""
        f = [x for x in factors if x != UNIT]
        changed = True
        while changed:
            changed = False
            for i in range(len(f) - 2, -1, -1):
                a = self._head_rows[f[i]][f[i + 1]]
                if a != f[i]:
                    f[i], f[i + 1] = a, self._tail_rows[f[i]][f[i + 1]]
                    changed = True
            if changed:
                f = [x for x in f if x != UNIT]
        return tuple(f) or (UNIT,)

    def left_quotient(self, x: Element, y: Element) -> Element | None:
        """x⁻¹y when x ≤ₗ y, else None; peels the letters of x off the head of y."""
        blocks = list(y.blocks)
        for letter in self.word_of(x):
            s = self.generator_index[letter]
            if not blocks or not self.leq_left[s, blocks[0]]:
                return None
            blocks[0] = int(self.quotient[s, blocks[0]])
            blocks = [b for b in self.normalise(blocks) if b != UNIT]
        return self.element(blocks)

    def left_divides(self, x: Element, y: Element) -> bool:
        return self.left_quotient(x, y) is not None


def compute_garside(
    p: MonoidPresentation,
    size_cap: int | None = None,
    words: WordService | None = None,
) -> GarsideStructure:
    """
    Close Σ ∪ {e} under right divisors and existing ∨ₗ.

    Joins are searched within 2 × (longest known simple), and never below twice
    the longest relation, so generator joins are always in reach.

    Raises:
        GarsideSetTooLargeError: more simples than ``size_cap``.
    """
    words = words or WordService(p)
    size_cap = size_cap or settings.GARSIDE_CAP
    floor = 2 * max((len(u) for u, _ in p.relations), default=1)
    simples: set[Word] = {()} | {(g,) for g in p.generators}
    attempted: dict[tuple[Word, Word], float] = {}
    passes = 0
    while True:
        passes += 1
        added: set[Word] = set()
        for s in simples:
            added |= words.right_divisors(s) - simples
        known = simples | added
        bound = min(max(2 * max(len(s) for s in known), floor), words.cap)
        ordered = sorted(known)
        for i, u in enumerate(ordered):
            for v in ordered[i + 1:]:
                if not u or attempted.get((u, v), -1) >= bound:
                    continue
                joined = words.left_lcm_bounded(u, v, bound)
                if joined is None:
                    attempted[(u, v)] = bound
                    continue
                attempted[(u, v)] = float("inf")
                if joined not in known:
                    added.add(joined)
                    known.add(joined)
        logger.info(
            "garside closure pass=%d simples=%d added=%d bound=%d undecided_lcms=%d",
            passes, len(simples), len(added), bound, words.undecided_lcms,
        )
        if not added:
            break
        simples |= added
        if len(simples) > size_cap:
            raise GarsideSetTooLargeError(
                f"Garside closure of {p.name or 'presentation'} exceeded {size_cap} simples",
                simples=len(simples),
                passes=passes,
                longest=max(len(s) for s in simples),
                undecided_lcms=words.undecided_lcms,
            )
    ordered = sorted(simples, key=lambda s: (len(s), s))
    return GarsideStructure(p, words, ordered)


def arrow(g: GarsideStructure, x: int, y: int) -> bool:
    """x → y: x is the join of all simples left-dividing x·y."""
    return bool(g.arrow[x, y])


def normal_form(g: GarsideStructure, w: Sequence[str]) -> Element:
    """Greedy normal form by absorbing one generator at a time."""
    factors: tuple[int, ...] = ()
    for letter in w:
        factors = g.normalise(factors + (g.generator_index[letter],))
    return g.element(factors)


def multiply(g: GarsideStructure, x: Element, y: Element) -> Element:
    return g.element(g.normalise(x.blocks + y.blocks))


@dataclass(frozen=True)
class LetterSets:
    left: frozenset
    right: frozenset
    letters: frozenset


def lr_sets(g: GarsideStructure, x: int) -> LetterSets:
    """L(x), R(x) and 𝓛(x); "ℓ(σ, η) = ∞" is read as "σ ∨ₗ η does not exist"."""
    gens = g.presentation.generators
    left = frozenset(s for s in gens if g.leq_left[g.generator_index[s], x])
    letters = g.letter_sets[x]
    right = {s for s in gens if g.leq_right[g.generator_index[s], x]}
    for s in gens:
        for eta in letters:
            if s != eta and g.join[g.generator_index[s], g.generator_index[eta]] < 0:
                right.add(s)
    return LetterSets(left=left, right=frozenset(right), letters=letters)


def normality_criterion(g: GarsideStructure, x: int, y: int) -> bool:
    """Sufficient condition L(y) ⊆ R(x) for x → y."""
    return lr_sets(g, y).left <= lr_sets(g, x).right


def charney_graph(g: GarsideStructure) -> CharneyGraph:
    """
    Arrow relation on S ∖ {e} (also minus Δ in spherical type).

    Raises:
        IrreducibilityRequiredError: on reducible presentations.
    """
    report = is_irreducible(g.presentation)
    if not report.irreducible:
        raise IrreducibilityRequiredError(
            f"{g.presentation.name or 'monoid'} is reducible; components {report.components}"
        )
    vertices = tuple(i for i in range(1, len(g)) if i != g.delta)
    sub = g.arrow[np.ix_(vertices, vertices)]
    edges = tuple((vertices[i], vertices[j]) for i, j in zip(*np.nonzero(sub)))
    count, labels = graphs.strong_components(sub)
    components = tuple(
        tuple(v for v, label in zip(vertices, labels) if label == c) for c in range(count)
    )
    return CharneyGraph(vertices=vertices, edges=edges, strongly_connected=count == 1, components=components)


def is_type_fc(g: GarsideStructure) -> bool:
    return g.is_fc


def check_axioms(g: GarsideStructure, samples: int = 200, seed: int | None = None) -> AxiomReport:
    """Spot checks of the axioms P1–P7; failures are reported, never raised."""
    rng = np.random.default_rng(settings.SEED if seed is None else seed)
    p = g.presentation
    words = g.words
    checks = []

    bad = [(u, v) for u, v in p.relations if len(u) != len(v) or not u]
    checks.append(AxiomCheck("P1", not bad, f"{len(p.relations)} relations, {len(bad)} not length preserving"))

    violations = 0
    gens = np.array(p.generators, dtype=object)
    max_length = min(8, words.cap)
    for _ in range(samples):
        z = tuple(rng.choice(gens, size=int(rng.integers(2, max_length + 1))))
        for member in words.word_class(z).members:
            for k in range(1, len(z)):
                if words.equal(member[:k], z[:k]) and not words.equal(member[k:], z[k:]):
                    violations += 1
                if words.equal(member[k:], z[k:]) and not words.equal(member[:k], z[:k]):
                    violations += 1
    checks.append(AxiomCheck("P2", violations == 0, f"{samples} sampled words, {violations} cancellation failures"))

    failures = 0
    n = len(g)
    pairs = min(samples, n * n)
    for _ in range(pairs):
        a, b = (int(i) for i in rng.integers(0, n, size=2))
        try:
            words.left_gcd(g.simples[a], g.simples[b])
        except NonConformingPresentationError:
            failures += 1
    checks.append(AxiomCheck("P3", failures == 0, f"{pairs} sampled pairs, {failures} without a gcd"))

    checks.append(AxiomCheck("P4", True, f"finite Garside subset with {n} simples"))

    notes = []
    try:
        charney = charney_graph(g)
    except IrreducibilityRequiredError as exc:
        charney = None
        checks.append(AxiomCheck("P5", False, exc.message))
    if charney is not None:
        checks.append(AxiomCheck(
            "P5",
            charney.strongly_connected,
            f"{len(charney.vertices)} vertices, {len(charney.components)} strong components",
        ))

    # closed walks z_1 → … → z_k → z_1 over every non-unit simple, Δ included
    nonunit = np.flatnonzero(np.arange(n) != UNIT)
    period = graphs.cycle_gcd(
        g.arrow[np.ix_(nonunit, nonunit)], lambda u, v: int(g.lengths[nonunit[v]])
    )
    checks.append(AxiomCheck("P6", period == 1, f"gcd of cycle lengths over S∖{{e}} = {period}"))

    if charney is not None:
        adjacency = charney.adjacency()
        if g.delta is not None:
            degree = adjacency.sum(axis=1)
            branching = int((degree >= 2).sum())
            checks.append(AxiomCheck("P7", branching > 0, f"{branching} vertices with out-degree ≥ 2"))
        else:
            checks.append(AxiomCheck("P7", True, "no Δ; out-degree condition not required"))
    else:
        checks.append(AxiomCheck("P7", False, "Charney graph unavailable"))
    if g.delta is not None and p.rank == 2:
        notes.append(
            "spherical with two generators: some normal-additive statistics have no Gaussian limit"
        )
    return AxiomReport(checks=tuple(checks), notes=tuple(notes))
