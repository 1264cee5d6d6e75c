"""Monoid presentations: parsing, built-in families, irreducibility, valuation classes.

A presentation is stored as an alphabet plus length-preserving relation pairs
(u, v). Coxeter-style input (ℓ(a, b) = m) is a front end that expands into the
pair (abab…, baba…) of length m; the Coxeter matrix is kept alongside when the
presentation came from one.
"""
import logging
import math
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from app.errors import PresentationSyntaxError, PresentationValueError

logger = logging.getLogger(__name__)

Word = tuple[str, ...]
INFINITY = math.inf

_SYMBOL = re.compile(r"[^\s.=#|]+")
_UNIT_SPELLINGS = ("", "ε")


def alternating_word(a: str, b: str, length: int) -> Word:
    """The word abab… of the given length."""
    return tuple(a if i % 2 == 0 else b for i in range(length))


@dataclass(frozen=True)
class MonoidPresentation:
    """Alphabet plus length-preserving relations, optionally with its Coxeter matrix."""

    generators: tuple[str, ...]
    relations: tuple[tuple[Word, Word], ...]
    coxeter: dict[frozenset, float] | None = None
    name: str = ""
    defaulted_pairs: tuple[frozenset, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.generators:
            raise PresentationValueError("a presentation needs at least one generator")
        if len(set(self.generators)) != len(self.generators):
            raise PresentationValueError(f"duplicate generators in {self.generators}")
        known = set(self.generators)
        for u, v in self.relations:
            if len(u) != len(v) or not u:
                raise PresentationValueError(
                    f"relation {''.join(u)} = {''.join(v)} is not length preserving"
                )
            unknown = (set(u) | set(v)) - known
            if unknown:
                raise PresentationValueError(f"relation uses unknown symbols {sorted(unknown)}")

    @classmethod
    def from_coxeter(
        cls,
        generators: Sequence[str],
        lengths: dict[frozenset, float],
        name: str = "",
    ) -> "MonoidPresentation":
        """Expand a (partial) Coxeter matrix; missing pairs default to ∞ and are recorded."""
        generators = tuple(generators)
        full: dict[frozenset, float] = {}
        defaulted = []
        relations = []
        for i, a in enumerate(generators):
            for b in generators[i + 1:]:
                pair = frozenset((a, b))
                value = lengths.get(pair)
                if value is None:
                    value = INFINITY
                    defaulted.append(pair)
                if value != INFINITY and (value < 2 or int(value) != value):
                    raise PresentationValueError(f"ℓ({a},{b}) = {value} must be an integer ≥ 2 or inf")
                full[pair] = value
                if value != INFINITY:
                    m = int(value)
                    relations.append((alternating_word(a, b, m), alternating_word(b, a, m)))
        return cls(
            generators=generators,
            relations=tuple(relations),
            coxeter=full,
            name=name,
            defaulted_pairs=tuple(defaulted),
        )

    @property
    def rank(self) -> int:
        return len(self.generators)

    @property
    def single_letter(self) -> bool:
        """True when words can be written without separators."""
        return all(len(g) == 1 for g in self.generators)

    def coxeter_value(self, a: str, b: str) -> float | None:
        """ℓ(a, b) for Coxeter presentations, None for general relation sets."""
        if self.coxeter is None or a == b:
            return None
        return self.coxeter[frozenset((a, b))]

    def commutes(self, a: str, b: str) -> bool:
        """True iff ab = ba is one of the defining relations."""
        if a == b:
            return True
        return any({u, v} == {(a, b), (b, a)} for u, v in self.relations)

    def parse_word(self, text: str) -> Word:
        """Parse a CLI word: single-letter alphabets concatenate, others use '.' separators."""
        text = text.strip()
        if text in _UNIT_SPELLINGS or (text == "e" and "e" not in self.generators):
            return ()
        if "." in text or not self.single_letter:
            letters = tuple(part for part in text.split(".") if part)
        else:
            letters = tuple(text)
        unknown = [s for s in letters if s not in self.generators]
        if unknown:
            raise PresentationValueError(f"unknown generator(s) {unknown} in word {text!r}")
        return letters

    def format_word(self, word: Sequence[str]) -> str:
        if not word:
            return "e"
        return "".join(word) if self.single_letter else ".".join(word)


@dataclass(frozen=True)
class ParamClasses:
    """Partition of the generators by the valuation-parameter relation R̄."""

    classes: tuple[tuple[str, ...], ...]

    @property
    def K(self) -> int:
        return len(self.classes)

    def class_of(self, generator: str) -> tuple[str, ...]:
        for cls in self.classes:
            if generator in cls:
                return cls
        raise KeyError(generator)


@dataclass(frozen=True)
class IrreducibilityReport:
    irreducible: bool
    components: tuple[tuple[str, ...], ...]


def parse_presentation(text: str) -> MonoidPresentation:
    """
    Parse a monoid spec document.

    Grammar (line oriented): ``generators: <sym> …`` exactly once, then any
    number of ``m: <sym> <sym> = <int≥2|inf>``; ``#`` starts a comment.

    Raises:
        PresentationSyntaxError: malformed line (with line and column).
        PresentationValueError: conflicting duplicates, ℓ < 2, unknown symbols.
    """
    generators: list[str] | None = None
    entries: dict[frozenset, tuple[float, int]] = {}
    pending: list[tuple[str, str, float, int, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        column = len(line) - len(line.lstrip()) + 1
        head, sep, rest = line.strip().partition(":")
        if not sep:
            raise PresentationSyntaxError("expected 'generators:' or 'm:'", lineno, column)
        key = head.strip()
        rest_column = column + len(head) + 1
        if key == "generators":
            if generators is not None:
                raise PresentationSyntaxError("'generators:' given twice", lineno, column)
            symbols = rest.split()
            if not symbols:
                raise PresentationSyntaxError("empty generator list", lineno, rest_column)
            for symbol in symbols:
                if not _SYMBOL.fullmatch(symbol):
                    col = line.index(symbol) + 1
                    raise PresentationSyntaxError(f"invalid generator symbol {symbol!r}", lineno, col)
            generators = symbols
        elif key == "m":
            lhs, eq, value_text = rest.partition("=")
            if not eq:
                raise PresentationSyntaxError("expected 'm: <sym> <sym> = <value>'", lineno, rest_column)
            pair = lhs.split()
            if len(pair) != 2:
                raise PresentationSyntaxError("expected exactly two generators", lineno, rest_column)
            value_column = line.index("=") + 2
            value_text = value_text.strip()
            if value_text in ("inf", "∞"):
                value = INFINITY
            elif value_text.isdigit():
                value = int(value_text)
            else:
                raise PresentationSyntaxError(f"invalid value {value_text!r}", lineno, value_column)
            pending.append((pair[0], pair[1], value, lineno, value_column))
        else:
            raise PresentationSyntaxError(f"unknown directive {key!r}", lineno, column)

    if generators is None:
        raise PresentationSyntaxError("missing 'generators:' line", 1, 1)

    known = set(generators)
    for a, b, value, lineno, col in pending:
        for symbol in (a, b):
            if symbol not in known:
                raise PresentationValueError(f"line {lineno}: unknown generator {symbol!r}")
        if a == b:
            logger.debug("ignoring diagonal entry m: %s %s on line %d", a, b, lineno)
            continue
        if value != INFINITY and value < 2:
            raise PresentationValueError(f"line {lineno}: ℓ({a},{b}) = {value} is below 2")
        pair = frozenset((a, b))
        if pair in entries and entries[pair][0] != value:
            raise PresentationValueError(
                f"line {lineno}: ℓ({a},{b}) = {value} conflicts with line {entries[pair][1]}"
            )
        entries[pair] = (value, lineno)

    return MonoidPresentation.from_coxeter(generators, {k: v for k, (v, _) in entries.items()})


def _letters(count: int, prefix: str = "s") -> list[str]:
    if count <= 26:
        return list(string.ascii_lowercase[:count])
    return [f"{prefix}{i}" for i in range(1, count + 1)]


def braid(n: int) -> MonoidPresentation:
    """Positive braid monoid on n strands: n−1 generators, ℓ = 3 adjacent, 2 otherwise."""
    if n < 2:
        raise PresentationValueError(f"braid(n) needs n ≥ 2, got {n}")
    gens = _letters(n - 1)
    lengths = {
        frozenset((gens[i], gens[j])): 3 if j == i + 1 else 2
        for i in range(len(gens))
        for j in range(i + 1, len(gens))
    }
    return MonoidPresentation.from_coxeter(gens, lengths, name=f"braid({n})")


def dihedral(m: int) -> MonoidPresentation:
    if m < 2:
        raise PresentationValueError(f"dihedral(m) needs m ≥ 2, got {m}")
    return MonoidPresentation.from_coxeter(["a", "b"], {frozenset("ab"): m}, name=f"dihedral({m})")


def free(n: int) -> MonoidPresentation:
    if n < 1:
        raise PresentationValueError(f"free(n) needs n ≥ 1, got {n}")
    return MonoidPresentation.from_coxeter(_letters(n), {}, name=f"free({n})")


def heap(generators: Sequence[str], commuting: Sequence[tuple[str, str]]) -> MonoidPresentation:
    """Heap (trace) monoid: ℓ = 2 on the listed pairs, ∞ elsewhere."""
    lengths = {}
    for a, b in commuting:
        if a not in generators or b not in generators or a == b:
            raise PresentationValueError(f"invalid heap edge {a}-{b}")
        lengths[frozenset((a, b))] = 2
    edges = ",".join(f"{a}-{b}" for a, b in commuting)
    return MonoidPresentation.from_coxeter(generators, lengths, name=f"heap({','.join(generators)}; {edges})")


def dual_a(n: int) -> MonoidPresentation:
    """Dual braid monoid of type A on n strands, generators σ_{i,j} written s<i><j>."""
    if n < 2:
        raise PresentationValueError(f"dual_a(n) needs n ≥ 2, got {n}")
    sep = "" if n < 10 else "_"

    def s(i: int, j: int) -> str:
        return f"s{i}{sep}{j}"

    gens = [s(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    relations: list[tuple[Word, Word]] = []
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            for k in range(j + 1, n + 1):
                relations.append(((s(i, j), s(j, k)), (s(j, k), s(i, k))))
                relations.append(((s(j, k), s(i, k)), (s(i, k), s(i, j))))
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    for x, (i, j) in enumerate(pairs):
        for k, l in pairs[x + 1:]:
            if len({i, j, k, l}) < 4:
                continue
            disjoint = j < k or l < i
            nested = (i < k and l < j) or (k < i and j < l)
            if disjoint or nested:
                relations.append(((s(i, j), s(k, l)), (s(k, l), s(i, j))))
    return MonoidPresentation(generators=tuple(gens), relations=tuple(relations), name=f"dual_a({n})")


def free_product(first: MonoidPresentation, second: MonoidPresentation) -> MonoidPresentation:
    """Free product: alphabets concatenated (second relabelled on clashes), cross pairs ∞."""
    rename = {g: g for g in second.generators}
    if set(first.generators) & set(second.generators):
        if first.single_letter and second.single_letter:
            fresh = [c for c in string.ascii_lowercase if c not in first.generators and c != "e"]
            if len(fresh) < second.rank:
                raise PresentationValueError("not enough fresh letters to relabel the free product")
            rename = dict(zip(second.generators, fresh))
        else:
            rename = {g: f"{g}_2" for g in second.generators}
        logger.info("free product relabels second factor: %s", rename)

    gens = first.generators + tuple(rename[g] for g in second.generators)
    relations = first.relations + tuple(
        (tuple(rename[x] for x in u), tuple(rename[x] for x in v)) for u, v in second.relations
    )
    name = f"free_product({first.name or 'P1'}, {second.name or 'P2'})"
    if first.coxeter is not None and second.coxeter is not None:
        lengths = dict(first.coxeter)
        lengths.update({frozenset(rename[x] for x in pair): v for pair, v in second.coxeter.items()})
        return MonoidPresentation.from_coxeter(gens, lengths, name=name)
    return MonoidPresentation(generators=gens, relations=relations, name=name)


FAMILIES = ("braid", "heap", "dihedral", "free", "dual-a", "free-product")


def build_family(family: str, params: Sequence) -> MonoidPresentation:
    """
    Build a built-in family.

    Args:
        family: one of braid, heap, dihedral, free, dual-a (dual_a), free-product.
        params: integer parameter for the numbered families; (generators, edges)
            for heap; two presentations for free-product.

    Returns:
        MonoidPresentation
    """
    key = family.replace("_", "-")
    try:
        if key == "braid":
            return braid(int(params[0]))
        if key == "dihedral":
            return dihedral(int(params[0]))
        if key == "free":
            return free(int(params[0]))
        if key == "dual-a":
            return dual_a(int(params[0]))
        if key == "heap":
            generators, edges = params
            return heap(list(generators), list(edges))
        if key == "free-product":
            first, second = params
            return free_product(first, second)
    except (IndexError, TypeError, ValueError) as exc:
        raise PresentationValueError(f"bad parameters {params!r} for family {family}: {exc}") from exc
    raise PresentationValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}")


def parse_family(text: str, load: Callable[[str], MonoidPresentation] | None = None) -> MonoidPresentation:
    """
    Parse the CLI family syntax: braid:4, heap:a-b,c, dihedral:5, free:3, dual-a:4,
    free-product:<file|family>,<file|family>.
    """
    family, _, arg = text.partition(":")
    family = family.strip().replace("_", "-")
    if family == "heap":
        generators: list[str] = []
        edges: list[tuple[str, str]] = []
        for item in filter(None, (part.strip() for part in arg.split(","))):
            ends = item.split("-")
            if len(ends) > 2 or not all(ends):
                raise PresentationValueError(f"invalid heap item {item!r}")
            for g in ends:
                if g not in generators:
                    generators.append(g)
            if len(ends) == 2:
                edges.append((ends[0], ends[1]))
        if not generators:
            raise PresentationValueError("heap needs at least one generator")
        return build_family("heap", (generators, edges))
    if family == "free-product":
        parts = [p.strip() for p in arg.split(",")]
        if len(parts) != 2:
            raise PresentationValueError("free-product needs exactly two factors")
        return build_family("free-product", [_resolve_factor(p, load) for p in parts])
    if not arg.strip().isdigit():
        raise PresentationValueError(f"family {family!r} needs an integer parameter, got {arg!r}")
    return build_family(family, [int(arg)])


def _resolve_factor(item: str, load: Callable[[str], MonoidPresentation] | None) -> MonoidPresentation:
    path = Path(item)
    if path.exists():
        return (load or load_presentation)(item)
    return parse_family(item, load)


def load_presentation(path: str | Path) -> MonoidPresentation:
    text = Path(path).read_text(encoding="utf-8")
    presentation = parse_presentation(text)
    return MonoidPresentation(
        generators=presentation.generators,
        relations=presentation.relations,
        coxeter=presentation.coxeter,
        name=Path(path).stem,
        defaulted_pairs=presentation.defaulted_pairs,
    )


def _components(generators: Sequence[str], edges: list[tuple[str, str]]) -> tuple[tuple[str, ...], ...]:
    index = {g: i for i, g in enumerate(generators)}
    n = len(generators)
    rows = [index[a] for a, _ in edges]
    cols = [index[b] for _, b in edges]
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    count, labels = connected_components(graph, directed=False)
    groups: list[list[str]] = [[] for _ in range(count)]
    for g in generators:
        groups[labels[index[g]]].append(g)
    return tuple(tuple(group) for group in groups)


def is_irreducible(p: MonoidPresentation) -> IrreducibilityReport:
    """Connectivity of the Coxeter graph (edge iff a and b do not commute)."""
    edges = [
        (a, b)
        for i, a in enumerate(p.generators)
        for b in p.generators[i + 1:]
        if not _commuting_pair(p, a, b)
    ]
    components = _components(p.generators, edges)
    return IrreducibilityReport(irreducible=len(components) == 1, components=components)


def _commuting_pair(p: MonoidPresentation, a: str, b: str) -> bool:
    value = p.coxeter_value(a, b)
    if value is not None:
        return value == 2
    return p.commutes(a, b)


def param_classes(p: MonoidPresentation) -> ParamClasses:
    """
    Partition of Σ by R̄: a and b are related when some relation trades one a for one b.

    For Coxeter presentations this is exactly "ℓ(a, b) finite and odd".
    """
    edges = []
    for u, v in p.relations:
        difference = Counter(u)
        difference.subtract(Counter(v))
        moved = {g: c for g, c in difference.items() if c}
        if not moved:
            continue
        plus = [g for g, c in moved.items() if c == 1]
        minus = [g for g, c in moved.items() if c == -1]
        if len(moved) != 2 or len(plus) != 1 or len(minus) != 1:
            raise PresentationValueError(
                f"relation {p.format_word(u)} = {p.format_word(v)} does not trade one generator for another"
            )
        edges.append((plus[0], minus[0]))
    return ParamClasses(classes=_components(p.generators, edges))
