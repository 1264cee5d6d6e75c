"""Word problem and divisibility for bounded-length words, straight from the relations."""
import logging
import threading
from collections import defaultdict, deque
from dataclasses import dataclass
from itertools import product
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from app.config import settings
from app.errors import NonConformingPresentationError, WordTooLongError
from app.services.presentation import INFINITY, MonoidPresentation, Word, alternating_word

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WordClass:
    representative: Word
    members: frozenset

    def __len__(self) -> int:
        return len(self.members)

    @property
    def length(self) -> int:
        return len(self.representative)


class WordService:
    """
    Equivalence classes of words under the defining congruence.

    Classes are memoised per presentation; the memo is read without locking and
    written under a lock, and results never depend on what is cached.
    """

    def __init__(self, presentation: MonoidPresentation, class_length_cap: int | None = None):
        self.presentation = presentation
        self.cap = class_length_cap or settings.CLASS_LENGTH_CAP
        self.undecided_lcms = 0

        rules: dict[str, list[tuple[Word, Word]]] = defaultdict(list)
        for u, v in presentation.relations:
            rules[u[0]].append((u, v))
            rules[v[0]].append((v, u))
        self._rules = dict(rules)
        self._classes: dict[Word, WordClass] = {}
        self._joins: dict[tuple[Word, Word, int], Word | None] = {}
        self._lock = threading.Lock()
        self._head_component = self._head_components()

    def _head_components(self) -> dict[str, int]:
        # A word starting with a can equal one starting with b only if a and b are
        # linked by relations whose two sides start with them.
        gens = self.presentation.generators
        index = {g: i for i, g in enumerate(gens)}
        rows = [index[u[0]] for u, v in self.presentation.relations]
        cols = [index[v[0]] for u, v in self.presentation.relations]
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(gens), len(gens)))
        _, labels = connected_components(graph, directed=False)
        return {g: int(labels[index[g]]) for g in gens}

    def word_class(self, w: Sequence[str]) -> WordClass:
        """
        Full equivalence class of w by breadth-first substitution closure.

        Raises:
            WordTooLongError: |w| exceeds the class-length cap.
        """
        w = tuple(w)
        cached = self._classes.get(w)
        if cached is not None:
            return cached
        if len(w) > self.cap:
            raise WordTooLongError(
                f"word of length {len(w)} exceeds the raw-closure cap {self.cap}",
                length=len(w),
                cap=self.cap,
            )
        members = {w}
        queue = deque([w])
        while queue:
            current = queue.popleft()
            for i, letter in enumerate(current):
                for lhs, rhs in self._rules.get(letter, ()):
                    end = i + len(lhs)
                    if current[i:end] == lhs:
                        nxt = current[:i] + rhs + current[end:]
                        if nxt not in members:
                            members.add(nxt)
                            queue.append(nxt)
        cls = WordClass(representative=min(members), members=frozenset(members))
        with self._lock:
            for member in members:
                self._classes.setdefault(member, cls)
        return self._classes[w]

    def canonical(self, w: Sequence[str]) -> Word:
        return self.word_class(w).representative

    def equal(self, u: Sequence[str], v: Sequence[str]) -> bool:
        if len(u) != len(v):
            return False
        return tuple(v) in self.word_class(u).members

    def left_quotient(self, u: Sequence[str], v: Sequence[str]) -> Word | None:
        """Canonical z with u·z = v, or None when u does not left-divide v."""
        u, v = tuple(u), tuple(v)
        if len(u) > len(v):
            return None
        if not u:
            return self.canonical(v)
        prefixes = self.word_class(u).members
        for member in self.word_class(v).members:
            if member[: len(u)] in prefixes:
                return self.canonical(member[len(u):])
        return None

    def right_quotient(self, u: Sequence[str], v: Sequence[str]) -> Word | None:
        """Canonical z with z·u = v, or None when u does not right-divide v."""
        u, v = tuple(u), tuple(v)
        if len(u) > len(v):
            return None
        if not u:
            return self.canonical(v)
        suffixes = self.word_class(u).members
        cut = len(v) - len(u)
        for member in self.word_class(v).members:
            if member[cut:] in suffixes:
                return self.canonical(member[:cut])
        return None

    def left_divides(self, u: Sequence[str], v: Sequence[str]) -> bool:
        return self.left_quotient(u, v) is not None

    def right_divides(self, u: Sequence[str], v: Sequence[str]) -> bool:
        return self.right_quotient(u, v) is not None

    def left_divisors(self, w: Sequence[str]) -> set[Word]:
        """Canonical forms of every left divisor of w (unit included)."""
        return {
            self.canonical(member[:k])
            for member in self.word_class(w).members
            for k in range(len(w) + 1)
        }

    def right_divisors(self, w: Sequence[str]) -> set[Word]:
        return {
            self.canonical(member[k:])
            for member in self.word_class(w).members
            for k in range(len(w) + 1)
        }

    def left_gcd(self, u: Sequence[str], v: Sequence[str]) -> Word:
        """
        Greatest common left divisor.

        Raises:
            NonConformingPresentationError: the common divisors have no greatest element.
        """
        common = self.left_divisors(u) & self.left_divisors(v)
        longest = max(len(c) for c in common)
        top = [c for c in common if len(c) == longest]
        if len(top) > 1 or any(not self.left_divides(c, top[0]) for c in common):
            raise NonConformingPresentationError(
                f"{self._fmt(u)} and {self._fmt(v)} have no greatest common left divisor",
                candidates=[self._fmt(c) for c in top],
            )
        return top[0]

    def left_lcm_bounded(
        self,
        u: Sequence[str],
        v: Sequence[str],
        bound: int | None = None,
        exhaustive: bool = False,
    ) -> Word | None:
        """
        Least common right multiple u ∨ₗ v among classes of length ≤ bound.

        The default mode reduces to generator joins through
        u ∨ σv' = σ·(σ⁻¹(u ∨ σ) ∨ v'); ``exhaustive`` enumerates every common
        multiple length by length and detects ambiguous minima.

        Returns:
            canonical word of the join, or None when nothing is found within bound

        Raises:
            WordTooLongError: bound above the class-length cap.
            NonConformingPresentationError: two distinct minimal common multiples.
        """
        bound = self.cap if bound is None else bound
        if bound > self.cap:
            raise WordTooLongError(f"lcm bound {bound} exceeds the raw-closure cap {self.cap}")
        u, v = self.canonical(u), self.canonical(v)
        if exhaustive:
            result = self._search_join(u, v, bound)
        else:
            result = self._join(u, v, bound)
        if result is None:
            self.undecided_lcms += 1
            logger.debug(
                "lcm not found within bound u=%s v=%s bound=%d", self._fmt(u), self._fmt(v), bound
            )
        return result

    def _join(self, u: Word, v: Word, bound: int) -> Word | None:
        if len(u) > bound or len(v) > bound:
            return None
        if not v or self.left_divides(v, u):
            return u
        if not u or self.left_divides(u, v):
            return v
        key = (u, v, bound)
        if key in self._joins:
            return self._joins[key]
        sigma, rest = v[0], v[1:]
        result = None
        head = self._join_generator(u, sigma, bound)
        if head is not None:
            tail = self._join(self.left_quotient((sigma,), head), self.canonical(rest), bound - 1)
            if tail is not None:
                result = self.canonical((sigma,) + tail)
        with self._lock:
            self._joins[key] = result
        return result

    def _join_generator(self, u: Word, sigma: str, bound: int) -> Word | None:
        if not u:
            return (sigma,)
        if self.left_divides((sigma,), u):
            return u
        tau, rest = u[0], u[1:]
        pair = self._generator_join(tau, sigma, bound)
        if pair is None:
            return None
        tail = self._join(self.left_quotient((tau,), pair), self.canonical(rest), bound - 1)
        if tail is None:
            return None
        return self.canonical((tau,) + tail)

    def _generator_join(self, a: str, b: str, bound: int) -> Word | None:
        if a == b:
            return (a,)
        if self._head_component[a] != self._head_component[b]:
            return None
        m = self.presentation.coxeter_value(a, b)
        if m is not None:
            if m == INFINITY or m > bound:
                return None
            return self.canonical(alternating_word(a, b, int(m)))
        return self._search_join((a,), (b,), bound)

    def _search_join(self, u: Word, v: Word, bound: int) -> Word | None:
        gens = self.presentation.generators
        for length in range(max(len(u), len(v)), bound + 1):
            candidates = {
                self.canonical(u + extension)
                for extension in product(gens, repeat=length - len(u))
            }
            found = sorted(c for c in candidates if self.left_divides(v, c))
            if len(found) == 1:
                return found[0]
            if found:
                raise NonConformingPresentationError(
                    f"{self._fmt(u)} and {self._fmt(v)} have incomparable minimal common multiples",
                    candidates=[self._fmt(c) for c in found],
                )
        return None

    def _fmt(self, w: Iterable[str]) -> str:
        return self.presentation.format_word(tuple(w))
