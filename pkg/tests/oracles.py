"""Brute-force reference implementations the engine is checked against."""
from itertools import product

from app.services.garside import Element, GarsideStructure
from app.services.measures import BoundaryChain
from app.services.presentation import MonoidPresentation, Word


class UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}
        self.rank = {x: 0 for x in items}

    def find(self, x):
        y = self.parent[x]
        if self.parent[y] != y:
            y = self.parent[x] = self.find(y)
        return y

    def union(self, x, y):
        x, y = self.find(x), self.find(y)
        if x == y:
            return
        if self.rank[x] < self.rank[y]:
            x, y = y, x
        elif self.rank[x] == self.rank[y]:
            self.rank[x] += 1
        self.parent[y] = x

    def groups(self) -> list[frozenset]:
        out: dict = {}
        for x in self.parent:
            out.setdefault(self.find(x), set()).add(x)
        return [frozenset(members) for members in out.values()]


def enumerate_classes(p: MonoidPresentation, max_length: int) -> dict[int, list[frozenset]]:
    """Equivalence classes of all words of each length ≤ max_length, by single relation moves."""
    sides = [(u, v) for u, v in p.relations] + [(v, u) for u, v in p.relations]
    out = {0: [frozenset({()})]}
    for length in range(1, max_length + 1):
        words = list(product(p.generators, repeat=length))
        uf = UnionFind(words)
        for w in words:
            for lhs, rhs in sides:
                for i in range(length - len(lhs) + 1):
                    if w[i:i + len(lhs)] == lhs:
                        uf.union(w, w[:i] + rhs + w[i + len(lhs):])
        out[length] = uf.groups()
    return out


def brute_arrow(g: GarsideStructure, x: int, y: int) -> bool:
    """x → y iff every simple left-dividing x·y left-divides x (so x is their join)."""
    words = g.words
    xy = g.simples[x] + g.simples[y]
    return all(
        words.left_divides(z, g.simples[x])
        for z in g.simples
        if words.left_divides(z, xy)
    )


def elements_up_to(g: GarsideStructure, max_length: int) -> list[Element]:
    """Every element of length ≤ max_length, as normal sequences built from the arrow table."""
    found = [g.unit]

    def extend(prefix: tuple[int, ...], length: int) -> None:
        for y in range(1, len(g)):
            total = length + int(g.lengths[y])
            if total > max_length or (prefix and not g.arrow[prefix[-1], y]):
                continue
            blocks = prefix + (y,)
            found.append(g.element(blocks))
            extend(blocks, total)

    extend((), 0)
    return found


def _word_of_blocks(g: GarsideStructure, blocks) -> Word:
    return tuple(letter for b in blocks for letter in g.simples[b])


def brute_garside_base(g: GarsideStructure, x: Element) -> list[Element]:
    """Normal sequences y with τ(y) ≤ τ(x), x ≤ₗ y, and x not dividing y with its last block removed."""
    if x.is_unit:
        return [g.simple_element(i) for i in range(len(g))]
    target = g.word_of(x)
    out = []

    def extend(prefix: tuple[int, ...]) -> None:
        for y in range(1, len(g)):
            if prefix and not g.arrow[prefix[-1], y]:
                continue
            blocks = prefix + (y,)
            word = _word_of_blocks(g, blocks)
            if len(word) > g.words.cap:
                continue
            if g.words.left_divides(target, word):
                if not g.words.left_divides(target, _word_of_blocks(g, prefix)):
                    out.append(g.element(blocks))
            elif len(blocks) < x.height:
                extend(blocks)

    extend(())
    return out


def brute_measure_check(bc: BoundaryChain, x: Element):
    """ν(↑̄x) as the sum of cylinder masses over a brute-force Garside base of x."""
    return sum((bc.cylinder_mass(y) for y in brute_garside_base(bc.g, x)), 0)