"""Directed-graph helpers over sparse adjacency matrices."""
from collections import deque
from math import gcd
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components


def as_csr(adjacency) -> csr_matrix:
    matrix = csr_matrix(adjacency)
    matrix.eliminate_zeros()
    return matrix


def strong_components(adjacency) -> tuple[int, np.ndarray]:
    """Number of strongly connected components and the component label of each vertex."""
    count, labels = connected_components(as_csr(adjacency), directed=True, connection="strong")
    return int(count), labels


def successors(matrix: csr_matrix, vertex: int) -> np.ndarray:
    return matrix.indices[matrix.indptr[vertex]:matrix.indptr[vertex + 1]]


def reachable(adjacency, sources: Iterable[int], reverse: bool = False) -> np.ndarray:
    """Boolean mask of vertices reachable from ``sources`` (or reaching them when reverse)."""
    matrix = as_csr(adjacency.T if reverse else adjacency)
    seen = np.zeros(matrix.shape[0], dtype=bool)
    for s in sources:
        if not seen[s]:
            seen[breadth_first_order(matrix, int(s), directed=True, return_predecessors=False)] = True
    return seen


def cycle_gcd(adjacency, weight=None) -> int:
    """
    gcd of the weights of all closed walks, 0 when the graph is acyclic.

    Each strong component gets BFS potentials d along a spanning tree; the cycle
    space is generated by the chords, so the answer is the gcd of
    d(u) + w(u, v) − d(v) over edges inside components.

    Args:
        adjacency: square matrix, nonzero entries are edges
        weight: callable (u, v) -> int, defaults to 1 per edge

    Returns:
        int
    """
    matrix = as_csr(adjacency)
    weight = weight or (lambda u, v: 1)
    _, labels = strong_components(matrix)
    potential = np.full(matrix.shape[0], -1, dtype=np.int64)
    result = 0
    for root in range(matrix.shape[0]):
        if potential[root] >= 0:
            continue
        potential[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in successors(matrix, u):
                if labels[v] != labels[u]:
                    continue
                if potential[v] < 0:
                    potential[v] = potential[u] + weight(u, int(v))
                    queue.append(v)
    for u in range(matrix.shape[0]):
        for v in successors(matrix, u):
            if labels[v] == labels[u]:
                result = gcd(result, abs(int(potential[u] + weight(u, int(v)) - potential[v])))
    return result


def period(adjacency) -> int:
    return cycle_gcd(adjacency)
