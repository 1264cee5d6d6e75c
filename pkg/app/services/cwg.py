"""
Conditioned weighted graphs (CWGs).

A CWG is a non-negative matrix M over a finite state set with two boundary
vectors w⁻ and w⁺; the weight of a path s₁ … s_k is
w⁻(s₁) M(s₁, s₂) ⋯ M(s_{k−1}, s_k) w⁺(s_k) and Z_k = w⁻·M^{k−1}·w⁺.

Monoid CWGs have one state (x, i) per letter position of each non-unit simple x;
a path of k states is an element of length k, cut into blocks at the states
(x, |x|).
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import TYPE_CHECKING, Hashable, Sequence

import numpy as np
from scipy.sparse import bmat, csr_matrix, diags, eye, issparse
from scipy.sparse.linalg import eigs, factorized, spsolve

from app.config import settings
from app.errors import (
    ConsistencyError,
    CwgConditionError,
    EmptyPathSpaceError,
    IrreducibilityRequiredError,
    PerronConvergenceError,
    PerronStructureError,
)
from app.services import graphs
from app.services.garside import UNIT, GarsideStructure
from app.services.mobius import Number
from app.services.presentation import MonoidPresentation, is_irreducible

if TYPE_CHECKING:
    from app.services.measures import Valuation

logger = logging.getLogger(__name__)

# strong components up to this size get a dense eigensolve
DENSE_LIMIT = 1500

# rounding floor of the second differences of log λ at steps 1e-3 and 2e-3
FD_NOISE = 1e-8


def ensure_irreducible(p: MonoidPresentation) -> None:
    """
    Raises:
        IrreducibilityRequiredError: reducible, or fewer than two generators.
    """
    report = is_irreducible(p)
    if not report.irreducible or p.rank < 2:
        raise IrreducibilityRequiredError(
            f"{p.name or 'monoid'} must be irreducible with at least two generators "
            f"(components {report.components})",
            components=[list(c) for c in report.components],
        )


@dataclass(frozen=True)
class Cwg:
    """
    Triple (M, w⁻, w⁺) over labelled states.

    ``entries`` holds the nonzero (row, column, weight) triples exactly as built;
    ``exact`` is true when every weight is an int or a Fraction.
    """

    states: tuple[Hashable, ...]
    entries: tuple[tuple[int, int, Number], ...]
    w_minus: tuple[Number, ...]
    w_plus: tuple[Number, ...]
    exact: bool = True

    def __len__(self) -> int:
        return len(self.states)

    @cached_property
    def matrix(self) -> csr_matrix:
        n = len(self.states)
        if not self.entries:
            return csr_matrix((n, n))
        rows, cols, values = zip(*self.entries)
        return csr_matrix(
            (np.array([float(v) for v in values]), (np.array(rows), np.array(cols))),
            shape=(n, n),
        )

    @cached_property
    def rows(self) -> tuple[tuple[tuple[int, Number], ...], ...]:
        out: list[list[tuple[int, Number]]] = [[] for _ in self.states]
        for i, j, w in self.entries:
            out[i].append((j, w))
        return tuple(tuple(row) for row in out)

    @property
    def w_minus_array(self) -> np.ndarray:
        return np.array([float(w) for w in self.w_minus])

    @property
    def w_plus_array(self) -> np.ndarray:
        return np.array([float(w) for w in self.w_plus])

    @classmethod
    def from_absorbing_chain(cls, transitions, start: int) -> "Cwg":
        """
        CWG of the surviving paths of an absorbing chain.

        Args:
            transitions: (N+1)×(N+1) stochastic matrix, state 0 absorbing
            start: initial state in 1..N

        Returns:
            Cwg on states 1..N with M = the sub-stochastic restriction, w⁻ = δ_start, w⁺ = 1
        """
        P = csr_matrix(transitions, dtype=float)
        Q = P[1:, 1:].tocoo()
        n = Q.shape[0]
        if not 1 <= start <= n:
            raise ValueError(f"start state {start} outside 1..{n}")
        entries = tuple(
            (int(i), int(j), float(v)) for i, j, v in zip(Q.row, Q.col, Q.data) if v > 0
        )
        return cls(
            states=tuple(range(1, n + 1)),
            entries=entries,
            w_minus=tuple(1.0 if i == start - 1 else 0.0 for i in range(n)),
            w_plus=(1.0,) * n,
            exact=False,
        )

    def to_coordinate_text(self) -> str:
        """``row col value`` lines, preceded by the state labels and boundary vectors."""
        lines = [f"# states {len(self)}"]
        lines += [f"# {k} {label} w-={self.w_minus[k]} w+={self.w_plus[k]}" for k, label in enumerate(self.states)]
        lines += [f"{i} {j} {w}" for i, j, w in sorted(self.entries, key=lambda e: (e[0], e[1]))]
        return "\n".join(lines) + "\n"


def build_cwg(
    g: GarsideStructure,
    valuation: "Valuation | None" = None,
    require_irreducible: bool = True,
) -> Cwg:
    """
    CWG of a monoid under a valuation (ω ≡ 1 when omitted).

    Chain edges (x, i) → (x, i+1) have weight 1, block edges (x, |x|) → (y, 1)
    weight ω(y) whenever x → y; w⁻(x, 1) = ω(x) and w⁺(x, |x|) = 1.

    Raises:
        IrreducibilityRequiredError: when ``require_irreducible`` and the monoid is reducible.
    """
    if require_irreducible:
        ensure_irreducible(g.presentation)

    def weight(x: int) -> Number:
        return 1 if valuation is None else valuation.of_word(g.simples[x])

    states = [(x, i) for x in range(1, len(g)) for i in range(1, int(g.lengths[x]) + 1)]
    position = {s: k for k, s in enumerate(states)}
    weights = {x: weight(x) for x in range(1, len(g))}
    entries: list[tuple[int, int, Number]] = []
    w_minus: list[Number] = [0] * len(states)
    w_plus: list[Number] = [0] * len(states)
    for x in range(1, len(g)):
        length = int(g.lengths[x])
        for i in range(1, length):
            entries.append((position[(x, i)], position[(x, i + 1)], 1))
        end = position[(x, length)]
        for y in np.flatnonzero(g.arrow[x]):
            if y != UNIT:
                entries.append((end, position[(int(y), 1)], weights[int(y)]))
        w_minus[position[(x, 1)]] = weights[x]
        w_plus[end] = 1
    exact = valuation is None or valuation.exact
    logger.info("cwg built states=%d edges=%d exact=%s", len(states), len(entries), exact)
    return Cwg(
        states=tuple(states),
        entries=tuple(entries),
        w_minus=tuple(w_minus),
        w_plus=tuple(w_plus),
        exact=exact,
    )


def lift_to_states(c: Cwg, g: GarsideStructure, values: Sequence[float]) -> np.ndarray:
    """F̃(x, i) = F(x) at the last letter of a block, 0 elsewhere."""
    return np.array([
        float(values[x]) if i == g.lengths[x] else 0.0
        for x, i in c.states
    ])


@dataclass(frozen=True)
class BackwardVectors:
    """
    b_m = M^m·w⁺ for m < k.

    Exact vectors are stored as they are; float vectors are rescaled to max 1
    and the true vector is exp(log_scale[m])·vectors[m].
    """

    vectors: tuple
    log_scale: tuple[float, ...]
    exact: bool


def _apply_exact(c: Cwg, vector: Sequence[Number]) -> list[Number]:
    return [sum((w * vector[j] for j, w in row), 0) for row in c.rows]


def backward_vectors(c: Cwg, k: int, exact: bool | None = None) -> BackwardVectors:
    exact = c.exact if exact is None else exact
    if exact:
        current: list = list(c.w_plus)
        vectors = [current]
        for _ in range(1, k):
            current = _apply_exact(c, current)
            vectors.append(current)
        return BackwardVectors(tuple(vectors), (0.0,) * len(vectors), True)
    M = c.matrix
    current = c.w_plus_array
    scale = 0.0
    vectors, scales = [current], [scale]
    for _ in range(1, k):
        current = M @ current
        top = current.max()
        if top > 0:
            current = current / top
            scale += math.log(top)
        vectors.append(current)
        scales.append(scale)
    return BackwardVectors(tuple(vectors), tuple(scales), False)


def partition_function(c: Cwg, k: int) -> Number:
    """Z_k = w⁻·M^{k−1}·w⁺, exact when the CWG is; Z_0 = 1 (the unit)."""
    if k < 0:
        raise ValueError(f"negative length {k}")
    if k == 0:
        return 1
    b = backward_vectors(c, k)
    last = b.vectors[-1]
    if b.exact:
        return sum((w * v for w, v in zip(c.w_minus, last)), 0)
    return float(c.w_minus_array @ last) * math.exp(b.log_scale[-1])


@dataclass(frozen=True, eq=False)
class PerronData:
    """
    Perron triple of a CWG.

    ``case`` is "A" for a primitive matrix, "B" when the dominant strong
    component is closed (K = number of states outside it) and "general"
    otherwise.
    """

    lam: float
    left: np.ndarray
    right: np.ndarray
    pi: np.ndarray
    case: str
    K: int
    dominant: np.ndarray
    residual_right: float
    residual_left: float
    iterations: int

    @property
    def reachable(self) -> np.ndarray:
        return self.right > 0


def _spectral_radius(block) -> float:
    if block.nnz == 0:
        return 0.0
    if block.shape[0] <= DENSE_LIMIT:
        return float(np.abs(np.linalg.eigvals(block.toarray())).max())
    values = eigs(block.astype(float), k=1, which="LM", return_eigenvectors=False)
    return float(np.abs(values).max())


def _polish(A: csr_matrix, lam: float, x: np.ndarray, support: np.ndarray, steps: int = 3) -> np.ndarray:
    # backward iteration at a shift just above λ
    idx = np.flatnonzero(support)
    sub = A[idx][:, idx]
    try:
        solve = factorized((sub - lam * (1 + 1e-10) * eye(len(idx))).tocsc())
    except RuntimeError:
        return x
    y = x[idx]
    for _ in range(steps):
        z = solve(y)
        if not np.all(np.isfinite(z)) or z.sum() == 0:
            return x
        z = np.clip(z * np.sign(z.sum()), 0.0, None)
        y = z / z.sum()
    out = np.zeros_like(x)
    out[idx] = y
    return out


def _dominant_vector(
    A: csr_matrix,
    lam: float,
    support: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, int]:
    n = A.shape[0]
    shifted = (A + 0.25 * lam * eye(n, format="csr")).tocsr()
    x = support.astype(float)
    x /= x.sum()
    for iteration in range(1, max_iter + 1):
        y = shifted @ x
        y[~support] = 0.0
        y /= y.sum()
        if np.abs(y - x).max() <= tol * y.max():
            break
        x = y
    else:
        raise PerronConvergenceError(
            f"power iteration did not converge within {max_iter} iterations",
            max_iter=max_iter,
            change=float(np.abs(y - x).max()),
        )
    return _polish(A, lam, y, support), iteration


def perron(c: Cwg, tol: float | None = None, max_iter: int | None = None) -> PerronData:
    """
    Perron eigenvalue, left/right eigenvectors and stationary vector of M.

    Strong components are solved separately to locate the dominant one; the
    eigenvectors come from shifted power iteration on M and Mᵀ restricted to the
    states that reach (resp. are reached from) that component, polished by a few
    backward-iteration steps.

    Raises:
        PerronStructureError: no cycle, several dominant components, or a periodic dominant component.
        PerronConvergenceError: power iteration exceeded ``max_iter``.
        CwgConditionError: w⁻·r = 0 or ℓ·w⁺ = 0.
    """
    tol = settings.TOL if tol is None else tol
    max_iter = settings.MAX_ITER if max_iter is None else max_iter
    M = c.matrix
    n = M.shape[0]
    if n == 0:
        raise PerronStructureError("CWG has no states")
    count, labels = graphs.strong_components(M)
    radii = np.zeros(count)
    for component in range(count):
        idx = np.flatnonzero(labels == component)
        radii[component] = _spectral_radius(M[idx][:, idx])
    top = radii.max()
    if top <= 0:
        raise PerronStructureError("M is nilpotent: the graph has no cycle")
    leaders = np.flatnonzero(radii >= top * (1 - 1e-9))
    if len(leaders) > 1:
        raise PerronStructureError(
            f"{len(leaders)} strong components share the spectral radius {top:.12g}",
            components=len(leaders),
        )
    dominant = labels == leaders[0]
    dom_idx = np.flatnonzero(dominant)
    period = graphs.period(M[dom_idx][:, dom_idx])
    if period != 1:
        raise PerronStructureError(
            f"dominant component has period {period}: {period} eigenvalues of modulus {top:.12g}",
            period=period,
        )

    r_support = graphs.reachable(M, dom_idx, reverse=True)
    l_support = graphs.reachable(M, dom_idx)
    right, it_right = _dominant_vector(M, top, r_support, tol, max_iter)
    left, it_left = _dominant_vector(M.T.tocsr(), top, l_support, tol, max_iter)
    lam = float(left @ (M @ right) / (left @ right))
    right = right / right.max()
    left = left / (left @ right)
    pi = left * right

    residual_right = float(np.abs(M @ right - lam * right).max())
    residual_left = float(np.abs(M.T @ left - lam * left).max())
    if c.w_minus_array @ right <= 0:
        raise CwgConditionError("w⁻·r = 0: no initial state reaches the dominant component")
    if left @ c.w_plus_array <= 0:
        raise CwgConditionError("ℓ·w⁺ = 0: no final state is reached from the dominant component")

    outside = n - int(dominant.sum())
    if count == 1:
        case, K = "A", 0
    elif not (l_support & ~dominant).any():
        case, K = "B", outside
    else:
        case, K = "general", outside
    logger.info(
        "perron lambda=%.15g case=%s K=%d components=%d iterations=%d residuals=%.2e/%.2e",
        lam, case, K, count, max(it_right, it_left), residual_right, residual_left,
    )
    return PerronData(
        lam=lam,
        left=left,
        right=right,
        pi=pi,
        case=case,
        K=K,
        dominant=dominant,
        residual_right=residual_right,
        residual_left=residual_left,
        iterations=max(it_right, it_left),
    )


def growth_constant(c: Cwg, pd: PerronData) -> float:
    """C with Z_k ~ C·λ^k."""
    return float((c.w_minus_array @ pd.right) * (pd.left @ c.w_plus_array) / pd.lam)


@dataclass(frozen=True, eq=False)
class LimitChain:
    h: np.ndarray
    P: csr_matrix
    pi: np.ndarray
    unreachable: frozenset[int]


def limit_chain(pd: PerronData, c: Cwg) -> LimitChain:
    """
    Weak limit of the path laws: h(i) = w⁻(i)r(i)/(w⁻·r), P = λ⁻¹ M_{ij} r(j)/r(i).

    Rows of states with r(i) = 0 are uniform over out-neighbours (a self-loop
    when there are none); such states are listed in ``unreachable``.
    """
    M = c.matrix.tocoo()
    r = pd.right
    w_minus = c.w_minus_array
    h = w_minus * r / (w_minus @ r)
    supported = r > 0
    keep = supported[M.row] & supported[M.col]
    rows = list(M.row[keep])
    cols = list(M.col[keep])
    data = list(M.data[keep] * r[M.col[keep]] / (pd.lam * r[M.row[keep]]))
    matrix = c.matrix
    for i in np.flatnonzero(~supported):
        out = graphs.successors(matrix, int(i))
        targets = out if len(out) else np.array([i])
        rows += [int(i)] * len(targets)
        cols += [int(t) for t in targets]
        data += [1.0 / len(targets)] * len(targets)
    P = csr_matrix((np.array(data), (np.array(rows), np.array(cols))), shape=matrix.shape)
    sums = np.asarray(P.sum(axis=1)).ravel()
    logger.debug("limit chain max row-sum defect=%.2e", float(np.abs(sums - 1).max()))
    P = (diags(1.0 / sums) @ P).tocsr()
    if h[~supported].any():
        raise ConsistencyError("initial law charges a state with r = 0")
    return LimitChain(
        h=h,
        P=P,
        pi=pd.pi,
        unreachable=frozenset(int(i) for i in np.flatnonzero(~supported)),
    )


def chain_window(lc: LimitChain, j: int) -> dict[tuple[int, ...], float]:
    """Law of the first j+1 states of the limit chain."""
    out: dict[tuple[int, ...], float] = {}

    def walk(path: tuple[int, ...], mass: float) -> None:
        if len(path) == j + 1:
            out[path] = mass
            return
        last = path[-1]
        start, stop = lc.P.indptr[last], lc.P.indptr[last + 1]
        for t, p in zip(lc.P.indices[start:stop], lc.P.data[start:stop]):
            if p > 0:
                walk(path + (int(t),), mass * p)

    for s in np.flatnonzero(lc.h):
        walk((int(s),), float(lc.h[s]))
    return out


def window_distribution(c: Cwg, k: int, j: int) -> dict[tuple[int, ...], Number]:
    """
    Law of the first j+1 states of a path of k states under μ_k.

    Exact (Fractions) on exact CWGs. Each prefix gets its forward weight times
    the backward vector M^{k−1−j}·w⁺ at its last state, over Z_k.

    Raises:
        EmptyPathSpaceError: Z_k = 0.
    """
    if not 0 <= j < k:
        raise ValueError(f"window size {j} must satisfy 0 <= j < k = {k}")
    b = backward_vectors(c, k)
    full = b.vectors[k - 1]
    total = sum((w * v for w, v in zip(c.w_minus, full)), 0)
    if total == 0:
        raise EmptyPathSpaceError(f"no weighted path of {k} states", k=k)
    tail = b.vectors[k - 1 - j]
    if b.exact:
        total = Fraction(total)
    else:
        total = float(total) * math.exp(b.log_scale[k - 1] - b.log_scale[k - 1 - j])
    out: dict[tuple[int, ...], Number] = {}

    def walk(path: tuple[int, ...], weight: Number) -> None:
        last = path[-1]
        if len(path) == j + 1:
            mass = weight * tail[last]
            if mass:
                out[path] = mass / total
            return
        for t, w in c.rows[last]:
            walk(path + (t,), weight * w)

    for s, w in enumerate(c.w_minus):
        if w:
            walk((s,), w)
    return out


def asymptotic_mean(pd: PerronData, f: Sequence[float]) -> float:
    """γ_f = Σ π(i) f(i)."""
    return float(pd.pi @ np.asarray(f, dtype=float))


def finite_mean(c: Cwg, k: int, f: Sequence[float]) -> float:
    """
    E[Σ_t f(X_t)] over the weighted paths of k states.

    The law of X_t is proportional to (w⁻M^t)(i)·(M^{k−1−t}w⁺)(i); forward and
    backward vectors are rescaled at each step, so any k is safe.

    Raises:
        EmptyPathSpaceError: Z_k = 0.
    """
    if k < 1:
        raise ValueError(f"path length {k} must be at least 1")
    values = np.asarray(f, dtype=float)
    backward = backward_vectors(c, k, exact=False).vectors
    forward = c.w_minus_array
    transposed = c.matrix.T.tocsr()
    total = 0.0
    for t in range(k):
        weight = forward * backward[k - 1 - t]
        mass = weight.sum()
        if mass <= 0:
            raise EmptyPathSpaceError(f"no weighted path of {k} states", k=k)
        total += float(weight @ values) / mass
        forward = transposed @ forward
        top = forward.max()
        if top > 0:
            forward = forward / top
    return total


@dataclass(frozen=True)
class VarianceReport:
    sigma2: float
    finite_difference: float
    perturbation: float
    mean: float
    degenerate: bool
    relative_gap: float


def _log_lambda(block, centred: np.ndarray, u: float) -> float:
    tilted = (diags(np.exp(u * centred)) @ block).tocsr()
    return math.log(_spectral_radius(tilted))


def _finite_difference(M: csr_matrix, pd: PerronData, centred: np.ndarray) -> float:
    idx = np.flatnonzero(pd.dominant)
    block = M[idx][:, idx]
    fc = centred[idx]
    base = _log_lambda(block, fc, 0.0)

    def second(step: float) -> float:
        return (_log_lambda(block, fc, step) - 2 * base + _log_lambda(block, fc, -step)) / step**2

    coarse, fine = second(2e-3), second(1e-3)
    return (4 * fine - coarse) / 3


def _perturbation(M: csr_matrix, pd: PerronData, centred: np.ndarray) -> float:
    # bordered system [[M − λI, r], [ℓ, 0]]·[r′; c] = [−λ f∘r; 0] on the support of r
    idx = np.flatnonzero(pd.right > 0)
    sub = M[idx][:, idx].tocsr()
    r, l, fc = pd.right[idx], pd.left[idx], centred[idx]
    lam = pd.lam
    system = bmat(
        [[sub - lam * eye(len(idx)), csr_matrix(r[:, None])], [csr_matrix(l[None, :]), None]],
        format="csc",
    )
    rhs = np.concatenate([-lam * fc * r, [0.0]])
    solution = spsolve(system, rhs)
    g = solution[: len(idx)] / r
    coo = sub.tocoo()
    terms = l[coo.row] * (fc[coo.row] - g[coo.row] + g[coo.col]) ** 2 * coo.data * r[coo.col]
    return float(terms.sum() / lam)


def asymptotic_variance(c: Cwg, pd: PerronData, f: Sequence[float]) -> VarianceReport:
    """
    σ² = (log λ)''(0) for the tilted matrices Diag(e^{u(f − γ_f)})·M.

    Computed by Richardson-extrapolated central differences on the dominant
    component and by the eigenvector perturbation formula. A gap above
    ``settings.VARIANCE_CROSS_CHECK`` relative (plus the rounding floor of the
    differences) raises unless the statistic is degenerate.

    Raises:
        ConsistencyError: the two methods disagree.
    """
    f = np.asarray(f, dtype=float)
    mean = asymptotic_mean(pd, f)
    centred = f - mean
    M = c.matrix
    fd = _finite_difference(M, pd, centred)
    pert = _perturbation(M, pd, centred)
    scale = max(abs(fd), abs(pert))
    gap = abs(fd - pert) / scale if scale > 0 else 0.0
    degenerate = abs(pert) <= settings.DEGENERACY_TOL and abs(fd) <= FD_NOISE
    tolerance = settings.VARIANCE_CROSS_CHECK * scale + FD_NOISE
    if not degenerate and abs(fd - pert) > tolerance:
        raise ConsistencyError(
            f"variance methods disagree: finite differences {fd:.12g}, perturbation {pert:.12g}",
            finite_difference=fd,
            perturbation=pert,
        )
    if degenerate:
        logger.info("degenerate statistic: variance %.3e below %.0e", abs(pert), settings.DEGENERACY_TOL)
    return VarianceReport(
        sigma2=0.0 if degenerate else pert,
        finite_difference=fd,
        perturbation=pert,
        mean=mean,
        degenerate=degenerate,
        relative_gap=gap,
    )


def survival_transition_matrix(transitions, horizon: int) -> np.ndarray:
    """
    P(Y₁ = j | Y₀ = i, T > horizon) for an absorbing chain (state 0 absorbing).

    With s_n = Qⁿ·1 the survival probabilities, the entry is Q_ij s_{h−1}(j)/s_h(i).
    Rows are indexed by the transient states 1..N.
    """
    P = transitions.toarray() if issparse(transitions) else np.asarray(transitions, dtype=float)
    Q = P[1:, 1:]
    survival = np.ones(Q.shape[0])
    for _ in range(horizon - 1):
        survival = Q @ survival
        survival /= survival.max()
    survived = Q @ survival
    with np.errstate(divide="ignore", invalid="ignore"):
        out = Q * survival[None, :] / survived[:, None]
    return np.nan_to_num(out)
