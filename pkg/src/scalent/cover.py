"""epsilon-entropy of a finite weighted semimetric space.

A cover assigns every point to a cell 0..k. Cell 0 is the error set and must
weigh strictly less than epsilon; every other cell must have diameter strictly
less than epsilon. The epsilon-entropy is log2 of the least feasible k (k >= 1).

Set weights are always computed with :func:`math.fsum`, i.e. correctly
rounded and independent of summation order, so every code path agrees on
boundary ties.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mm_space import as_array

DEFAULT_ORACLE_LIMIT = 15
EXACT = "exact"
GREEDY = "greedy"
ESTIMATORS = (EXACT, GREEDY)


class OracleLimitError(ValueError):
    """Instance too large for the exact search."""


@dataclass(frozen=True, eq=False)
class Cover:
    labels: np.ndarray  # point index -> cell id, 0 is the error set
    k: int
    epsilon: float

    def cells(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.labels == c) for c in range(1, self.k + 1)]

    @property
    def error_set(self) -> np.ndarray:
        return np.flatnonzero(self.labels == 0)


@dataclass(frozen=True, eq=False)
class EntropyValue:
    k: int
    estimator: str
    cover: Cover
    # exact only: the search exhausted every cover with k - 1 cells
    minimal: bool = False

    @property
    def H(self) -> float:
        return math.log2(self.k)

    @property
    def epsilon(self) -> float:
        return self.cover.epsilon


def _check_inputs(matrix, weights, epsilon):
    d = as_array(matrix)
    w = np.asarray(weights, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] != len(w):
        raise ValueError(f"matrix shape {d.shape} does not match {len(w)} weights")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return d, w


def is_valid_cover(cover: Cover, matrix, weights, epsilon: float) -> bool:
    d, w = _check_inputs(matrix, weights, epsilon)
    labels = np.asarray(cover.labels)
    if labels.shape != w.shape or labels.min(initial=0) < 0 or labels.max(initial=0) > cover.k or cover.k < 1:
        return False
    if math.fsum(w[labels == 0].tolist()) >= epsilon:
        return False
    for c in range(1, cover.k + 1):
        idx = np.flatnonzero(labels == c)
        if len(idx) > 1 and d[np.ix_(idx, idx)].max() >= epsilon:
            return False
    return True


def collapse_duplicates(matrix, weights):
    """Merge points with identical distance rows.

    Such points are at distance 0 from each other and interchangeable, and
    some optimal cover always keeps them together, so the epsilon-entropy is
    unchanged. Returns (matrix, weights, group index per original point).
    """
    d = as_array(matrix)
    w = np.asarray(weights, dtype=np.float64)
    _, first, inverse = np.unique(d, axis=0, return_index=True, return_inverse=True)
    inverse = np.asarray(inverse).ravel()
    # order groups by first occurrence so the output is stable
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    group = rank[inverse]
    reps = first[order]
    cw = np.array([math.fsum(w[group == g].tolist()) for g in range(len(reps))])
    return d[np.ix_(reps, reps)], cw, group


# --- exact search ---------------------------------------------------------


def _bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _maximal_cliques(candidates: int, adj: list[int]):
    """Bron-Kerbosch with pivoting over bitmask sets; yields clique masks."""
    out = []

    def bk(r, p, x):
        if not p and not x:
            out.append(r)
            return
        pivot_pool = p | x
        pivot = max(_bits(pivot_pool), key=lambda u: bin(adj[u] & p).count("1"))
        for v in _bits(p & ~adj[pivot]):
            bit = 1 << v
            bk(r | bit, p & adj[v], x & adj[v])
            p &= ~bit
            x |= bit

    bk(0, candidates, 0)
    return out


class _Search:
    """Depth-first branch and bound for the minimum feasible cell count.

    Branches on the uncovered point p with fewest compatible neighbours:
    either p opens a cell equal to a maximal clique of the still-uncovered
    compatibility graph containing p (taking the maximal clique loses
    nothing), or p joins the error set if the budget allows. The lower bound
    counts a greedy independent set of uncovered points, minus how many of
    its lightest members could still be absorbed by the error budget.
    """

    def __init__(self, d, w, eps, best_k, best_cells, best_err):
        n = len(w)
        self.n = n
        self.w = w.tolist()
        self.eps = eps
        self.adj = [0] * n
        for i in range(n):
            row = d[i] < eps
            row[i] = False
            m = 0
            for j in np.flatnonzero(row):
                m |= 1 << int(j)
            self.adj[i] = m
        self.best_k = best_k
        self.best_cells = best_cells
        self.best_err = best_err
        self.seen: dict[int, list] = {}
        self.omega: dict[int, int] = {}
        # float weights are dyadic rationals: scale to exact integers
        fw = [Fraction(x) for x in self.w]
        scale = max(f.denominator for f in fw)
        self.iw = [int(f * scale) for f in fw]
        self.ieps = Fraction(eps) * scale
        self.nodes = 0

    def err_weight(self, err_mask: int) -> float:
        return math.fsum(self.w[i] for i in _bits(err_mask))

    def lower_bound(self, U: int, err_mask: int) -> int:
        indep = []
        rest = U
        while rest:
            v = min(_bits(rest), key=lambda u: bin(self.adj[u] & rest).count("1"))
            indep.append(v)
            rest &= ~(self.adj[v] | (1 << v))
        absorbed = 0
        err_list = [self.w[i] for i in _bits(err_mask)]
        for wv in sorted(self.w[v] for v in indep):
            err_list.append(wv)
            if math.fsum(err_list) < self.eps:
                absorbed += 1
            else:
                break
        return len(indep) - absorbed

    def max_clique_weight(self, U: int) -> int:
        """Heaviest clique inside U in scaled integer weight (branch and bound, colouring bound)."""
        if U in self.omega:
            return self.omega[U]
        w, adj = self.iw, self.adj
        best = 0

        def colour_bound(P: int) -> int:
            # greedy partition of P into independent sets; a clique meets each at most once
            total = 0
            rest = P
            while rest:
                cls, cand, heaviest = 0, rest, 0
                while cand:
                    v = (cand & -cand).bit_length() - 1
                    cls |= 1 << v
                    heaviest = max(heaviest, w[v])
                    cand &= ~(adj[v] | (1 << v))
                total += heaviest
                rest &= ~cls
            return total

        def expand(cw: int, P: int):
            nonlocal best
            if not P:
                best = max(best, cw)
                return
            for v in sorted(_bits(P), key=lambda u: -w[u]):
                if cw + colour_bound(P) <= best:
                    return
                expand(cw + w[v], P & adj[v])
                P &= ~(1 << v)

        expand(0, U)
        self.omega[U] = best
        return best

    def weight_bound_fails(self, U: int, err_mask: int, r: int) -> bool:
        """True if r more cells cannot push the error weight below epsilon.

        A cell containing v lies inside v's closed neighbourhood, so r cells
        cover at most the r heaviest closed-neighbourhood weights; they also
        cover at most r times the heaviest clique.
        """
        if r <= 0:
            return True
        reach = sorted((math.fsum(self.w[i] for i in _bits((self.adj[v] & U) | (1 << v))) for v in _bits(U)),
                       reverse=True)
        if self.err_weight(err_mask | U) - math.fsum(reach[:r]) >= self.eps + 1e-12:
            return True
        # exact integer arithmetic, so ties at epsilon prune soundly
        left = sum(self.iw[i] for i in _bits(err_mask | U)) - r * self.max_clique_weight(U)
        return left >= self.ieps

    def run(self):
        full = (1 << self.n) - 1
        self.rec(full, 0, [])

    def rec(self, U: int, err_mask: int, cells: list[int]):
        self.nodes += 1
        used = len(cells)
        if self.best_k <= 1:
            return
        # only the error weight matters for the future, not which points
        err_w = self.err_weight(err_mask)
        front = self.seen.setdefault(U, [])
        if any(u <= used and e <= err_w for u, e in front):
            return
        front.append((used, err_w))

        if self.err_weight(err_mask | U) < self.eps:
            k = max(used, 1)
            if k < self.best_k:
                self.best_k, self.best_cells, self.best_err = k, list(cells), err_mask | U
            return
        if used + max(self.lower_bound(U, err_mask), 1 if used == 0 else 0) >= self.best_k:
            return
        if self.weight_bound_fails(U, err_mask, self.best_k - 1 - used):
            return

        p = min(_bits(U), key=lambda u: (bin(self.adj[u] & U).count("1"), u))
        cliques = _maximal_cliques(self.adj[p] & U, self.adj)
        cliques = [c | (1 << p) for c in cliques]
        cliques.sort(key=lambda c: (-math.fsum(self.w[i] for i in _bits(c)), c))
        for c in cliques:
            self.rec(U & ~c, err_mask, cells + [c])
            if self.best_k <= used + 1:
                return
        bit = 1 << p
        if self.err_weight(err_mask | bit) < self.eps:
            self.rec(U & ~bit, err_mask | bit, cells)


def exact_entropy(matrix, weights, epsilon: float, oracle_limit: int = DEFAULT_ORACLE_LIMIT) -> EntropyValue:
    """True minimum cell count, with a witness cover.

    Points with identical distance rows are merged first; ``oracle_limit``
    applies to the number of distinct points that remain.
    """
    d, w = _check_inputs(matrix, weights, epsilon)
    n = len(w)
    cd, cw, group = collapse_duplicates(d, w)
    m = len(cw)
    if m > oracle_limit:
        raise OracleLimitError(f"{m} distinct points exceed the exact oracle limit {oracle_limit}")

    # greedy supplies the incumbent; the search then proves or improves it
    start = greedy_entropy(cd, cw, epsilon)
    labels0 = start.cover.labels
    cells0 = []
    for c in range(1, start.k + 1):
        mask = 0
        for i in np.flatnonzero(labels0 == c):
            mask |= 1 << int(i)
        cells0.append(mask)
    err0 = 0
    for i in np.flatnonzero(labels0 == 0):
        err0 |= 1 << int(i)

    search = _Search(cd, cw, epsilon, start.k, cells0, err0)
    search.run()

    small = np.zeros(m, dtype=np.int64)
    covered = 0
    for c, mask in enumerate(search.best_cells, start=1):
        for i in _bits(mask & ~covered):
            small[i] = c
        covered |= mask
    k = max(search.best_k, 1)
    labels = small[group] if n else small
    return EntropyValue(k, EXACT, Cover(labels, k, float(epsilon)), minimal=True)


# --- greedy ---------------------------------------------------------------


def _greedy_once(d, w, epsilon, radius):
    n = len(w)
    ball = d <= radius
    remaining = np.ones(n, dtype=bool)
    gain = ball.astype(np.float64) @ w
    labels = np.zeros(n, dtype=np.int64)
    k = 0
    while math.fsum(w[remaining].tolist()) >= epsilon:
        center = int(np.argmax(gain))
        members = np.flatnonzero(ball[center] & remaining)
        k += 1
        labels[members] = k
        remaining[members] = False
        gain -= ball[:, members].astype(np.float64) @ w[members]
    return labels, k


def greedy_entropy(matrix, weights, epsilon: float) -> EntropyValue:
    """Upper bound via greedy max-weight balls of radius just under epsilon/2."""
    d, w = _check_inputs(matrix, weights, epsilon)
    radius = epsilon / 2 * (1 - 1e-9)
    for _ in range(4):
        labels, k = _greedy_once(d, w, epsilon, radius)
        cover = Cover(labels, max(k, 1), float(epsilon))
        if is_valid_cover(cover, d, w, epsilon):
            return EntropyValue(cover.k, GREEDY, cover)
        radius *= 1 - 1e-9
    # split every offending cell into singletons
    new = np.zeros_like(labels)
    nxt = 0
    for c in range(1, k + 1):
        idx = np.flatnonzero(labels == c)
        if len(idx) > 1 and d[np.ix_(idx, idx)].max() >= epsilon:
            for i in idx:
                nxt += 1
                new[i] = nxt
        else:
            nxt += 1
            new[idx] = nxt
    cover = Cover(new, max(nxt, 1), float(epsilon))
    return EntropyValue(cover.k, GREEDY, cover)


def estimate_entropy(matrix, weights, epsilon: float, estimator: str = EXACT,
                     oracle_limit: int = DEFAULT_ORACLE_LIMIT) -> EntropyValue:
    if estimator == EXACT:
        return exact_entropy(matrix, weights, epsilon, oracle_limit)
    if estimator == GREEDY:
        return greedy_entropy(matrix, weights, epsilon)
    raise ValueError(f"unknown estimator {estimator!r}")


def entropy_curve(matrix, weights, eps_grid: Sequence[float], estimator: str = EXACT,
                  oracle_limit: int = DEFAULT_ORACLE_LIMIT) -> list[EntropyValue]:
    eps = [float(e) for e in eps_grid]
    if not eps:
        raise ValueError("empty epsilon grid")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilon grid must be strictly decreasing")
    return [estimate_entropy(matrix, weights, e, estimator, oracle_limit) for e in eps]
