"""Maximize the pairing objective over measure preserving involutions.

Over equal-measure cells an involution is a partition of the indices into
fixed points and 2-cycles, so the objective splits into per-index diagonal
terms plus per-pair surpluses. Maximizing it is exactly a maximum-weight
matching problem (not necessarily perfect) on the reduced pair weights,
which the primary path solves with an exact blossom matcher. A brute-force
enumerator certifies small instances and a hill climber covers sizes past
the matching budget.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .domain import (
    DiscreteDomain,
    Involution,
    SampledField,
    check_pairing,
)

__all__ = [
    "PairWeightMatrix",
    "DualSolution",
    "dual_objective",
    "distance_objective",
    "build_weights",
    "involution_count",
    "all_involutions",
    "solve_brute",
    "solve_matching",
    "refine_local",
    "lp_bound",
    "lp_relaxation",
    "solve",
]

BRUTE_LIMIT = 12
LOCAL_THRESHOLD = 2000
LP_CAP = 400


@dataclass(frozen=True)
class PairWeightMatrix:
    """Expansion of the involution objective over pairs and fixed points.

    diag[i] is the fixed-point payoff <u_i, x_i>; w[i, j] is the payoff of
    the 2-cycle {i, j}; reduced[i, j] = w[i, j] - diag[i] - diag[j] is the
    surplus of pairing i with j over leaving both fixed. Both matrices are
    exactly symmetric (computed once per unordered pair).
    """

    diag: np.ndarray
    w: np.ndarray
    reduced: np.ndarray

    @property
    def n(self) -> int:
        return self.diag.shape[0]


def _pairing_matrix(dom: DiscreteDomain, fld: SampledField) -> np.ndarray:
    """C[i, j] = <u_i, x_j>."""
    check_pairing(dom, fld)
    return fld.values @ dom.points.T


def build_weights(dom: DiscreteDomain, fld: SampledField) -> PairWeightMatrix:
    c = _pairing_matrix(dom, fld)
    diag = np.diag(c).copy()
    w = c + c.T  # addition commutes, so w is symmetric bit for bit
    iu, ju = np.triu_indices(dom.n, k=1)
    red = np.zeros_like(w)
    upper = w[iu, ju] - diag[iu] - diag[ju]
    red[iu, ju] = upper
    red[ju, iu] = upper
    np.fill_diagonal(w, diag)
    return PairWeightMatrix(diag, w, red)


def dual_objective(dom: DiscreteDomain, fld: SampledField, s: Involution) -> float:
    """Measure-weighted pairing sum of an involution."""
    if s.n != dom.n:
        raise ValueError("involution length does not match domain")
    c = _pairing_matrix(dom, fld)
    return float(c[np.arange(dom.n), s.sigma].sum() * dom.cell_measure)


def distance_objective(dom: DiscreteDomain, fld: SampledField, s: Involution) -> float:
    """Squared distance of the field to the involution, measure weighted."""
    if s.n != dom.n:
        raise ValueError("involution length does not match domain")
    diff = fld.values - dom.points[s.sigma]
    return float((diff * diff).sum() * dom.cell_measure)


@dataclass(frozen=True)
class DualSolution:
    sigma: Involution
    value: float
    method: str  # "brute" | "matching" | "local"
    optimality: str  # "exact" | "heuristic"
    bound: float | None = None


# ---------------------------------------------------------------------------
# brute force oracle


def involution_count(n: int) -> int:
    """Telephone numbers, I(n) = I(n-1) + (n-1) I(n-2)."""
    a, b = 1, 1
    for k in range(2, n + 1):
        a, b = b, b + (k - 1) * a
    return b if n >= 1 else 1


@functools.lru_cache(maxsize=None)
def all_involutions(n: int) -> np.ndarray:
    """Every involution of {0..n-1}, rows in lexicographic order of sigma."""
    out: list[tuple[int, ...]] = []
    sig = list(range(n))

    def rec(free: tuple[int, ...]) -> None:
        if not free:
            out.append(tuple(sig))
            return
        i = free[0]
        rec(free[1:])  # i fixed, lexicographically first
        for jdx in range(1, len(free)):
            j = free[jdx]
            sig[i], sig[j] = j, i
            rec(free[1:jdx] + free[jdx + 1 :])
            sig[i], sig[j] = i, j

    rec(tuple(range(n)))
    arr = np.array(out, dtype=np.intp)
    arr.flags.writeable = False
    return arr


def solve_brute(dom: DiscreteDomain, fld: SampledField) -> DualSolution:
    """Enumerate every involution; exact and lex-smallest among ties."""
    n = dom.n
    if n > BRUTE_LIMIT:
        raise ValueError(
            f"brute enumeration capped at n={BRUTE_LIMIT} "
            f"(I({n}) = {involution_count(n)} involutions)"
        )
    c = _pairing_matrix(dom, fld)
    sigs = all_involutions(n)
    vals = c[np.arange(n)[None, :], sigs].sum(axis=1) * dom.cell_measure
    k = int(np.argmax(vals))  # first max = lexicographically smallest optimum
    return DualSolution(Involution(sigs[k]), float(vals[k]), "brute", "exact")


# ---------------------------------------------------------------------------
# matching reduction


def solve_matching(dom: DiscreteDomain, fld: SampledField) -> DualSolution:
    """Exact maximum via blossom matching on the reduced pair surpluses.

    Only strictly positive surpluses can improve on fixed points, so only
    those edges enter the graph; unmatched vertices stay fixed.
    """
    n = dom.n
    weights = build_weights(dom, fld)
    sigma = np.arange(n)
    if n > 1:
        iu, ju = np.triu_indices(n, k=1)
        pos = weights.reduced[iu, ju] > 0.0
        g = nx.Graph()
        g.add_nodes_from(range(n))
        for i, j, w in zip(iu[pos], ju[pos], weights.reduced[iu, ju][pos]):
            g.add_edge(int(i), int(j), weight=float(w))
        for a, b in nx.max_weight_matching(g, maxcardinality=False):
            sigma[a], sigma[b] = b, a
    s = Involution(sigma)
    return DualSolution(s, dual_objective(dom, fld, s), "matching", "exact")


# ---------------------------------------------------------------------------
# local search fallback


def refine_local(
    dom: DiscreteDomain,
    fld: SampledField,
    start: Involution,
    max_iters: int = 10_000,
) -> DualSolution:
    """Hill climb from a starting involution.

    Moves: break a pair into two fixed points, join two fixed points into a
    pair, swap partners between two pairs. Each sweep collects improving
    moves, then applies them greedily by gain on disjoint index sets, so
    the value never decreases and large instances converge in few sweeps.
    """
    if start.n != dom.n:
        raise ValueError("involution length does not match domain")
    weights = build_weights(dom, fld)
    red = weights.reduced
    sigma = start.sigma.copy()
    n = dom.n

    for _ in range(max_iters):
        moves = _improving_moves(red, sigma, n)
        if not moves:
            break
        moves.sort(key=lambda m: -m[0])
        touched = np.zeros(n, dtype=bool)
        applied = False
        for _gain, involved, assign in moves:
            if touched[list(involved)].any():
                continue
            for src, dst in assign:
                sigma[src] = dst
            touched[list(involved)] = True
            applied = True
        if not applied:
            break

    s = Involution(sigma)
    return DualSolution(s, dual_objective(dom, fld, s), "local", "heuristic")


def _improving_moves(red, sigma, n):
    """Positive-gain moves of the three kinds, capped per kind at 4n."""
    idx = np.arange(n)
    heads = np.flatnonzero(idx < sigma)
    tails = sigma[heads]
    fixed = np.flatnonzero(sigma == idx)
    cap = 4 * n
    moves = []

    if heads.size:
        gains = -red[heads, tails]
        for k in _top_positive(gains, cap):
            i, j = int(heads[k]), int(tails[k])
            moves.append((float(gains[k]), (i, j), [(i, i), (j, j)]))
    if fixed.size > 1:
        sub = np.triu(red[np.ix_(fixed, fixed)], 1)
        for k in _top_positive(sub.ravel(), cap):
            a, b = divmod(int(k), fixed.size)
            i, j = int(fixed[a]), int(fixed[b])
            moves.append((float(sub[a, b]), (i, j), [(i, j), (j, i)]))
    if heads.size > 1:
        base = red[heads, tails]
        straight = (
            red[np.ix_(heads, heads)]
            + red[np.ix_(tails, tails)]
            - base[:, None]
            - base[None, :]
        )
        crossed = (
            red[np.ix_(heads, tails)]
            + red[np.ix_(tails, heads)]
            - base[:, None]
            - base[None, :]
        )
        for gmat, cross in ((np.triu(straight, 1), False), (np.triu(crossed, 1), True)):
            for k in _top_positive(gmat.ravel(), cap):
                a, b = divmod(int(k), heads.size)
                i, j = int(heads[a]), int(tails[a])
                p, q = int(heads[b]), int(tails[b])
                if cross:
                    p, q = q, p
                moves.append(
                    (float(gmat[a, b]), (i, j, p, q), [(i, p), (p, i), (j, q), (q, j)])
                )
    return moves


def _top_positive(flat, cap):
    """Indices of the largest strictly positive entries, at most cap of them."""
    if flat.size > cap:
        cand = np.argpartition(-flat, cap - 1)[:cap]
    else:
        cand = np.arange(flat.size)
    cand = cand[flat[cand] > 0]
    return cand[np.argsort(-flat[cand], kind="stable")]


# ---------------------------------------------------------------------------
# fractional relaxation


def lp_relaxation(
    dom: DiscreteDomain, fld: SampledField, cap: int = LP_CAP
) -> tuple[float, np.ndarray, np.ndarray]:
    """Relax over symmetric doubly stochastic couplings.

    Variables are the diagonal and strict upper triangle of a symmetric
    nonnegative matrix with unit row sums. Returns the bound together with
    the optimal diagonal and upper-triangle entries, which the primal
    solver reuses to seed its cut pool (their support marks the binding
    pieces at the optimum).
    """
    n = dom.n
    if n > cap:
        raise ValueError(f"dense relaxation capped at n={cap}, got n={n}")
    weights = build_weights(dom, fld)
    if n == 1:
        return float(weights.diag[0] * dom.cell_measure), np.ones(1), np.zeros(0)
    iu, ju = np.triu_indices(n, k=1)
    nvar = n + len(iu)
    cobj = np.concatenate([weights.diag, weights.w[iu, ju]])
    rows = np.concatenate([np.arange(n), iu, ju])
    cols = np.concatenate([np.arange(n), n + np.arange(len(iu)), n + np.arange(len(iu))])
    a_eq = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, nvar)
    )
    res = linprog(-cobj, A_eq=a_eq, b_eq=np.ones(n), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"relaxation LP failed: {res.message}")
    return float(-res.fun * dom.cell_measure), res.x[:n], res.x[n:]


def lp_bound(dom: DiscreteDomain, fld: SampledField, cap: int = LP_CAP) -> float:
    """Upper bound on every involution value (the relaxation optimum)."""
    return lp_relaxation(dom, fld, cap)[0]


# ---------------------------------------------------------------------------
# dispatcher


def solve(
    dom: DiscreteDomain,
    fld: SampledField,
    method: str = "auto",
    local_threshold: int = LOCAL_THRESHOLD,
    lp_cap: int = LP_CAP,
    seed: int = 0,
) -> DualSolution:
    """Pick the solver path: exact matching up to the size threshold, then
    greedy-start local search with the relaxation bound attached when the
    dense LP is still affordable."""
    if method == "brute":
        return solve_brute(dom, fld)
    if method == "matching" or (method == "auto" and dom.n <= local_threshold):
        return solve_matching(dom, fld)
    if method not in ("auto", "local"):
        raise ValueError(f"unknown dual method {method!r}")
    start = _greedy_start(dom, fld, seed)
    sol = refine_local(dom, fld, start)
    bound = None
    if dom.n <= lp_cap:
        bound = lp_bound(dom, fld, lp_cap)
    return DualSolution(sol.sigma, sol.value, "local", "heuristic", bound)


def _greedy_start(dom: DiscreteDomain, fld: SampledField, seed: int) -> Involution:
    """Pair indices greedily by descending positive surplus."""
    weights = build_weights(dom, fld)
    n = dom.n
    iu, ju = np.triu_indices(n, k=1)
    vals = weights.reduced[iu, ju]
    order = np.argsort(-vals, kind="stable")
    sigma = np.arange(n)
    used = np.zeros(n, dtype=bool)
    for k in order:
        if vals[k] <= 0:
            break
        i, j = int(iu[k]), int(ju[k])
        if not used[i] and not used[j]:
            sigma[i], sigma[j] = j, i
            used[i] = used[j] = True
    return Involution(sigma)
