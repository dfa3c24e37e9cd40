"""
Balanced sign selection over the error matrix.

Given M (|G| x N_s), find s in {+-1}^N_s with sum(s) in {-1, +1} minimizing ||M s||_inf.
Solvers:
    1. exhaustive enumeration (small N_s, proven optimal)
    2. tower greedy, level by level through the cyclotomic tower
    3. L^p-homotopy local search with balance-preserving moves
    4. LP relaxation of the minimax MILP (certified lower bound)
    5. best-first branch and bound on the MILP

Negating s leaves ||M s||_inf unchanged, so the enumerating solvers only visit sum(s) = +1.
"""

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from MODRED.base.LogUnits import ErrorMatrix, error_matrix, tower_level
from MODRED.base.utils import BudgetExceededException, SolverException

logger = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (2.0, 8.0, 32.0, math.inf)
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class SignProblem:
    """
    Attributes:
        matrix (ErrorMatrix): The error matrix; N_s = |G| - 1 columns.
    """
    matrix: ErrorMatrix

    def __post_init__(self):
        if self.matrix.N_s % 2 != 1:
            raise ValueError(f"Sign problem needs an odd number of variables, got {self.matrix.N_s}")

    @classmethod
    def for_k(cls, k: int, column_offset: int = 1) -> "SignProblem":
        return cls(error_matrix(k, column_offset))

    @property
    def M(self) -> np.ndarray:
        return self.matrix.M

    @property
    def k(self) -> int:
        return self.matrix.k

    @property
    def N_s(self) -> int:
        return self.matrix.N_s

    @property
    def G(self) -> int:
        return self.matrix.G

    def discrepancy(self, s: np.ndarray) -> float:
        return float(np.max(np.abs(self.M @ np.asarray(s, dtype=float))))


@dataclass
class SignSolution:
    """
    Attributes:
        s (np.ndarray): Sign vector in {+-1}^N_s.
        discrepancy (float): ||M s||_inf.
        status (str): "optimal", "heuristic" or "bound-only".
        method (str): Solver that produced it.
        lower_bound (float, optional): Certified lower bound on the balanced optimum.
        nodes (int): Branch-and-bound nodes solved.
        wall_time_ms (float): Solver wall time.
        k (int): Conductor exponent.
    """
    s: np.ndarray
    discrepancy: float
    status: str
    method: str
    lower_bound: Optional[float] = None
    nodes: int = 0
    wall_time_ms: float = 0.0
    k: int = 0

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.int64)
        if not np.all(np.abs(self.s) == 1):
            raise ValueError("Sign vector entries must be +1 or -1")
        if self.status not in ("optimal", "heuristic", "bound-only"):
            raise ValueError(f"Invalid status {self.status!r}")

    @property
    def balanced(self) -> bool:
        return abs(int(self.s.sum())) == 1

    @property
    def N_s(self) -> int:
        return int(self.s.size)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "N_s": self.N_s,
            "method": self.method,
            "status": self.status,
            "discrepancy": self.discrepancy,
            "lower_bound": self.lower_bound,
            "s": [int(v) for v in self.s],
            "nodes": self.nodes,
            "wall_time_ms": self.wall_time_ms,
        }


def _canonical(s: np.ndarray) -> np.ndarray:
    return -s if s.sum() < 0 else s


def _elapsed_ms(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def solve_exhaustive(prob: SignProblem, limit: int = 20) -> SignSolution:
    """
    Enumerate every balanced sign vector with sum(s) = +1.

    Raises:
        BudgetExceededException: If N_s exceeds ``limit``.
    """
    N = prob.N_s
    if N > limit:
        raise BudgetExceededException(f"Exhaustive search over N_s={N} exceeds the budget of {limit}")
    start = time.perf_counter()
    plus_count = (N + 1) // 2
    combos = itertools.combinations(range(N), plus_count)
    best_s, best_val = None, math.inf
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        S = -np.ones((len(chunk), N))
        rows = np.repeat(np.arange(len(chunk)), plus_count)
        S[rows, np.array(chunk).ravel()] = 1.0
        values = np.abs(S @ prob.M.T).max(axis=1)
        i = int(np.argmin(values))
        if values[i] < best_val:
            best_val, best_s = float(values[i]), S[i].copy()
    logger.info(f"Exhaustive k={prob.k}: delta*={best_val:.6f}")
    return SignSolution(
        best_s, best_val, "optimal", "exhaustive",
        lower_bound=best_val, wall_time_ms=_elapsed_ms(start), k=prob.k,
    )


def _best_block_assignment(partial: np.ndarray, block: np.ndarray) -> np.ndarray:
    # first minimizer in product order (+1 before -1)
    width = block.shape[1]
    candidates = itertools.product((1.0, -1.0), repeat=width)
    best, best_val = None, math.inf
    while True:
        chunk = list(itertools.islice(candidates, _CHUNK))
        if not chunk:
            break
        C = np.array(chunk)
        values = np.abs(partial[None, :] + C @ block.T).max(axis=1)
        i = int(np.argmin(values))
        if values[i] < best_val:
            best_val, best = values[i], C[i]
    return best


def tower_greedy(prob: SignProblem, level_enum_limit: int = 0) -> SignSolution:
    """
    Assign signs level by level (L = 3 .. k), in orbit order within a level, each sign chosen
    to minimize the partial ||M s||_inf so far (+1 on ties). Deterministic; no balance
    constraint is imposed.

    Args:
        level_enum_limit (int): Levels with at most this many new signs are instead assigned
            jointly by enumeration. The default 0 is the purely sequential greedy that
            reproduces the reference discrepancy column.
    """
    start = time.perf_counter()
    k = prob.k
    positions = prob.matrix.positions
    levels = np.array([tower_level(int(p), k) for p in positions])
    s = np.zeros(prob.N_s)
    partial = np.zeros(prob.G)
    for L in sorted(set(levels.tolist())):
        cols = np.flatnonzero(levels == L)
        block = prob.M[:, cols]
        if cols.size <= level_enum_limit:
            choice = _best_block_assignment(partial, block)
            s[cols] = choice
            partial = partial + block @ choice
        else:
            for c in cols:
                plus = np.abs(partial + prob.M[:, c]).max()
                minus = np.abs(partial - prob.M[:, c]).max()
                s[c] = 1.0 if plus <= minus else -1.0
                partial = partial + s[c] * prob.M[:, c]
    value = prob.discrepancy(s)
    if abs(int(s.sum())) != 1:
        logger.warning(f"Tower greedy at k={k} is unbalanced (sum={int(s.sum())})")
    logger.info(f"Tower greedy k={k}: {value:.6f}")
    return SignSolution(s, value, "heuristic", "greedy", wall_time_ms=_elapsed_ms(start), k=k)


def alternating_start(prob: SignProblem) -> np.ndarray:
    """s_c = (-1)^position(c): the sign pattern of the index-2 subgroup, balanced, sum +1."""
    s = np.where(prob.matrix.positions % 2 == 0, 1.0, -1.0)
    return _canonical(s)


def _random_balanced(N: int, rng: np.random.Generator) -> np.ndarray:
    s = -np.ones(N)
    s[rng.permutation(N)[: (N + 1) // 2]] = 1.0
    return s


def _pnorm(R: np.ndarray, p: float) -> np.ndarray:
    A = np.abs(R)
    top = A.max(axis=-1)
    if math.isinf(p):
        return top
    safe = np.where(top > 0, top, 1.0)
    return top * ((A / safe[..., None]) ** p).sum(axis=-1) ** (1.0 / p)


def _descend(M: np.ndarray, s: np.ndarray, p: float, max_iter: int) -> np.ndarray:
    s = s.copy()
    r = M @ s
    value = float(_pnorm(r, p))
    for _ in range(max_iter):
        plus = np.flatnonzero(s > 0)
        minus = np.flatnonzero(s < 0)
        # swap a +1 at i with a -1 at j: r - 2 M_i + 2 M_j
        swaps = r[None, None, :] - 2 * M[:, plus].T[:, None, :] + 2 * M[:, minus].T[None, :, :]
        swap_vals = _pnorm(swaps, p)
        # single flips that move sum(s) between +1 and -1
        flippable = plus if s.sum() > 0 else minus
        flips = r[None, :] - 2 * s[flippable][:, None] * M[:, flippable].T
        flip_vals = _pnorm(flips, p)

        best_swap = np.unravel_index(int(np.argmin(swap_vals)), swap_vals.shape) if swap_vals.size else None
        best_flip = int(np.argmin(flip_vals)) if flip_vals.size else None
        swap_val = swap_vals[best_swap] if best_swap is not None else math.inf
        flip_val = flip_vals[best_flip] if best_flip is not None else math.inf
        if min(swap_val, flip_val) >= value - 1e-12 * max(value, 1.0):
            break
        if swap_val <= flip_val:
            i, j = plus[best_swap[0]], minus[best_swap[1]]
            s[i], s[j] = -1.0, 1.0
            value = float(swap_val)
        else:
            i = flippable[best_flip]
            s[i] = -s[i]
            value = float(flip_val)
        r = M @ s
    return s


def local_search(
    prob: SignProblem,
    seed: int = 0,
    schedule: Sequence[float] = DEFAULT_SCHEDULE,
    restarts: int = 4,
    max_iter: int = 2000,
) -> SignSolution:
    """
    L^p-homotopy local search: descend on ||M s||_p for p stepped through ``schedule``,
    from the alternating start and ``restarts`` random balanced starts. Moves keep
    sum(s) in {-1, +1}. The best sup-norm seen at any stage is returned.
    """
    start = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(seed))
    starts = [alternating_start(prob)] + [_random_balanced(prob.N_s, rng) for _ in range(restarts)]
    best_s, best_val = None, math.inf
    for s in starts:
        for p in schedule:
            s = _descend(prob.M, s, float(p), max_iter)
            value = prob.discrepancy(s)
            if value < best_val:
                best_val, best_s = value, s.copy()
    logger.info(f"Local search k={prob.k} seed={seed}: {best_val:.6f}")
    return SignSolution(
        _canonical(best_s), best_val, "heuristic", "local", wall_time_ms=_elapsed_ms(start), k=prob.k
    )


@dataclass
class LPResult:
    value: float
    x: Optional[np.ndarray]
    feasible: bool


def lp_relaxation(
    prob: SignProblem,
    fixed: Dict[int, int] | None = None,
    sum_target: int | None = None,
) -> LPResult:
    """
    min t s.t. -t <= (M (2x - 1))_i <= t, x in [0, 1]^N_s.

    Balance is the interval floor(N_s/2) <= sum(x) <= ceil(N_s/2), or sum(x) = sum_target
    when given. ``fixed`` pins variables to 0 or 1.
    """
    M, N = prob.M, prob.N_s
    G = prob.G
    ones = M.sum(axis=1)
    A_ub = np.vstack([
        np.hstack([2 * M, -np.ones((G, 1))]),
        np.hstack([-2 * M, -np.ones((G, 1))]),
    ])
    b_ub = np.concatenate([ones, -ones])
    A_eq = b_eq = None
    sum_row = np.append(np.ones(N), 0.0)
    if sum_target is None:
        A_ub = np.vstack([A_ub, sum_row, -sum_row])
        b_ub = np.concatenate([b_ub, [math.ceil(N / 2), -math.floor(N / 2)]])
    else:
        A_eq, b_eq = sum_row[None, :], np.array([float(sum_target)])

    bounds = [(0.0, 1.0)] * N + [(0.0, None)]
    for j, v in (fixed or {}).items():
        bounds[j] = (float(v), float(v))
    c = np.zeros(N + 1)
    c[-1] = 1.0
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 2:
        return LPResult(math.inf, None, False)
    if res.status != 0:
        raise SolverException(f"LP relaxation failed at k={prob.k}: {res.message}")
    return LPResult(float(res.fun), res.x[:N], True)


def lp_lower_bound(prob: SignProblem, balance: str = "disjunction") -> float:
    """
    Certified lower bound on the balanced optimum.

    Args:
        balance (str): "disjunction" (default) solves both exact-balance branches and takes
            the smaller. "interval" relaxes balance to floor(N/2) <= sum(x) <= ceil(N/2), which
            admits x = 1/2 and so bounds nothing: the value is 0 for every k.

    Raises:
        SolverException: If the relaxation is infeasible.
    """
    N = prob.N_s
    if balance == "interval":
        result = lp_relaxation(prob)
        value = result.value
    elif balance == "disjunction":
        value = min(lp_relaxation(prob, sum_target=t).value for t in (N // 2, (N + 1) // 2))
    else:
        raise ValueError(f"Invalid balance {balance!r}. Must be 'interval' or 'disjunction'.")
    if math.isinf(value):
        logger.error(f"LP relaxation infeasible at k={prob.k}")
        raise SolverException(f"LP relaxation infeasible at k={prob.k}")
    return max(value, 0.0)


class BranchAndBound:
    """
    Best-first branch and bound on the minimax MILP.

    Nodes are keyed by their LP bound; branching is on the most fractional free x_j. The
    root fixes sum(x) = ceil(N_s/2), the sum(s) = +1 branch of the balance disjunction
    (the other branch is its negation).
    """

    def __init__(self, prob: SignProblem, node_budget: int = 20000, tol: float = 1e-6):
        self.prob = prob
        self.node_budget = node_budget
        self.tol = tol
        self.sum_target = (prob.N_s + 1) // 2
        self.incumbent: np.ndarray | None = None
        self.incumbent_value: float = math.inf
        self.nodes: int = 0
        self._heap: list = []
        self._counter = itertools.count()

    def _push(self, fixed: Dict[int, int]) -> None:
        ones = sum(1 for v in fixed.values() if v == 1)
        zeros = len(fixed) - ones
        if ones > self.sum_target or zeros > self.prob.N_s - self.sum_target:
            return
        result = lp_relaxation(self.prob, fixed, self.sum_target)
        self.nodes += 1
        if result.feasible and result.value < self.incumbent_value - self.tol:
            heapq.heappush(self._heap, (result.value, next(self._counter), fixed, result.x))

    def _offer(self, s: np.ndarray) -> None:
        value = self.prob.discrepancy(s)
        if value < self.incumbent_value:
            self.incumbent, self.incumbent_value = _canonical(s), value
            logger.info(f"B&B k={self.prob.k}: incumbent {value:.6f} after {self.nodes} nodes")

    def solve(self, incumbent: SignSolution | None = None) -> SignSolution:
        start = time.perf_counter()
        if incumbent is not None:
            self._offer(incumbent.s.astype(float))
        self._push({})
        lower = self.incumbent_value
        while self._heap:
            bound, _, fixed, x = heapq.heappop(self._heap)
            if bound >= self.incumbent_value - self.tol:
                break
            if self.nodes >= self.node_budget:
                lower = bound
                logger.warning(f"B&B k={self.prob.k} hit the node budget {self.node_budget}")
                break
            free = [j for j in range(self.prob.N_s) if j not in fixed]
            distance = np.abs(x[free] - 0.5)
            fractional = distance < 0.5 - 1e-9
            if not np.any(fractional):
                self._offer(2 * np.round(x) - 1)
                continue
            j = free[int(np.argmin(np.where(fractional, distance, np.inf)))]
            first = 1 if x[j] >= 0.5 else 0
            for v in (first, 1 - first):
                self._push({**fixed, j: v})
        else:
            lower = self.incumbent_value
        lower = min(lower, self.incumbent_value)

        status = "optimal" if self.incumbent_value - lower <= self.tol else "heuristic"
        logger.info(
            f"B&B k={self.prob.k}: {self.incumbent_value:.6f} ({status}), bound {lower:.6f}, {self.nodes} nodes"
        )
        return SignSolution(
            self.incumbent, self.incumbent_value, status, "bnb",
            lower_bound=max(lower, 0.0), nodes=self.nodes, wall_time_ms=_elapsed_ms(start), k=self.prob.k,
        )


def branch_and_bound(
    prob: SignProblem,
    node_budget: int = 20000,
    seed: int = 0,
    tol: float = 1e-6,
    incumbent: SignSolution | None = None,
) -> SignSolution:
    """
    Solve the MILP by best-first branch and bound, seeded with ``local_search``.

    Budget exhaustion is not an error: the incumbent is returned with status "heuristic"
    and the smallest open bound as ``lower_bound``.
    """
    if incumbent is None:
        incumbent = local_search(prob, seed)
    return BranchAndBound(prob, node_budget, tol).solve(incumbent)


@lru_cache(maxsize=None)
def solve_signs(
    k: int,
    method: str = "milp",
    column_offset: int = 1,
    exhaustive_limit: int = 20,
    node_budget: int = 20000,
    seed: int = 0,
) -> SignSolution | None:
    """
    Cached sign vector for the pipeline: "milp" (exhaustive when N_s allows, else branch and
    bound), "greedy", or "none". Returns None below k = 4, where there are no signs.
    """
    if method == "none" or k < 4:
        return None
    prob = SignProblem.for_k(k, column_offset)
    if method == "greedy":
        return tower_greedy(prob)
    if method == "milp":
        if prob.N_s <= exhaustive_limit:
            return solve_exhaustive(prob, exhaustive_limit)
        return branch_and_bound(prob, node_budget, seed)
    raise ValueError(f"Invalid sign method {method!r}. Must be 'milp', 'greedy' or 'none'.")
