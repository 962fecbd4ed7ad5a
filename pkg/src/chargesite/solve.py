"""Exact and heuristic solvers for the P-median and Min-max siting models.

Both models choose which ``m`` candidate columns to open. Given that choice,
sending every demand row to its nearest open column is optimal for either
objective (weights are non-negative), so only the open set is searched and
:func:`assign_nearest` fills in the assignment.

Ties are always broken toward the lowest column index. Candidate ids must be
increasing along the columns of the matrix, so this is also the lowest id.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from .cluster import CandidateStation
from .cost import CostMatrix
from .errors import ExactBudgetExceeded

logger = logging.getLogger(__name__)


class Method(enum.Enum):
    EXACT = "exact"
    HEURISTIC = "heuristic"
    AUTO = "auto"


class Model(enum.Enum):
    PMEDIAN = "pmedian"
    MINMAX = "minmax"


@dataclass(frozen=True)
class SolveParams:
    m: int
    method: Method = Method.AUTO
    seed: int = 0
    exact_limit: int = 25
    comb_budget: int = 2_000_000
    node_limit: int = 10_000_000
    restarts: int = 2


@dataclass
class SitingSolution:
    open: tuple[int, ...]          # candidate ids, ascending
    assignment: tuple[int, ...]    # candidate id per demand row
    pmedian_objective: float
    minmax_objective: float
    exact: bool
    model: Model = Model.PMEDIAN
    method: Method = Method.HEURISTIC
    seed: int | None = None
    total_weight: float = 0.0
    nodes: int = 0
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return len(self.open)

    @property
    def pmedian_avg_km(self) -> float:
        return self.pmedian_objective / self.total_weight

    def objective(self) -> float:
        return self.pmedian_objective if self.model is Model.PMEDIAN else self.minmax_objective


def check_m(m: int, n_candidates: int) -> None:
    if not 1 <= m <= n_candidates:
        raise ValueError(f"m must satisfy 1 <= m <= |J| (|J| = {n_candidates}), got m = {m}")


def _weighted_total(h: np.ndarray, dist: np.ndarray) -> float:
    # correctly rounded, so independent of summation order
    return math.fsum((h * dist).tolist())


def _nearest(d: np.ndarray, cols: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    cols = np.asarray(sorted(cols), dtype=int)
    sub = d[:, cols]
    k = np.argmin(sub, axis=1)
    return cols[k], sub[np.arange(d.shape[0]), k]


def assign_nearest(open_cols: Iterable[int], matrix: CostMatrix):
    """Assign every demand row to its nearest open column.

    Returns ``(assigned_cols, pmedian_objective, minmax_objective)``.
    """
    cols = sorted(set(int(c) for c in open_cols))
    if not cols:
        raise ValueError("at least one candidate must be open")
    assigned, dist = _nearest(matrix.d, cols)
    return assigned, _weighted_total(matrix.weights, dist), float(dist.max())


def _solution(matrix: CostMatrix, cols: Iterable[int], model: Model, method: Method,
              exact: bool, seed=None, nodes: int = 0, started: float | None = None) -> SitingSolution:
    cols = sorted(set(int(c) for c in cols))
    assigned, pmed, mm = assign_nearest(cols, matrix)
    ids = matrix.candidate_ids
    return SitingSolution(
        open=tuple(ids[c] for c in cols),
        assignment=tuple(ids[c] for c in assigned.tolist()),
        pmedian_objective=pmed,
        minmax_objective=mm,
        exact=exact,
        model=model,
        method=method,
        seed=seed,
        total_weight=math.fsum(matrix.weights.tolist()),
        nodes=nodes,
        wall_time_s=0.0 if started is None else time.perf_counter() - started,
    )


def _pad(cols: Iterable[int], m: int, n_cols: int) -> list[int]:
    """Fill a partial open set up to ``m`` columns with the lowest unused ones."""
    chosen = sorted(set(cols))
    for c in range(n_cols):
        if len(chosen) >= m:
            break
        if c not in chosen:
            chosen.append(c)
    return sorted(chosen)


# ---------------------------------------------------------------------------
# P-median
# ---------------------------------------------------------------------------

def solve_pmedian_exact(matrix: CostMatrix, m: int, node_limit: int = 10_000_000) -> SitingSolution:
    """Depth-first branch and bound over open/closed decisions, column by column.

    The bound at a node opens every column not yet excluded; it is evaluated
    with the same correctly rounded sum as the objective so pruning is exact
    in floating point. Columns are branched "open" first, so leaves come in
    lexicographic order and the first optimum found is the lexicographically
    smallest optimal open set.

    Raises:
        ExactBudgetExceeded: more than ``node_limit`` nodes were expanded.
    """
    started = time.perf_counter()
    d, h = matrix.d, matrix.weights
    n, J = d.shape
    check_m(m, J)

    suffix = np.full((J + 1, n), np.inf)
    for k in range(J - 1, -1, -1):
        suffix[k] = np.minimum(d[:, k], suffix[k + 1])

    best_val = math.inf
    best_set: list[int] | None = None
    nodes = 0

    def visit(k: int, chosen: list[int], open_min: np.ndarray) -> None:
        nonlocal best_val, best_set, nodes
        nodes += 1
        if nodes > node_limit:
            raise ExactBudgetExceeded()
        need = m - len(chosen)
        if need == 0:
            val = _weighted_total(h, open_min)
            if val < best_val:
                best_val, best_set = val, list(chosen)
            return
        if need == J - k:
            val = _weighted_total(h, np.minimum(open_min, suffix[k]))
            if val < best_val:
                best_val, best_set = val, chosen + list(range(k, J))
            return
        if _weighted_total(h, np.minimum(open_min, suffix[k])) >= best_val:
            return
        visit(k + 1, chosen + [k], np.minimum(open_min, d[:, k]))
        visit(k + 1, chosen, open_min)

    visit(0, [], np.full(n, np.inf))
    sol = _solution(matrix, best_set, Model.PMEDIAN, Method.EXACT, True, nodes=nodes, started=started)
    assert sol.pmedian_objective == best_val
    return sol


def _greedy_add(d: np.ndarray, h: np.ndarray, m: int) -> list[int]:
    J = d.shape[1]
    cur = np.full(d.shape[0], np.inf)
    chosen: list[int] = []
    for _ in range(m):
        vals = h @ np.minimum(cur[:, None], d)
        vals[chosen] = np.inf
        j = int(np.argmin(vals))
        chosen.append(j)
        cur = np.minimum(cur, d[:, j])
    assert len(set(chosen)) == m <= J
    return sorted(chosen)


def _interchange(d: np.ndarray, h: np.ndarray, cols: list[int], max_checks: int = 20) -> list[int]:
    """Vertex substitution: swap one open and one closed column while the objective drops.

    Swap gains are estimated for all pairs at once from each row's nearest and
    second-nearest open distance; the most promising swaps are then confirmed
    against the exactly summed objective, so every accepted swap is a strict
    improvement and the loop terminates.
    """
    n, J = d.shape
    current = sorted(cols)
    cur_val = _weighted_total(h, d[:, current].min(axis=1))
    while True:
        closed = [c for c in range(J) if c not in current]
        if not closed:
            return current
        sub = d[:, current]
        order = np.argsort(sub, axis=1, kind="stable")
        rows = np.arange(n)
        d1 = sub[rows, order[:, 0]]
        a1 = order[:, 0]
        d2 = sub[rows, order[:, 1]] if len(current) > 1 else np.full(n, np.inf)
        dc = d[:, closed]
        with_in = np.minimum(d1[:, None], dc)
        gain = h @ (d1[:, None] - with_in)                       # per closed column
        extra = h[:, None] * (np.minimum(d2[:, None], dc) - with_in)
        onehot = np.zeros((n, len(current)))
        onehot[rows, a1] = 1.0
        loss = onehot.T @ extra                                    # (open, closed)
        delta = loss - gain[None, :]
        threshold = -1e-12 * max(cur_val, 1.0)
        out_idx, in_idx = np.nonzero(delta < threshold)
        if len(out_idx) == 0:
            return current
        ranked = sorted(zip(delta[out_idx, in_idx].tolist(), out_idx.tolist(), in_idx.tolist()),
                        key=lambda t: (t[0], current[t[1]], closed[t[2]]))
        for _, oi, ii in ranked[:max_checks]:
            trial = sorted([c for c in current if c != current[oi]] + [closed[ii]])
            val = _weighted_total(h, d[:, trial].min(axis=1))
            if val < cur_val:
                current, cur_val = trial, val
                break
        else:
            return current


def solve_pmedian_heuristic(matrix: CostMatrix, m: int, seed: int = 0, restarts: int = 2) -> SitingSolution:
    """Greedy construction followed by vertex substitution, plus seeded random restarts.

    The best local optimum across starts wins; ties go to the lexicographically
    smaller open set.
    """
    started = time.perf_counter()
    d, h = matrix.d, matrix.weights
    J = d.shape[1]
    check_m(m, J)
    if m == J:
        return _solution(matrix, range(J), Model.PMEDIAN, Method.HEURISTIC, False, seed, started=started)

    rng = np.random.default_rng(seed)
    starts = [_greedy_add(d, h, m)]
    for _ in range(restarts):
        starts.append(sorted(rng.choice(J, size=m, replace=False).tolist()))
    best = None
    for s in starts:
        cols = _interchange(d, h, s)
        key = (_weighted_total(h, d[:, cols].min(axis=1)), tuple(cols))
        if best is None or key < best:
            best = key
    return _solution(matrix, best[1], Model.PMEDIAN, Method.HEURISTIC, False, seed, started=started)


# ---------------------------------------------------------------------------
# Min-max (p-center)
# ---------------------------------------------------------------------------

def _bitmasks(covered: np.ndarray) -> list[int]:
    """Column-wise bitmask (bit i = row i) of a boolean ``(n, J)`` matrix."""
    n = covered.shape[0]
    masks = []
    for j in range(covered.shape[1]):
        packed = np.packbits(covered[:, j], bitorder="little")
        masks.append(int.from_bytes(packed.tobytes(), "little") & ((1 << n) - 1))
    return masks


class _CoverSearch:
    """Exact test for 'at most m columns cover every row' by branch and bound.

    Branches on the uncovered row with the fewest covering columns; each child
    opens one of those columns.
    """

    def __init__(self, covered: np.ndarray, m: int, node_limit: int, nodes: int = 0):
        self.n, self.J = covered.shape
        self.m = m
        self.cover = _bitmasks(covered)
        self.row_cols = [np.flatnonzero(covered[i]).tolist() for i in range(self.n)]
        self.max_cover = max(c.bit_count() for c in self.cover)
        self.node_limit = node_limit
        self.nodes = nodes

    def run(self) -> list[int] | None:
        if any(not cols for cols in self.row_cols):
            return None
        return self._search((1 << self.n) - 1, self.m, [])

    def _search(self, uncovered: int, budget: int, chosen: list[int]) -> list[int] | None:
        self.nodes += 1
        if self.nodes > self.node_limit:
            raise ExactBudgetExceeded()
        if uncovered == 0:
            return chosen
        if budget == 0 or uncovered.bit_count() > budget * self.max_cover:
            return None
        row, fewest = -1, math.inf
        x = uncovered
        while x:
            low = x & -x
            i = low.bit_length() - 1
            cnt = len(self.row_cols[i])
            if cnt < fewest:
                row, fewest = i, cnt
                if cnt == 1:
                    break
            x ^= low
        for j in self.row_cols[row]:
            found = self._search(uncovered & ~self.cover[j], budget - 1, chosen + [j])
            if found is not None:
                return found
        return None


def _radius_candidates(d: np.ndarray) -> np.ndarray:
    # no open set beats opening everything, so smaller radii are infeasible
    floor = d.min(axis=1).max()
    values = np.unique(d)
    return values[values >= floor]


def solve_minmax_exact(matrix: CostMatrix, m: int, node_limit: int = 10_000_000) -> SitingSolution:
    """Smallest radius r among the matrix entries such that m columns cover all rows within r.

    Binary search over the sorted distinct entries; each probe is an exact
    set-cover search. The witness cover is padded with the lowest unused
    columns up to ``m``.

    Raises:
        ExactBudgetExceeded: the cumulative node count passed ``node_limit``.
    """
    started = time.perf_counter()
    d = matrix.d
    J = d.shape[1]
    check_m(m, J)
    values = _radius_candidates(d)
    nodes = 0
    lo, hi = 0, len(values) - 1
    witness = None
    while lo < hi:
        mid = (lo + hi) // 2
        search = _CoverSearch(d <= values[mid], m, node_limit, nodes)
        found = search.run()
        nodes = search.nodes
        if found is not None:
            hi, witness = mid, found
        else:
            lo = mid + 1
    if witness is None or not np.all((d[:, witness] <= values[lo]).any(axis=1)):
        search = _CoverSearch(d <= values[lo], m, node_limit, nodes)
        witness = search.run()
        nodes = search.nodes
    sol = _solution(matrix, _pad(witness, m, J), Model.MINMAX, Method.EXACT, True,
                    nodes=nodes, started=started)
    assert sol.minmax_objective == values[lo]
    return sol


def _greedy_cover(covered: np.ndarray, m: int) -> list[int] | None:
    uncovered = np.ones(covered.shape[0], dtype=bool)
    chosen: list[int] = []
    while uncovered.any():
        if len(chosen) == m:
            return None
        counts = covered[uncovered].sum(axis=0)
        j = int(np.argmax(counts))
        if counts[j] == 0:
            return None
        chosen.append(j)
        uncovered &= ~covered[:, j]
    return chosen


def _cover_probe(covered: np.ndarray, m: int) -> list[int] | None:
    """Greedy cover; on failure, retry with each column of the hardest row forced in first."""
    found = _greedy_cover(covered, m)
    if found is not None:
        return found
    per_row = covered.sum(axis=1)
    if per_row.min() == 0 or m == 1:
        return None
    row = int(np.argmin(per_row))
    for j in np.flatnonzero(covered[row]).tolist():
        rest = ~covered[:, j]
        if not rest.any():
            return [j]
        sub = _greedy_cover(covered[rest], m - 1)
        if sub is not None:
            return [j] + sub
    return None


def _minmax_key(dist: np.ndarray) -> tuple[float, int, float]:
    top = float(dist.max())
    return top, int((dist == top).sum()), math.fsum(dist.tolist())


def _minmax_polish(d: np.ndarray, cols: list[int]) -> list[int]:
    """Best-improvement swaps on (max distance, rows at the max, total distance).

    Keys for all swaps are computed in bulk; the winning swap is re-scored
    exactly before it is accepted.
    """
    n, J = d.shape
    current = sorted(cols)
    cur_key = _minmax_key(d[:, current].min(axis=1))
    rows = np.arange(n)
    while len(current) < J:
        closed = np.array([c for c in range(J) if c not in current])
        sub = d[:, current]
        order = np.argsort(sub, axis=1, kind="stable")
        d1 = sub[rows, order[:, 0]]
        d2 = sub[rows, order[:, 1]] if len(current) > 1 else np.full(n, np.inf)
        dc = d[:, closed]
        best = None
        for oi in range(len(current)):
            base = np.where(order[:, 0] == oi, d2, d1)
            new = np.minimum(base[:, None], dc)
            tops = new.max(axis=0)
            if tops.min() > cur_key[0]:
                continue
            at_top = (new == tops[None, :]).sum(axis=0)
            totals = new.sum(axis=0)
            ii = int(np.lexsort((closed, totals, at_top, tops))[0])
            key = (float(tops[ii]), int(at_top[ii]), float(totals[ii]))
            trial = sorted([c for c in current if c != current[oi]] + [int(closed[ii])])
            if best is None or (key, trial) < best:
                best = (key, trial)
        if best is None:
            break
        exact_key = _minmax_key(d[:, best[1]].min(axis=1))
        if not exact_key < cur_key:
            break
        cur_key, current = exact_key, best[1]
    return current


def solve_minmax_heuristic(matrix: CostMatrix, m: int, seed: int = 0) -> SitingSolution:
    """Binary search over radii with a greedy set-cover probe, then swap polishing.

    The probe runs plain greedy cover and, when that fails, retries with each
    column able to serve the hardest-to-cover row forced in first. Greedy
    probes are not monotone in the radius, so the search result is only an
    upper bound; local swaps then reduce the maximum distance further.
    """
    started = time.perf_counter()
    d = matrix.d
    J = d.shape[1]
    check_m(m, J)
    values = _radius_candidates(d)
    lo, hi = 0, len(values) - 1
    witness = _cover_probe(d <= values[hi], m)
    while lo < hi:
        mid = (lo + hi) // 2
        found = _cover_probe(d <= values[mid], m)
        if found is not None:
            hi, witness = mid, found
        else:
            lo = mid + 1
    cols = _minmax_polish(d, _pad(witness, m, J))
    return _solution(matrix, cols, Model.MINMAX, Method.HEURISTIC, False, seed, started=started)


# ---------------------------------------------------------------------------
# dispatch and serialization
# ---------------------------------------------------------------------------

def pick_method(n_candidates: int, params: SolveParams) -> Method:
    if params.method is not Method.AUTO:
        return params.method
    if n_candidates <= params.exact_limit and math.comb(n_candidates, params.m) <= params.comb_budget:
        return Method.EXACT
    logger.info("auto: |J|=%d, m=%d beyond exact limits, using heuristic", n_candidates, params.m)
    return Method.HEURISTIC


def solve(matrix: CostMatrix, model: Model, params: SolveParams) -> SitingSolution:
    """Solve one model with the requested (or automatically chosen) method."""
    check_m(params.m, matrix.n_candidates)
    method = pick_method(matrix.n_candidates, params)
    if method is Method.EXACT:
        try:
            if model is Model.PMEDIAN:
                sol = solve_pmedian_exact(matrix, params.m, params.node_limit)
            else:
                sol = solve_minmax_exact(matrix, params.m, params.node_limit)
            sol.seed = params.seed
            return sol
        except ExactBudgetExceeded:
            if params.method is Method.EXACT:
                raise
            logger.warning("auto: exact node budget exhausted, falling back to heuristic")
    if model is Model.PMEDIAN:
        return solve_pmedian_heuristic(matrix, params.m, params.seed, params.restarts)
    return solve_minmax_heuristic(matrix, params.m, params.seed)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_solution(sol: SitingSolution, stream: IO[str], matrix: CostMatrix,
                   candidates: Sequence[CandidateStation] | None = None,
                   include_timing: bool = False) -> None:
    """Write a solution as ``key = value`` lines followed by CSV sections.

    Wall time is omitted unless asked for, so reruns produce identical files.
    """
    lines = [
        f"model = {sol.model.value}",
        f"method = {sol.method.value}",
        f"exact = {str(sol.exact).lower()}",
        f"seed = {sol.seed if sol.seed is not None else ''}",
        f"m = {sol.m}",
        f"n_demand = {matrix.n_demand}",
        f"n_candidates = {matrix.n_candidates}",
        f"pmedian_objective = {_fmt(sol.pmedian_objective)}",
        f"pmedian_avg_km = {_fmt(sol.pmedian_avg_km)}",
        f"minmax_objective = {_fmt(sol.minmax_objective)}",
        f"open = {' '.join(str(j) for j in sol.open)}",
    ]
    if include_timing:
        lines.append(f"wall_time_s = {sol.wall_time_s:.6f}")
    lines.append("[stations]")
    lines.append("id,lon,lat")
    by_id = {c.id: c for c in candidates or ()}
    for j in sol.open:
        c = by_id.get(j)
        lon, lat = ("", "") if c is None else (_fmt(c.location.lon), _fmt(c.location.lat))
        lines.append(f"{j},{lon},{lat}")
    lines.append("[assignment]")
    lines.append("demand_id,candidate_id")
    for i, j in zip(matrix.demand_ids, sol.assignment):
        lines.append(f"{i},{j}")
    stream.write("\n".join(lines) + "\n")


def read_solution(stream: IO[str]) -> dict:
    """Parse a file written by :func:`write_solution` into a plain dict.

    Raises:
        ValueError: on a malformed file.
    """
    header: dict[str, str] = {}
    stations: list[tuple[int, float | None, float | None]] = []
    assignment: list[tuple[int, int]] = []
    section = None
    for raw in stream:
        line = raw.strip()
        if not line:
            continue
        if line in ("[stations]", "[assignment]"):
            section = line[1:-1]
            next(stream, None)  # column header
            continue
        if section is None:
            if "=" not in line:
                raise ValueError(f"malformed solution line: {line!r}")
            key, _, value = line.partition("=")
            header[key.strip()] = value.strip()
        elif section == "stations":
            sid, lon, lat = line.split(",")
            stations.append((int(sid), float(lon) if lon else None, float(lat) if lat else None))
        else:
            i, j = line.split(",")
            assignment.append((int(i), int(j)))
    for key in ("model", "m", "open", "pmedian_objective", "minmax_objective"):
        if key not in header:
            raise ValueError(f"solution file lacks '{key}'")
    open_ids = [int(t) for t in header["open"].split()]
    if len(open_ids) != int(header["m"]):
        raise ValueError("open set size does not match m")
    return {"header": header, "open": open_ids, "stations": stations, "assignment": assignment}
