"""Skorokhod J1 distance on D[0,1].

For step functions the distance is computed exactly. A time change that keeps
both paths' jumps in order can be described by a monotone lattice walk through
the pairs ``(i, j)`` = (number of jumps of ``x`` passed, number of jumps of
``y`` passed). Each step either matches the next jump of both paths (D), lets
``x`` jump while ``y`` stays on a level (H), or the reverse (V). The cost of a
walk is the largest of its time displacements and level gaps; the distance is
the smallest such cost, which a bottleneck DP finds directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .paths import (
    CadlagPath,
    DomainError,
    TimeChange,
    compose,
    eval_path,
    prefix_partials,
    sup_norm_diff,
)

DIAG, HORIZ, VERT = "D", "H", "V"


@dataclass(frozen=True)
class J1Result:
    distance: float
    witness: TimeChange
    exact: bool
    time_term: float = 0.0
    value_term: float = 0.0


class _Grid:
    """Padded jump times and levels of two step functions."""

    def __init__(self, x: CadlagPath, y: CadlagPath):
        self.m, self.n = x.n_jumps, y.n_jumps
        self.tx = [0.0, *x.jump_t.tolist(), 1.0]
        self.sy = [0.0, *y.jump_t.tolist(), 1.0]
        self.a = [float(v) for v in np.atleast_1d(eval_path(x, self.tx[: self.m + 1]))]
        self.b = [float(v) for v in np.atleast_1d(eval_path(y, self.sy[: self.n + 1]))]
        # levels as exact jump sums, so that gaps are correctly rounded
        self._pa = prefix_partials([float(x.skel_v[0]), *x.jump_s.tolist()])[1:]
        self._pb = [[-v for v in p] for p in prefix_partials([float(y.skel_v[0]), *y.jump_s.tolist()])[1:]]

    def level_gap(self, i, j):
        return abs(math.fsum(self._pa[i] + self._pb[j]))

    def step_time(self, kind, i, j) -> Optional[float]:
        """Time displacement of a step out of ``(i, j)``, or None if infeasible."""
        tx, sy, m, n = self.tx, self.sy, self.m, self.n
        if kind == DIAG:
            t, s = tx[i + 1], sy[j + 1]
            if (t == 1.0) != (s == 1.0):
                return None
            return abs(t - s)
        if kind == HORIZ:
            t, lo, hi = tx[i + 1], sy[j], sy[j + 1]
            if t == 1.0:
                return 0.0 if j == n and (n == 0 or sy[n] < 1.0) else None
            if not lo < hi:
                return None
            return max(lo - t, t - hi, 0.0)
        s, lo, hi = sy[j + 1], tx[i], tx[i + 1]
        if s == 1.0:
            return 0.0 if i == m and (m == 0 or tx[m] < 1.0) else None
        if not lo < hi:
            return None
        return max(lo - s, s - hi, 0.0)

    def moves(self, i, j):
        if i < self.m and j < self.n:
            yield DIAG, i + 1, j + 1
        if i < self.m:
            yield HORIZ, i + 1, j
        if j < self.n:
            yield VERT, i, j + 1


def _require_steps(x: CadlagPath, y: CadlagPath):
    if not (x.is_step() and y.is_step()):
        raise DomainError("exact J1 computation needs step functions (constant skeletons)")


def _bottleneck(g: _Grid, budget: Optional[float] = None):
    """Min over walks of the max cost; with ``budget`` only level gaps count and
    steps whose time displacement exceeds the budget are forbidden."""
    inf = math.inf
    cost = [[inf] * (g.n + 1) for _ in range(g.m + 1)]
    back: list[list] = [[None] * (g.n + 1) for _ in range(g.m + 1)]
    cost[0][0] = g.level_gap(0, 0)
    for i in range(g.m + 1):
        for j in range(g.n + 1):
            c = cost[i][j]
            if c == inf:
                continue
            for kind, i2, j2 in g.moves(i, j):
                dt = g.step_time(kind, i, j)
                if dt is None:
                    continue
                if budget is not None:
                    if dt > budget:
                        continue
                    dt = 0.0
                c2 = max(c, dt, g.level_gap(i2, j2))
                if c2 < cost[i2][j2]:
                    cost[i2][j2] = c2
                    back[i2][j2] = (kind, i, j)
    walk = []
    i, j = g.m, g.n
    if cost[i][j] == inf:
        return inf, None
    while (i, j) != (0, 0):
        kind, i, j = back[i][j]
        walk.append((kind, i, j))
    walk.reverse()
    return cost[g.m][g.n], walk


def _spread(targets, lo, hi):
    """Strictly increasing values inside (lo, hi), each within ~1e-14 of its target."""
    k = len(targets)
    eps = min(1e-14, (hi - lo) / (k + 2))
    delta = eps / (k + 2)
    out = []
    for idx, c in enumerate(targets, start=1):
        v = min(max(c, lo + idx * eps), hi - (k + 1 - idx) * eps)
        out.append(v + idx * delta)
    return out


def witness_from_walk(g: _Grid, walk) -> TimeChange:
    """Piecewise-linear time change ``u -> lambda(u)`` realising a walk.

    ``u`` runs over the time axis of ``y`` and ``lambda(u)`` over that of ``x``,
    so that ``x ∘ lambda`` jumps where ``y`` does for matched pairs.
    """
    # Each knot has an anchored coordinate (a jump time) and possibly a free
    # one that only has to lie strictly inside an interval.
    us: list = [0.0]
    vs: list = [0.0]
    u_free: list[bool] = [False]
    v_free: list[bool] = [False]
    for kind, i, j in walk:
        if kind == DIAG:
            u, v, fu, fv = g.sy[j + 1], g.tx[i + 1], False, False
        elif kind == HORIZ:
            t = g.tx[i + 1]
            if t == 1.0:
                u, v, fu, fv = 1.0, 1.0, False, False
            else:
                u, v, fu, fv = min(max(t, g.sy[j]), g.sy[j + 1]), t, True, False
        else:
            s = g.sy[j + 1]
            if s == 1.0:
                u, v, fu, fv = 1.0, 1.0, False, False
            else:
                u, v, fu, fv = s, min(max(s, g.tx[i]), g.tx[i + 1]), False, True
        us.append(u)
        vs.append(v)
        u_free.append(fu)
        v_free.append(fv)
    if us[-1] != 1.0:
        us.append(1.0)
        vs.append(1.0)
        u_free.append(False)
        v_free.append(False)
    for coords, free in ((us, u_free), (vs, v_free)):
        k = 0
        while k < len(coords):
            if not free[k]:
                k += 1
                continue
            start = k
            while free[k]:
                k += 1
            coords[start:k] = _spread(coords[start:k], coords[start - 1], coords[k])
    return TimeChange(us, vs)


def witness_cost(x: CadlagPath, y: CadlagPath, lam: TimeChange):
    """``(||lam - I||, ||x ∘ lam - y||)`` evaluated with exact path primitives."""
    return lam.deviation(), sup_norm_diff(compose(x, lam), y)


def _result(x, y, lam, exact, distance=None):
    tt, vt = witness_cost(x, y, lam)
    d = max(tt, vt) if distance is None else distance
    return J1Result(d, lam, exact, tt, vt)


def _step_part(x: CadlagPath) -> CadlagPath:
    return CadlagPath.from_jumps(x.jump_t, x.jump_s, start=float(x.skel_v[0]))


def j1_distance(x: CadlagPath, y: CadlagPath) -> J1Result:
    """J1 distance with a witness time change.

    Exact for step functions. Otherwise the best of the identity and the time
    change matching the jump structures, evaluated exactly (an upper bound).
    """
    if x.is_step() and y.is_step():
        g = _Grid(x, y)
        d, walk = _bottleneck(g)
        return _result(x, y, witness_from_walk(g, walk), True, d)
    g = _Grid(_step_part(x), _step_part(y))
    _, walk = _bottleneck(g)
    candidates = [_result(x, y, TimeChange.identity(), False)]
    try:
        candidates.append(_result(x, y, witness_from_walk(g, walk), False))
    except DomainError:
        pass
    return min(candidates, key=lambda r: r.distance)


def j1_value_within(x: CadlagPath, y: CadlagPath, budget: float) -> float:
    """Smallest ``||x ∘ lambda - y||`` over time changes with ``||lambda - I|| <= budget``.

    Step functions only; the bound on the time change is taken up to the
    arbitrarily small slack needed to keep jumps strictly ordered.
    """
    _require_steps(x, y)
    if budget < 0:
        raise DomainError("budget must be nonnegative")
    return _bottleneck(_Grid(x, y), budget)[0]


# -- brute force oracle ----------------------------------------------------------


def _walks(m, n):
    """All monotone walks (0,0) -> (m,n) with unit H, V and diagonal steps."""
    if m == 0 and n == 0:
        yield ()
        return
    if m and n:
        for w in _walks(m - 1, n - 1):
            yield w + (DIAG,)
    if m:
        for w in _walks(m - 1, n):
            yield w + (HORIZ,)
    if n:
        for w in _walks(m, n - 1):
            yield w + (VERT,)


def _walk_cost(tx, a, sy, b, walk):
    """Cost of one walk, written out independently of the DP tables."""
    m, n = len(tx), len(sy)
    i = j = 0
    worst = abs(a[0] - b[0])
    # where y currently sits: between its j-th and (j+1)-th jump
    for kind in walk:
        y_lo = sy[j - 1] if j else 0.0
        y_hi = sy[j] if j < n else 1.0
        x_lo = tx[i - 1] if i else 0.0
        x_hi = tx[i] if i < m else 1.0
        if kind == DIAG:
            t, s = tx[i], sy[j]
            if (t == 1.0) != (s == 1.0):
                return math.inf
            worst = max(worst, abs(t - s))
            i += 1
            j += 1
        elif kind == HORIZ:
            t = tx[i]
            if t == 1.0:
                if j != n or (n and sy[-1] == 1.0):
                    return math.inf
            else:
                if y_lo >= y_hi:
                    return math.inf
                worst = max(worst, t - y_hi if t > y_hi else (y_lo - t if t < y_lo else 0.0))
            i += 1
        else:
            s = sy[j]
            if s == 1.0:
                if i != m or (m and tx[-1] == 1.0):
                    return math.inf
            else:
                if x_lo >= x_hi:
                    return math.inf
                worst = max(worst, s - x_hi if s > x_hi else (x_lo - s if s < x_lo else 0.0))
            j += 1
        worst = max(worst, abs(a[i] - b[j]))
    return worst


def j1_brute_force(x: CadlagPath, y: CadlagPath, max_jumps: int = 7) -> float:
    """Exhaustive minimum over all order-preserving jump alignments (test oracle)."""
    _require_steps(x, y)
    if max_jumps > 7:
        raise DomainError("brute force is limited to 7 jumps per path")
    if x.n_jumps > max_jumps or y.n_jumps > max_jumps:
        raise DomainError(f"too many jumps for brute force (limit {max_jumps})")
    tx, sy = x.jump_t.tolist(), y.jump_t.tolist()
    a = [float(x(0.0))] + [float(x(t)) for t in tx]
    b = [float(y(0.0))] + [float(y(s)) for s in sy]
    return min(_walk_cost(tx, a, sy, b, w) for w in _walks(len(tx), len(sy)))


# -- convergence diagnostics ------------------------------------------------------


@dataclass
class Convergence:
    converged: bool
    distances: list
    results: list = field(repr=False, default_factory=list)

    def rows(self, start: int = 1):
        """CSV rows ``(n, distance, time_term, value_term)``."""
        return [(start + k, r.distance, r.time_term, r.value_term) for k, r in enumerate(self.results)]


def converges_j1(xs: Sequence[CadlagPath], x: CadlagPath, tol: float, factor: float = 1.0) -> Convergence:
    """Whether ``d(x_n, x)`` ends below ``tol`` after shrinking by at least ``factor``
    from the first to the last index."""
    results = [j1_distance(xn, x) for xn in xs]
    d = [r.distance for r in results]
    ok = bool(d) and d[-1] < tol and d[-1] <= factor * d[0]
    return Convergence(ok, d, results)


def count_walks(m: int, n: int) -> int:
    """Number of walks the brute force enumerates (central Delannoy numbers when m = n)."""
    return sum(math.comb(m, k) * math.comb(n, k) * 2 ** k for k in range(min(m, n) + 1))


__all__ = [
    "J1Result",
    "Convergence",
    "j1_distance",
    "j1_value_within",
    "j1_brute_force",
    "converges_j1",
    "witness_cost",
    "count_walks",
]
