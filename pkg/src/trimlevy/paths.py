"""Exact càdlàg paths on [0, 1].

A path is a continuous piecewise-linear skeleton plus a finite set of jumps::

    x(tau) = k(tau) + sum(size_i for time_i <= tau)

Jump sums are evaluated with exactly rounded prefix sums, so two paths whose
jump multisets up to ``tau`` coincide evaluate to the same float regardless of
where those jumps sit in time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


@dataclass(frozen=True)
class JumpPoint:
    time: float
    size: float

    def __post_init__(self):
        if not 0.0 < self.time <= 1.0:
            raise DomainError(f"jump time {self.time!r} not in (0, 1]")
        if self.size == 0.0 or not math.isfinite(self.size):
            raise DomainError(f"jump size must be finite and nonzero, got {self.size!r}")


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def prefix_partials(values: Sequence[float]) -> list[list[float]]:
    """Non-overlapping partials (Shewchuk) representing each exact prefix sum.

    ``out[k]`` sums exactly to ``sum(values[:k])``; feed it to ``math.fsum``.
    """
    partials: list[float] = []
    out = [[]]
    for v in values:
        x = float(v)
        i = 0
        for y in partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                partials[i] = lo
                i += 1
            x = hi
        partials[i:] = [x]
        out.append(list(partials))
    return out


def _exact_prefix_sums(values: Sequence[float]) -> np.ndarray:
    """Correctly rounded prefix sums ``out[k] = sum(values[:k])``."""
    return np.array([math.fsum(p) for p in prefix_partials(values)], dtype=float)


class TimeChange:
    """Strictly increasing piecewise-linear bijection of [0, 1]."""

    __slots__ = ("u", "v")

    def __init__(self, u: Iterable[float], v: Iterable[float]):
        u = _readonly(list(u))
        v = _readonly(list(v))
        if u.shape != v.shape or u.size < 2:
            raise DomainError("time change needs matching knot arrays with >= 2 knots")
        if u[0] != 0.0 or v[0] != 0.0 or u[-1] != 1.0 or v[-1] != 1.0:
            raise DomainError("time change must fix 0 and 1")
        if np.any(np.diff(u) <= 0) or np.any(np.diff(v) <= 0):
            raise DomainError("time change knots must be strictly increasing")
        self.u = u
        self.v = v

    @classmethod
    def identity(cls) -> "TimeChange":
        return cls([0.0, 1.0], [0.0, 1.0])

    @classmethod
    def from_knots(cls, knots: Iterable[tuple[float, float]]) -> "TimeChange":
        knots = list(knots)
        return cls([k[0] for k in knots], [k[1] for k in knots])

    @property
    def knots(self) -> list[tuple[float, float]]:
        return list(zip(self.u.tolist(), self.v.tolist()))

    def __call__(self, u):
        return np.interp(u, self.u, self.v)

    def inverse(self) -> "TimeChange":
        return TimeChange(self.v, self.u)

    def deviation(self) -> float:
        """``sup |lambda(u) - u|``, attained at a knot."""
        return float(np.max(np.abs(self.v - self.u)))

    def __repr__(self):
        return f"TimeChange({self.knots!r})"


class CadlagPath:
    """Immutable piecewise-linear-plus-jumps element of D[0, 1]."""

    __slots__ = ("skel_t", "skel_v", "jump_t", "jump_s", "_prefix")

    def __init__(self, skel_t, skel_v, jump_t=(), jump_s=()):
        skel_t = _readonly(skel_t)
        skel_v = _readonly(skel_v)
        jump_t = _readonly(jump_t)
        jump_s = _readonly(jump_s)
        if skel_t.ndim != 1 or skel_t.shape != skel_v.shape or skel_t.size < 2:
            raise DomainError("skeleton needs >= 2 knots with matching values")
        if skel_t[0] != 0.0 or skel_t[-1] != 1.0:
            raise DomainError("skeleton must start at 0 and end at 1")
        if (skel_t[1:] <= skel_t[:-1]).any():
            raise DomainError("skeleton knot times must be strictly increasing")
        if jump_t.shape != jump_s.shape:
            raise DomainError("jump times and sizes differ in length")
        if jump_t.size:
            if jump_t[0] <= 0.0 or jump_t[-1] > 1.0:
                raise DomainError("jump times must lie in (0, 1]")
            if (jump_t[1:] <= jump_t[:-1]).any():
                raise DomainError("jump times must be strictly increasing")
            if (jump_s == 0.0).any():
                raise DomainError("zero-size jumps are not allowed")
        if not (np.isfinite(skel_v).all() and np.isfinite(jump_s).all()):
            raise DomainError("path values must be finite")
        self.skel_t = skel_t
        self.skel_v = skel_v
        self.jump_t = jump_t
        self.jump_s = jump_s
        self._prefix = None

    # -- constructors -----------------------------------------------------

    @classmethod
    def constant(cls, value: float = 0.0) -> "CadlagPath":
        return cls([0.0, 1.0], [value, value])

    @classmethod
    def linear(cls, slope: float, start: float = 0.0) -> "CadlagPath":
        return cls([0.0, 1.0], [start, start + slope])

    @classmethod
    def step(cls, jumps: Iterable[tuple[float, float]], start: float = 0.0) -> "CadlagPath":
        """Pure step function from ``(time, size)`` pairs; coincident times are merged."""
        return cls.from_jumps([j[0] for j in jumps], [j[1] for j in jumps], start=start)

    @classmethod
    def indicator(cls, a: float, b: float = 1.0) -> "CadlagPath":
        """``1_[a,1]`` when ``b == 1``, else the càdlàg indicator ``1_[a,b)``."""
        if not 0.0 < a < b <= 1.0:
            raise DomainError("indicator needs 0 < a < b <= 1")
        if b == 1.0:
            return cls.step([(a, 1.0)])
        return cls.step([(a, 1.0), (b, -1.0)])

    @classmethod
    def from_jumps(cls, times, sizes, slope: float = 0.0, start: float = 0.0) -> "CadlagPath":
        """Path with linear skeleton ``start + slope * tau`` and unsorted jumps."""
        times = np.asarray(times, dtype=float)
        sizes = np.asarray(sizes, dtype=float)
        order = np.argsort(times, kind="stable")
        t, s = _merge_sorted_jumps(times[order], sizes[order])
        return cls([0.0, 1.0], [start, start + slope], t, s)

    # -- basic queries ----------------------------------------------------

    @property
    def jumps(self) -> list[JumpPoint]:
        return [JumpPoint(t, s) for t, s in zip(self.jump_t.tolist(), self.jump_s.tolist())]

    @property
    def skeleton(self) -> list[tuple[float, float]]:
        return list(zip(self.skel_t.tolist(), self.skel_v.tolist()))

    @property
    def n_jumps(self) -> int:
        return int(self.jump_t.size)

    def is_step(self) -> bool:
        """True when the skeleton is constant (a pure step function)."""
        return bool(np.all(self.skel_v == self.skel_v[0]))

    def prefix_sums(self) -> np.ndarray:
        if self._prefix is None:
            p = _exact_prefix_sums(self.jump_s.tolist())
            p.setflags(write=False)
            self._prefix = p
        return self._prefix

    def skeleton_at(self, tau):
        return np.interp(tau, self.skel_t, self.skel_v)

    def __call__(self, tau):
        return eval_path(self, tau)

    def __eq__(self, other):
        if not isinstance(other, CadlagPath):
            return NotImplemented
        return same_path(self, other)

    __hash__ = None

    def __neg__(self):
        return scalar_affine(self, 0.0, -1.0)

    def __add__(self, other):
        if isinstance(other, CadlagPath):
            return add(self, other)
        return scalar_affine(self, float(other), 1.0)

    def __sub__(self, other):
        if isinstance(other, CadlagPath):
            return add(self, -other)
        return scalar_affine(self, -float(other), 1.0)

    def __mul__(self, c):
        return scalar_affine(self, 0.0, float(c))

    __rmul__ = __mul__

    def __repr__(self):
        return f"CadlagPath(skeleton={self.skeleton!r}, jumps={list(zip(self.jump_t.tolist(), self.jump_s.tolist()))!r})"

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "skeleton": [[t, v] for t, v in self.skeleton],
            "jumps": [[t, s] for t, s in zip(self.jump_t.tolist(), self.jump_s.tolist())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CadlagPath":
        skel = [(float(t), float(v)) for t, v in d["skeleton"]]
        jumps = [(float(t), float(s)) for t, s in d.get("jumps", [])]
        return cls([k[0] for k in skel], [k[1] for k in skel],
                   [j[0] for j in jumps], [j[1] for j in jumps])

    def to_json(self, **kw) -> str:
        # repr-based float formatting round-trips binary64 exactly.
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "CadlagPath":
        return cls.from_dict(json.loads(text))


def _merge_sorted_jumps(t: np.ndarray, s: np.ndarray):
    """Sum sizes at coincident times and drop zero totals; ``t`` must be sorted."""
    if t.size == 0:
        return t, s
    keys, start = np.unique(t, return_index=True)
    if keys.size == t.size:
        keep = s != 0.0
        return t[keep], s[keep]
    bounds = list(start) + [t.size]
    sizes = np.array([math.fsum(s[bounds[i]:bounds[i + 1]]) for i in range(keys.size)])
    keep = sizes != 0.0
    return keys[keep], sizes[keep]


def same_path(x: CadlagPath, y: CadlagPath) -> bool:
    """Structural equality: identical jumps and identical skeleton values on all knots."""
    if x.jump_t.shape != y.jump_t.shape:
        return False
    if not (np.array_equal(x.jump_t, y.jump_t) and np.array_equal(x.jump_s, y.jump_s)):
        return False
    knots = np.union1d(x.skel_t, y.skel_t)
    return bool(np.array_equal(x.skeleton_at(knots), y.skeleton_at(knots)))


def _check_tau(tau, left=False):
    arr = np.asarray(tau, dtype=float)
    ok = (arr > 0.0) if left else (arr >= 0.0)
    if not (ok & (arr <= 1.0)).all():
        interval = "(0, 1]" if left else "[0, 1]"
        raise DomainError(f"evaluation time outside {interval}: {tau!r}")
    return arr


def eval_path(x: CadlagPath, tau):
    """``x(tau)``; accepts scalars or arrays."""
    arr = _check_tau(tau)
    idx = np.searchsorted(x.jump_t, arr, side="right")
    out = x.skeleton_at(arr) + x.prefix_sums()[idx]
    return float(out) if np.ndim(out) == 0 else out


def eval_left(x: CadlagPath, tau):
    """Left limit ``x(tau-)`` for ``tau`` in (0, 1]."""
    arr = _check_tau(tau, left=True)
    idx = np.searchsorted(x.jump_t, arr, side="left")
    out = x.skeleton_at(arr) + x.prefix_sums()[idx]
    return float(out) if np.ndim(out) == 0 else out


def jump_at(x: CadlagPath, tau: float) -> float:
    """``Delta x(tau)``, zero when ``tau`` is not a jump time (and at 0)."""
    i = np.searchsorted(x.jump_t, tau)
    if i < x.jump_t.size and x.jump_t[i] == tau:
        return float(x.jump_s[i])
    return 0.0


def add(x: CadlagPath, y: CadlagPath) -> CadlagPath:
    knots = np.union1d(x.skel_t, y.skel_t)
    vals = x.skeleton_at(knots) + y.skeleton_at(knots)
    t = np.concatenate([x.jump_t, y.jump_t])
    s = np.concatenate([x.jump_s, y.jump_s])
    order = np.argsort(t, kind="stable")
    jt, js = _merge_sorted_jumps(t[order], s[order])
    return CadlagPath(knots, vals, jt, js)


def scalar_affine(x: CadlagPath, a: float, b: float) -> CadlagPath:
    """The path ``a + b * x``."""
    if b == 0.0:
        return CadlagPath.constant(a)
    return CadlagPath(x.skel_t, a + b * x.skel_v, x.jump_t, b * x.jump_s)


def compose(x: CadlagPath, lam: TimeChange) -> CadlagPath:
    """``x ∘ lam``; jump sizes are carried over unchanged to ``lam^{-1}(time)``."""
    inv_knots = np.interp(x.skel_t, lam.v, lam.u)
    knots = np.union1d(lam.u, inv_knots)
    vals = x.skeleton_at(lam(knots))
    jt = np.interp(x.jump_t, lam.v, lam.u)
    if jt.size and np.any(np.diff(jt) <= 0):
        raise DomainError("time change collapses distinct jump times")
    return CadlagPath(knots, vals, jt, x.jump_s)


# -- breakpoint representation ------------------------------------------------
# A path is linear between consecutive breakpoints; each breakpoint carries a
# left limit and a value.


def breakpoints(x: CadlagPath):
    """Times, left limits and values at every skeleton knot and jump time."""
    times = np.union1d(x.skel_t, x.jump_t)
    right = np.asarray(eval_path(x, times))
    left = right.copy()
    left[1:] = eval_left(x, times[1:])
    return times, left, right


def from_breakpoints(times, left, right) -> CadlagPath:
    times = np.asarray(times, dtype=float)
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    diff = right - left
    diff[0] = 0.0
    jmask = diff != 0.0
    jt, js = times[jmask], diff[jmask]
    prefix = _exact_prefix_sums(js.tolist())
    idx = np.searchsorted(jt, times, side="right")
    skel = right - prefix[idx]
    return CadlagPath(times, skel, jt, js)


def sup_norm(x: CadlagPath) -> float:
    _, left, right = breakpoints(x)
    return float(max(np.max(np.abs(left)), np.max(np.abs(right))))


def sup_norm_diff(x: CadlagPath, y: CadlagPath) -> float:
    """Exact ``sup_{0<=tau<=1} |x(tau) - y(tau)|``."""
    return sup_norm(add(x, -y))


def _running_sup_bp(times, left, right):
    out_t, out_l, out_r = [times[0]], [right[0]], [right[0]]
    m = right[0]
    for k in range(len(times) - 1):
        a, b = times[k], times[k + 1]
        v0, v1 = right[k], left[k + 1]
        if v1 > m:
            c = a + (m - v0) / (v1 - v0) * (b - a) if m > v0 else a
            if a < c < b:
                out_t.append(c)
                out_l.append(m)
                out_r.append(m)
            m = v1
        new = max(m, right[k + 1])
        out_t.append(b)
        out_l.append(m)
        out_r.append(new)
        m = new
    return out_t, out_l, out_r


def running_sup(x: CadlagPath) -> CadlagPath:
    """``S(x)(tau) = sup_{s <= tau} x(s)``."""
    if np.all(np.diff(x.skel_v) >= 0) and np.all(x.jump_s > 0):
        return x
    return from_breakpoints(*_running_sup_bp(*breakpoints(x)))


def abs_path(x: CadlagPath) -> CadlagPath:
    times, left, right = breakpoints(x)
    out_t, out_l, out_r = [times[0]], [abs(right[0])], [abs(right[0])]
    for k in range(len(times) - 1):
        a, b = times[k], times[k + 1]
        v0, v1 = right[k], left[k + 1]
        if v0 * v1 < 0:
            c = a + v0 / (v0 - v1) * (b - a)
            if a < c < b:
                out_t.append(c)
                out_l.append(0.0)
                out_r.append(0.0)
        out_t.append(b)
        out_l.append(abs(v1))
        out_r.append(abs(right[k + 1]))
    return from_breakpoints(out_t, out_l, out_r)


def running_sup_abs(x: CadlagPath) -> CadlagPath:
    """``sup_{s <= tau} |x(s)|``."""
    return running_sup(abs_path(x))


_SIGNS = {"+": 1.0, "pos": 1.0, "positive": 1.0,
          "-": -1.0, "neg": -1.0, "negative": -1.0,
          "abs": 0.0, "mod": 0.0, "modulus": 0.0}


def _sign_code(sign) -> float:
    try:
        return _SIGNS[sign]
    except KeyError:
        raise DomainError(f"unknown jump sign selector {sign!r}") from None


def jump_values(x: CadlagPath, sign) -> np.ndarray:
    """Jump sizes seen through ``sign``: ``+`` keeps sizes, ``-`` negates, ``abs`` takes moduli."""
    code = _sign_code(sign)
    if code == 0.0:
        return np.abs(x.jump_s)
    return code * x.jump_s


def running_jump_sup(x: CadlagPath, sign="+") -> CadlagPath:
    """Running record of the largest positive / negative-magnitude / modulus jump.

    Zero until the first qualifying jump. A record only moves on a strict
    increase, so the output jumps sit at first-record times.
    """
    vals = jump_values(x, sign)
    m = 0.0
    rt, rs = [], []
    for t, v in zip(x.jump_t.tolist(), vals.tolist()):
        if v > m:
            rt.append(t)
            rs.append(v - m)
            m = v
    return CadlagPath([0.0, 1.0], [0.0, 0.0], rt, rs)
