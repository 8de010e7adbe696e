"""Trimming operators on càdlàg paths.

Three families:

* global ("trim as you go") trimmers, which subtract running jump records;
* the signed modulus trimmer, which subtracts the signed value of the latest
  largest-modulus jump;
* record-time ("lookback") trimmers, which delete the overall record jump from
  its first occurrence onwards.

Record-based trimmers are built by relocating jump sizes rather than by float
subtraction. Removing a running record at time ``s`` leaves the previous record
value as the jump at ``s``; that is exactly ``x - S(x)``, without rounding.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .paths import (
    CadlagPath,
    DomainError,
    add,
    jump_at,
    running_jump_sup,
)


class Mode(str, enum.Enum):
    POS = "pos"
    NEG = "neg"
    BOTH = "both"
    MOD = "mod"
    SMOD = "smod"
    LB_POS = "lb-pos"
    LB_MOD = "lb-mod"


GLOBAL_MODES = (Mode.POS, Mode.NEG, Mode.BOTH, Mode.MOD)
LOOKBACK_MODES = (Mode.LB_POS, Mode.LB_MOD)

_SPEC_RE = re.compile(r"^\s*([a-z-]+)\s*:\s*(\d+)\s*(?:,\s*(\d+)\s*)?$")


@dataclass(frozen=True)
class TrimSpec:
    """Which trimmer to apply.

    ``r`` counts positive (or modulus) removals, ``s`` negative ones and is
    only meaningful for ``both``. ``both:0,0`` is the identity.
    """

    mode: Mode
    r: int = 0
    s: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.r < 0 or self.s < 0:
            raise DomainError("trim counts must be nonnegative")
        if self.s and self.mode is not Mode.BOTH:
            raise DomainError(f"mode {self.mode.value} takes a single count")
        if self.mode is Mode.NEG:
            # stored as s for symmetry with both:r,s
            object.__setattr__(self, "s", self.r)
            object.__setattr__(self, "r", 0)

    @classmethod
    def parse(cls, text: str) -> "TrimSpec":
        m = _SPEC_RE.match(text)
        if not m:
            raise DomainError(f"bad trim spec {text!r}; expected e.g. 'pos:1' or 'both:1,2'")
        mode, a, b = m.group(1), int(m.group(2)), m.group(3)
        try:
            mode = Mode(mode)
        except ValueError:
            raise DomainError(f"unknown trim mode {mode!r}") from None
        if mode is Mode.BOTH:
            if b is None:
                raise DomainError("'both' needs two counts, e.g. 'both:1,1'")
            return cls(mode, a, int(b))
        if b is not None:
            raise DomainError(f"mode {mode.value} takes a single count")
        return cls(mode, a)

    @classmethod
    def identity(cls) -> "TrimSpec":
        return cls(Mode.BOTH, 0, 0)

    def __str__(self):
        if self.mode is Mode.BOTH:
            return f"both:{self.r},{self.s}"
        if self.mode is Mode.NEG:
            return f"neg:{self.s}"
        return f"{self.mode.value}:{self.r}"

    @property
    def is_identity(self) -> bool:
        return self.r == 0 and self.s == 0

    @property
    def is_global(self) -> bool:
        return self.mode in GLOBAL_MODES


# -- one-step record removals --------------------------------------------------


def _relocate_records(x: CadlagPath, values: np.ndarray, replace) -> CadlagPath:
    """Walk jumps in time order; at each strict record of ``values`` replace the jump."""
    sizes = x.jump_s.tolist()
    m = 0.0
    out = list(sizes)
    for i, v in enumerate(values.tolist()):
        if v > m:
            out[i] = replace(sizes[i], m)
            m = v
    keep = [i for i, s in enumerate(out) if s != 0.0]
    return CadlagPath(x.skel_t, x.skel_v, x.jump_t[keep], np.asarray(out)[keep])


def _trim_pos_once(x: CadlagPath) -> CadlagPath:
    # x - S_{+Δ}(x): the new record's jump becomes the previous record.
    return _relocate_records(x, x.jump_s, lambda s, m: m)


def _trim_neg_once(x: CadlagPath) -> CadlagPath:
    # x + S_{-Δ}(x)
    return _relocate_records(x, -x.jump_s, lambda s, m: -m)


def _trim_mod_once(x: CadlagPath) -> CadlagPath:
    # x - S~_Δ(x) taken literally: the modulus increment is subtracted whatever the sign.
    return _relocate_records(x, np.abs(x.jump_s), lambda s, m: s - (abs(s) - m))


def _trim_smod_once(x: CadlagPath) -> CadlagPath:
    """``x - Δx(L~_tau(x))``.

    The subtracted process switches to the signed jump at every time whose
    modulus reaches (ties included) the running maximum, so the jump left
    behind is the previously subtracted signed value.
    """
    sizes = x.jump_s.tolist()
    out = list(sizes)
    m = 0.0
    d = 0.0
    for i, s in enumerate(sizes):
        if abs(s) >= m:
            out[i] = d
            d = s
            m = abs(s)
    keep = [i for i, s in enumerate(out) if s != 0.0]
    return CadlagPath(x.skel_t, x.skel_v, x.jump_t[keep], np.asarray(out)[keep])


def _iterate(step, x: CadlagPath, r: int) -> CadlagPath:
    for _ in range(r):
        if x.n_jumps == 0:
            break
        x = step(x)
    return x


_GLOBAL_STEP = {"+": _trim_pos_once, "-": _trim_neg_once, "abs": _trim_mod_once}
_FLAVOR = {"positive": "+", "pos": "+", "+": "+",
           "negative": "-", "neg": "-", "-": "-",
           "modulus": "abs", "mod": "abs", "abs": "abs"}


def _flavor(flavor) -> str:
    try:
        return _FLAVOR[flavor]
    except KeyError:
        raise DomainError(f"unknown flavor {flavor!r}") from None


def trim_global(x: CadlagPath, spec: TrimSpec) -> CadlagPath:
    """Global trimmers; ``both`` applies the positive pass first."""
    if spec.mode is Mode.POS:
        return _iterate(_trim_pos_once, x, spec.r)
    if spec.mode is Mode.NEG:
        return _iterate(_trim_neg_once, x, spec.s)
    if spec.mode is Mode.BOTH:
        return _iterate(_trim_neg_once, _iterate(_trim_pos_once, x, spec.r), spec.s)
    if spec.mode is Mode.MOD:
        return _iterate(_trim_mod_once, x, spec.r)
    raise DomainError(f"{spec} is not a global trim spec")


def jump_order_stat(x: CadlagPath, r: int, flavor="positive") -> CadlagPath:
    """Running r-th largest positive / negative-magnitude / modulus jump."""
    if r < 1:
        raise DomainError("order statistic index must be >= 1")
    sign = _flavor(flavor)
    return running_jump_sup(_iterate(_GLOBAL_STEP[sign], x, r - 1), sign)


# -- record times ---------------------------------------------------------------


def _prefix(x: CadlagPath, tau: float):
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau {tau!r} outside [0, 1]")
    n = int(np.searchsorted(x.jump_t, tau, side="right"))
    return x.jump_t[:n], x.jump_s[:n]


def last_mod_record_time(x: CadlagPath, tau: float = 1.0) -> Optional[float]:
    """Latest time in [0, tau] whose jump modulus equals the running maximum."""
    t, s = _prefix(x, tau)
    if t.size == 0:
        return None
    a = np.abs(s)
    return float(t[np.flatnonzero(a == a.max())[-1]])


def first_record_time(x: CadlagPath, tau: float = 1.0, flavor="positive") -> Optional[float]:
    """Earliest time at which the record value held at ``tau`` was attained."""
    sign = _flavor(flavor)
    t, s = _prefix(x, tau)
    v = np.abs(s) if sign == "abs" else (s if sign == "+" else -s)
    if t.size == 0 or v.max() <= 0.0:
        return None
    return float(t[np.flatnonzero(v == v.max())[0]])


def trim_signed_modulus(x: CadlagPath, r: int = 1) -> CadlagPath:
    if r < 0:
        raise DomainError("r must be nonnegative")
    return _iterate(_trim_smod_once, x, r)


def trim_lookback(x: CadlagPath, r: int = 1, flavor="positive") -> CadlagPath:
    """Delete the overall record jump from its first record time on, ``r`` times."""
    if r < 0:
        raise DomainError("r must be nonnegative")
    sign = _flavor(flavor)
    if sign == "-":
        raise DomainError("lookback trimming is defined for positive or modulus flavors")
    for _ in range(r):
        rt = first_record_time(x, 1.0, sign)
        if rt is None:
            break
        x = add(x, CadlagPath.step([(rt, -jump_at(x, rt))]))
    return x


def apply_trim(x: CadlagPath, spec: TrimSpec) -> CadlagPath:
    if spec.is_global:
        return trim_global(x, spec)
    if spec.mode is Mode.SMOD:
        return trim_signed_modulus(x, spec.r)
    if spec.mode is Mode.LB_POS:
        return trim_lookback(x, spec.r, "positive")
    if spec.mode is Mode.LB_MOD:
        return trim_lookback(x, spec.r, "modulus")
    raise DomainError(f"unsupported trim spec {spec}")


# -- ties -------------------------------------------------------------------------


@dataclass(frozen=True)
class TieReport:
    """Tie sets at a query time ``tau``."""

    tau: float
    a_plus: tuple[float, ...]
    a_minus: tuple[float, ...]
    a_mod: tuple[float, ...]
    b_signchange: tuple[float, ...]


def tie_sets(x: CadlagPath, tau: float = 1.0) -> TieReport:
    t, s = _prefix(x, tau)

    def argmax_times(v):
        if v.size == 0 or v.max() <= 0.0:
            return ()
        return tuple(t[v == v.max()].tolist())

    a_plus = argmax_times(s)
    a_minus = argmax_times(-s)
    a_mod = argmax_times(np.abs(s))
    signed = [jump_at(x, u) for u in a_mod]
    b = tuple(a_mod[k] for k in range(1, len(a_mod)) if signed[k] == -signed[k - 1])
    return TieReport(tau, a_plus, a_minus, a_mod, b)


# -- continuity certificates -------------------------------------------------------


class Verdict(str, enum.Enum):
    GUARANTEED_CONTINUOUS = "guaranteed_continuous"
    NOT_GUARANTEED = "not_guaranteed"


@dataclass(frozen=True)
class Certificate:
    verdict: Verdict
    # Only set for single lookback trims where ties in the overall record force
    # J1-discontinuity.
    discontinuity_proven: bool = False
    reason: str = ""

    @property
    def guaranteed(self) -> bool:
        return self.verdict is Verdict.GUARANTEED_CONTINUOUS


def _candidate_taus(x: CadlagPath):
    return sorted(set(x.jump_t.tolist()) | {1.0})


def continuity_certificate(x: CadlagPath, spec: TrimSpec) -> Certificate:
    """Check the sufficient tie conditions for joint J1-continuity of the trimmer at ``x``.

    Tie sets only change at jump times, so checking jump times and 1 covers
    every ``tau``.
    """
    ok = Certificate(Verdict.GUARANTEED_CONTINUOUS)
    if spec.is_global or spec.is_identity:
        return Certificate(Verdict.GUARANTEED_CONTINUOUS, reason="global trimmers are Lipschitz and Λ-compatible")
    if spec.mode is Mode.SMOD:
        y = x
        for j in range(spec.r):
            for tau in _candidate_taus(y):
                if tie_sets(y, tau).b_signchange:
                    return Certificate(Verdict.NOT_GUARANTEED,
                                       reason=f"sign-changing modulus tie at tau={tau} after {j} trims")
            y = _trim_smod_once(y)
        return ok
    if spec.mode in LOOKBACK_MODES:
        flavor = "positive" if spec.mode is Mode.LB_POS else "modulus"
        y = x
        for j in range(spec.r):
            rep = tie_sets(y, 1.0)
            ties = rep.a_plus if flavor == "positive" else rep.a_mod
            if len(ties) > 1:
                return Certificate(Verdict.NOT_GUARANTEED,
                                   discontinuity_proven=(spec.r == 1),
                                   reason=f"{len(ties)} tied overall records after {j} trims")
            y = trim_lookback(y, 1, flavor)
        return ok
    raise DomainError(f"unsupported trim spec {spec}")
