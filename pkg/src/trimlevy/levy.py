"""Lévy path samplers, norming constants and stable reference samples.

Paths are sampled on the rescaled clock ``tau = s / t`` so that every sample is
a :class:`CadlagPath` on [0, 1] representing ``tau -> X_{tau t}``.

Randomness is counter based: each path owns a Philox stream derived from
``(seed, stream)``, and each role (jump count, jump times, sizes, signs,
Gamma arrivals) gets its own child stream. A path therefore never depends on
how many other paths were drawn, and a truncated stable series is a prefix of
any longer one drawn with the same seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Union

import numpy as np

from .paths import CadlagPath, DomainError, scalar_affine
from .trim import Mode, TrimSpec, apply_trim


class UnsupportedModel(DomainError):
    pass


# -- jump distributions ----------------------------------------------------------


@dataclass(frozen=True)
class Pareto:
    """Pareto I: ``P(xi > x) = (scale / x) ** shape`` for ``x >= scale``."""

    scale: float = 1.0
    shape: float = 1.0

    def __post_init__(self):
        if not (self.scale > 0 and self.shape > 0):
            raise DomainError("Pareto needs scale > 0 and shape > 0")

    p_positive = 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # 1 - U lies in (0, 1], so the power is finite
        return self.scale * (1.0 - rng.random(size)) ** (-1.0 / self.shape)

    def mean(self) -> float:
        if self.shape <= 1:
            return math.inf
        return self.shape * self.scale / (self.shape - 1.0)

    def tail(self, x: float) -> float:
        """Two-sided tail ``P(|xi| > x)``."""
        return 1.0 if x < self.scale else (self.scale / x) ** self.shape


@dataclass(frozen=True)
class SignedPareto:
    """Pareto I magnitude with a random sign, positive with probability ``p_positive``."""

    scale: float = 1.0
    shape: float = 1.0
    p_positive: float = 0.5

    def __post_init__(self):
        if not (self.scale > 0 and self.shape > 0):
            raise DomainError("Pareto needs scale > 0 and shape > 0")
        if not 0.0 <= self.p_positive <= 1.0:
            raise DomainError("p_positive must lie in [0, 1]")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        mag = self.scale * (1.0 - rng.random(size)) ** (-1.0 / self.shape)
        sign = np.where(rng.random(size) < self.p_positive, 1.0, -1.0)
        return sign * mag

    def mean(self) -> float:
        if self.shape <= 1:
            skew = 2 * self.p_positive - 1
            return math.copysign(math.inf, skew) if skew else math.nan
        return (2 * self.p_positive - 1) * self.shape * self.scale / (self.shape - 1.0)

    def tail(self, x: float) -> float:
        return 1.0 if x < self.scale else (self.scale / x) ** self.shape


@dataclass(frozen=True)
class Exponential:
    rate: float = 1.0
    p_positive = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("Exponential needs rate > 0")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.standard_exponential(size) / self.rate

    def mean(self) -> float:
        return 1.0 / self.rate

    def tail(self, x: float) -> float:
        return 1.0 if x < 0 else math.exp(-self.rate * x)


JumpDist = Union[Pareto, SignedPareto, Exponential]


# -- models ----------------------------------------------------------------------


@dataclass(frozen=True)
class CompoundPoissonDrift:
    intensity: float
    jump_dist: JumpDist
    drift: float = 0.0

    def __post_init__(self):
        if not self.intensity > 0:
            raise DomainError("intensity must be positive")


@dataclass(frozen=True)
class StableSeries:
    """Truncated series for the stable law with tail ``(c+ + c-) x^{-alpha}``."""

    alpha: float
    tail_const_pos: float = 1.0
    tail_const_neg: float = 0.0
    n_terms: int = 1000

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise DomainError("alpha must lie in (0, 2)")
        if self.tail_const_pos < 0 or self.tail_const_neg < 0:
            raise DomainError("tail constants must be nonnegative")
        if self.tail_const_pos + self.tail_const_neg <= 0:
            raise DomainError("tail constants must not both vanish")
        if self.n_terms < 1:
            raise DomainError("n_terms must be positive")

    @property
    def c(self) -> float:
        return self.tail_const_pos + self.tail_const_neg

    @property
    def p_positive(self) -> float:
        return self.tail_const_pos / self.c


LevyModel = Union[CompoundPoissonDrift, StableSeries]


@dataclass(frozen=True)
class RngSeed:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2 ** 64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.stream < 0:
            raise DomainError("stream must be nonnegative")

    def generator(self, role: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream, role))
        return np.random.Generator(np.random.Philox(ss))


_COUNT, _TIMES, _SIZES, _SIGNS, _GAMMAS = range(5)


# -- sampling --------------------------------------------------------------------


@dataclass(frozen=True)
class JumpSample:
    """Raw jumps of one path on the rescaled clock: unsorted times in (0, 1]."""

    times: np.ndarray
    sizes: np.ndarray
    slope: float

    def to_path(self) -> CadlagPath:
        order = np.argsort(self.times, kind="stable")
        return CadlagPath.from_jumps(self.times[order], self.sizes[order], slope=self.slope)


def _uniform_times(rng, n):
    return 1.0 - rng.random(n)


def series_magnitudes(gammas: np.ndarray, alpha: float, c: float, t: float = 1.0) -> np.ndarray:
    """Ordered jump magnitudes ``(c t / Gamma_i)^{1/alpha}``."""
    return (c * t / gammas) ** (1.0 / alpha)


def series_compensation(model: StableSeries, smallest: float, t: float = 1.0) -> float:
    """Slope replacing the mean of the jumps smaller than ``smallest``.

    For alpha != 1 the discarded jumps have mean
    ``t (c+ - c-) alpha l^{1-alpha} / (1 - alpha)`` per unit of rescaled time.
    When alpha < 1 this is added back; when alpha > 1 the whole compensated sum
    is mean zero, which subtracts the mean of the kept jumps above ``smallest``
    instead. At alpha = 1 jumps below 1 are compensated.
    """
    a = model.alpha
    skew = model.tail_const_pos - model.tail_const_neg
    if skew == 0.0 or smallest <= 0.0:
        return 0.0
    if a < 1:
        return t * skew * a * smallest ** (1 - a) / (1 - a)
    if a > 1:
        return -t * skew * a * smallest ** (1 - a) / (a - 1)
    return -t * skew * math.log(1.0 / smallest) if smallest < 1.0 else 0.0


def sample_jumps(model: LevyModel, t: float, seed: RngSeed, gammas: Optional[np.ndarray] = None) -> JumpSample:
    """Jumps and drift slope of ``tau -> X_{tau t}`` without building a path.

    ``gammas`` overrides the Poisson arrival times of a stable series (for tests).
    """
    if not t > 0:
        raise DomainError("horizon must be positive")
    if isinstance(model, CompoundPoissonDrift):
        n = int(seed.generator(_COUNT).poisson(model.intensity * t))
        times = _uniform_times(seed.generator(_TIMES), n)
        sizes = model.jump_dist.sample(seed.generator(_SIZES), n)
        return JumpSample(times, sizes, model.drift * t)
    if isinstance(model, StableSeries):
        n = model.n_terms
        if gammas is None:
            gammas = np.cumsum(seed.generator(_GAMMAS).standard_exponential(n))
        gammas = np.asarray(gammas, dtype=float)
        n = gammas.size
        mags = series_magnitudes(gammas, model.alpha, model.c, t)
        sign = np.where(seed.generator(_SIGNS).random(n) < model.p_positive, 1.0, -1.0)
        times = _uniform_times(seed.generator(_TIMES), n)
        slope = series_compensation(model, float(mags[-1]), t) if n else 0.0
        return JumpSample(times, sign * mags, slope)
    raise UnsupportedModel(f"unknown model {model!r}")


def sample_path(model: LevyModel, t: float, seed: RngSeed) -> CadlagPath:
    return sample_jumps(model, t, seed).to_path()


def truncation_bound(alpha: float, c: float, n_terms: int, k: float = 6.0) -> float:
    """Size of the error from stopping the series after ``n_terms`` terms.

    Uses ``Gamma_i ~ i``: the compensated remainder has standard deviation about
    ``c^{1/alpha} sqrt(sum_{i>n} i^{-2/alpha})``, and the sum is bounded by the
    integral ``n^{1 - 2/alpha} / (2/alpha - 1)``. Returns ``k`` such deviations.
    """
    if not 0 < alpha < 2:
        raise DomainError("alpha must lie in (0, 2)")
    p = 2.0 / alpha
    return k * c ** (1.0 / alpha) * math.sqrt(n_terms ** (1.0 - p) / (p - 1.0))


# -- tails and norming ----------------------------------------------------------------


def tail_inverse(c: float, alpha: float, y: float) -> float:
    """Right-continuous inverse of the power tail ``c x^{-alpha}``."""
    if not y > 0:
        raise DomainError("y must be positive")
    if not c > 0 or not 0 < alpha < 2:
        raise DomainError("need c > 0 and alpha in (0, 2)")
    return (c / y) ** (1.0 / alpha)


def pareto_tail_inverse(scale: float, shape: float, intensity: float, y: float) -> float:
    """Inverse of ``x -> intensity * P(xi > x)`` for a Pareto I jump size.

    The tail is at most ``intensity``, so levels at or above it give 0.
    """
    if not y > 0:
        raise DomainError("y must be positive")
    if y >= intensity:
        return 0.0
    return scale * (intensity / y) ** (1.0 / shape)


def _power_tail(model: LevyModel):
    """``(alpha, p_positive)`` of a model in a stable domain of attraction."""
    if isinstance(model, StableSeries):
        return model.alpha, model.p_positive
    d = model.jump_dist
    if isinstance(d, (Pareto, SignedPareto)) and d.shape < 2:
        return d.shape, d.p_positive
    raise UnsupportedModel("norming needs a power-tailed jump law with shape in (0, 2)")


@dataclass(frozen=True)
class Norming:
    a_t: float
    b_t: float
    alpha: float
    tail_const_pos: float
    tail_const_neg: float

    def limit_model(self, n_terms: int = 1000) -> StableSeries:
        return StableSeries(self.alpha, self.tail_const_pos, self.tail_const_neg, n_terms)


CENTERINGS = ("standard", "compensated")


def norming(model: LevyModel, t: float, centering: str = "standard") -> Norming:
    """Centering ``a_t`` and scale ``b_t`` with ``(X_t - a_t) / b_t`` converging.

    ``b_t`` solves ``t * Pi(b_t) = 1`` for the two-sided Lévy tail ``Pi``, which
    makes the limit's tail constant exactly 1. ``a_t`` is 0 below alpha = 1 and
    ``t E[X_1]`` above it.

    ``centering="compensated"`` changes only the alpha < 1 compound Poisson case:
    a Pareto model lacks the limit's jumps below ``scale / b_t``, and
    ``a_t = t (intensity * alpha * scale / (alpha - 1) * (2p - 1) + drift)`` puts
    back their mean (the Pareto mean formula continued below alpha = 1).
    """
    if centering not in CENTERINGS:
        raise DomainError(f"centering must be one of {CENTERINGS}")
    if not t > 0:
        raise DomainError("horizon must be positive")
    alpha, p = _power_tail(model)
    if alpha == 1.0:
        raise UnsupportedModel("alpha = 1 needs a logarithmic centering and is not supported")
    if isinstance(model, StableSeries):
        b = tail_inverse(model.c, alpha, 1.0 / t)
        a = 0.0
    else:
        d = model.jump_dist
        b = pareto_tail_inverse(d.scale, d.shape, model.intensity, 1.0 / t)
        if b == 0.0:
            raise UnsupportedModel("horizon too short: intensity * t must exceed 1")
        if alpha > 1:
            a = t * (model.intensity * d.mean() + model.drift)
        elif centering == "compensated":
            skew = 2 * d.p_positive - 1
            a = t * (model.intensity * skew * d.shape * d.scale / (d.shape - 1) + model.drift)
        else:
            a = 0.0
    return Norming(a, b, alpha, p, 1.0 - p)


def scaled_trimmed_path(model: LevyModel, t: float, spec: TrimSpec, seed: RngSeed) -> CadlagPath:
    """``tau -> ((trimmed X)_{tau t} - tau a_t) / b_t``."""
    nm = norming(model, t)
    y = apply_trim(sample_path(model, t, seed), spec)
    y = scalar_affine(y, 0.0, 1.0 / nm.b_t)
    if nm.a_t:
        y = y + CadlagPath.linear(-nm.a_t / nm.b_t)
    return y


# -- trimmed stable limits --------------------------------------------------------------


def sample_trimmed_stable(alpha: float, c_pos: float, c_neg: float, spec: TrimSpec,
                          n_terms: int, seed: RngSeed) -> CadlagPath:
    """Trimmed stable path: the series sample with the trimmer applied."""
    model = StableSeries(alpha, c_pos, c_neg, n_terms)
    return apply_trim(sample_path(model, 1.0, seed), spec)


def stable_series_drop(alpha: float, c_pos: float, c_neg: float, spec: TrimSpec,
                       n_terms: int, seed: RngSeed) -> CadlagPath:
    """The same trimmed limit built by deleting series terms.

    The series lists jumps by decreasing modulus, so the largest positive
    (negative) jumps are the first positive (negative) terms. Deleting them
    reproduces lookback trimming on the whole path, and every other trimmer at
    ``tau = 1``. The compensating drift is kept unchanged.
    """
    model = StableSeries(alpha, c_pos, c_neg, n_terms)
    js = sample_jumps(model, 1.0, seed)
    drop = np.zeros(js.sizes.size, dtype=bool)
    pos = np.flatnonzero(js.sizes > 0)
    neg = np.flatnonzero(js.sizes < 0)
    if spec.mode in (Mode.POS, Mode.LB_POS):
        drop[pos[: spec.r]] = True
    elif spec.mode is Mode.NEG:
        drop[neg[: spec.s]] = True
    elif spec.mode is Mode.BOTH:
        drop[pos[: spec.r]] = True
        drop[neg[: spec.s]] = True
    elif spec.mode in (Mode.SMOD, Mode.LB_MOD):
        drop[: spec.r] = True
    else:
        # literal modulus trimming has no series-deletion counterpart
        raise DomainError(f"{spec} has no series-deletion form")
    keep = ~drop
    return JumpSample(js.times[keep], js.sizes[keep], js.slope).to_path()


# -- configuration ---------------------------------------------------------------


_DISTS = {"pareto": Pareto, "signed_pareto": SignedPareto, "exponential": Exponential}


def model_to_dict(model: LevyModel) -> dict:
    if isinstance(model, CompoundPoissonDrift):
        d = model.jump_dist
        name = {Pareto: "pareto", SignedPareto: "signed_pareto", Exponential: "exponential"}[type(d)]
        return {"kind": "cpp", "intensity": model.intensity, "drift": model.drift,
                "jump_dist": {"kind": name, **asdict(d)}}
    return {"kind": "stable", **asdict(model)}


def model_from_dict(cfg: dict) -> LevyModel:
    """Build a model from a config mapping.

    ``{"kind": "cpp", "intensity": 100, "drift": 0, "jump_dist": {"kind": "pareto", "scale": 1, "shape": 0.8}}``
    or ``{"kind": "stable", "alpha": 0.8, "tail_const_pos": 1, "tail_const_neg": 0, "n_terms": 1000}``.
    """
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "cpp":
        jd = dict(cfg.pop("jump_dist", {"kind": "pareto"}))
        dk = jd.pop("kind", "pareto")
        if dk not in _DISTS:
            raise DomainError(f"unknown jump distribution {dk!r}")
        try:
            return CompoundPoissonDrift(jump_dist=_DISTS[dk](**jd), **cfg)
        except TypeError as e:
            raise DomainError(f"bad cpp model config: {e}") from None
    if kind == "stable":
        try:
            return StableSeries(**cfg)
        except TypeError as e:
            raise DomainError(f"bad stable model config: {e}") from None
    raise DomainError(f"unknown model kind {kind!r}; expected 'cpp' or 'stable'")
