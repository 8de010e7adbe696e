"""Monte Carlo experiments for trimmed Lévy processes.

Large horizons give paths with ~1e5 jumps, so marginals are computed straight
from the raw jump arrays instead of through :class:`CadlagPath`. In the absence
of ties every rank-based trimmer has a closed form at a fixed time ``tau``:

* global positive/negative trimming and signed modulus trimming subtract the
  top ``r`` qualifying jumps of the prefix ``[0, tau]``;
* lookback trimming subtracts the top ``r`` jumps of the whole path, counted
  only if they occurred by ``tau``.

The literal modulus trimmer has no such form and goes through the path code.
Both routes are cross-checked in the tests.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import ks_2samp

from .j1 import j1_distance, j1_value_within
from .levy import (
    CENTERINGS,
    JumpSample,
    LevyModel,
    RngSeed,
    StableSeries,
    model_from_dict,
    model_to_dict,
    norming,
    sample_jumps,
)
from .paths import (
    CadlagPath,
    DomainError,
    TimeChange,
    breakpoints,
    compose,
    running_sup,
    sup_norm_diff,
)
from .trim import Mode, TrimSpec, apply_trim, continuity_certificate


class ConfigurationError(DomainError):
    pass


def derive_seed(base: int, *keys: int) -> int:
    """Independent 64-bit seed for a sub-experiment."""
    ss = np.random.SeedSequence(base, spawn_key=tuple(keys))
    return int(ss.generate_state(1, np.uint64)[0])


# -- configuration ---------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    model: LevyModel
    horizons: tuple = (10.0, 100.0, 1000.0)
    specs: tuple = (TrimSpec.identity(),)
    n_paths: int = 10_000
    tau_grid: tuple = (0.25, 0.5, 1.0)
    base_seed: int = 0
    ks_threshold: float = 0.05
    ref_terms: int = 2000
    u_grid: tuple = (0.5, 1.0, 2.0)
    centering: str = "standard"

    def __post_init__(self):
        specs = self.specs
        if isinstance(specs, (str, TrimSpec)):
            specs = (specs,)
        specs = tuple(s if isinstance(s, TrimSpec) else TrimSpec.parse(s) for s in specs)
        object.__setattr__(self, "specs", specs)
        for name in ("horizons", "tau_grid", "u_grid"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        h = self.horizons
        if not h or any(v <= 0 for v in h) or any(b <= a for a, b in zip(h, h[1:])):
            raise ConfigurationError("horizons must be positive and increasing")
        if not self.tau_grid or any(not 0 < v <= 1 for v in self.tau_grid):
            raise ConfigurationError("tau_grid must lie in (0, 1]")
        if self.n_paths < 1:
            raise ConfigurationError("n_paths must be positive")
        if not 0 < self.ks_threshold < 1:
            raise ConfigurationError("ks_threshold must lie in (0, 1)")
        if any(u <= 0 for u in self.u_grid):
            raise ConfigurationError("u_grid values must be positive")
        if self.centering not in CENTERINGS:
            raise ConfigurationError(f"centering must be one of {CENTERINGS}")

    def to_dict(self) -> dict:
        return {
            "model": model_to_dict(self.model),
            "horizons": list(self.horizons),
            "specs": [str(s) for s in self.specs],
            "n_paths": self.n_paths,
            "tau_grid": list(self.tau_grid),
            "base_seed": self.base_seed,
            "ks_threshold": self.ks_threshold,
            "ref_terms": self.ref_terms,
            "u_grid": list(self.u_grid),
            "centering": self.centering,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "model" not in d:
            raise ConfigurationError("config needs a 'model' entry")
        d["model"] = model_from_dict(d["model"])
        if "spec" in d:
            d["specs"] = (d.pop("spec"),)
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# -- reports ---------------------------------------------------------------------


def fmt(v) -> str:
    """CSV cell: floats with 17 significant digits, everything else via str."""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


@dataclass
class ExperimentReport:
    kind: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def records(self):
        return [dict(zip(self.columns, r)) for r in self.rows]

    def to_csv(self, stream=None) -> str:
        buf = io.StringIO()
        buf.write(f"# {self.kind}\n")
        buf.write("# metadata: " + json.dumps(self.metadata, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([fmt(v) for v in r])
        text = buf.getvalue()
        if stream is not None:
            stream.write(text)
        return text

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, (np.floating, np.integer, np.bool_)):
                return v.item()
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        return json.dumps({"kind": self.kind, "metadata": self.metadata, "columns": self.columns,
                           "rows": [[clean(v) for v in r] for r in self.rows]}, sort_keys=True, indent=1)


# -- vectorised marginals ------------------------------------------------------------


def _prefix_top(key, contrib, times, taus, k, pool=64):
    """``out[q, j]`` = summed ``contrib`` of the ``j`` largest positive ``key`` values
    among jumps with time <= ``taus[q]`` (fewer if there are not enough)."""
    out = np.zeros((len(taus), k + 1))
    if k == 0 or key.size == 0:
        return out
    n = key.size
    size = min(n, max(pool, 8 * k))
    cand = np.argpartition(-key, size - 1)[:size] if size < n else np.arange(n)
    cand = cand[np.argsort(-key[cand], kind="stable")]
    cand = cand[key[cand] > 0]
    complete = size == n or cand.size < size  # the pool holds every positive key
    for q, tau in enumerate(taus):
        sel = cand[times[cand] <= tau][:k]
        if sel.size < k and not complete:
            m = np.flatnonzero((times <= tau) & (key > 0))
            sel = m[np.argsort(-key[m], kind="stable")[:k]]
        c = np.cumsum(contrib[sel])
        out[q, 1:sel.size + 1] = c
        out[q, sel.size + 1:] = c[-1] if sel.size else 0.0
    return out


def _overall_top(key, r):
    """Indices of the ``r`` largest positive keys."""
    pos = np.flatnonzero(key > 0)
    if r == 0:
        return pos[:0]
    if pos.size > r:
        pos = pos[np.argpartition(-key[pos], r - 1)[:r]]
    return pos


def trimmed_marginals(js: JumpSample, specs: Sequence[TrimSpec], taus: Sequence[float]) -> np.ndarray:
    """Unscaled trimmed values ``(Psi x)(tau)`` for every spec and tau, shape (specs, taus)."""
    taus = np.asarray(taus, dtype=float)
    times, sizes = js.times, js.sizes
    order = np.argsort(taus)
    bins = np.searchsorted(taus[order], times, side="left")
    sums = np.cumsum(np.bincount(bins, weights=sizes, minlength=taus.size + 1))[: taus.size]
    base = np.empty(taus.size)
    base[order] = sums
    base += js.slope * taus

    need = {"pos": 0, "neg": 0, "mod": 0}
    for s in specs:
        if s.mode in (Mode.POS, Mode.BOTH):
            need["pos"] = max(need["pos"], s.r)
        if s.mode in (Mode.NEG, Mode.BOTH):
            need["neg"] = max(need["neg"], s.s)
        if s.mode is Mode.SMOD:
            need["mod"] = max(need["mod"], s.r)
    top = {
        "pos": _prefix_top(sizes, sizes, times, taus, need["pos"]),
        "neg": _prefix_top(-sizes, sizes, times, taus, need["neg"]),
        "mod": _prefix_top(np.abs(sizes), sizes, times, taus, need["mod"]),
    }

    out = np.empty((len(specs), taus.size))
    for k, s in enumerate(specs):
        if s.mode is Mode.POS:
            out[k] = base - top["pos"][:, s.r]
        elif s.mode is Mode.NEG:
            out[k] = base - top["neg"][:, s.s]
        elif s.mode is Mode.BOTH:
            out[k] = base - top["pos"][:, s.r] - top["neg"][:, s.s]
        elif s.mode is Mode.SMOD:
            out[k] = base - top["mod"][:, s.r]
        elif s.mode in (Mode.LB_POS, Mode.LB_MOD):
            key = sizes if s.mode is Mode.LB_POS else np.abs(sizes)
            idx = _overall_top(key, s.r)
            # the overall record jumps, counted once they have happened
            out[k] = base - (sizes[idx][None, :] * (times[idx][None, :] <= taus[:, None])).sum(axis=1)
        else:
            path = apply_trim(js.to_path(), s)
            out[k] = path(taus)
    return out


def _model_chunk(args):
    model, t, seed, start, stop, specs, taus = args
    vals = np.empty((stop - start, len(specs), len(taus)))
    for p in range(start, stop):
        vals[p - start] = trimmed_marginals(sample_jumps(model, t, RngSeed(seed, p)), specs, taus)
    return vals


def _map_paths(fn, make_args, n_paths, workers):
    """Evaluate ``fn`` over path-index chunks; the result does not depend on ``workers``."""
    chunk = max(1, math.ceil(n_paths / max(1, workers) / 4)) if workers > 1 else n_paths
    bounds = [(a, min(n_paths, a + chunk)) for a in range(0, n_paths, chunk)]
    jobs = [make_args(a, b) for a, b in bounds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(fn, jobs))
    else:
        parts = [fn(j) for j in jobs]
    return np.concatenate(parts, axis=0)


def model_marginals(model, t, specs, taus, n_paths, seed, workers=1):
    """Unscaled trimmed marginals of model paths, shape (paths, specs, taus)."""
    return _map_paths(_model_chunk, lambda a, b: (model, t, seed, a, b, tuple(specs), tuple(taus)), n_paths, workers)


def stable_marginals(alpha, c_pos, c_neg, specs, taus, n_paths, seed, n_terms=2000, workers=1):
    model = StableSeries(alpha, c_pos, c_neg, n_terms)
    return model_marginals(model, 1.0, specs, taus, n_paths, seed, workers)


# -- marginal convergence -------------------------------------------------------------------


MARGINAL_COLUMNS = ["spec", "t", "tau", "n", "ks", "mean", "var", "ci_radius", "ref_mean", "ref_var"]


def marginal_convergence(config: ExperimentConfig, workers: int = 1) -> ExperimentReport:
    """KS distance between scaled trimmed model marginals and the trimmed stable limit."""
    nm0 = norming(config.model, config.horizons[0])
    taus = np.asarray(config.tau_grid)
    ref_seed = derive_seed(config.base_seed, 0)
    ref = stable_marginals(nm0.alpha, nm0.tail_const_pos, nm0.tail_const_neg, config.specs, taus,
                           config.n_paths, ref_seed, config.ref_terms, workers)
    rows = []
    seeds = {"reference": ref_seed}
    for h, t in enumerate(config.horizons):
        nm = norming(config.model, t, config.centering)
        seed = derive_seed(config.base_seed, 1, h)
        seeds[f"t={fmt(t)}"] = seed
        raw = model_marginals(config.model, t, config.specs, taus, config.n_paths, seed, workers)
        scaled = (raw - taus[None, None, :] * nm.a_t) / nm.b_t
        for k, spec in enumerate(config.specs):
            for q, tau in enumerate(taus):
                a, b = scaled[:, k, q], ref[:, k, q]
                ks = float(ks_2samp(a, b).statistic)
                rows.append((str(spec), float(t), float(tau), config.n_paths, ks,
                             float(a.mean()), float(a.var()), float(1.96 * a.std() / math.sqrt(a.size)),
                             float(b.mean()), float(b.var())))
    meta = {"config": config.to_dict(), "config_digest": config.digest(), "seeds": seeds}
    return ExperimentReport("marginal_convergence", list(MARGINAL_COLUMNS), rows, meta)


@dataclass(frozen=True)
class CellVerdict:
    spec: str
    tau: float
    ks: tuple
    nonincreasing: bool
    final_below: bool


def convergence_cells(report: ExperimentReport, threshold: float) -> list:
    """Per (spec, tau) cell: KS along horizons, monotonicity and final threshold check."""
    cells: dict = {}
    for rec in report.records():
        cells.setdefault((rec["spec"], rec["tau"]), []).append((rec["t"], rec["ks"]))
    out = []
    for (spec, tau), pts in cells.items():
        ks = tuple(k for _, k in sorted(pts))
        mono = all(b <= a for a, b in zip(ks, ks[1:]))
        out.append(CellVerdict(spec, tau, ks, mono, ks[-1] < threshold))
    return out


# -- ties --------------------------------------------------------------------------------


@dataclass
class TieScan:
    events: int
    n_paths: int
    min_gaps: np.ndarray
    histogram: tuple  # (counts, bin_edges) of log10 minimal gaps


def _min_prefix_gap(times, sizes, r):
    """Smallest gap between consecutive entries of the top r+1 moduli over all prefixes."""
    order = np.argsort(times, kind="stable")
    heap: list = []
    best = math.inf
    cap = r + 1
    for v in np.abs(sizes[order]).tolist():
        if len(heap) < cap:
            heapq.heappush(heap, v)
        elif v > heap[0]:
            heapq.heapreplace(heap, v)
        else:
            continue
        if len(heap) >= 2:
            top = sorted(heap, reverse=True)
            g = min(a - b for a, b in zip(top, top[1:]))
            best = min(best, g)
    return best


def tie_scan(paths, r: int, tol: float = 0.0, bins: int = 20) -> TieScan:
    """Count paths with a prefix where the j-th and (j+1)-th largest jump moduli
    (j = 1..r) are within ``tol``."""
    if tol < 0:
        raise DomainError("tol must be nonnegative")
    if r < 1:
        raise DomainError("depth r must be >= 1")
    gaps = []
    for x in paths:
        if isinstance(x, JumpSample):
            gaps.append(_min_prefix_gap(x.times, x.sizes, r))
        else:
            gaps.append(_min_prefix_gap(x.jump_t, x.jump_s, r))
    gaps = np.asarray(gaps, dtype=float)
    events = int(np.count_nonzero(gaps <= tol))
    finite = gaps[np.isfinite(gaps) & (gaps > 0)]
    if finite.size:
        hist = np.histogram(np.log10(finite), bins=bins)
    else:
        hist = (np.zeros(bins, dtype=int), np.linspace(0, 1, bins + 1))
    return TieScan(events, gaps.size, gaps, (hist[0], hist[1]))


# -- continuity probes --------------------------------------------------------------------


@dataclass(frozen=True)
class Perturbation:
    """``x_n = x + eps_n 1_[at, 1]`` (kind "level") or ``x_n = x ∘ lambda_n`` with
    ``lambda_n`` moving time ``at`` by ``eps_n`` (kind "shift"); ``eps_n = scale n^-power``."""

    kind: str = "level"
    at: float = 2 / 3
    scale: float = 1.0
    power: float = 1.0

    def eps(self, n: int) -> float:
        return self.scale * n ** (-self.power)

    def __call__(self, x: CadlagPath, n: int) -> CadlagPath:
        e = self.eps(n)
        if self.kind == "level":
            return x + e * CadlagPath.indicator(self.at)
        if self.kind == "shift":
            target = min(max(self.at - e, 1e-9), 1 - 1e-9)
            return compose(x, TimeChange([0.0, self.at, 1.0], [0.0, target, 1.0]).inverse())
        raise ConfigurationError(f"unknown perturbation kind {self.kind!r}")


FAMILIES = {
    "egrtrim": Perturbation("level", 2 / 3, 1.0, 1.0),
    "smod-flip": Perturbation("level", 1 / 3, 1.0, 1.0),
    "fast": Perturbation("level", 2 / 3, 1.0, 2.0),
    "shift": Perturbation("shift", 1 / 2, 0.25, 2.0),
}

PROBE_COLUMNS = ["n", "d_input", "d_output", "sup_output", "joint_output", "time_term", "value_term"]


@dataclass
class ProbeResult:
    report: ExperimentReport
    certificate: object

    @property
    def joint(self):
        return self.report.column("joint_output")

    @property
    def distances(self):
        return self.report.column("d_output")


def continuity_probe(x: CadlagPath, spec: TrimSpec, family: Perturbation | Callable | str = "egrtrim",
                     n_steps: int = 64, n_start: int = 1) -> ProbeResult:
    """Distances between trimmed perturbations and the trimmed path.

    ``joint_output`` is the smallest level discrepancy of the outputs achievable
    with time changes no larger than the input distance ``d_input``, maxed
    with ``d_input``; it stays large exactly when the trimmer needs a much
    larger deformation of time on the output than on the input.
    """
    if isinstance(family, str):
        if family not in FAMILIES:
            raise ConfigurationError(f"unknown perturbation family {family!r}")
        family = FAMILIES[family]
    ns = list(range(n_start, n_start + n_steps))
    xs = [family(x, n) for n in ns]
    d_in = [j1_distance(xn, x).distance for xn in xs]
    if max(d_in) > 0 and not d_in[-1] <= 0.5 * d_in[0]:
        raise ConfigurationError("perturbation family does not approach x in J1")
    px = apply_trim(x, spec)
    rows = []
    for n, xn, din in zip(ns, xs, d_in):
        pxn = apply_trim(xn, spec)
        res = j1_distance(pxn, px)
        sup = sup_norm_diff(pxn, px)
        if pxn.is_step() and px.is_step():
            joint = max(din, j1_value_within(pxn, px, din))
        else:
            joint = None
        rows.append((n, din, res.distance, sup, joint, res.time_term, res.value_term))
    cert = continuity_certificate(x, spec)
    meta = {"spec": str(spec), "path": x.to_dict(), "certificate": cert.verdict.value,
            "discontinuity_proven": cert.discontinuity_proven}
    return ProbeResult(ExperimentReport("continuity_probe", list(PROBE_COLUMNS), rows, meta), cert)


# -- ruin -----------------------------------------------------------------------------


def ruin_time(x: CadlagPath, u: float) -> Optional[float]:
    """First time the path strictly exceeds ``u``; None if it never does on [0, 1]."""
    if not u > 0:
        raise DomainError("ruin level u must be positive")
    times, left, right = breakpoints(x)
    for k in range(times.size):
        if right[k] > u:
            return float(times[k])
        if k + 1 < times.size and left[k + 1] > u:
            # linear piece from right[k] up to left[k+1] crosses u
            frac = (u - right[k]) / (left[k + 1] - right[k])
            return float(times[k] + frac * (times[k + 1] - times[k]))
    return None


def trimmed_sup(js: JumpSample, r: int) -> float:
    """``sup_{tau <= 1}`` of the positively trimmed path."""
    sizes = js.sizes
    if js.slope >= 0 and (sizes.size == 0 or sizes.min() > 0):
        # nondecreasing path: the supremum is the final value
        return float(trimmed_marginals(js, [TrimSpec(Mode.POS, r)], [1.0])[0, 0])
    path = apply_trim(js.to_path(), TrimSpec(Mode.POS, r))
    return float(running_sup(path)(1.0))


def _sup_chunk(args):
    model, t, seed, start, stop, rs = args
    out = np.empty((stop - start, len(rs)))
    for p in range(start, stop):
        js = sample_jumps(model, t, RngSeed(seed, p))
        out[p - start] = [trimmed_sup(js, r) for r in rs]
    return out


RUIN_COLUMNS = ["t", "r", "u", "n", "p_model", "p_stable", "se_combined", "z"]


def ruin_experiment(config: ExperimentConfig, u_grid=None, workers: int = 1) -> ExperimentReport:
    """No-ruin probabilities ``P(T(u b_t) > t)`` against ``P(sup_{[0,1]} Y <= u)``.

    Every spec must be a positive global trim ``pos:r`` (``both:0,0`` counts as ``r = 0``).
    """
    u_grid = tuple(config.u_grid if u_grid is None else u_grid)
    if any(u <= 0 for u in u_grid):
        raise ConfigurationError("u_grid values must be positive")
    rs = []
    for s in config.specs:
        if s.is_identity:
            rs.append(0)
        elif s.mode is Mode.POS:
            rs.append(s.r)
        else:
            raise ConfigurationError(f"ruin experiments take pos:r specs, got {s}")
    nm0 = norming(config.model, config.horizons[0])
    ref_seed = derive_seed(config.base_seed, 2)
    ref_model = StableSeries(nm0.alpha, nm0.tail_const_pos, nm0.tail_const_neg, config.ref_terms)
    ref = _map_paths(_sup_chunk, lambda a, b: (ref_model, 1.0, ref_seed, a, b, tuple(rs)), config.n_paths, workers)
    rows = []
    seeds = {"reference": ref_seed}
    for h, t in enumerate(config.horizons):
        nm = norming(config.model, t)
        seed = derive_seed(config.base_seed, 3, h)
        seeds[f"t={fmt(t)}"] = seed
        sups = _map_paths(_sup_chunk, lambda a, b: (config.model, t, seed, a, b, tuple(rs)), config.n_paths, workers)
        for k, r in enumerate(rs):
            for u in u_grid:
                pm = float(np.mean(sups[:, k] <= u * nm.b_t))
                ps = float(np.mean(ref[:, k] <= u))
                se = math.sqrt(pm * (1 - pm) / sups.shape[0] + ps * (1 - ps) / ref.shape[0])
                z = abs(pm - ps) / se if se > 0 else (0.0 if pm == ps else math.inf)
                rows.append((float(t), r, float(u), config.n_paths, pm, ps, se, z))
    meta = {"config": config.to_dict(), "config_digest": config.digest(), "seeds": seeds}
    return ExperimentReport("ruin_experiment", list(RUIN_COLUMNS), rows, meta)

