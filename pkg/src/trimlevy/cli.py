"""Command line front end: ``trimlevy <command> [flags]``.

Every output file embeds the resolved configuration and seed. Paths are JSON
objects with ``skeleton``/``jumps`` arrays plus a ``meta`` entry; reports are
CSV with ``#`` metadata lines above the header row.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .harness import (
    ConfigurationError,
    ExperimentConfig,
    ExperimentReport,
    FAMILIES,
    continuity_probe,
    convergence_cells,
    fmt,
    marginal_convergence,
    ruin_experiment,
)
from .j1 import j1_distance
from .levy import (
    CompoundPoissonDrift,
    Pareto,
    RngSeed,
    SignedPareto,
    StableSeries,
    model_from_dict,
    model_to_dict,
    sample_path,
)
from .paths import CadlagPath, DomainError, running_jump_sup
from .trim import TrimSpec, apply_trim, first_record_time

OUT_ENV = "TRIMLEVY_OUT"
DEFAULT_SEED = 20240601

# the risk process pictured for the lookback/trim-as-you-go comparison
FIGURE1_MODEL = CompoundPoissonDrift(100.0, Pareto(1.0, 2.0), -110.0)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _spec(text: str) -> TrimSpec:
    try:
        return TrimSpec.parse(text)
    except DomainError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _specs(text: str) -> tuple:
    return tuple(_spec(s) for s in text.split(";") if s.strip())


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(args, name: str, text: str) -> Path:
    p = _out_dir(args) / name
    p.write_text(text)
    print(p)
    return p


def _write_path(args, name: str, x: CadlagPath, meta: dict) -> Path:
    doc = x.to_dict()
    doc["meta"] = meta
    return _write(args, name, json.dumps(doc) + "\n")


# -- model resolution --------------------------------------------------------------


def _model_from_args(args):
    """Flags override the config file, which overrides defaults."""
    cfg = {}
    if args.config:
        cfg = _load_json(args.config)
    model = model_from_dict(cfg["model"]) if "model" in cfg else None
    kind = args.model or (None if model else "cpp")
    if kind == "cpp":
        base = model if isinstance(model, CompoundPoissonDrift) else CompoundPoissonDrift(100.0, Pareto(1.0, 0.8), 0.0)
        dist = base.jump_dist
        if args.alpha is not None:
            dist = (SignedPareto(dist.scale, args.alpha, dist.p_positive) if isinstance(dist, SignedPareto)
                    else Pareto(getattr(dist, "scale", 1.0), args.alpha))
        model = CompoundPoissonDrift(args.intensity if args.intensity is not None else base.intensity, dist,
                                     args.drift if args.drift is not None else base.drift)
    elif kind == "stable":
        base = model if isinstance(model, StableSeries) else StableSeries(0.8, 1.0, 0.0, 1000)
        model = StableSeries(args.alpha if args.alpha is not None else base.alpha,
                             base.tail_const_pos, base.tail_const_neg,
                             args.n_terms if args.n_terms is not None else base.n_terms)
    return model, cfg


def _experiment_config(args, default_specs) -> ExperimentConfig:
    model, cfg = _model_from_args(args)
    cfg = {k: v for k, v in cfg.items() if k != "model"}
    cfg["model"] = model_to_dict(model)
    if args.seed is not None:
        cfg["base_seed"] = args.seed
    cfg.setdefault("base_seed", DEFAULT_SEED)
    if args.spec:
        cfg["specs"] = [str(s) for s in args.spec]
    cfg.setdefault("specs", default_specs)
    if args.horizons:
        cfg["horizons"] = list(args.horizons)
    if args.paths is not None:
        cfg["n_paths"] = args.paths
    if getattr(args, "tau_grid", None):
        cfg["tau_grid"] = list(args.tau_grid)
    if getattr(args, "u_grid", None):
        cfg["u_grid"] = list(args.u_grid)
    if getattr(args, "ref_terms", None):
        cfg["ref_terms"] = args.ref_terms
    if getattr(args, "centering", None):
        cfg["centering"] = args.centering
    return ExperimentConfig.from_dict(cfg)


# -- commands ------------------------------------------------------------------------


def cmd_simulate(args):
    model, _ = _model_from_args(args)
    seed = RngSeed(args.seed if args.seed is not None else DEFAULT_SEED, args.stream)
    t = args.horizon if args.horizon is not None else 1.0
    x = sample_path(model, t, seed)
    if args.spec:
        x = apply_trim(x, args.spec[0])
    meta = {"command": "simulate", "model": model_to_dict(model), "horizon": t,
            "seed": seed.seed, "stream": seed.stream, "spec": str(args.spec[0]) if args.spec else None}
    _write_path(args, args.name or "path.json", x, meta)


def cmd_trim(args):
    if not args.spec:
        raise ConfigurationError("trim needs --spec")
    src = _load_json(args.path)
    x = CadlagPath.from_dict(src)
    y = apply_trim(x, args.spec[0])
    meta = {"command": "trim", "spec": str(args.spec[0]), "source": str(args.path), "source_meta": src.get("meta")}
    _write_path(args, args.name or "trimmed.json", y, meta)


def _egrtrim_pair(n: int):
    x = CadlagPath.indicator(1 / 3) + CadlagPath.indicator(2 / 3)
    return x + (1.0 / n) * CadlagPath.indicator(2 / 3), x


def cmd_dist(args):
    if args.egrtrim:
        x, y = _egrtrim_pair(args.egrtrim)
        source = {"pair": "egrtrim", "n": args.egrtrim}
    elif args.x and args.y:
        x, y = CadlagPath.from_dict(_load_json(args.x)), CadlagPath.from_dict(_load_json(args.y))
        source = {"x": str(args.x), "y": str(args.y)}
    else:
        raise ConfigurationError("dist needs --x and --y path files, or --egrtrim N")
    res = j1_distance(x, y)
    rep = ExperimentReport(
        "j1_distance", ["distance", "time_term", "value_term", "exact", "witness_u", "witness_v"],
        [(res.distance, res.time_term, res.value_term, int(res.exact),
          " ".join(fmt(v) for v in res.witness.u), " ".join(fmt(v) for v in res.witness.v))],
        {"command": "dist", **source})
    _write(args, args.name or "dist.csv", rep.to_csv())


_PROBE_PATHS = {
    "egrtrim": lambda: CadlagPath.indicator(1 / 3) + CadlagPath.indicator(2 / 3),
    "single": lambda: CadlagPath.indicator(1 / 3) + 0.5 * CadlagPath.indicator(2 / 3),
    "flip": lambda: CadlagPath.indicator(1 / 3, 2 / 3),
}


def cmd_probe(args):
    if args.path:
        x = CadlagPath.from_dict(_load_json(args.path))
    else:
        x = _PROBE_PATHS[args.example]()
    spec = args.spec[0] if args.spec else TrimSpec.parse("lb-pos:1")
    res = continuity_probe(x, spec, args.family, args.steps)
    res.report.metadata["family"] = args.family
    _write(args, args.name or "probe.csv", res.report.to_csv())


def cmd_converge(args):
    cfg = _experiment_config(args, ["both:0,0", "pos:1", "both:1,1", "smod:1", "lb-pos:1"])
    rep = marginal_convergence(cfg, workers=args.workers)
    _write(args, args.name or "converge.csv", rep.to_csv())
    _write(args, (args.name or "converge.csv").rsplit(".", 1)[0] + ".json", rep.to_json() + "\n")
    for c in convergence_cells(rep, cfg.ks_threshold):
        print(f"{c.spec:>10} tau={c.tau:<5} ks={' '.join(f'{k:.4f}' for k in c.ks)} "
              f"nonincreasing={c.nonincreasing} below={c.final_below}")


def cmd_ruin(args):
    cfg = _experiment_config(args, ["both:0,0", "pos:1"])
    rep = ruin_experiment(cfg, workers=args.workers)
    _write(args, args.name or "ruin.csv", rep.to_csv())
    _write(args, (args.name or "ruin.csv").rsplit(".", 1)[0] + ".json", rep.to_json() + "\n")


def figure1_table(seed: int, n_grid: int = 1001):
    """Original, trim-as-you-go and lookback paths of the pictured risk model on a grid
    that also contains every jump time."""
    x = sample_path(FIGURE1_MODEL, 1.0, RngSeed(seed, 0))
    tay = apply_trim(x, TrimSpec.parse("pos:1"))
    lb = apply_trim(x, TrimSpec.parse("lb-pos:1"))
    grid = np.union1d(np.linspace(0.0, 1.0, n_grid), x.jump_t)
    rec = first_record_time(x, 1.0, "positive")
    sup = running_jump_sup(x, "+")
    cols = np.column_stack([grid, x(grid), tay(grid), lb(grid), sup(grid)])
    return cols, rec, x


def cmd_figure1(args):
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    cols, rec, x = figure1_table(seed, args.grid)
    meta = {"command": "figure1", "model": model_to_dict(FIGURE1_MODEL), "horizon": 1.0, "seed": seed,
            "stream": 0, "record_time": rec, "n_jumps": x.n_jumps}
    rep = ExperimentReport("figure1", ["tau", "original", "trim_as_you_go", "lookback", "positive_jump_sup"],
                           [tuple(float(v) for v in row) for row in cols], meta)
    _write(args, args.name or "figure1.csv", rep.to_csv())


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (model and experiment keys)")
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--name", help="output file name")
    common.add_argument("--spec", type=_specs, help="trim spec(s), e.g. 'pos:1' or 'pos:1;lb-pos:1'")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", choices=["cpp", "stable"])
    model.add_argument("--alpha", type=float, help="tail index (Pareto shape or stable alpha)")
    model.add_argument("--intensity", type=float)
    model.add_argument("--drift", type=float)
    model.add_argument("--n-terms", type=int, help="stable series terms")

    exp = argparse.ArgumentParser(add_help=False)
    exp.add_argument("--horizons", type=_floats, help="comma separated horizons t")
    exp.add_argument("--paths", type=int, help="paths per horizon")
    exp.add_argument("--ref-terms", type=int, help="series terms for the stable reference")
    exp.add_argument("--centering", choices=["standard", "compensated"])
    exp.add_argument("--workers", type=int, default=1)

    p = argparse.ArgumentParser(prog="trimlevy", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common, model], help="sample a path as JSON")
    s.add_argument("--horizon", type=float, help="time horizon t")
    s.add_argument("--stream", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("trim", parents=[common], help="trim a path JSON file")
    s.add_argument("path", type=Path)
    s.set_defaults(func=cmd_trim)

    s = sub.add_parser("dist", parents=[common], help="J1 distance between two paths")
    s.add_argument("--x", type=Path)
    s.add_argument("--y", type=Path)
    s.add_argument("--egrtrim", type=int, metavar="N", help="use x + (1/N) 1_[2/3,1] against x")
    s.set_defaults(func=cmd_dist)

    s = sub.add_parser("probe", parents=[common], help="continuity probe of a trimmer")
    s.add_argument("--path", type=Path)
    s.add_argument("--example", choices=sorted(_PROBE_PATHS), default="egrtrim")
    s.add_argument("--family", choices=sorted(FAMILIES), default="egrtrim")
    s.add_argument("--steps", type=int, default=64)
    s.set_defaults(func=cmd_probe)

    s = sub.add_parser("converge", parents=[common, model, exp], help="marginal convergence experiment")
    s.add_argument("--tau-grid", type=_floats)
    s.set_defaults(func=cmd_converge)

    s = sub.add_parser("ruin", parents=[common, model, exp], help="ruin probability experiment")
    s.add_argument("--u-grid", type=_floats)
    s.set_defaults(func=cmd_ruin)

    s = sub.add_parser("figure1", parents=[common], help="original / trim-as-you-go / lookback series")
    s.add_argument("--grid", type=int, default=1001, help="uniform grid points (jump times are added)")
    s.set_defaults(func=cmd_figure1)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (DomainError, OSError, KeyError, json.JSONDecodeError) as e:
        print(f"trimlevy {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
