"""Command-line frontend.

Exit codes: 0 ok, 1 a verifier (or hull sandwich) found a violation,
2 invalid configuration or input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .cover import OracleLimitError
from .config import ConfigError, ExperimentConfig, ProductCfg, WeightedSumCfg, load_config
from .dynamics import sample_space
from .mm_space import PRODUCT, MatrixCache, SampledSpace
from .profile import ProfileGrid, compute_profile, preceq_check, stability_diagnostic, write_atomic
from .subadd import ConditionViolation, subadditive_hull
from .verify import SUITES, run_suite, summarize

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


# --- config-driven commands ---------------------------------------------------


def _overrides(args) -> dict:
    upd = {key: getattr(args, key) for key in ("seed", "estimator", "oracle_limit", "workers")}
    if args.no_cache:
        upd["cache"] = False
    return upd


def _out_dir(cfg: ExperimentConfig | None, args) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(cfg.output.dir if cfg is not None else "out")


def _space(cfg: ExperimentConfig) -> SampledSpace:
    system = cfg.build_system()
    if cfg.enumerate:
        return sample_space(system, enumerate=True)
    return sample_space(system, cfg.N, cfg.seed)


def _profile(cfg: ExperimentConfig, space: SampledSpace, system, rho, out: Path) -> ProfileGrid:
    cache = MatrixCache(out / "cache") if cfg.cache else None
    return compute_profile(system, rho, cfg.n_grid, cfg.eps_grid, estimator=cfg.estimator,
                           oracle_limit=cfg.oracle_limit, workers=cfg.workers, cache=cache, space=space)


def _write_grid(grid: ProfileGrid, out: Path, stem: str) -> None:
    write_atomic(out / f"{stem}.csv", grid.to_csv())
    write_atomic(out / f"{stem}.json", grid.to_json())


def cmd_profile(cfg: ExperimentConfig, out: Path) -> int:
    grid = _profile(cfg, _space(cfg), cfg.build_system(), cfg.build_semimetric(), out)
    _write_grid(grid, out, cfg.output.name)
    print(f"wrote {out / cfg.output.name}.csv and .json")
    return EXIT_OK


def cmd_demo_unstable(cfg: ExperimentConfig, out: Path) -> int:
    """Product grid, per-component grids on the projected sample, and the diagnostic."""
    system = cfg.build_system()
    comps = []
    if isinstance(cfg.system, ProductCfg):
        if not isinstance(cfg.semimetric, WeightedSumCfg):
            raise ConfigError("semimetric: demo-unstable on a product needs a weighted_sum semimetric")
        for m, c in enumerate(cfg.semimetric.components, start=1):
            if c.weight != 2.0**-m:
                raise ConfigError(f"semimetric.components.{m - 1}.weight: expected 2^-{m}, got {c.weight}")
        comps = [(s, c.semimetric.build()) for s, c in zip(system.components, cfg.semimetric.components)]

    space = _space(cfg)
    name = cfg.output.name
    grid = _profile(cfg, space, system, cfg.build_semimetric(), out)
    _write_grid(grid, out, name)
    diag = {"grid": stability_diagnostic(grid, cfg.ratio_cap, cfg.growth_cap), "components": []}
    for m, (s, rho) in enumerate(comps):
        sub = space.project(m)
        g = _profile(cfg, sub, s, rho, out)
        g.provenance["component_system"] = s.to_dict()
        _write_grid(g, out, f"{name}.component{m + 1}")
        diag["components"].append(stability_diagnostic(g, cfg.ratio_cap, cfg.growth_cap))
    write_atomic(out / f"{name}.diagnostic.json", _dump(diag))
    flags = [diag["grid"]["flagged"], *[d["flagged"] for d in diag["components"]]]
    print(f"grid flagged: {flags[0]}; components flagged: {flags[1:]}")
    return EXIT_OK


def _points_json(points):
    if isinstance(points, tuple):
        return [_points_json(p) for p in points]
    return np.asarray(points).tolist()


def cmd_sample(cfg: ExperimentConfig, out: Path) -> int:
    space = _space(cfg)
    doc = {
        "kind": space.kind,
        "points": _points_json(space.points),
        "weights": space.weights.tolist(),
        "provenance": space.provenance,
    }
    if space.kind == PRODUCT:
        doc["component_kinds"] = [type(c).__name__ for c in cfg.build_system().components]
    write_atomic(out / f"{cfg.output.name}.sample.json", _dump(doc))
    print(f"wrote {space.size} points to {out / cfg.output.name}.sample.json")
    return EXIT_OK


# --- file-driven commands -------------------------------------------------------


def _read_triple(path: Path):
    """eta, phi, psi from JSON {eta, phi, psi} or CSV with header n,eta,phi,psi."""
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"--input: cannot read {path}: {err.strerror}") from None
    if path.suffix.lower() == ".csv":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"n", "eta", "phi", "psi"}:
            raise ConfigError("--input: CSV header must be n,eta,phi,psi")
        if [int(r["n"]) for r in rows] != list(range(1, len(rows) + 1)):
            raise ConfigError("--input: n must run 1, 2, ... without gaps")
        return tuple([float(r[c]) for r in rows] for c in ("eta", "phi", "psi"))
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"--input: not valid JSON: {err}") from None
    if not isinstance(doc, dict) or set(doc) - {"eta", "phi", "psi"} or not {"eta", "phi", "psi"} <= set(doc):
        raise ConfigError("--input: JSON must have exactly the keys eta, phi, psi")
    return doc["eta"], doc["phi"], doc["psi"]


def cmd_hull(args, out: Path) -> int:
    eta, phi, psi = (np.asarray(s, dtype=np.float64) for s in _read_triple(Path(args.input)))
    if args.n_max is not None:
        if args.n_max > len(phi):
            raise ConfigError(f"--n-max: {args.n_max} exceeds the sequence length {len(phi)}")
        eta, phi, psi = eta[: args.n_max], phi[: args.n_max], psi[: args.n_max]
    try:
        hull = subadditive_hull(eta, phi, psi)
    except ConditionViolation as err:
        raise ConfigError(f"--input: hypothesis {err.condition} fails at (k, n)={err.index}: {err}") from None
    except ValueError as err:
        raise ConfigError(f"--input: {err}") from None
    write_atomic(out / "hull.json", _dump(hull.to_dict()))
    genuine = [v for v in hull.violations if not v["horizon"]]
    print(f"hull over N_max={hull.N_max}: {len(hull.violations)} sandwich failures, {len(genuine)} below the horizon")
    return EXIT_VIOLATION if genuine else EXIT_OK


def _load_grid(path: str, flag: str) -> ProfileGrid:
    try:
        return ProfileGrid.load(path)
    except OSError as err:
        raise ConfigError(f"{flag}: cannot read {path}: {err.strerror}") from None
    except (ValueError, KeyError) as err:
        raise ConfigError(f"{flag}: {err}") from None


def cmd_compare(args, out: Path) -> int:
    left = _load_grid(args.left, "--left")
    right = _load_grid(args.right, "--right")
    w = preceq_check(left, right, args.c_max)
    write_atomic(out / "compare.json", _dump({"left": args.left, "right": args.right, **w.to_dict()}))
    print(f"left preceq right: {w.holds} (C = {w.C:g}, C_max = {args.c_max:g})")
    return EXIT_OK


def cmd_verify(args, out: Path) -> int:
    records = run_suite(args.suite, args.seed, args.budget, args.oracle_limit)
    summary = summarize(records)
    doc = {"suite": args.suite, "seed": args.seed, "budget": args.budget, "summary": summary,
           "records": [r.to_dict() for r in records]}
    write_atomic(out / f"verify_{args.suite}.json", _dump(doc))
    print(f"{args.suite}: {summary['checked']} checked, {summary['skipped']} skipped, "
          f"{summary['violations']} violations")
    return EXIT_VIOLATION if summary["violations"] else EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scalent", description="Scaling-entropy profiles of finite samples.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config: bool):
        if config:
            sp.add_argument("--config", required=True, metavar="PATH", help="YAML experiment config")
            sp.add_argument("--seed", type=_u64, help="override the config seed")
            sp.add_argument("--estimator", choices=("exact", "greedy"), help="override the config estimator")
            sp.add_argument("--oracle-limit", type=_positive, help="exact search size limit (distinct points)")
            sp.add_argument("--workers", type=_positive, help="processes for grid evaluation")
            sp.add_argument("--no-cache", action="store_true", help="bypass the distance-matrix cache")
        sp.add_argument("--out", metavar="DIR", help="output directory")

    for name, help_ in (("profile", "compute a profile grid"),
                        ("demo-unstable", "profile a product and its components, then diagnose stability"),
                        ("sample", "write the sampled point set")):
        common(sub.add_parser(name, help=help_), True)

    h = sub.add_parser("hull", help="subadditive hull of a sequence triple")
    h.add_argument("--input", required=True, metavar="PATH", help="JSON {eta, phi, psi} or CSV n,eta,phi,psi")
    h.add_argument("--n-max", type=_positive, help="truncate the sequences to this horizon")
    common(h, False)

    c = sub.add_parser("compare", help="check left preceq right on profile grids")
    c.add_argument("--left", required=True, metavar="PATH")
    c.add_argument("--right", required=True, metavar="PATH")
    c.add_argument("--c-max", type=float, default=16.0)
    common(c, False)

    v = sub.add_parser("verify", help="run an inequality suite")
    v.add_argument("suite", choices=SUITES)
    v.add_argument("--seed", type=_u64, default=0)
    v.add_argument("--budget", type=int, help="instance budget (suite default if omitted)")
    v.add_argument("--oracle-limit", type=_positive)
    common(v, False)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("profile", "demo-unstable", "sample"):
            cfg = load_config(args.config, _overrides(args))
            out = _out_dir(cfg, args)
            run = {"profile": cmd_profile, "demo-unstable": cmd_demo_unstable, "sample": cmd_sample}[args.command]
            return run(cfg, out)
        out = _out_dir(None, args)
        if args.command == "hull":
            return cmd_hull(args, out)
        if args.command == "compare":
            return cmd_compare(args, out)
        if args.budget is not None and args.budget < 0:
            raise ConfigError("--budget: must be nonnegative")
        return cmd_verify(args, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OracleLimitError as err:
        print(f"config error: oracle_limit: {err}; raise --oracle-limit or use --estimator greedy",
              file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
