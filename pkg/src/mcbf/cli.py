"""Command line entry point: ``mcbf run | compare | degree``.

Exit codes:
    0  run completed, safe, every QP feasible
    1  configuration or schema error
    2  at least one step had an infeasible QP (or the run aborted)
    3  the safety tolerance was violated
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .barrier import HOCBFError, detect_relative_degree_set
from .config import ConfigFileError, load_config
from .dynamics import AffineControlSystem, ControlBounds, UnicycleParams, make_unicycle
from .autodiff import Field
from .qp import MODES
from .scenarios import SCENARIOS, get_scenario
from .sim import ConfigError, Controller, ScenarioConfig, interleaved_step_times, run, safety_metrics
from .transform import CenterTransformParams, center_barrier, control_point_barrier

OUTPUT_ENV = "MCBF_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_UNSAFE = 0, 1, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), indent=2, allow_nan=False) + "\n")


def _resolve_config(args) -> ScenarioConfig:
    cfg = get_scenario(args.scenario)
    if args.config:
        cfg, _ = load_config(args.config, base=cfg)
    overrides = {}
    if getattr(args, "mode", None) and isinstance(args.mode, str):
        overrides["mode"] = args.mode
    if args.seed is not None:
        overrides["seed"] = args.seed
    return cfg.with_overrides(**overrides).validate()


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or "mcbf-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _exit_code(metrics: dict) -> int:
    if not metrics["safe"]:
        return EXIT_UNSAFE
    if metrics["infeasible_steps"] or metrics["aborted"]:
        return EXIT_INFEASIBLE
    return EXIT_OK


def _execute(cfg: ScenarioConfig, out: Path, fmt: str, source: dict):
    t0 = time.perf_counter()
    ctl = Controller(cfg)
    log = run(cfg, ctl)
    wall = time.perf_counter() - t0
    metrics = safety_metrics(log, cfg)
    metrics["wall_time"] = wall
    kkt = [r.kkt for r in log.records if r.kkt]
    metrics["max_kkt_residual"] = max((max(k.values()) for k in kkt), default=0.0)
    if fmt == "csv":
        log.to_csv(out / "trajectory.csv")
    else:
        log.to_json(out / "trajectory.json")
    _write_json(out / "summary.json", metrics)
    _write_json(out / "config-echo.json", {"source": source, "config": cfg.to_dict()})
    return metrics, wall, ctl, log


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(args)
    source = {"scenario": args.scenario, "config": args.config, "seed": args.seed, "mode": args.mode}
    metrics, *_ = _execute(cfg, out, args.format, source)
    code = _exit_code(metrics)
    print(json.dumps({"mode": cfg.mode, "exit": code, "out": str(out),
                      "min_center_clearance": metrics["min_center_clearance"],
                      "final_distance": metrics["final_distance"],
                      "infeasible_steps": metrics["infeasible_steps"]}))
    return code


def cmd_compare(args) -> int:
    modes = args.mode or list(MODES)
    if len(modes) < 2:
        raise ConfigError("mode", "compare needs at least two modes")
    base = _resolve_config(argparse.Namespace(scenario=args.scenario, config=args.config,
                                              seed=args.seed, mode=None))
    out = _out_dir(args)
    results, codes, replay = {}, [], {}
    for i, mode in enumerate(modes):
        cfg = base.with_overrides(mode=mode).validate()
        key = mode if mode not in results else f"{mode}#{i}"
        sub = out / key
        sub.mkdir(exist_ok=True)
        metrics, wall, ctl, log = _execute(cfg, sub, args.format, {"scenario": args.scenario, "mode": mode})
        codes.append(_exit_code(metrics))
        replay[key] = (ctl, log)
        results[key] = {
            "objective": metrics["objective"],
            "min_clearance": metrics["min_barrier"],
            "min_center_clearance": metrics["min_center_clearance"],
            "min_control_point_clearance": metrics["min_control_point_clearance"],
            "infeasible_steps": metrics["infeasible_steps"],
            "wall_time": wall,
            "mean_step_time": None,
            "mean_step_time_in_run": metrics["mean_step_time"],
            "relative_degree": metrics["relative_degree"],
            "class_k_functions": metrics["class_k_functions"],
            "final_distance": metrics["final_distance"],
            "goal_reached": metrics["goal_reached"],
            "safe": metrics["safe"],
        }

    for key, t in interleaved_step_times(replay, passes=args.timing_passes).items():
        results[key]["mean_step_time"] = t

    def rank_key(name):
        r = results[name]
        ok = r["safe"] and r["goal_reached"] and r["infeasible_steps"] == 0
        return (not ok, r["relative_degree"], r["mean_step_time"])

    report = {
        "scenario": args.scenario,
        "modes": results,
        "ranking": sorted(results, key=rank_key),
        "ranking_criteria": ["safe, feasible and goal reached", "relative degree", "mean step time"],
        "timing": f"mean controller time per step, best of {args.timing_passes} interleaved replay passes",
        "relative_degree": {k: v["relative_degree"] for k, v in results.items()},
    }
    if "integral" in results and "transform" in results:
        report["transform_cheaper_than_integral"] = (
            results["transform"]["mean_step_time"] <= results["integral"]["mean_step_time"])
    _write_json(out / "compare.json", report)
    print(json.dumps({"ranking": report["ranking"], "out": str(out / "compare.json")}))
    return max(codes)


def _degree_target(args, cfg: ScenarioConfig):
    if args.model == "single_integrator":
        if args.barrier not in ("state", None):
            raise ConfigError("barrier", "single_integrator only supports the 'state' barrier")
        sys_ = AffineControlSystem(1, 1, lambda s: [0.0], lambda s: [[1.0]], ControlBounds.unbounded(1),
                                   labels=["x"], control_labels=["u"], domain=([-10.0], [10.0]))
        return sys_, Field(lambda s: s[0], 1, "x")
    sys_ = make_unicycle(UnicycleParams(cfg.M), cfg.control_bounds())
    barrier = args.barrier or "control_point"
    if barrier == "control_point":
        b = control_point_barrier(cfg.obstacle_x, cfg.obstacle_y, cfg.r + cfg.r_b + cfg.d)
    elif barrier == "center":
        b = center_barrier(CenterTransformParams(cfg.d, cfg.r_b, cfg.obstacle_x, cfg.obstacle_y, cfg.r))
    else:
        raise ConfigError("barrier", f"unknown barrier {barrier!r} for the unicycle")
    return sys_, b


def cmd_degree(args) -> int:
    cfg = _resolve_config(argparse.Namespace(scenario=args.scenario, config=args.config,
                                             seed=args.seed, mode=None))
    sys_, b = _degree_target(args, cfg)
    t0 = time.perf_counter()
    S = detect_relative_degree_set(b, sys_, cap=args.cap, n_probes=args.probes, tol=args.tol,
                                   seed=cfg.seed)
    elapsed = time.perf_counter() - t0
    report = {
        "model": args.model,
        "barrier": args.barrier or ("state" if args.model == "single_integrator" else "control_point"),
        "degrees": {lab: (None if k is None else int(k)) for lab, k in zip(S.labels, S.degrees)},
        "probe": S.as_dict(),
        "elapsed": elapsed,
    }
    print(json.dumps(_jsonable(report), indent=2))
    if S.undetected:
        print(f"error: relative degree of {', '.join(S.labels[j] for j in S.undetected)} not detected within cap {args.cap}",
              file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not infeasibility."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mcbf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--scenario", default="paper_sec4", help=f"one of: {', '.join(SCENARIOS)}")
        sp.add_argument("--config", help="INI file applied on top of the scenario")
        sp.add_argument("--seed", type=int, help="seed for relative degree probing")

    r = sub.add_parser("run", help="simulate one scenario")
    common(r)
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./mcbf-out)")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several modes on one scenario")
    common(c)
    c.add_argument("--mode", choices=MODES, action="append", help="repeat to select modes (default: all)")
    c.add_argument("--out")
    c.add_argument("--format", choices=("csv", "json"), default="csv")
    c.add_argument("--timing-passes", type=int, default=5, help="interleaved replay passes for timing")
    c.set_defaults(func=cmd_compare)

    d = sub.add_parser("degree", help="detect the relative degree set of a barrier")
    common(d)
    d.add_argument("--model", choices=("unicycle", "single_integrator"), default="unicycle")
    d.add_argument("--barrier", choices=("control_point", "center", "state"))
    d.add_argument("--cap", type=int, default=5)
    d.add_argument("--probes", type=int, default=64)
    d.add_argument("--tol", type=float, default=1e-9)
    d.set_defaults(func=cmd_degree)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigFileError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HOCBFError as exc:
        print(f"config error: barrier construction failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
