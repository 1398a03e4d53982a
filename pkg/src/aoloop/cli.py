"""Command-line entry point: synth, simulate, compare, presets."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import compare, default_welch
from .cascade import SimTrace
from .config import RunConfig, load_config, resolve_config
from .errors import AoLoopError, ConfigError
from .iirfilter import to_json
from .presets import PRESETS
from .runner import design_stage1, design_stage2, run


def _build_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
        raw_overrides = {}
    elif getattr(args, "preset", None):
        raw_overrides = {"preset": args.preset}
        cfg = resolve_config(raw_overrides)
    else:
        raise ConfigError("either --config or --preset is required")

    # flag overrides on the resolved config
    if args.config and getattr(args, "preset", None):
        raise ConfigError("use --config or --preset, not both")
    if getattr(args, "out", None):
        cfg.output_dir = Path(args.out)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "duration", None) is not None:
        cfg.duration_s = args.duration
        if cfg.n_samples < 16:
            raise ConfigError("duration too short")
    if getattr(args, "scheme", None):
        cfg.scheme = args.scheme
    if getattr(args, "strategy", None):
        cfg.stage2_strategies = list(args.strategy)
    return cfg


def cmd_presets(args) -> int:
    if args.action == "list":
        for name, p in PRESETS.items():
            print(f"{name:13s} seeing={p.seeing_arcsec}\" t0={p.t0_ms}ms "
                  f"G={p.g_mag} J={p.j_mag} f1={p.f1_hz:g}Hz f2={p.f2_hz:g}Hz "
                  f"modes={p.n_modes1}/{p.n_modes2} "
                  f"lambda={p.lambda1_um}/{p.lambda2_um}um")
        return 0
    print(f"unknown presets action {args.action!r}", file=sys.stderr)
    return 2


def cmd_synth(args) -> int:
    cfg = _build_config(args)
    out = Path(cfg.output_dir)
    (out / "controllers").mkdir(parents=True, exist_ok=True)
    stage1 = design_stage1(cfg)
    (out / "controllers" / "stage1.json").write_text(
        to_json(stage1.controller, rate_hz=cfg.f1_hz) + "\n")
    summary = {"stage1_gain": stage1.gain}
    for strategy in cfg.stage2_strategies:
        design = design_stage2(cfg, stage1.controller, strategy)
        (out / "controllers" / f"{strategy}.json").write_text(
            to_json(design.controller, rate_hz=cfg.f2_hz) + "\n")
        entry = {"gain": design.gain}
        if design.result is not None:
            entry.update(status=design.result.status,
                         iterations=design.result.iterations,
                         objective=design.result.objective_trace[-1]
                         if design.result.objective_trace else None,
                         margin_achieved=design.result.margin_achieved)
        summary[strategy] = entry
        print(f"{strategy}: {entry}")
    (out / "synthesis_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return 0


def cmd_simulate(args) -> int:
    cfg = _build_config(args)
    artifacts = run(cfg, make_figures=not args.no_figures)
    payload = json.loads(artifacts.report_path.read_text())
    print(f"report: {artifacts.report_path}")
    for entry in payload["entries"]:
        print(f"  {entry['name']:24s} rms={entry['rms']:.6g} "
              f"sat={entry['saturation_count']}")
    for name, gain in payload["relative_gain_percent"].items():
        shown = "n/a" if gain is None else f"{gain:.1f}%"
        print(f"  relative gain {name}: {shown}")
    return 0


def _load_trace_dir(path: Path) -> SimTrace:
    data = {}
    for name in SimTrace.SIGNALS:
        f = path / f"{name}.csv"
        if not f.exists():
            raise ConfigError(f"missing {f}")
        arr = np.loadtxt(f, delimiter=",", skiprows=1, ndmin=2)
        data[name] = arr[:, 2:]
    summary = path / "summary.json"
    if summary.exists():
        rate = json.loads(summary.read_text())["rate_hz"]
    else:
        t = np.loadtxt(path / "phi.csv", delimiter=",", skiprows=1, ndmin=2)[:, 1]
        rate = 1.0 / (t[1] - t[0])
    return SimTrace(rate_hz=rate,
                    phi=data["phi"], e1=data["e1"], e2=data["e2"],
                    m1=data["m1"], m2=data["m2"], u1=data["u1"], u2=data["u2"],
                    sat1=data["sat1"].astype(bool),
                    sat2=data["sat2"].astype(bool))


def cmd_compare(args) -> int:
    traces = {}
    for spec in args.traces:
        if "=" in spec:
            name, _, p = spec.partition("=")
        else:
            p = spec
            name = Path(spec).name
        traces[name] = _load_trace_dir(Path(p))
    rep = compare(traces)
    text = rep.to_json()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoloop",
        description="Data-driven controller synthesis and cascaded AO loop simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--preset", help="science-case preset name")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--duration", type=float, help="simulated seconds")
        p.add_argument("--scheme", choices=["standalone", "dcao"])
        p.add_argument("--strategy", action="append",
                       help="stage-2 strategy (repeatable)")

    p_synth = sub.add_parser("synth", help="synthesize controllers only")
    add_run_flags(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_sim = sub.add_parser("simulate", help="synthesize, simulate, report")
    add_run_flags(p_sim)
    p_sim.add_argument("--no-figures", action="store_true")
    p_sim.set_defaults(func=cmd_simulate)

    p_cmp = sub.add_parser("compare", help="compare exported trace directories")
    p_cmp.add_argument("traces", nargs="+", metavar="NAME=DIR")
    p_cmp.add_argument("--out", help="write the report JSON here")
    p_cmp.set_defaults(func=cmd_compare)

    p_pre = sub.add_parser("presets", help="preset utilities")
    p_pre.add_argument("action", choices=["list"])
    p_pre.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except AoLoopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
