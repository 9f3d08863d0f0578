"""Command-line front end: ``radcom {validate,detect,analyze,contention,sweep}``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, RadarConfig, load_config, max_range, max_velocity, range_resolution
from .experiments import (
    DEFAULT_D_GRID,
    MetricRow,
    SweepSpec,
    contention_sweep,
    default_tau_grid,
    density_sweep,
    ranging_error_summary,
    two_vehicle_sweep,
)
from .interference import closed_form_summary, m_max, vulnerable_duration
from .signal_chain import Interferer, Target, detect

DEFAULT_SEED = 20190325
SEED_ENV = "RADCOM_SEED"
OUT_DIR_ENV = "RADCOM_OUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence], header: dict):
    lines = [f"# {k}: {v}" for k, v in header.items()]
    lines.append(",".join(columns))
    lines += [",".join(fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _config(arg: str) -> RadarConfig:
    return RadarConfig() if arg == "default" else load_config(arg)


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def _range(text: str) -> List[float]:
    """``start:stop:step`` inclusive, or a comma list."""
    if ":" not in text:
        return _floats(text)
    start, stop, step = (float(x) for x in text.split(":"))
    n = int(math.floor((stop - start) / step + 1e-9))
    return [start + k * step for k in range(n + 1)]


def cmd_validate(cfg: RadarConfig, args) -> dict:
    variants = [("config", cfg)]
    for bc in (20e6, 40e6):
        if cfg.B_c != bc:
            variants.append((f"B_c={bc / 1e6:g}MHz", cfg.replace(B_c=bc)))
    print(f"config hash {cfg.digest()}")
    cols = ["variant", "B_c_Hz", "B_r_Hz", "d_max_m", "v_max_mps", "resolution_m",
            "V_s", "radars_per_slot", "m_max"]
    print(" ".join(f"{c:>14}" for c in cols))
    for name, c in variants:
        v = vulnerable_duration(c)
        vals = [name, c.B_c, c.radar_bw, max_range(c), max_velocity(c), range_resolution(c), v,
                math.floor(c.T / vulnerable_duration(c, exact=True)), m_max(c)]
        print(" ".join(f"{fmt(x):>14}" for x in vals))
    return {}


def _load_scene(path: str):
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<scene>", f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict) or set(raw) - {"targets", "interferers"}:
        raise ConfigError("<scene>", "expected an object with 'targets' and 'interferers' lists")
    try:
        targets = [Target(**t) for t in raw.get("targets", [])]
        interferers = [Interferer(**i) for i in raw.get("interferers", [])]
    except TypeError as exc:
        raise ConfigError("<scene>", str(exc)) from exc
    return targets, interferers


def cmd_detect(cfg: RadarConfig, args) -> dict:
    targets, interferers = _load_scene(args.scene)
    report = detect(cfg, targets, interferers, seed=args.seed)
    hits = {d.bin for d in report.detections}
    with np.errstate(divide="ignore"):
        p_db = 10 * np.log10(report.spectrum)
        t_db = 10 * np.log10(report.threshold)
    rows = [(b, report.frequencies[b], report.ranges[b], p_db[b], t_db[b], b in hits)
            for b in range(report.spectrum.size)]
    out = args.out_dir / "detect.csv"
    write_csv(out, ["bin", "frequency_hz", "range_m", "power_db", "threshold_db", "detected"],
              rows, _header(cfg, args))
    for det in report.detections:
        print(f"detection at {det.range_m:.3f} m ({10 * math.log10(det.power):.1f} dB)")
    return {"detect": out.name}


def cmd_analyze(cfg: RadarConfig, args) -> dict:
    rows = density_sweep(cfg, args.lanes, args.separations)
    out = args.out_dir / "analyze.csv"
    write_csv(out, ["lanes", "separation_m", "p_avg", "p_avg_aligned"],
              [(r.lanes, r.separation, r.p_avg, r.p_avg_aligned) for r in rows],
              _header(cfg, args))
    summary = args.out_dir / "analyze.json"
    write_json(summary, {"config_hash": cfg.digest(), **closed_form_summary(cfg)})
    return {"analyze": out.name, "closed_forms": summary.name}


def cmd_contention(cfg: RadarConfig, args) -> dict:
    per_run, summary = contention_sweep(cfg, args.M, args.runs, args.seed, args.workers)
    runs_out = args.out_dir / "contention.csv"
    write_csv(runs_out, ["M", "seed", "t_final_s", "collisions", "conflicts"],
              [(r.M, r.seed, r.t_final_s, r.collisions, r.conflicts) for r in per_run],
              _header(cfg, args))
    sum_out = args.out_dir / "contention_summary.csv"
    write_csv(sum_out, ["M", "runs", "t_final_mean_s", "t_final_min_s", "t_final_max_s",
                        "collisions_mean", "conflicts_total", "within_frame"],
              [(s.M, s.runs, s.t_final_mean_s, s.t_final_min_s, s.t_final_max_s,
                s.collisions_mean, s.conflicts_total, s.within_frame) for s in summary],
              _header(cfg, args))
    for s in summary:
        print(f"M={s.M:3d}  t_final mean {s.t_final_mean_s * 1e3:.3f} ms  "
              f"max {s.t_final_max_s * 1e3:.3f} ms  conflicts {s.conflicts_total}")
    return {"runs": runs_out.name, "summary": sum_out.name}


def cmd_sweep(cfg: RadarConfig, args) -> dict:
    taus = _range(args.tau) if args.tau else default_tau_grid(cfg)
    spec = SweepSpec(tau_grid=taus, d_grid=args.d, runs_per_point=args.runs,
                     radcom_enabled=args.radcom, B_c=cfg.B_c, velocity=args.velocity)
    rows = two_vehicle_sweep(cfg, spec, args.seed, args.workers)
    out = args.out_dir / "sweep.csv"
    write_csv(out, MetricRow.columns(), [[getattr(r, c) for c in MetricRow.columns()] for r in rows],
              _header(cfg, args))
    summary = {
        "config_hash": cfg.digest(),
        "radcom": args.radcom,
        "points": len(rows),
        "interference_false_alarms": sum(r.interference_false_alarms for r in rows),
        "p_false_alarm_control_mean": float(np.mean([r.p_false_alarm_control for r in rows])),
    }
    try:
        summary["ranging"] = ranging_error_summary(rows)
    except ValueError:
        summary["ranging"] = None
    sum_out = args.out_dir / "sweep_summary.json"
    write_json(sum_out, summary)
    return {"sweep": out.name, "summary": sum_out.name}


def _header(cfg: RadarConfig, args) -> dict:
    return {"config_hash": cfg.digest(), "seed": args.seed, "tool": f"radcom {__version__}"}


def build_parser() -> argparse.ArgumentParser:
    env_seed = os.environ.get(SEED_ENV)
    common = _Parser(add_help=False)
    common.add_argument("--config", default="default",
                        help="JSON config file, or 'default' for the built-in parameters")
    common.add_argument("--seed", type=int, default=int(env_seed) if env_seed else DEFAULT_SEED,
                        help=f"master seed (env {SEED_ENV}, default {DEFAULT_SEED})")
    common.add_argument("--out-dir", type=Path, default=Path(os.environ.get(OUT_DIR_ENV, ".")),
                        help=f"output directory (env {OUT_DIR_ENV})")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                        help="worker processes for Monte-Carlo work")

    parser = _Parser(prog="radcom", description=__doc__)
    parser.add_argument("--version", action="version", version=f"radcom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", parents=[common], help="print derived quantities")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("detect", parents=[common], help="run the detection pipeline on a scene")
    p.add_argument("--scene", required=True, help="JSON scene with targets and interferers")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("analyze", parents=[common], help="network interference vs. traffic density")
    p.add_argument("--lanes", type=_ints, default=list(range(1, 9)), help="e.g. 1-8 or 2,4,6")
    p.add_argument("--separations", type=_range, default=_range("10:200:10"),
                   help="metres, start:stop:step or a comma list")
    p.add_argument("--B_c", type=float, default=None, help="communication bandwidth in Hz")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("contention", parents=[common], help="contention time statistics")
    p.add_argument("--M", type=_ints, default=[1, 5, 10, 20, 40], help="node counts, e.g. 5,10,40")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--B_c", type=float, default=None,
                   help="communication bandwidth in Hz (default: config value, or 20e6 if zero)")
    p.set_defaults(func=cmd_contention)

    p = sub.add_parser("sweep", parents=[common], help="two-vehicle false-alarm and ranging sweep")
    p.add_argument("--radcom", action="store_true", help="use protocol-assigned offsets")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--B_c", type=float, default=20e6, help="communication bandwidth in Hz")
    p.add_argument("--tau", default=None, help="offsets in s, start:stop:step or comma list")
    p.add_argument("--d", type=_floats, default=list(DEFAULT_D_GRID), help="ranges in m")
    p.add_argument("--velocity", type=float, default=0.0)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"radcom: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    started = time.perf_counter()
    try:
        cfg = _config(args.config)
        if getattr(args, "B_c", None) is not None:
            cfg = cfg.replace(B_c=args.B_c)
        if args.command == "contention" and cfg.B_c == 0:
            # contention needs a communication band; fall back to 20 MHz
            cfg = cfg.replace(B_c=20e6)
        args.out_dir.mkdir(parents=True, exist_ok=True)
        outputs = args.func(cfg, args)
    except ConfigError as exc:
        print(f"radcom: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"radcom: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if outputs:
        manifest = {
            "config_hash": cfg.digest(),
            "config": cfg.to_dict(),
            "master_seed": args.seed,
            "command": args.command,
            "argv": list(sys.argv[1:] if argv is None else argv),
            "tool_version": __version__,
            "wall_clock_s": time.perf_counter() - started,
            "outputs": outputs,
        }
        write_json(args.out_dir / f"{args.command}.manifest.json", manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
