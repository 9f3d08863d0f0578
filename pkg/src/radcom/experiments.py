"""Monte-Carlo sweeps: two-vehicle detection metrics, traffic density and contention time."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .config import RadarConfig, range_resolution
from .interference import LaneGeometry, build_traffic_graph, network_average, traffic_average
from .protocol import run_contention, verify_schedule
from .signal_chain import (
    Interferer,
    Target,
    coherent_if,
    coherent_noise,
    report_from_coherent,
    scene_noise_variance,
    scene_tones,
)

MATCH_CELLS = 3
DEFAULT_D_GRID = (35.0, 70.0, 105.0, 140.0)


def default_tau_grid(cfg: RadarConfig, step: float = 0.25e-6) -> List[float]:
    """Offsets across one chirp plus the negative lobe of the vulnerable period."""
    n_pos = int(round(cfg.T / step))
    lobe = 3 * cfg.T / (2 * cfg.radar_bw * cfg.T_s)
    n_neg = int(math.floor(lobe / step + 1e-9))
    return [-k * step for k in range(n_neg, 0, -1)] + [k * step for k in range(n_pos + 1)]


@dataclass(frozen=True)
class SweepSpec:
    tau_grid: Tuple[float, ...]
    d_grid: Tuple[float, ...] = DEFAULT_D_GRID
    runs_per_point: int = 100
    radcom_enabled: bool = False
    B_c: float = 20e6
    velocity: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tau_grid", tuple(float(t) for t in self.tau_grid))
        object.__setattr__(self, "d_grid", tuple(float(d) for d in self.d_grid))
        if not self.tau_grid or not self.d_grid:
            raise ValueError("tau and d grids must be non-empty")
        if self.runs_per_point < 1:
            raise ValueError("runs_per_point must be >= 1")

    def points(self) -> List[Tuple[int, float, float]]:
        return [(i_d * len(self.tau_grid) + i_t, tau, d)
                for i_d, d in enumerate(self.d_grid) for i_t, tau in enumerate(self.tau_grid)]


@dataclass
class MetricRow:
    tau: float
    d: float
    p_false_alarm: float
    p_detection: float
    ranging_error_max: float
    ranging_error_mean: float
    p_false_alarm_control: float
    interference_false_alarms: int

    @classmethod
    def columns(cls) -> List[str]:
        return [f.name for f in fields(cls)]


def _classify(report, d: float, cell: float):
    """(false-alarm bins, matched error or None) for one detection report."""
    false_bins = set()
    best = None
    for det in report.detections:
        if abs(det.range_m - d) <= MATCH_CELLS * cell:
            if best is None or det.power > best.power:
                best = det
        else:
            false_bins.add(det.bin)
    return false_bins, (None if best is None else abs(best.range_m - d))


def radcom_offset(cfg: RadarConfig, seed) -> float:
    """Chirp-start offset of the second of two radars after contention resolves."""
    res = run_contention(cfg, 2, seed)
    sched = res.schedule
    return math.remainder(sched.actual_start(1) - sched.actual_start(0), cfg.T_f)


def _run_point(args) -> MetricRow:
    cfg, spec, master, point, tau, d = args
    cell = range_resolution(cfg)
    target = Target(d, spec.velocity)
    x_control = coherent_if(cfg, [target])
    n0 = scene_noise_variance(cfg, [target])
    x_fixed = None
    if not spec.radcom_enabled:
        itf = Interferer(d, spec.velocity, tau)
        lands = len(scene_tones(cfg, [target], [itf])) > 1
        x_fixed = coherent_if(cfg, [target], [itf]) if lands else x_control
    fa = fa_ctl = hits = extra = 0
    errors = []
    for run in range(spec.runs_per_point):
        ss = np.random.SeedSequence([master, point, run])
        rng = np.random.default_rng(ss)
        if spec.radcom_enabled:
            itf = Interferer(d, spec.velocity, radcom_offset(cfg, [master, point, run, 1]))
            # identical to the control unless the interferer survives the receiver gate
            lands = len(scene_tones(cfg, [target], [itf])) > 1
            x_scene = coherent_if(cfg, [target], [itf]) if lands else x_control
        else:
            x_scene = x_fixed
        noise = coherent_noise(cfg, rng, n0)
        ctl_fa, ctl_err = _classify(report_from_coherent(cfg, x_control + noise), d, cell)
        if x_scene is x_control:
            scene_fa, err = ctl_fa, ctl_err
        else:
            scene_fa, err = _classify(report_from_coherent(cfg, x_scene + noise), d, cell)
        fa += bool(scene_fa)
        fa_ctl += bool(ctl_fa)
        extra += len(scene_fa - ctl_fa)
        if err is not None:
            hits += 1
            errors.append(err)
    n = spec.runs_per_point
    return MetricRow(
        tau=tau, d=d,
        p_false_alarm=fa / n,
        p_detection=hits / n,
        ranging_error_max=max(errors) if errors else float("nan"),
        ranging_error_mean=float(np.mean(errors)) if errors else float("nan"),
        p_false_alarm_control=fa_ctl / n,
        interference_false_alarms=extra,
    )


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def two_vehicle_sweep(cfg: RadarConfig, spec: SweepSpec, seed: int = 0,
                      workers: int = 1) -> List[MetricRow]:
    """Detection metrics for a target and a facing interferer at the same range.

    Every run is paired with an interference-free control scene that shares
    its noise realisation, so false alarms caused by the interferer are
    counted exactly.
    """
    cfg = cfg.replace(B_c=spec.B_c)
    jobs = [(cfg, spec, seed, point, tau, d) for point, tau, d in spec.points()]
    return _map(_run_point, jobs, workers)


def _corr(x: Sequence[float], y: Sequence[float]) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.std() == 0 or y.std() == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])


def ranging_error_summary(rows: Sequence[MetricRow]) -> Dict[str, float]:
    """Worst and average matched ranging error, and its correlation with tau."""
    ok = [r for r in rows if not math.isnan(r.ranging_error_max)]
    if not ok:
        raise ValueError("no rows with a matched target detection")
    return {
        "max_m": max(r.ranging_error_max for r in ok),
        "mean_m": float(np.mean([r.ranging_error_mean for r in ok])),
        "corr_tau": _corr([r.tau for r in ok], [r.ranging_error_mean for r in ok]),
    }


@dataclass
class DensityRow:
    lanes: int
    separation: float
    p_avg: float
    p_avg_aligned: float


def density_sweep(cfg: RadarConfig, lane_counts: Sequence[int], separations: Sequence[float],
                  geometry: LaneGeometry = LaneGeometry()) -> List[DensityRow]:
    """Network interference per (lanes, separation).

    ``p_avg`` averages over independent lane phases; ``p_avg_aligned`` is
    the single placement with all lanes laterally aligned.
    """
    rows = []
    for lanes in lane_counts:
        for sep in separations:
            aligned = network_average(cfg, build_traffic_graph(cfg, lanes, sep, geometry))
            rows.append(DensityRow(lanes, float(sep), traffic_average(cfg, lanes, sep, geometry),
                                   aligned))
    return rows


@dataclass
class ContentionRun:
    M: int
    seed: int
    t_final_s: float
    collisions: int
    conflicts: int


@dataclass
class ContentionSummary:
    M: int
    runs: int
    t_final_mean_s: float
    t_final_min_s: float
    t_final_max_s: float
    collisions_mean: float
    conflicts_total: int
    within_frame: float


def _contention_job(args) -> ContentionRun:
    cfg, M, master, run = args
    res = run_contention(cfg, M, [master, M, run])
    return ContentionRun(M, run, res.t_final, res.collisions,
                         len(verify_schedule(res.schedule, cfg)))


def contention_sweep(cfg: RadarConfig, M_values: Sequence[int], runs: int, seed: int = 0,
                     workers: int = 1) -> Tuple[List[ContentionRun], List[ContentionSummary]]:
    """Per-run contention results and mean/min/max per M."""
    if runs < 1:
        raise ValueError("runs must be >= 1")
    jobs = [(cfg, int(M), seed, r) for M in M_values for r in range(runs)]
    per_run = _map(_contention_job, jobs, workers)
    summary = []
    for M in M_values:
        sel = [r for r in per_run if r.M == M]
        t = np.array([r.t_final_s for r in sel])
        summary.append(ContentionSummary(
            int(M), len(sel), float(t.mean()), float(t.min()), float(t.max()),
            float(np.mean([r.collisions for r in sel])), sum(r.conflicts for r in sel),
            float(np.mean(t < cfg.T_f))))
    return per_run, summary


def rows_to_dicts(rows) -> List[dict]:
    return [asdict(r) for r in rows]
