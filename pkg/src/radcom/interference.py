"""Closed-form interference probabilities, traffic graphs and a Monte-Carlo overlap oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import FrozenSet, Iterable, Optional, Tuple

import numpy as np

from .config import SPEED_OF_LIGHT, RadarConfig, max_range, max_velocity


@dataclass(frozen=True)
class VulnerablePeriod:
    """Chirp-start offsets of a facing radar that interfere with the ego radar."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty vulnerable period [{self.lo}, {self.hi}]")

    @property
    def duration(self) -> float:
        return self.hi - self.lo

    def widened(self, margin: float) -> "VulnerablePeriod":
        return VulnerablePeriod(self.lo - margin, self.hi + margin)

    def __contains__(self, tau: float) -> bool:
        return self.lo <= tau <= self.hi


def vulnerable_period(cfg: RadarConfig, exact: bool = False) -> VulnerablePeriod:
    """Offsets whose beat tone survives the ADC filter, over all ranges and velocities.

    The passband edge sits at ``T/(2 B_r T_s)``; a real-sampling receiver
    also takes the folded negative side plus one more filter-leakage lobe,
    and up to ``T/(2 B_r T_s)`` of propagation delay shifts the lower edge.
    ``exact`` keeps the ``1/(4 B_r)`` Doppler guard on both sides.
    """
    edge = cfg.T / (2 * cfg.radar_bw * cfg.T_s)
    lo = -edge if cfg.iq_sampling else -3 * edge
    hi = edge
    if exact:
        guard = 1 / (4 * cfg.radar_bw)
        lo, hi = lo - guard, hi + guard
    return VulnerablePeriod(lo, hi)


def vulnerable_duration(cfg: RadarConfig, exact: bool = False) -> float:
    return vulnerable_period(cfg, exact).duration


def p_int_chirp(cfg: RadarConfig) -> float:
    """Probability that a uniformly offset chirp of a facing radar interferes."""
    p = vulnerable_duration(cfg) / cfg.T
    if p > 1:
        raise ValueError(f"vulnerable period exceeds the chirp (p = {p:.4g}); B_r*T_s too small")
    return p


def p_int_frame(cfg: RadarConfig, approx: bool = False) -> float:
    """Probability that two facing radars with random frame offsets interfere.

    The exact form counts the ``2N - 1`` chirp alignments; ``approx``
    rounds that to ``2N``.
    """
    alignments = 2 * cfg.N if approx else 2 * cfg.N - 1
    p = alignments * cfg.T * p_int_chirp(cfg) / cfg.T_f
    if p > 1:
        raise ValueError(f"frame interference probability {p:.4g} exceeds 1")
    return p


def p_int_star(cfg: RadarConfig, M: int, p_frame: Optional[float] = None) -> float:
    """Probability that at least one of ``M`` facing radars interferes."""
    if M < 0:
        raise ValueError("M must be non-negative")
    p = p_int_frame(cfg) if p_frame is None else p_frame
    return 1.0 - (1.0 - p) ** M


def m_max(cfg: RadarConfig) -> int:
    """Largest conflict-free population: K slots times the sub-slots per chirp."""
    return cfg.K * math.floor(cfg.T / vulnerable_duration(cfg, exact=True))


def subslot_spacing(cfg: RadarConfig) -> float:
    """Start-time spacing between neighbouring sub-slots, padded for clock offsets."""
    return vulnerable_duration(cfg, exact=True) + 2 * cfg.clock_offset


def sequences_interfere(cfg: RadarConfig, s_i: float, s_j: float,
                        period: Optional[VulnerablePeriod] = None) -> bool:
    """Whether radars starting their chirp sequences at ``s_i`` and ``s_j`` collide.

    Any chirp pair (shift ``q`` in ``[-(N-1), N-1]``) landing in the
    vulnerable period counts, for either radar taken as the victim and for
    the neighbouring frames of the periodic schedule.
    """
    V = period or vulnerable_period(cfg, exact=True).widened(2 * cfg.clock_offset)
    delta = math.remainder(s_j - s_i, cfg.T_f)
    qmax = cfg.N - 1
    for d0 in (delta, -delta):
        for d in (d0 - cfg.T_f, d0, d0 + cfg.T_f):
            q_lo = max(math.ceil((V.lo - d) / cfg.T), -qmax)
            q_hi = min(math.floor((V.hi - d) / cfg.T), qmax)
            if q_lo <= q_hi:
                return True
    return False


@dataclass(frozen=True)
class RadarGraph:
    """Directed visibility graph; edge ``(i, j)`` means radar ``i`` is seen by radar ``j``."""

    n_vertices: int
    edges: FrozenSet[Tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n_vertices < 0:
            raise ValueError("vertex count must be non-negative")
        object.__setattr__(self, "edges", frozenset(self.edges))
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self edge at vertex {i}")
            if not (0 <= i < self.n_vertices and 0 <= j < self.n_vertices):
                raise ValueError(f"edge {(i, j)} references a missing vertex")

    def in_degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=int)
        for _, j in self.edges:
            deg[j] += 1
        return deg


def network_average(cfg: RadarConfig, graph: RadarGraph) -> float:
    """Mean over radars of the probability that any visible facing radar interferes."""
    if graph.n_vertices == 0:
        raise ValueError("graph has no vertices")
    p = p_int_frame(cfg)
    return float(np.mean([p_int_star(cfg, int(m), p) for m in graph.in_degrees()]))


def two_vehicle_graph() -> RadarGraph:
    return RadarGraph(2, frozenset({(0, 1), (1, 0)}))


@dataclass(frozen=True)
class LaneGeometry:
    """Straight multi-lane road with front-mounted radars.

    Lanes driving in the ego direction sit on one side of the median and
    oncoming lanes on the other; vehicles in all lanes share longitudinal
    positions.  The road is periodic so every vehicle in a lane sees the
    same neighbourhood.
    """

    lane_width: float = 3.5
    fov_half_angle_deg: float = 10.0

    def __post_init__(self):
        if not self.lane_width > 0:
            raise ValueError("lane_width must be positive")
        if not 0 < self.fov_half_angle_deg < 90:
            raise ValueError("fov_half_angle_deg must be in (0, 90)")


def _lane_layout(lanes: int, width: float) -> Tuple[np.ndarray, np.ndarray]:
    n_ego = (lanes + 1) // 2
    n_opp = lanes // 2
    y = np.concatenate([-(np.arange(n_ego) + 0.5) * width, (np.arange(n_opp) + 0.5) * width])
    heading = np.concatenate([np.ones(n_ego), -np.ones(n_opp)])
    return y, heading


def _check_road(lanes: int, separation: float):
    if lanes < 1:
        raise ValueError("lanes must be >= 1")
    if not (separation > 0 and math.isfinite(separation)):
        raise ValueError("separation must be a positive finite distance")


def build_traffic_graph(cfg: RadarConfig, lanes: int, separation: float,
                        geometry: LaneGeometry = LaneGeometry(),
                        phases: Optional[Iterable[float]] = None) -> RadarGraph:
    """Visibility graph of facing radars on a periodic multi-lane road.

    ``phases`` shifts each lane's vehicles by a fraction of ``separation``;
    by default all lanes are laterally aligned.
    """
    _check_road(lanes, separation)
    d_max = max_range(cfg)
    per_lane = math.floor(2 * d_max / separation) + 2
    road = per_lane * separation
    lane_y, lane_heading = _lane_layout(lanes, geometry.lane_width)
    shift = np.zeros(lanes) if phases is None else np.asarray(list(phases), dtype=float)
    if shift.shape != (lanes,):
        raise ValueError("need one phase per lane")
    x = (np.arange(per_lane)[None, :] + shift[:, None]).ravel() * separation
    y = np.repeat(lane_y, per_lane)
    h = np.repeat(lane_heading, per_lane)

    dx = x[None, :] - x[:, None]  # [j, i]: position of i seen from j
    dx = dx - road * np.round(dx / road)
    dy = y[None, :] - y[:, None]
    dist = np.hypot(dx, dy)
    tan_fov = math.tan(math.radians(geometry.fov_half_angle_deg))
    ahead = dx * h[:, None]  # longitudinal distance along j's heading
    in_fov = (ahead > 0) & (np.abs(dy) <= ahead * tan_fov + 1e-9)
    facing = h[:, None] != h[None, :]
    sees = facing & in_fov & (dist <= d_max)
    mutual = sees & sees.T
    jj, ii = np.nonzero(mutual)
    return RadarGraph(x.size, frozenset(zip(ii.tolist(), jj.tolist())))


def traffic_average(cfg: RadarConfig, lanes: int, separation: float,
                    geometry: LaneGeometry = LaneGeometry()) -> float:
    """Network average interference with independent uniform lane phases.

    Averaging over where each lane's vehicles sit longitudinally removes
    the lattice aliasing of a single aligned placement.  For a lane pair
    with lateral offset ``dy`` the visible stretch is
    ``[dy / tan(fov), sqrt(d_max^2 - dy^2)]``; a random phase puts either
    ``n`` or ``n + 1`` vehicles in it, and lanes are independent, so the
    expectation factorizes.
    """
    _check_road(lanes, separation)
    p = p_int_frame(cfg)
    d_max = max_range(cfg)
    tan_fov = math.tan(math.radians(geometry.fov_half_angle_deg))
    lane_y, lane_heading = _lane_layout(lanes, geometry.lane_width)
    per_lane = []
    for a in range(lanes):
        quiet = 1.0  # probability that no visible radar interferes
        for b in range(lanes):
            if lane_heading[a] == lane_heading[b]:
                continue
            dy = abs(lane_y[a] - lane_y[b])
            near, far = dy / tan_fov, math.sqrt(max(d_max ** 2 - dy ** 2, 0.0))
            if far <= near:
                continue
            span = (far - near) / separation
            n = math.floor(span)
            frac = span - n
            quiet *= (1 - frac) * (1 - p) ** n + frac * (1 - p) ** (n + 1)
        per_lane.append(1.0 - quiet)
    return float(np.mean(per_lane))


def empirical_overlap(cfg: RadarConfig, trials: int, seed: int = 0,
                      period: Optional[VulnerablePeriod] = None,
                      max_speed: Optional[float] = None) -> Tuple[float, float]:
    """Monte-Carlo frame interference probability and its binomial standard error.

    Draws the facing radar's frame offset uniformly over the frame, its
    range uniformly in ``(0, d_max]`` and its relative speed uniformly in
    ``[-max_speed, max_speed]``, and reports how often any of the
    ``2N - 1`` chirp alignments falls inside ``period``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    V = period or vulnerable_period(cfg)
    rng = np.random.default_rng(seed)
    vmax = max_velocity(cfg) if max_speed is None else max_speed
    tau = rng.uniform(0.0, cfg.T_f, trials)
    d = max_range(cfg) * (1.0 - rng.uniform(0.0, 1.0, trials))
    v = rng.uniform(-vmax, vmax, trials)
    offset = tau + d / SPEED_OF_LIGHT + cfg.T * v * cfg.f_c / (cfg.radar_bw * SPEED_OF_LIGHT)
    q = np.arange(-(cfg.N - 1), cfg.N)
    hit = np.zeros(trials, dtype=bool)
    for base in (offset, offset - cfg.T_f):
        shifted = base[:, None] + q[None, :] * cfg.T
        hit |= ((shifted >= V.lo) & (shifted <= V.hi)).any(axis=1)
    p = float(hit.mean())
    return p, math.sqrt(max(p * (1 - p), 1e-300) / trials)


def closed_form_summary(cfg: RadarConfig) -> dict:
    V = vulnerable_period(cfg)
    Vx = vulnerable_period(cfg, exact=True)
    return {
        "vulnerable_lo_s": V.lo,
        "vulnerable_hi_s": V.hi,
        "vulnerable_duration_s": V.duration,
        "vulnerable_duration_exact_s": Vx.duration,
        "radars_per_slot": math.floor(cfg.T / Vx.duration),
        "p_int_chirp": p_int_chirp(cfg),
        "p_int_frame": p_int_frame(cfg),
        "p_int_frame_approx": p_int_frame(cfg, approx=True),
        "m_max": m_max(cfg),
    }
