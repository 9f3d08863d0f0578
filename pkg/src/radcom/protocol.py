"""Contention protocol: CSMA broadcast of radar start times and slot allocation.

Each node wakes at its communication timeout (CommTo), runs a backoff
counter on its own SlotTime grid, and broadcasts the radar timeout
(RadarTo) it picked from the sub-slots it has not yet heard claimed.  All
nodes share one collision domain.  Carrier sense cannot see a transmission
that started less than one propagation delay ago, so nodes deciding within
that window collide.

Two engines implement the same rules and consume random numbers in the same
order: :func:`run_contention` collapses idle stretches into arithmetic and
is used for Monte-Carlo work, while :func:`simulate_events` steps every
SlotTime boundary through an event queue and records a full trace.  Times
are integer nanoseconds internally.
"""

from __future__ import annotations

import dataclasses
import enum
import heapq
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Tuple

import numpy as np

from .config import SPEED_OF_LIGHT, RadarConfig, max_range
from .interference import subslot_spacing, vulnerable_period

NS = 1e-9


def _ns(seconds: float) -> int:
    return int(round(seconds / NS))


class RadComState(enum.Enum):
    RTXRX_CIDLE = "radar active, channel idle"
    RIDLE_CIDLE = "radar idle, channel idle"
    RIDLE_CTX = "radar idle, transmitting"
    RIDLE_CRX = "radar idle, channel busy"


@dataclass(frozen=True)
class NodeState:
    node: int
    state: RadComState = RadComState.RIDLE_CIDLE
    comm_timeout: float = 0.0
    radar_timeout: Optional[float] = None
    backoff_counter: int = 0
    known_timeouts: FrozenSet[Tuple[int, float]] = frozenset()

    def __post_init__(self):
        if self.backoff_counter < 0:
            raise ValueError("backoff counter must be non-negative")


@dataclass(frozen=True)
class CommPacket:
    sender: int
    radar_to: float
    size: int
    airtime: float


class Transmission(NamedTuple):
    node: int
    start: int  # ns
    end: int  # ns


def packet_airtime(cfg: RadarConfig) -> float:
    """Packet duration with one symbol per Hz of communication bandwidth."""
    if not cfg.B_c > 0:
        raise ValueError("packet airtime needs a communication bandwidth B_c > 0")
    return cfg.packet_bits / (cfg.bits_per_symbol * cfg.B_c)


def sensing_blind_time(cfg: RadarConfig) -> float:
    """Propagation delay across the largest radar range; shorter-lived transmissions go unheard."""
    return max_range(cfg) / SPEED_OF_LIGHT


def carrier_sense(channel: Iterable[Transmission], node: int, t: int,
                  slot_time: int, blind: int = 0) -> bool:
    """True (busy) if another node's transmission was audible in ``[t - slot_time, t]``.

    A transmission becomes audible ``blind`` ns after it starts.
    """
    return any(tx.node != node and tx.start <= t - blind and tx.end > t - slot_time
               for tx in channel)


def csma_step(node: NodeState, busy: bool) -> NodeState:
    """Backoff decision at one of the node's SlotTime boundaries.

    Busy freezes the counter; idle with a zero counter starts a
    transmission; otherwise the counter counts down.
    """
    if node.state not in (RadComState.RIDLE_CIDLE, RadComState.RIDLE_CRX):
        raise ValueError(f"node {node.node} is not contending (state {node.state.name})")
    if busy:
        return dataclasses.replace(node, state=RadComState.RIDLE_CRX)
    if node.backoff_counter == 0:
        return dataclasses.replace(node, state=RadComState.RIDLE_CTX)
    return dataclasses.replace(node, state=RadComState.RIDLE_CIDLE,
                               backoff_counter=node.backoff_counter - 1)


@dataclass(frozen=True)
class SlotGrid:
    """Radar start-time grid: K slots of (N+1)T, each split into sub-slots."""

    slot_length: int  # ns
    spacing: int  # ns
    slots: int
    subslots: int

    @classmethod
    def from_config(cls, cfg: RadarConfig) -> "SlotGrid":
        spacing = math.ceil(subslot_spacing(cfg) / NS - 1e-6)
        subslots = _ns(cfg.T) // spacing
        if subslots < 1:
            raise ValueError("vulnerable period plus clock offset exceeds the chirp duration")
        return cls(_ns((cfg.N + 1) * cfg.T), spacing, cfg.K, subslots)

    @property
    def capacity(self) -> int:
        return self.slots * self.subslots

    def key(self, start: int) -> Tuple[int, int]:
        slot, rem = divmod(start, self.slot_length)
        sub, off = divmod(rem, self.spacing)
        if off or sub >= self.subslots:
            raise ValueError(f"start {start} ns is not on the sub-slot grid")
        return slot % self.slots, sub

    def start(self, slot: int, sub: int) -> int:
        return slot * self.slot_length + sub * self.spacing


def _allocate(grid: SlotGrid, t: int, claimed: set) -> int:
    first = t // grid.slot_length + 1
    for slot in range(first, first + grid.slots):
        for sub in range(grid.subslots):
            if (slot % grid.slots, sub) not in claimed:
                return grid.start(slot, sub)
    return grid.start(first + grid.slots, 0)


def allocate_radar_timeout(t: float, known_timeouts: Iterable[float], cfg: RadarConfig) -> float:
    """Earliest free sub-slot after the slot containing ``t``.

    Slots are searched in order with sub-slots in order inside each slot;
    a claim in one frame blocks the same sub-slot in every frame.  When
    everything is claimed the answer is the first sub-slot one frame on,
    which deliberately collides.
    """
    grid = SlotGrid.from_config(cfg)
    claimed = {grid.key(_ns(x)) for x in known_timeouts}
    return _allocate(grid, _ns(t), claimed) * NS


@dataclass
class SlotSchedule:
    grid: SlotGrid
    radar_to: Dict[int, float] = field(default_factory=dict)
    clock_offsets: Dict[int, float] = field(default_factory=dict)

    @property
    def assignments(self) -> Dict[int, Tuple[int, int]]:
        return {n: self.grid.key(_ns(t)) for n, t in self.radar_to.items()}

    def actual_start(self, node: int) -> float:
        return self.radar_to[node] + self.clock_offsets.get(node, 0.0)


def verify_schedule(schedule: SlotSchedule, cfg: RadarConfig) -> List[Tuple[int, int]]:
    """Pairs of nodes whose nominal radar start times interfere.

    The vulnerable period is widened by twice the clock-offset bound so a
    clean result also covers every offset realisation.  Equivalent to
    :func:`~radcom.interference.sequences_interfere` over all pairs.
    """
    nodes = np.array(sorted(schedule.radar_to))
    if nodes.size < 2:
        return []
    V = vulnerable_period(cfg, exact=True).widened(2 * cfg.clock_offset)
    start = np.array([schedule.radar_to[n] for n in nodes])
    ii, jj = np.triu_indices(nodes.size, k=1)
    delta = np.remainder(start[jj] - start[ii] + cfg.T_f / 2, cfg.T_f) - cfg.T_f / 2
    qmax = cfg.N - 1
    hit = np.zeros(ii.size, dtype=bool)
    for d0 in (delta, -delta):
        for d in (d0 - cfg.T_f, d0, d0 + cfg.T_f):
            q_lo = np.maximum(np.ceil((V.lo - d) / cfg.T), -qmax)
            q_hi = np.minimum(np.floor((V.hi - d) / cfg.T), qmax)
            hit |= q_lo <= q_hi
    return [(int(nodes[a]), int(nodes[b])) for a, b in zip(ii[hit], jj[hit])]


class ContentionTimeout(RuntimeError):
    pass


@dataclass
class ContentionResult:
    t_final: float
    schedule: SlotSchedule
    collisions: int
    comm_timeouts: np.ndarray
    trace: Optional[List[tuple]] = None

    @property
    def assignments(self) -> Dict[int, Tuple[int, int]]:
        return self.schedule.assignments


@dataclass(frozen=True)
class _Params:
    slot: int
    blind: int
    air: int
    window: int
    max_time: Optional[int]
    grid: SlotGrid


def _params(cfg: RadarConfig, max_time: Optional[float]) -> _Params:
    return _Params(
        slot=_ns(cfg.slot_time),
        blind=_ns(sensing_blind_time(cfg)),
        air=_ns(packet_airtime(cfg)),
        window=cfg.backoff_window,
        max_time=None if max_time is None else _ns(max_time),
        grid=SlotGrid.from_config(cfg),
    )


def _draws(cfg: RadarConfig, M: int, seed: int, p: _Params):
    mac_seq, clock_seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(mac_seq)
    comm_to = rng.integers(0, p.window * p.slot, M)
    counters = rng.integers(0, p.window, M)
    offsets = np.random.default_rng(clock_seq).uniform(-cfg.clock_offset, cfg.clock_offset, M)
    return rng, comm_to, counters, offsets


def _check_m(M: int):
    if not (isinstance(M, (int, np.integer)) and M >= 1):
        raise ValueError("M must be a positive integer")


def run_contention(cfg: RadarConfig, M: int, seed: int = 0,
                   max_time: Optional[float] = None, trace: bool = False) -> ContentionResult:
    """Resolve contention among ``M`` nodes until each has broadcast its RadarTo once.

    ``max_time`` (default ``10 * T_f``) bounds simulated time; pass
    ``float('inf')`` to disable the guard.  ``t_final`` is the end of the
    last successful broadcast, measured from the start of the first slot.
    """
    _check_m(M)
    limit = 10 * cfg.T_f if max_time is None else max_time
    p = _params(cfg, None if math.isinf(limit) else limit)
    rng, comm_to, cnt, offsets = _draws(cfg, M, seed, p)
    cnt = cnt.copy()
    ST = p.slot
    resume = comm_to + ST  # earliest boundary at which a node may decide
    pending = np.ones(M, dtype=bool)
    claimed: set = set()
    radar_to: Dict[int, float] = {}
    events: Optional[List[tuple]] = [] if trace else None
    collisions = 0
    t_final = 0

    while pending.any():
        idx = np.flatnonzero(pending)
        anchor = comm_to[idx]
        first = anchor + -((anchor - resume[idx]) // ST) * ST
        tx_time = first + cnt[idx] * ST
        s = int(tx_time.min())
        if p.max_time is not None and s > p.max_time:
            raise ContentionTimeout(f"{pending.sum()} of {M} nodes unresolved after {limit:.6g} s")
        deaf = tx_time < s + p.blind
        txs = idx[deaf]
        others = idx[~deaf]
        f_o = first[~deaf]
        # idle boundaries before the burst becomes audible count down
        lim = s + p.blind
        cnt[others] -= np.where(f_o < lim, (lim - 1 - f_o) // ST + 1, 0)
        starts = tx_time[deaf]
        burst_end = int(starts.max()) + p.air
        resume[others] = np.maximum(resume[others], burst_end + ST)
        if txs.size == 1:
            node = int(txs[0])
            slot_start = _allocate(p.grid, int(starts[0]), claimed)
            claimed.add(p.grid.key(slot_start))
            radar_to[node] = slot_start * NS
            pending[node] = False
            t_final = burst_end
            if events is not None:
                events.append((int(starts[0]), node, "success", slot_start))
        else:
            collisions += 1
            cnt[txs] = rng.integers(0, p.window, txs.size)
            resume[txs] = burst_end + ST
            if events is not None:
                events.append((s, tuple(int(n) for n in txs), "collision", burst_end))

    schedule = SlotSchedule(p.grid, radar_to, {n: float(offsets[n]) for n in range(M)})
    return ContentionResult(t_final * NS, schedule, collisions, comm_to * NS, events)


class EventKind(enum.IntEnum):
    TX_END = 0
    BOUNDARY = 1
    COMM_TIMEOUT = 2
    RADAR_START = 3
    RADAR_END = 4


class EventQueue:
    """Min-heap of events ordered by (time, node, kind)."""

    def __init__(self):
        self._heap: List[Tuple[int, int, EventKind]] = []
        self.now = 0

    def push(self, time: int, node: int, kind: EventKind):
        if time < self.now:
            raise ValueError(f"event at {time} ns scheduled in the past (now {self.now} ns)")
        heapq.heappush(self._heap, (time, node, kind))

    def pop(self) -> Tuple[int, int, EventKind]:
        ev = heapq.heappop(self._heap)
        self.now = ev[0]
        return ev

    def __len__(self):
        return len(self._heap)


def simulate_events(cfg: RadarConfig, M: int, seed: int = 0,
                    max_time: Optional[float] = None, radar_events: bool = True):
    """Boundary-by-boundary simulation; returns (ContentionResult, final node states).

    The trace holds ``(time_ns, node, kind, detail)`` tuples where kind is
    one of ``commto``, ``decrement``, ``freeze``, ``tx_start``, ``success``,
    ``collision``, ``radar_start`` or ``radar_end``.
    """
    _check_m(M)
    limit = 10 * cfg.T_f if max_time is None else max_time
    p = _params(cfg, None if math.isinf(limit) else limit)
    rng, comm_to, cnt, offsets = _draws(cfg, M, seed, p)
    ST = p.slot
    nodes = [NodeState(i, comm_timeout=comm_to[i] * NS, backoff_counter=int(cnt[i]))
             for i in range(M)]
    q = EventQueue()
    for i in range(M):
        q.push(int(comm_to[i]), i, EventKind.COMM_TIMEOUT)
    channel: List[Transmission] = []
    active: List[Transmission] = []
    burst: List[Transmission] = []
    claimed: set = set()
    radar_to: Dict[int, float] = {}
    trace: List[tuple] = []
    collisions = 0
    t_final = 0
    done = 0

    def next_boundary(i: int, not_before: int) -> int:
        a = int(comm_to[i])
        return a + -((a - not_before) // ST) * ST

    while q:
        t, i, kind = q.pop()
        if p.max_time is not None and t > p.max_time and done < M:
            raise ContentionTimeout(f"{M - done} of {M} nodes unresolved after {limit:.6g} s")
        node = nodes[i]
        if kind == EventKind.COMM_TIMEOUT:
            trace.append((t, i, "commto", node.backoff_counter))
            q.push(t + ST, i, EventKind.BOUNDARY)
        elif kind == EventKind.BOUNDARY:
            # transmissions older than one slot plus the blind window can no longer matter
            channel = [tx for tx in channel if tx.end > t - ST]
            busy = carrier_sense(channel, i, t, ST, p.blind)
            new = csma_step(node, busy)
            nodes[i] = new
            if new.state == RadComState.RIDLE_CTX:
                slot_start = _allocate(p.grid, t, claimed)
                nodes[i] = dataclasses.replace(new, radar_timeout=slot_start * NS)
                tx = Transmission(i, t, t + p.air)
                channel.append(tx)
                active.append(tx)
                burst.append(tx)
                trace.append((t, i, "tx_start", slot_start))
                q.push(tx.end, i, EventKind.TX_END)
            else:
                trace.append((t, i, "freeze" if busy else "decrement", new.backoff_counter))
                q.push(t + ST, i, EventKind.BOUNDARY)
        elif kind == EventKind.TX_END:
            active = [tx for tx in active if tx.node != i]
            if active:
                continue
            # channel silent: the burst is over
            group = sorted(burst)
            burst = []
            end = max(tx.end for tx in group)
            if len(group) == 1:
                slot_start = _ns(nodes[i].radar_timeout)
                claimed.add(p.grid.key(slot_start))
                radar_to[i] = slot_start * NS
                packet = (i, radar_to[i])
                for j in range(M):
                    if j != i:
                        nodes[j] = dataclasses.replace(
                            nodes[j], known_timeouts=nodes[j].known_timeouts | {packet})
                nodes[i] = dataclasses.replace(nodes[i], state=RadComState.RIDLE_CIDLE)
                done += 1
                t_final = end
                trace.append((t, i, "success", slot_start))
                if radar_events:
                    start = slot_start + _ns(offsets[i])
                    q.push(max(start, t), i, EventKind.RADAR_START)
            else:
                collisions += 1
                redraw = rng.integers(0, p.window, len(group))
                for tx, c in zip(group, redraw):
                    nodes[tx.node] = dataclasses.replace(
                        nodes[tx.node], state=RadComState.RIDLE_CIDLE, backoff_counter=int(c),
                        radar_timeout=None)
                    q.push(next_boundary(tx.node, end + ST), tx.node, EventKind.BOUNDARY)
                trace.append((t, tuple(tx.node for tx in group), "collision", end))
        elif kind == EventKind.RADAR_START:
            nodes[i] = dataclasses.replace(node, state=RadComState.RTXRX_CIDLE)
            trace.append((t, i, "radar_start", None))
            q.push(t + _ns(cfg.N * cfg.T), i, EventKind.RADAR_END)
        elif kind == EventKind.RADAR_END:
            nodes[i] = dataclasses.replace(node, state=RadComState.RIDLE_CIDLE)
            trace.append((t, i, "radar_end", None))

    schedule = SlotSchedule(p.grid, radar_to, {n: float(offsets[n]) for n in range(M)})
    result = ContentionResult(t_final * NS, schedule, collisions, comm_to * NS, trace)
    return result, nodes
