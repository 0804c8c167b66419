"""Time-slotted world for multi-UAV data offloading.

Each one-second slot splits into three phases: every UAV flies along its
commanded heading (t_f), collects data from the strongest ground user in
its coverage (t_s), then forwards buffered data along the links of the
current formation matrix (t_o).  Positions are meters, data is bits,
energy is joules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel
from .channel import BS, ChannelParams, FormationMatrix, FormationError


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


def distance(a: Position, b: Position) -> float:
    """Straight-line separation in meters."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


@dataclass
class GroundUser:
    id: int
    pos: Position
    remaining: float   # bits still waiting for pickup
    demand: float      # bits requested at the start of the run


@dataclass
class UavState:
    id: int            # node id, 1-based (node 0 is the base station)
    pos: Position
    buffer: float = 0.0
    energy_used: float = 0.0
    v_max: float = 20.0


@dataclass(frozen=True)
class ProtocolConfig:
    """Slot timing plus the two safety/coverage radii."""

    slot_len: float = 1.0
    t_f: float = 0.3
    t_s: float = 0.3
    t_o: float = 0.4
    d_min: float = 10.0            # minimum UAV separation, meters
    coverage_radius: float = 5331.892626665244  # sensing range, meters

    def __post_init__(self):
        for name in ("t_f", "t_s", "t_o"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if abs(self.t_f + self.t_s + self.t_o - self.slot_len) > 1e-9:
            raise ValueError("sub-slot durations must sum to slot_len")


@dataclass(frozen=True)
class EnergyModel:
    """Forward-flight propulsion power c1*v^3 + c2/v with a floor speed,
    plus constant hover-and-payload power while sensing/offloading."""

    c1: float = 9.26e-4
    c2: float = 2250.0
    hover_w: float = 170.0
    v_floor: float = 1.0


@dataclass
class Scenario:
    """Static description of one service area.

    x/y coordinates in this config are scaled to [-1, 1] over the square
    field; they are converted to meters when the world is built.
    """

    half_width_km: float = 1.0
    n_uavs: int = 3
    n_gus: int = 8
    gu_xy: list | None = None        # explicit scaled coords, else sampled
    gu_seed: int | None = None       # layout stream; None -> derived from run seed
    demand_bits: float = 1e7         # per-GU request (10 Mbit)
    buffer_capacity_bits: float = 2e7
    uav_alt_m: float = 100.0
    bs_height_m: float = 25.0
    bs_xy: tuple = (1.0, 1.0)        # scaled; upper-right corner
    uav_xy: list | None = None       # explicit scaled starts, else sampled
    v_max_mps: float = 20.0
    coverage_snr_min_db: float = 0.0
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    energy: EnergyModel = field(default_factory=EnergyModel)

    @property
    def half_width_m(self) -> float:
        return self.half_width_km * 1000.0


def coverage_radius_m(scenario: Scenario, params: ChannelParams) -> float:
    """Largest slant range at which the sensing SNR still meets the
    configured threshold."""
    thr = 10.0 ** (scenario.coverage_snr_min_db / 10.0)
    return (params.q_gu * params.beta_s / thr) ** (1.0 / params.alpha_s)


@dataclass
class WorldState:
    """Single-writer simulation state; all mutation goes through step()."""

    t: int
    uavs: list
    gus: list
    formation: FormationMatrix
    rng: np.random.Generator
    scenario: Scenario
    chan: ChannelParams
    protocol: ProtocolConfig
    bs_pos: Position
    last_energy: np.ndarray  # per-UAV propulsion J spent in the previous slot

    @property
    def n_uavs(self) -> int:
        return len(self.uavs)

    def positions(self) -> np.ndarray:
        """(N+1, 3) node positions, base station in row 0."""
        rows = [self.bs_pos.as_array()]
        rows += [u.pos.as_array() for u in self.uavs]
        return np.vstack(rows)


def make_world(scenario: Scenario, params: ChannelParams, rng: np.random.Generator) -> WorldState:
    hw = scenario.half_width_m
    proto = scenario.protocol
    if scenario.coverage_snr_min_db is not None:
        proto = replace(proto, coverage_radius=coverage_radius_m(scenario, params))

    layout_rng = rng if scenario.gu_seed is None else np.random.default_rng(scenario.gu_seed)
    if scenario.gu_xy is not None:
        gu_xy = np.asarray(scenario.gu_xy, dtype=float)
    else:
        gu_xy = layout_rng.uniform(-1.0, 1.0, size=(scenario.n_gus, 2))
    gus = [
        GroundUser(m, Position(x * hw, y * hw, 0.0), scenario.demand_bits, scenario.demand_bits)
        for m, (x, y) in enumerate(gu_xy)
    ]

    if scenario.uav_xy is not None:
        uav_xy = np.asarray(scenario.uav_xy, dtype=float)
    else:
        uav_xy = rng.uniform(-1.0, 1.0, size=(scenario.n_uavs, 2))
    uavs = [
        UavState(i + 1, Position(x * hw, y * hw, scenario.uav_alt_m), 0.0, 0.0, scenario.v_max_mps)
        for i, (x, y) in enumerate(uav_xy)
    ]

    bs = Position(scenario.bs_xy[0] * hw, scenario.bs_xy[1] * hw, scenario.bs_height_m)
    fm = FormationMatrix(scenario.n_uavs, params.n_channels)
    return WorldState(
        t=0,
        uavs=uavs,
        gus=gus,
        formation=fm,
        rng=rng,
        scenario=scenario,
        chan=params,
        protocol=proto,
        bs_pos=bs,
        last_energy=np.zeros(scenario.n_uavs),
    )


def move_uav(u: UavState, direction, speed: float, proto: ProtocolConfig, half_width_m: float) -> Position:
    """Position after flying for the fly sub-slot.

    direction must be a unit 2-vector in the horizontal plane; speed is
    clamped to the UAV's limit and the result is clamped to the field.
    Altitude never changes.
    """
    d = np.asarray(direction, dtype=float)
    if d.shape != (2,) or abs(float(np.hypot(d[0], d[1])) - 1.0) > 1e-9:
        raise ValueError(f"direction must be a unit 2-vector, got {direction!r}")
    if speed < 0:
        raise ValueError("speed must be non-negative")
    step_m = min(float(speed), u.v_max) * proto.t_f
    x = min(max(u.pos.x + d[0] * step_m, -half_width_m), half_width_m)
    y = min(max(u.pos.y + d[1] * step_m, -half_width_m), half_width_m)
    return Position(x, y, u.pos.z)


def select_gu(u: UavState, gus: list, proto: ProtocolConfig, params: ChannelParams,
              exclude=()) -> int | None:
    """Ground user this UAV will serve: the strongest received signal
    (equal transmit powers, so the smallest slant range) among users with
    data left inside the coverage radius.  Ties break to the lowest id;
    returns None when nobody qualifies."""
    best_id = None
    best_snr = -1.0
    for g in gus:
        if g.id in exclude or g.remaining <= 0.0:
            continue
        if distance(u.pos, g.pos) > proto.coverage_radius:
            continue
        snr = channel.g2u_snr(g.pos.as_array(), u.pos.as_array(), params)
        if snr > best_snr:
            best_snr = snr
            best_id = g.id
    return best_id


def sense(u: UavState, g: GroundUser, proto: ProtocolConfig, params: ChannelParams,
          buffer_capacity: float) -> float:
    """Bits collected from g during the sensing sub-slot: the link-rate
    budget capped by what the user still has and by the UAV's free buffer
    space."""
    rate = channel.g2u_rate(g.pos.as_array(), u.pos.as_array(), params)
    free = max(buffer_capacity - u.buffer, 0.0)
    return min(proto.t_s * rate, g.remaining, free)


def gu_queue_step(g: GroundUser, drained: float) -> GroundUser:
    """Queue after one slot; drained bits leave, nothing goes negative."""
    return replace(g, remaining=max(g.remaining - drained, 0.0))


def uav_buffer_step(buffer: float, outgoing: float, incoming: float, capacity: float) -> float:
    """Buffer after one slot: sent bits leave first, then this slot's
    sensed and relayed-in bits arrive, clipped at capacity."""
    return min(max(buffer - outgoing, 0.0) + incoming, capacity)


def propulsion_energy(speed: float, proto: ProtocolConfig, model: EnergyModel) -> float:
    """Joules burned in one slot at the given commanded speed.

    Flight power follows the forward-flight model with speeds below the
    floor treated as the floor; the hover/payload draw runs for the rest
    of the slot."""
    v = max(float(speed), model.v_floor)
    p_fly = model.c1 * v ** 3 + model.c2 / v
    return p_fly * proto.t_f + model.hover_w * (proto.t_s + proto.t_o)


@dataclass
class StepReport:
    """Everything that happened in one slot, indexed by 0-based UAV."""

    sensed: np.ndarray
    delivered_bs: np.ndarray
    relayed_out: np.ndarray
    relayed_in: np.ndarray
    energy: np.ndarray        # propulsion J (enters the objective)
    tx_energy: np.ndarray     # radio J (reported only)
    violations_per_uav: np.ndarray
    violations: int           # pairs closer than d_min after flying
    gu_drained: np.ndarray
    serving: list             # per-UAV id of the GU sensed, or None


def step(w: WorldState, actions: list, fm: FormationMatrix) -> tuple[WorldState, StepReport]:
    """Advance the world one slot under the given per-UAV (direction,
    speed) commands and formation matrix.  The matrix is validated before
    anything mutates."""
    bad = channel.validate_alloc(fm)
    if bad:
        raise FormationError(f"invalid allocation at (node, channel): {bad}")
    n = len(w.uavs)
    if len(actions) != n:
        raise ValueError(f"expected {n} actions, got {len(actions)}")
    w.formation = fm
    hw = w.scenario.half_width_m
    cap = w.scenario.buffer_capacity_bits

    speeds = np.zeros(n)
    for i, (u, (direction, speed)) in enumerate(zip(w.uavs, actions)):
        u.pos = move_uav(u, direction, speed, w.protocol, hw)
        speeds[i] = min(max(float(speed), 0.0), u.v_max)

    sensed = np.zeros(n)
    drained = np.zeros(len(w.gus))
    serving: list = [None] * n
    claimed: set = set()
    for i, u in enumerate(w.uavs):
        gid = select_gu(u, w.gus, w.protocol, w.chan, exclude=claimed)
        if gid is None:
            continue
        claimed.add(gid)
        serving[i] = gid
        bits = sense(u, w.gus[gid], w.protocol, w.chan, cap)
        sensed[i] = bits
        drained[gid] += bits

    positions = w.positions()
    buffers = np.array([u.buffer for u in w.uavs])
    free = cap - buffers - sensed
    res = channel.offload(buffers, free, positions, fm, w.chan, w.protocol.t_o)

    for gid, bits in enumerate(drained):
        if bits > 0.0:
            w.gus[gid] = gu_queue_step(w.gus[gid], bits)
    energy = np.zeros(n)
    tx_energy = np.zeros(n)
    for i, u in enumerate(w.uavs):
        u.buffer = uav_buffer_step(u.buffer, res.outgoing[i], sensed[i] + res.incoming[i], cap)
        energy[i] = propulsion_energy(speeds[i], w.protocol, w.scenario.energy)
        u.energy_used += energy[i]
        tx_energy[i] = w.chan.p_uav * w.protocol.t_o * len(fm.out_links(u.id))

    viol_per_uav = np.zeros(n, dtype=int)
    pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            if distance(w.uavs[i].pos, w.uavs[j].pos) < w.protocol.d_min:
                pairs += 1
                viol_per_uav[i] += 1
                viol_per_uav[j] += 1

    w.last_energy = energy
    w.t += 1
    report = StepReport(
        sensed=sensed,
        delivered_bs=res.to_bs,
        relayed_out=res.outgoing - res.to_bs,
        relayed_in=res.incoming,
        energy=energy,
        tx_energy=tx_energy,
        violations_per_uav=viol_per_uav,
        violations=pairs,
        gu_drained=drained,
        serving=serving,
    )
    return w, report


def objective_slot(w: WorldState, report: StepReport, lam) -> float:
    """Per-slot value of the system cost: propulsion energy plus weighted
    UAV backlogs plus all outstanding ground demand (lower is better)."""
    lam = np.asarray(lam, dtype=float)
    buffers = np.array([u.buffer for u in w.uavs])
    backlog = sum(g.remaining for g in w.gus)
    return float(np.sum(report.energy + lam * buffers) + backlog)
