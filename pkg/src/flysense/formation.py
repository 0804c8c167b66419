"""Relay-formation policies.

Every policy maps per-UAV status (drain-time balance, running cost,
positions) to a formation matrix that passes the sub-channel constraint
by construction.  The main policy pairs overloaded UAVs with cheap
relays; three simpler baselines and an exhaustive-search oracle are used
for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import channel, world
from .channel import BS, ChannelParams, FormationMatrix

RATIO_CAP = 1e9  # drain-time stand-in (seconds) when a UAV has no BS rate


@dataclass
class CostReport:
    """Per-UAV status driving formation decisions."""

    balance: np.ndarray  # drain-time imbalance, sums to zero
    cost: np.ndarray     # energy + weighted backlog
    # BS-link rate left over after the UAV's own sensing intake (bit/s,
    # offload-sub-slot equivalent).  None disables the headroom guard.
    spare_rate: np.ndarray | None = None


@dataclass
class FormationPolicy:
    kind: str = "eda_nf"             # eda_nf | non_cooperative | buffer_threshold | dynamic_nf
    balance_threshold: float = 1.0   # drain-time imbalance (seconds) before seeking a relay
    buffer_threshold_bits: float = 1e7
    pair_range_m: float = 1000.0     # one-hop neighborhood
    min_rate: float | None = None    # None -> require u2u >= seeker's own BS rate
    cost_margin: float = 1e6         # dynamic_nf: required cost advantage

    KINDS = ("eda_nf", "non_cooperative", "buffer_threshold", "dynamic_nf")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown formation kind {self.kind!r}")


def load_balance(buffers, u2b_rates, ratio_cap: float = RATIO_CAP) -> np.ndarray:
    """Drain-time imbalance of each UAV against the average of the others.

    The drain time is buffer over BS-link rate; a zero rate is replaced by
    ratio_cap so a cut-off UAV surfaces as maximally overloaded.  The
    entries always sum to zero.
    """
    buffers = np.asarray(buffers, dtype=float)
    rates = np.asarray(u2b_rates, dtype=float)
    n = buffers.size
    if n < 2:
        raise ValueError("need at least two UAVs to balance")
    ratios = np.where(rates > 0.0, buffers / np.where(rates > 0.0, rates, 1.0), ratio_cap)
    total = ratios.sum()
    others_mean = (total - ratios) / (n - 1)
    return ratios - others_mean


def cost(energy_j: float, buffer_bits: float, gu_backlog_bits: float, lam: float) -> float:
    """Running cost of one UAV: slot energy plus weighted own backlog plus
    the outstanding demand of the ground users it covers."""
    return float(energy_j) + float(lam) * float(buffer_bits) + float(gu_backlog_bits)


class _ChannelCursor:
    """Round-robin sub-channel assignment that skips conflicting slots."""

    def __init__(self, n_channels: int):
        self.n_channels = n_channels
        self.next_ch = 0

    def place(self, fm: FormationMatrix, tx: int, rx: int) -> int | None:
        for off in range(self.n_channels):
            ch = (self.next_ch + off) % self.n_channels
            if fm.channel_fits(tx, rx, ch):
                fm.set_link(tx, rx, ch)
                self.next_ch = (ch + 1) % self.n_channels
                return ch
        return None


def _all_direct(n_uavs: int, n_channels: int, cursor: _ChannelCursor) -> FormationMatrix:
    fm = FormationMatrix(n_uavs, n_channels)
    for i in range(1, n_uavs + 1):
        cursor.place(fm, i, BS)  # skipped when the BS runs out of channels
    return fm


def _relay_pair(
    fm: FormationMatrix,
    cursor: _ChannelCursor,
    tx: int,
    rx: int,
    positions: np.ndarray | None = None,
    params: ChannelParams | None = None,
    active: np.ndarray | None = None,
) -> bool:
    """Replace tx's direct BS link with a one-hop link to rx.

    The sub-channels freed at the base station are handed to rx's own BS
    link where they still fit, so pairing widens the relay's backhaul
    instead of shrinking the total BS-bound bandwidth.  With positions
    and params the one-hop link goes on the fitting sub-channel with the
    least co-channel power at rx (active masks out transmitters known to
    be silent); among equally quiet channels the non-freed ones go first
    so the freed spectrum stays available for the backhaul.  Without
    positions the round-robin cursor picks.  Returns False and leaves fm
    unchanged when the one-hop link cannot be placed.
    """
    saved = [(r, c) for r, c in fm.out_links(tx)]
    freed = [c for r, c in saved if r == BS]
    fm.clear_link(tx, BS)
    if positions is None or params is None:
        placed = cursor.place(fm, tx, rx)
    else:
        widenable = {c for c in freed if fm.channel_fits(rx, BS, c)}
        fits = [c for c in range(fm.n_channels) if fm.channel_fits(tx, rx, c)]
        ranked = sorted(
            fits,
            key=lambda c: (
                channel.interference(fm, positions, tx, rx, c, params, active),
                c in widenable,
                c,
            ),
        )
        placed = None
        if ranked:
            placed = ranked[0]
            fm.set_link(tx, rx, placed)
    if placed is None:
        for r, c in saved:
            fm.set_link(tx, r, c)
        return False
    for c in freed:
        if c != placed and fm.channel_fits(rx, BS, c):
            fm.set_link(rx, BS, c)
    return True


def _point_rates_ok(policy, params, positions, seeker, relay, spare_rate=None) -> bool:
    """Rate guards for a candidate pairing.  The relay's own BS link must
    outrun the seeker's, otherwise rerouting cannot shorten the drain, and
    the U2U hop must clear the configured floor (the seeker's direct rate
    when none is set).  When the relay's spare backhaul rate is known the
    detour has to fit into it end to end: a relay whose BS link is already
    saturated by its own sensing would only queue the seeker's data."""
    if params is None:
        return True
    seeker_bs = channel.point_rate(positions[seeker], positions[BS], params)
    if channel.point_rate(positions[relay], positions[BS], params) <= seeker_bs:
        return False
    if spare_rate is not None and spare_rate < seeker_bs:
        return False
    u2u = channel.point_rate(positions[seeker], positions[relay], params)
    floor = policy.min_rate
    if floor is None:
        floor = seeker_bs
    return u2u >= floor


def eda_nf(
    report: CostReport,
    positions: np.ndarray,
    policy: FormationPolicy,
    n_channels: int,
    params: ChannelParams | None = None,
    active: np.ndarray | None = None,
) -> FormationMatrix:
    """Energy/delay-aware relay pairing.

    Start all-direct.  UAVs whose drain-time balance exceeds the threshold
    seek a relay; the rest are candidates.  The most expensive seeker is
    greedily paired with the cheapest in-range candidate: the seeker's
    BS link is replaced by a one-hop link to the relay, which keeps its
    own BS link.  Pairings that would break the sub-channel constraint,
    exceed the pairing range, fall below the minimum link rate, or exceed
    the relay's spare backhaul (when reported) are skipped.  positions
    holds node rows with the base station first.
    """
    n = report.balance.size
    cursor = _ChannelCursor(n_channels)
    fm = _all_direct(n, n_channels, cursor)
    seekers = [i for i in range(n) if report.balance[i] > policy.balance_threshold]
    relays = [i for i in range(n) if report.balance[i] <= policy.balance_threshold]
    seekers.sort(key=lambda i: (-report.cost[i], i))
    relays.sort(key=lambda i: (report.cost[i], i))
    for i in seekers:
        tx = i + 1
        for j in relays:
            rx = j + 1
            d = float(np.linalg.norm(positions[tx][:2] - positions[rx][:2]))
            if d >= policy.pair_range_m:
                continue
            spare = None if report.spare_rate is None else float(report.spare_rate[j])
            if not _point_rates_ok(policy, params, positions, tx, rx, spare):
                continue
            if not fm.has_link(rx, BS):
                continue  # a relay with no backhaul would strand the data
            if not _relay_pair(fm, cursor, tx, rx, positions, params, active):
                continue
            relays.remove(j)
            break
    return fm


def baseline_noncoop(n_uavs: int, n_channels: int) -> FormationMatrix:
    """Every UAV keeps a direct BS link; no relaying ever."""
    return _all_direct(n_uavs, n_channels, _ChannelCursor(n_channels))


def baseline_buffer(
    buffers: np.ndarray,
    positions: np.ndarray,
    policy: FormationPolicy,
    n_channels: int,
    params: ChannelParams | None = None,
    active: np.ndarray | None = None,
) -> FormationMatrix:
    """Relay whenever the own buffer passes a fixed threshold, to the
    nearest UAV that is still below it (within the pairing range)."""
    buffers = np.asarray(buffers, dtype=float)
    n = buffers.size
    cursor = _ChannelCursor(n_channels)
    fm = _all_direct(n, n_channels, cursor)
    for i in range(n):
        if buffers[i] <= policy.buffer_threshold_bits:
            continue
        tx = i + 1
        order = sorted(
            (j for j in range(n) if j != i and buffers[j] <= policy.buffer_threshold_bits),
            key=lambda j: (float(np.linalg.norm(positions[tx][:2] - positions[j + 1][:2])), j),
        )
        for j in order:
            rx = j + 1
            if float(np.linalg.norm(positions[tx][:2] - positions[rx][:2])) >= policy.pair_range_m:
                continue
            if not fm.has_link(rx, BS):
                continue
            if not _relay_pair(fm, cursor, tx, rx, positions, params, active):
                continue
            break
    return fm


def baseline_dynamic_nf(
    report: CostReport,
    positions: np.ndarray,
    policy: FormationPolicy,
    n_channels: int,
    params: ChannelParams | None = None,
    active: np.ndarray | None = None,
) -> FormationMatrix:
    """Cost-only pairing: a UAV relays through an in-range neighbor whose
    cost undercuts its own by the configured margin.  Pairings are
    exclusive, most expensive UAV first."""
    n = report.cost.size
    cursor = _ChannelCursor(n_channels)
    fm = _all_direct(n, n_channels, cursor)
    free = set(range(n))
    for i in sorted(range(n), key=lambda i: (-report.cost[i], i)):
        if i not in free:
            continue
        tx = i + 1
        candidates = sorted(
            (
                j
                for j in free
                if j != i
                and report.cost[j] < report.cost[i] - policy.cost_margin
                and float(np.linalg.norm(positions[tx][:2] - positions[j + 1][:2])) < policy.pair_range_m
            ),
            key=lambda j: (report.cost[j], j),
        )
        for j in candidates:
            rx = j + 1
            if not fm.has_link(rx, BS):
                continue
            if not _relay_pair(fm, cursor, tx, rx, positions, params, active):
                continue
            free.discard(i)
            free.discard(j)
            break
    return fm


def _feasible_matrices(n_uavs: int, n_channels: int):
    """Depth-first enumeration of every allocation satisfying the
    per-node sub-channel constraint, in lexicographic link order."""
    links = [
        (tx, rx, ch)
        for tx in range(1, n_uavs + 1)
        for rx in range(n_uavs + 1)
        if rx != tx
        for ch in range(n_channels)
    ]
    fm = FormationMatrix(n_uavs, n_channels)

    def rec(idx):
        if idx == len(links):
            yield fm.copy()
            return
        yield from rec(idx + 1)
        tx, rx, ch = links[idx]
        if fm.channel_fits(tx, rx, ch):
            fm.set_link(tx, rx, ch)
            yield from rec(idx + 1)
            fm.clear_link(tx, rx, ch)

    yield from rec(0)


def brute_force_formation(w: "world.WorldState", lam) -> tuple[FormationMatrix, float]:
    """Exhaustive search over every feasible allocation, scoring each by
    the slot objective after simulating one offloading sub-slot on the
    current buffers.  Ties keep the first (lexicographically smallest)
    matrix.  Refuses anything bigger than 3 UAVs x 2 sub-channels."""
    n = len(w.uavs)
    k = w.chan.n_channels
    if n > 3 or k > 2:
        raise ValueError(f"exhaustive search capped at 3 UAVs x 2 channels, got {n}x{k}")
    lam_arr = np.broadcast_to(np.asarray(lam, dtype=float), (n,))
    positions = w.positions()
    buffers = np.array([u.buffer for u in w.uavs])
    cap = w.scenario.buffer_capacity_bits
    free = cap - buffers
    backlog = sum(g.remaining for g in w.gus)
    best = None
    best_cost = math.inf
    for fm in _feasible_matrices(n, k):
        res = channel.offload(buffers, free, positions, fm, w.chan, w.protocol.t_o)
        new_buf = [
            world.uav_buffer_step(buffers[i], res.outgoing[i], res.incoming[i], cap)
            for i in range(n)
        ]
        total = float(np.dot(lam_arr, new_buf)) + backlog
        if total < best_cost:
            best_cost = total
            best = fm
    return best, best_cost
