"""Link rates and sub-channel bookkeeping for the UAV relay network.

One index convention everywhere: node 0 is the base station (receive
only), nodes 1..N are UAVs.  Positions are (x, y, z) row vectors in
meters, powers are watts, rates are bit/s.  Spectral efficiency uses
log base 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BS = 0  # receiver index of the base station in formation matrices

# Path-loss floor so coincident nodes do not divide by zero.
_MIN_PATH_M = 1.0


class FormationError(ValueError):
    """Raised when a formation matrix breaks the sub-channel constraint."""


@dataclass(frozen=True)
class ChannelParams:
    """Radio parameters shared by all links.

    beta_u is the U2U/U2B reference power gain at 1 m.  beta_s is the
    ground-to-UAV reference gain already divided by the receiver noise
    power, so sensing SNR is q_gu * beta_s * d**-alpha_s with no
    separate noise term.
    """

    n_channels: int = 3
    bandwidth: float = 1e6        # Hz per sub-channel
    noise: float = 1e-12          # W  (-90 dBm)
    alpha_u: float = 2.0
    alpha_s: float = 2.0
    beta_u: float = 1.4248291449703749e-4
    beta_s: float = 1.4248291449703749e8
    p_uav: float = 0.19952623149688797   # W (23 dBm), per sub-channel
    q_gu: float = 0.19952623149688797    # W (23 dBm)
    carrier: float = 2e9          # Hz, informational


class FormationMatrix:
    """Binary allocation phi[tx, rx, ch] of sub-channels to directed links.

    Row 0 (base-station transmit) and the diagonal are structurally zero.
    """

    def __init__(self, n_uavs: int, n_channels: int, phi: np.ndarray | None = None):
        self.n_uavs = int(n_uavs)
        self.n_channels = int(n_channels)
        shape = (n_uavs + 1, n_uavs + 1, n_channels)
        if phi is None:
            phi = np.zeros(shape, dtype=np.int8)
        else:
            phi = np.asarray(phi, dtype=np.int8)
            if phi.shape != shape:
                raise FormationError(f"expected phi shape {shape}, got {phi.shape}")
            if phi[BS].any():
                raise FormationError("base station cannot transmit")
            if np.einsum("iik->ik", phi).any():
                raise FormationError("self links are not allowed")
            if not np.isin(phi, (0, 1)).all():
                raise FormationError("phi entries must be 0 or 1")
        self.phi = phi

    def copy(self) -> "FormationMatrix":
        return FormationMatrix(self.n_uavs, self.n_channels, self.phi.copy())

    def set_link(self, tx: int, rx: int, ch: int) -> None:
        if tx == BS or tx == rx:
            raise ValueError(f"illegal link {tx}->{rx}")
        self.phi[tx, rx, ch] = 1

    def clear_link(self, tx: int, rx: int, ch: int | None = None) -> None:
        if ch is None:
            self.phi[tx, rx, :] = 0
        else:
            self.phi[tx, rx, ch] = 0

    def has_link(self, tx: int, rx: int) -> bool:
        return bool(self.phi[tx, rx].any())

    def links(self) -> list[tuple[int, int, int]]:
        """All (tx, rx, ch) assignments in ascending order."""
        return [tuple(ix) for ix in np.argwhere(self.phi == 1)]

    def out_links(self, tx: int) -> list[tuple[int, int]]:
        """(rx, ch) pairs carrying traffic away from node tx."""
        return [(rx, ch) for rx, ch in np.argwhere(self.phi[tx] == 1)]

    def usage(self, node: int, ch: int) -> int:
        """Incoming plus outgoing assignments of node on one sub-channel."""
        return int(self.phi[:, node, ch].sum() + self.phi[node, :, ch].sum())

    def channel_fits(self, tx: int, rx: int, ch: int) -> bool:
        """True if adding tx->rx on ch keeps both endpoints within the
        one-use-per-node-per-channel limit."""
        return self.usage(tx, ch) == 0 and self.usage(rx, ch) == 0

    def key(self) -> bytes:
        return self.phi.tobytes()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FormationMatrix)
            and self.phi.shape == other.phi.shape
            and (self.phi == other.phi).all()
        )


def validate_alloc(fm: FormationMatrix) -> list[tuple[int, int]]:
    """Check the per-node sub-channel constraint.

    Every node may use each sub-channel for at most one purpose, either
    receiving from one transmitter or transmitting to one receiver.
    Returns the list of violating (node, channel) pairs; empty means the
    allocation is feasible.
    """
    phi = fm.phi
    use = phi.sum(axis=0) + phi.sum(axis=1)  # (node, ch): in + out
    return [tuple(ix) for ix in np.argwhere(use > 1)]


def _gain(a: np.ndarray, b: np.ndarray, beta: float, alpha: float) -> float:
    d = max(float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float))), _MIN_PATH_M)
    return beta * d ** -alpha


def interference(
    fm: FormationMatrix,
    positions: np.ndarray,
    tx: int,
    rx: int,
    ch: int,
    params: ChannelParams,
    active=None,
) -> float:
    """Aggregate co-channel power (W) hitting rx on sub-channel ch.

    Sums over every other active transmitter on ch; the link under test
    (tx -> rx) itself is excluded.  active, when given, is a per-node
    mask of transmitters that actually have data this sub-slot; silent
    nodes radiate nothing even if they hold an allocation.
    """
    total = 0.0
    for m, n, k in zip(*np.nonzero(fm.phi)):
        if k != ch or m == tx or n == rx:
            continue
        if active is not None and not active[m]:
            continue
        total += params.p_uav * _gain(positions[m], positions[rx], params.beta_u, params.alpha_u)
    return total


def u2u_rate(
    fm: FormationMatrix,
    positions: np.ndarray,
    tx: int,
    rx: int,
    params: ChannelParams,
    active=None,
) -> float:
    """Achievable rate (bit/s) of the tx -> rx link under the current
    allocation, summed over its assigned sub-channels and degraded by
    co-channel interference from the active transmitters."""
    signal = params.p_uav * _gain(positions[tx], positions[rx], params.beta_u, params.alpha_u)
    rate = 0.0
    for ch in range(fm.n_channels):
        if not fm.phi[tx, rx, ch]:
            continue
        sinr = signal / (params.noise + interference(fm, positions, tx, rx, ch, params, active))
        rate += params.bandwidth * math.log2(1.0 + sinr)
    return rate


def point_rate(pos_a, pos_b, params: ChannelParams) -> float:
    """Interference-free single-channel UAV rate (bit/s) between two points.

    Used for what-if comparisons (relay guards, drain-time balance) where
    no allocation exists yet."""
    snr = params.p_uav * _gain(pos_a, pos_b, params.beta_u, params.alpha_u) / params.noise
    return params.bandwidth * math.log2(1.0 + snr)


def g2u_snr(gu_pos, uav_pos, params: ChannelParams) -> float:
    return params.q_gu * _gain(gu_pos, uav_pos, params.beta_s, params.alpha_s)


def g2u_rate(gu_pos, uav_pos, params: ChannelParams) -> float:
    """Sensing-link rate (bit/s).  Ground uplinks are orthogonal to the
    relay sub-channels, so there is no interference term."""
    return params.bandwidth * math.log2(1.0 + g2u_snr(gu_pos, uav_pos, params))


@dataclass
class OffloadReport:
    """Bits moved during one offloading sub-slot, indexed by 0-based UAV."""

    link_bits: list  # (tx_node, rx_node, bits) with node ids, ascending
    outgoing: np.ndarray
    incoming: np.ndarray
    to_bs: np.ndarray


def offload(
    buffers: np.ndarray,
    free_space: np.ndarray,
    positions: np.ndarray,
    fm: FormationMatrix,
    params: ChannelParams,
    t_o: float,
) -> OffloadReport:
    """Move buffered bits along every allocated link for one sub-slot.

    buffers[i] is UAV i+1's backlog at the start of the slot; bits sensed
    during the current slot are not yet sendable.  Each link carries up to
    rate * t_o bits and a sender never ships more than it holds.  Links
    into the base station are served first: the station accepts anything,
    and every bit a UAV drains frees that much buffer for relayed traffic
    in the same sub-slot (departures precede arrivals in the queue
    recursion).  U2U links then run in ascending (tx, rx) order; a
    receiver accepts at most free_space[rx] plus whatever it just drained,
    so no bits are ever silently dropped; refused bits simply stay with
    the sender.  UAVs with nothing buffered transmit nothing, so their
    allocated links contribute no co-channel interference this sub-slot.
    """
    violations = validate_alloc(fm)
    if violations:
        raise FormationError(f"invalid allocation at (node, channel): {violations}")
    n = fm.n_uavs
    remaining = np.asarray(buffers, dtype=float).copy()
    accept = np.asarray(free_space, dtype=float).clip(min=0.0).copy()
    active = np.zeros(n + 1, dtype=bool)
    active[1:] = remaining > 0.0
    outgoing = np.zeros(n)
    incoming = np.zeros(n)
    to_bs = np.zeros(n)
    link_bits = []
    for tx in range(1, n + 1):
        if not fm.has_link(tx, BS):
            continue
        capacity = u2u_rate(fm, positions, tx, BS, params, active) * t_o
        amount = min(capacity, remaining[tx - 1])
        if amount <= 0.0:
            continue
        remaining[tx - 1] -= amount
        accept[tx - 1] += amount
        outgoing[tx - 1] += amount
        to_bs[tx - 1] += amount
        link_bits.append((tx, BS, amount))
    for tx in range(1, n + 1):
        for rx in range(1, n + 1):
            if rx == tx or not fm.has_link(tx, rx):
                continue
            capacity = u2u_rate(fm, positions, tx, rx, params, active) * t_o
            amount = min(capacity, remaining[tx - 1], accept[rx - 1])
            if amount <= 0.0:
                continue
            remaining[tx - 1] -= amount
            outgoing[tx - 1] += amount
            incoming[rx - 1] += amount
            accept[rx - 1] -= amount
            link_bits.append((tx, rx, amount))
    return OffloadReport(link_bits, outgoing, incoming, to_bs)
