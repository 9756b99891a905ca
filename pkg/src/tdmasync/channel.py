"""Node geometry, two-ray path loss, propagation delays, and the link table."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .simcore import InvalidChannelError

SPEED_OF_LIGHT_M_S = 299_792_458.0


class ColocatedNodesError(InvalidChannelError):
    """Raised when two nodes share a position (the path-loss model blows up)."""


@dataclass
class RadioConfig:
    """Radio and deployment parameters shared by every link."""

    tx_power_dbm: float = 33.0
    antenna_height_m: float = 1.5
    p_th_dbm: float = -114.0
    gain_offset_db: float = 0.0
    side_length_m: float = 10_000.0


@dataclass
class NodePlacement:
    x: float
    y: float


def received_power_dbm(tx_power: float, h_t: float, h_r: float, d: float, gain_offset: float = 0.0) -> float:
    """Far-field two-ray ground-reflection power at distance ``d`` meters.

    Uses the d^4 approximation with unity antenna gains; ``gain_offset``
    absorbs any constant calibration (gains, losses) in dB.
    """
    if d <= 0.0:
        raise ColocatedNodesError(f"two-ray model needs distance > 0, got {d}")
    if h_t <= 0.0 or h_r <= 0.0:
        raise InvalidChannelError(f"antenna heights must be positive, got {h_t}, {h_r}")
    return tx_power + gain_offset + 10.0 * math.log10((h_t * h_r) ** 2 / d**4)


def propagation_delay(d: float) -> float:
    """Line-of-sight flight time in seconds."""
    if d < 0.0:
        raise InvalidChannelError(f"distance cannot be negative, got {d}")
    return d / SPEED_OF_LIGHT_M_S


def dbm_to_mw(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0)


@dataclass
class LinkTable:
    """Static per-pair received powers, delays, and threshold flags.

    Arrays are N x N with the diagonal unused (a node never receives itself).
    Symmetric by construction: identical hardware both ways.
    """

    power_dbm: np.ndarray
    delay_s: np.ndarray
    above_threshold: np.ndarray
    p_th_dbm: float = -114.0

    @property
    def n_nodes(self) -> int:
        return self.power_dbm.shape[0]

    def neighbors_of(self, i: int) -> list[int]:
        """0-based indices of nodes whose signal node ``i`` receives above threshold."""
        return [j for j in range(self.n_nodes) if j != i and self.above_threshold[i, j]]

    def is_connected(self) -> bool:
        """True when the above-threshold graph has a single component."""
        n = self.n_nodes
        if n == 0:
            return False
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in range(n):
                if j not in seen and self.above_threshold[i, j]:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == n


def build_link_table(placements: list[NodePlacement], radio: RadioConfig) -> LinkTable:
    """Populate powers, delays, and threshold flags for every ordered pair."""
    n = len(placements)
    power = np.zeros((n, n))
    delay = np.zeros((n, n))
    above = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            d = math.hypot(placements[i].x - placements[j].x, placements[i].y - placements[j].y)
            if d == 0.0:
                raise ColocatedNodesError(f"nodes {i} and {j} are co-located")
            p = received_power_dbm(
                radio.tx_power_dbm, radio.antenna_height_m, radio.antenna_height_m, d, radio.gain_offset_db
            )
            q = propagation_delay(d)
            power[i, j] = power[j, i] = p
            delay[i, j] = delay[j, i] = q
            above[i, j] = above[j, i] = p > radio.p_th_dbm
    return LinkTable(power_dbm=power, delay_s=delay, above_threshold=above, p_th_dbm=radio.p_th_dbm)


def connectivity_fraction(table: LinkTable) -> float:
    """Share of ordered node pairs whose link clears the reception threshold."""
    n = table.n_nodes
    if n < 2:
        return 0.0
    mask = ~np.eye(n, dtype=bool)
    return float(np.count_nonzero(table.above_threshold[mask])) / (n * (n - 1))
