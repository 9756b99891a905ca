"""Discrete-time clocks, TDMA slot rotation, and the three-action update schedule.

All times are plain ``float`` seconds.  A synchronization cycle spans 3N slots:
the first 2N-1 slots only collect timestamps, the next N slots apply a held
period correction, and the last slot applies a phase correction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class InvalidNetworkError(ValueError):
    """Raised for node counts that cannot form a TDMA network."""


class InvalidChannelError(ValueError):
    """Raised for physically impossible channel parameters."""


class LoopDivergenceError(RuntimeError):
    """Raised when a correction loop drives a clock period to zero or below.

    Attributes:
        slot: slot index at which the divergence occurred (-1 if unknown).
        trace: partial trace accumulated up to the failure, when available.
    """

    def __init__(self, message: str, slot: int = -1, trace=None):
        super().__init__(message)
        self.slot = slot
        self.trace = trace


class SlotRegime(enum.Enum):
    """Action a node performs in a given slot of the 3N-slot update cycle."""

    COLLECT_ONLY = "collect_only"
    PERIOD_UPDATE_FIRST = "period_update_first"
    PERIOD_UPDATE_HELD = "period_update_held"
    PHASE_UPDATE = "phase_update"


@dataclass
class ClockState:
    """Per-node clock: current phase and period plus the startup values."""

    phase: float
    period: float
    initial_phase: float
    initial_period: float

    @classmethod
    def at_startup(cls, phase: float, period: float) -> "ClockState":
        if period <= 0.0:
            raise ValueError(f"clock period must be positive, got {period}")
        return cls(phase=phase, period=period, initial_phase=phase, initial_period=period)


def slot_transmitter(k: int, n_nodes: int) -> int:
    """1-based index of the node transmitting in slot ``k``."""
    if n_nodes < 2:
        raise InvalidNetworkError(f"a TDMA network needs at least 2 nodes, got {n_nodes}")
    if k < 0:
        raise ValueError(f"slot index must be non-negative, got {k}")
    return (k % n_nodes) + 1


def regime_of(k: int, n_nodes: int) -> SlotRegime:
    """Regime of slot ``k`` within the 3N-slot update cycle."""
    if n_nodes < 2:
        raise InvalidNetworkError(f"a TDMA network needs at least 2 nodes, got {n_nodes}")
    if k < 0:
        raise ValueError(f"slot index must be non-negative, got {k}")
    m = k % (3 * n_nodes)
    if m <= 2 * n_nodes - 2:
        return SlotRegime.COLLECT_ONLY
    if m == 2 * n_nodes - 1:
        return SlotRegime.PERIOD_UPDATE_FIRST
    if m <= 3 * n_nodes - 2:
        return SlotRegime.PERIOD_UPDATE_HELD
    return SlotRegime.PHASE_UPDATE


def advance_clock(state: ClockState, period_corr: float, phase_corr: float, n_nodes: int, slot: int = -1) -> ClockState:
    """One slot tick: phase advances by the pre-update period plus the phase
    correction, then the period absorbs 1/N of the period correction."""
    new_phase = state.phase + state.period + phase_corr
    new_period = state.period + period_corr / n_nodes
    if new_period <= 0.0:
        raise LoopDivergenceError(
            f"clock period driven to {new_period:g} s (correction {period_corr:g})", slot=slot
        )
    return ClockState(
        phase=new_phase,
        period=new_period,
        initial_phase=state.initial_phase,
        initial_period=state.initial_period,
    )


def timestamp(tx_phase: float, delay: float) -> float:
    """Arrival stamp a receiver assigns to a transmission: emitter clock plus flight time."""
    if delay < 0.0:
        raise InvalidChannelError(f"propagation delay cannot be negative, got {delay}")
    return tx_phase + delay
