"""Analytic baselines: power-proportional weights driving the extended
period+phase loops, and the no-period-update classic loop.

Both ingest one timestamp per slot from the rotating transmitter.  The
extended scheme computes a period correction once per update cycle from the
change in stored phase differences, holds it over N slots, and applies a
phase correction on the cycle's last slot.  The classic loop re-applies its
stored-stamp phase correction every slot and never touches the period.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import dbm_to_mw
from .metrics import Trace, TraceRecorder
from .scenario import Scenario
from .simcore import ClockState, LoopDivergenceError, SlotRegime, advance_clock, regime_of, slot_transmitter, timestamp

ABSENT_POWER = 0.0


@dataclass
class LoopGains:
    """Dimensionless loop gains: phase, period, and the classic single loop."""

    eps_phi: float = 0.3
    eps_t: float = 0.3
    eps_0: float = 0.3


@dataclass
class EssbsNodeState:
    """Stores one node keeps about its peers, plus the held period correction."""

    index: int  # 0-based own index
    clock: ClockState
    delta_phi: np.ndarray  # seconds per peer, 0.0 until first reception
    delta_phi_prev: np.ndarray
    stored_power_dbm: np.ndarray  # ABSENT_POWER marks peers never heard
    held_q_t: float = 0.0

    @classmethod
    def at_startup(cls, index: int, phase: float, period: float, n_nodes: int) -> "EssbsNodeState":
        return cls(
            index=index,
            clock=ClockState.at_startup(phase, period),
            delta_phi=np.zeros(n_nodes),
            delta_phi_prev=np.zeros(n_nodes),
            stored_power_dbm=np.full(n_nodes, ABSENT_POWER),
        )

    def heard_mask(self) -> np.ndarray:
        mask = self.stored_power_dbm != ABSENT_POWER
        mask[self.index] = False
        return mask


def classic_weights(powers_mw: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Weights proportional to linear received power over the masked-in peers."""
    powers_mw = np.asarray(powers_mw, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("no masked-in peer: caller should apply a zero correction")
    kept = np.where(mask, powers_mw, 0.0)
    total = kept.sum()
    if total <= 0.0:
        raise ValueError("masked-in peers must have positive linear power")
    return kept / total


def essbs_ingest(state: EssbsNodeState, peer: int, t_stamp: float, power_dbm: float, own_phase: float) -> None:
    """Shift the stored phase difference for ``peer`` and record the new one.

    The caller filters below-threshold receptions; this always stores.
    """
    state.delta_phi_prev[peer] = state.delta_phi[peer]
    state.delta_phi[peer] = t_stamp - own_phase
    state.stored_power_dbm[peer] = power_dbm


def _weights_or_none(state: EssbsNodeState) -> np.ndarray | None:
    mask = state.heard_mask()
    if not mask.any():
        return None
    return classic_weights(dbm_to_mw(state.stored_power_dbm), mask)


def essbs_corrections(state: EssbsNodeState, k: int, n_nodes: int, gains: LoopGains) -> tuple[float, float]:
    """(phase correction, period correction) inputs for slot ``k``.

    The period correction is computed fresh on the first period-update slot,
    reused over the held slots, and zero elsewhere; the phase correction is
    non-zero only on the cycle's final slot.
    """
    regime = regime_of(k, n_nodes)
    if regime is SlotRegime.PERIOD_UPDATE_FIRST:
        weights = _weights_or_none(state)
        state.held_q_t = (
            0.0
            if weights is None
            else gains.eps_t * float(weights @ (state.delta_phi - state.delta_phi_prev))
        )
        return 0.0, state.held_q_t
    if regime is SlotRegime.PERIOD_UPDATE_HELD:
        return 0.0, state.held_q_t
    if regime is SlotRegime.PHASE_UPDATE:
        weights = _weights_or_none(state)
        q_phi = 0.0 if weights is None else gains.eps_phi * float(weights @ state.delta_phi)
        return q_phi, 0.0
    return 0.0, 0.0


def classic_corrections(state: EssbsNodeState, k: int, n_nodes: int, gains: LoopGains) -> tuple[float, float]:
    """No-period-update mode: the full-duplex phase recursion applied every
    slot, driven by the stale stamps half-duplex reception provides.

    Each stored phase difference is re-applied until its peer transmits
    again, so the accumulated per-frame gain is roughly N times the slot
    gain; on multi-node networks this loop cannot hold the phases together.
    The period is never touched.
    """
    weights = _weights_or_none(state)
    q_phi = 0.0 if weights is None else gains.eps_0 * float(weights @ state.delta_phi)
    return q_phi, 0.0


def _run(scenario: Scenario, num_frames: int, gains: LoopGains, corrections) -> Trace:
    n = scenario.n_nodes
    num_slots = num_frames * n
    table = scenario.link_table
    states = [
        EssbsNodeState.at_startup(i, float(scenario.initial_phases_s[i]), float(scenario.initial_periods_s[i]), n)
        for i in range(n)
    ]
    recorder = TraceRecorder(num_slots, n)
    for k in range(num_slots):
        tx = slot_transmitter(k, n) - 1
        tx_phase = states[tx].clock.phase
        for i in range(n):
            if i != tx and table.above_threshold[i, tx]:
                stamp = timestamp(tx_phase, table.delay_s[i, tx])
                essbs_ingest(states[i], tx, stamp, table.power_dbm[i, tx], states[i].clock.phase)
        applied_q_phi = np.zeros(n)
        applied_q_t = np.zeros(n)
        for i, state in enumerate(states):
            applied_q_phi[i], applied_q_t[i] = corrections(state, k, n, gains)
        recorder.record(
            k, [s.clock.phase for s in states], [s.clock.period for s in states], applied_q_t, applied_q_phi
        )
        for i, state in enumerate(states):
            try:
                state.clock = advance_clock(state.clock, applied_q_t[i], applied_q_phi[i], n, slot=k)
            except LoopDivergenceError as exc:
                raise LoopDivergenceError(
                    f"node {i + 1}: {exc}", slot=k, trace=recorder.finish(aborted_at_slot=k)
                ) from exc
    return recorder.finish()


def run_essbs(scenario: Scenario, num_frames: int, gains: LoopGains | None = None) -> Trace:
    """Full per-slot trace of the extended scheme; raises on loop divergence
    with the partial trace attached."""
    return _run(scenario, num_frames, gains or LoopGains(), essbs_corrections)


def run_classic_no_period(scenario: Scenario, num_frames: int, gains: LoopGains | None = None) -> Trace:
    """Trace of the phase-only classic loop on the half-duplex schedule."""
    return _run(scenario, num_frames, gains or LoopGains(), classic_corrections)
