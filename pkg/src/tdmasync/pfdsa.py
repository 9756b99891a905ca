"""The network-aided node: per-peer feature stores, staggered period/phase
corrections with learned combination weights, and the per-slot state machine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import Trace, TraceRecorder
from .scenario import Scenario
from .simcore import ClockState, LoopDivergenceError, SlotRegime, advance_clock, regime_of, slot_transmitter, timestamp
from .weightnet import WeightNetParams, build_features, net_forward

ABSENT_POWER = 0.0


@dataclass
class SyncStore:
    """Per-peer memory at one node: last phase difference, per-slot period
    difference estimate, and received power (0 marks an absent peer)."""

    own_index: int
    n_nodes: int
    nominal_period_s: float
    p_th_dbm: float
    x_phi: np.ndarray  # seconds per peer
    x_t: np.ndarray  # seconds per peer
    power_dbm: np.ndarray
    held_a: float = 0.0

    @classmethod
    def empty(cls, own_index: int, n_nodes: int, nominal_period_s: float, p_th_dbm: float) -> "SyncStore":
        return cls(
            own_index=own_index,
            n_nodes=n_nodes,
            nominal_period_s=nominal_period_s,
            p_th_dbm=p_th_dbm,
            x_phi=np.zeros(n_nodes),
            x_t=np.zeros(n_nodes),
            power_dbm=np.full(n_nodes, ABSENT_POWER),
        )

    def peer_order(self) -> list[int]:
        return [j for j in range(self.n_nodes) if j != self.own_index]

    def present_mask(self) -> np.ndarray:
        """Over peers in ascending order, True where the peer has been heard."""
        return np.array([self.power_dbm[j] != ABSENT_POWER for j in self.peer_order()])


def pfdsa_ingest(store: SyncStore, peer: int, t_stamp: float, power_dbm: float, own_phase: float) -> None:
    """Record one slot's observation of ``peer``.

    Above threshold: the period-difference estimate is refreshed from the old
    phase difference before the phase difference itself is overwritten.
    Below threshold: the peer's entries are cleared.
    """
    if power_dbm > store.p_th_dbm:
        delta = t_stamp - own_phase
        store.x_t[peer] = (delta - store.x_phi[peer]) / store.n_nodes
        store.x_phi[peer] = delta
        store.power_dbm[peer] = power_dbm
    else:
        store.power_dbm[peer] = ABSENT_POWER
        store.x_phi[peer] = 0.0
        store.x_t[peer] = 0.0


def _weighted_store_sum(store: SyncStore, values: np.ndarray, params: WeightNetParams, gain: float) -> float:
    mask = store.present_mask()
    if not mask.any():
        return 0.0
    order = store.peer_order()
    peer_values = values[order]
    features = build_features(
        peer_values, store.power_dbm[order], mask, store.nominal_period_s, store.p_th_dbm
    )
    weights = net_forward(params, features, mask)
    return gain * float(weights @ peer_values)


def period_correction(store: SyncStore, params_t: WeightNetParams, eps_t: float) -> float:
    """Weighted sum of the stored period-difference estimates; caches the
    result for the held slots of the cycle."""
    store.held_a = _weighted_store_sum(store, store.x_t, params_t, eps_t)
    return store.held_a


def phase_correction(store: SyncStore, params_phi: WeightNetParams, eps_phi: float) -> float:
    """Weighted sum of the stored phase differences."""
    return _weighted_store_sum(store, store.x_phi, params_phi, eps_phi)


@dataclass
class PfdsaNode:
    clock: ClockState
    store: SyncStore
    params_t: WeightNetParams
    params_phi: WeightNetParams


def pfdsa_step(nodes: list[PfdsaNode], scenario: Scenario, k: int, eps_t: float, eps_phi: float):
    """Advance every clock through slot ``k``: the slot's transmitter emits,
    every other node ingests, and all nodes apply the regime's correction.

    Returns (applied period corrections, applied phase corrections).
    """
    n = scenario.n_nodes
    table = scenario.link_table
    tx = slot_transmitter(k, n) - 1
    tx_phase = nodes[tx].clock.phase
    for i in range(n):
        if i == tx:
            continue
        stamp = timestamp(tx_phase, table.delay_s[i, tx])
        pfdsa_ingest(nodes[i].store, tx, stamp, table.power_dbm[i, tx], nodes[i].clock.phase)

    regime = regime_of(k, n)
    applied_a = np.zeros(n)
    applied_omega = np.zeros(n)
    for i, node in enumerate(nodes):
        if regime is SlotRegime.PERIOD_UPDATE_FIRST:
            applied_a[i] = period_correction(node.store, node.params_t, eps_t)
        elif regime is SlotRegime.PERIOD_UPDATE_HELD:
            applied_a[i] = node.store.held_a
        elif regime is SlotRegime.PHASE_UPDATE:
            applied_omega[i] = phase_correction(node.store, node.params_phi, eps_phi)
    for i, node in enumerate(nodes):
        node.clock = advance_clock(node.clock, applied_a[i], applied_omega[i], n, slot=k)
    return applied_a, applied_omega


def make_nodes(scenario: Scenario, models: dict[int, dict[str, WeightNetParams]]) -> list[PfdsaNode]:
    n = scenario.n_nodes
    nominal = scenario.config.nominal_period_s
    p_th = scenario.link_table.p_th_dbm
    return [
        PfdsaNode(
            clock=ClockState.at_startup(float(scenario.initial_phases_s[i]), float(scenario.initial_periods_s[i])),
            store=SyncStore.empty(i, n, nominal, p_th),
            params_t=models[i]["period"],
            params_phi=models[i]["phase"],
        )
        for i in range(n)
    ]


def run_pfdsa(
    scenario: Scenario,
    models: dict[int, dict[str, WeightNetParams]],
    num_frames: int,
    eps_t: float = 0.3,
    eps_phi: float = 0.3,
) -> Trace:
    """Deterministic full trace of the learned-weight loops."""
    n = scenario.n_nodes
    num_slots = num_frames * n
    nodes = make_nodes(scenario, models)
    recorder = TraceRecorder(num_slots, n)
    for k in range(num_slots):
        phases = [node.clock.phase for node in nodes]
        periods = [node.clock.period for node in nodes]
        try:
            applied_a, applied_omega = pfdsa_step(nodes, scenario, k, eps_t, eps_phi)
        except LoopDivergenceError as exc:
            recorder.record(k, phases, periods, np.zeros(n), np.zeros(n))
            raise LoopDivergenceError(str(exc), slot=k, trace=recorder.finish(aborted_at_slot=k)) from exc
        recorder.record(k, phases, periods, applied_a, applied_omega)
    return recorder.finish()
