"""Synchronization quality measures and trace summarization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DIVERGENCE_NPDR = 10.0


@dataclass
class Trace:
    """Per-slot record of every clock and the corrections that were applied.

    Row ``r`` holds the state at slot ``slots[r]`` before that slot's update,
    together with the period/phase correction inputs applied during it.
    """

    slots: np.ndarray
    phases: np.ndarray  # (num_slots, n_nodes) seconds
    periods: np.ndarray  # (num_slots, n_nodes) seconds
    period_corrections: np.ndarray  # (num_slots, n_nodes) seconds, pre-division value
    phase_corrections: np.ndarray  # (num_slots, n_nodes) seconds
    aborted_at_slot: int = -1  # slot of a loop-divergence abort, -1 if clean

    @property
    def n_nodes(self) -> int:
        return self.phases.shape[1]

    @property
    def n_slots(self) -> int:
        return self.phases.shape[0]

    def npdr_series(self) -> np.ndarray:
        # divergent traces legitimately reach inf/NaN; keep that silent here
        with np.errstate(over="ignore", invalid="ignore"):
            return (self.phases.max(axis=1) - self.phases.min(axis=1)) / self.periods.mean(axis=1)


@dataclass
class TraceSummary:
    final_npdr: float
    steady_state_npdr: float
    max_period_spread_s: float
    final_period_spread_s: float
    steady_state_mean_period_s: float
    diverged: bool


def npdr(phases: np.ndarray, periods: np.ndarray) -> float:
    """Normalized phase difference range: max pairwise spread over mean period."""
    phases = np.asarray(phases, dtype=float)
    periods = np.asarray(periods, dtype=float)
    if phases.size < 2:
        raise ValueError("NPDR needs at least two nodes")
    return float((phases.max() - phases.min()) / periods.mean())


def period_spread(periods: np.ndarray) -> tuple[float, float, float]:
    """(mean, max-min, population std) of the instantaneous periods."""
    periods = np.asarray(periods, dtype=float)
    if periods.size < 1:
        raise ValueError("period_spread needs at least one node")
    return float(periods.mean()), float(periods.max() - periods.min()), float(periods.std())


def summarize(trace: Trace) -> TraceSummary:
    """Scalar reduction of a trace: the steady-state window is its last 10%."""
    if trace.n_slots == 0:
        raise ValueError("cannot summarize an empty trace")
    series = trace.npdr_series()
    tail = max(1, trace.n_slots // 10)
    spreads = trace.periods.max(axis=1) - trace.periods.min(axis=1)
    finite = np.isfinite(series).all()
    return TraceSummary(
        final_npdr=float(series[-1]),
        steady_state_npdr=float(series[-tail:].mean()),
        max_period_spread_s=float(spreads.max()),
        final_period_spread_s=float(spreads[-1]),
        steady_state_mean_period_s=float(trace.periods[-tail:].mean()),
        diverged=bool(trace.aborted_at_slot >= 0 or not finite or series.max() > DIVERGENCE_NPDR),
    )


class TraceRecorder:
    """Accumulates per-slot rows while a simulation runs."""

    def __init__(self, n_slots: int, n_nodes: int):
        self.slots = np.arange(n_slots, dtype=int)
        self.phases = np.zeros((n_slots, n_nodes))
        self.periods = np.zeros((n_slots, n_nodes))
        self.period_corrections = np.zeros((n_slots, n_nodes))
        self.phase_corrections = np.zeros((n_slots, n_nodes))
        self._filled = 0

    def record(self, k: int, phases, periods, period_corrs, phase_corrs) -> None:
        self.phases[k] = phases
        self.periods[k] = periods
        self.period_corrections[k] = period_corrs
        self.phase_corrections[k] = phase_corrs
        self._filled = k + 1

    def finish(self, aborted_at_slot: int = -1) -> Trace:
        n = self._filled
        return Trace(
            slots=self.slots[:n],
            phases=self.phases[:n],
            periods=self.periods[:n],
            period_corrections=self.period_corrections[:n],
            phase_corrections=self.phase_corrections[:n],
            aborted_at_slot=aborted_at_slot,
        )
