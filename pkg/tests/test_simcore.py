import pytest

from tdmasync.simcore import (
    ClockState,
    InvalidChannelError,
    InvalidNetworkError,
    LoopDivergenceError,
    SlotRegime,
    advance_clock,
    regime_of,
    slot_transmitter,
    timestamp,
)


def test_slot_transmitter_examples():
    assert slot_transmitter(0, 16) == 1
    assert slot_transmitter(15, 16) == 16
    assert slot_transmitter(16, 16) == 1


def test_slot_transmitter_rejects_tiny_network():
    with pytest.raises(InvalidNetworkError):
        slot_transmitter(0, 1)


def test_regime_examples():
    assert regime_of(30, 16) is SlotRegime.COLLECT_ONLY
    assert regime_of(31, 16) is SlotRegime.PERIOD_UPDATE_FIRST
    assert regime_of(47, 16) is SlotRegime.PHASE_UPDATE


def test_regime_boundaries():
    n = 16
    assert regime_of(2 * n - 2, n) is SlotRegime.COLLECT_ONLY
    assert regime_of(2 * n, n) is SlotRegime.PERIOD_UPDATE_HELD
    assert regime_of(3 * n - 2, n) is SlotRegime.PERIOD_UPDATE_HELD
    assert regime_of(3 * n, n) is SlotRegime.COLLECT_ONLY


@pytest.mark.parametrize("n", [2, 3, 5, 16, 33])
@pytest.mark.parametrize("start", [0, 7, 1234])
def test_regime_partition_over_any_window(n, start):
    counts = {regime: 0 for regime in SlotRegime}
    for k in range(start, start + 3 * n):
        counts[regime_of(k, n)] += 1
    assert counts[SlotRegime.COLLECT_ONLY] == 2 * n - 1
    assert counts[SlotRegime.PERIOD_UPDATE_FIRST] == 1
    assert counts[SlotRegime.PERIOD_UPDATE_HELD] == n - 1
    assert counts[SlotRegime.PHASE_UPDATE] == 1


@pytest.mark.parametrize("n", [2, 16])
def test_exactly_one_transmitter_per_slot(n):
    for k in range(5 * n):
        txs = [i for i in range(1, n + 1) if slot_transmitter(k, n) == i]
        assert len(txs) == 1


def test_advance_clock_free_running():
    state = ClockState.at_startup(0.0, 5e-3)
    state = advance_clock(state, 0.0, 0.0, 16)
    assert state.phase == 5e-3
    assert state.period == 5e-3


def test_advance_clock_period_correction():
    state = ClockState.at_startup(0.0, 5e-3)
    state = advance_clock(state, 1.6e-6, 0.0, 16)
    assert state.phase == 5e-3
    assert state.period == pytest.approx(5.0001e-3, abs=1e-18)


def test_advance_clock_phase_correction_uses_pre_update_period():
    state = ClockState.at_startup(1e-3, 5e-3)
    state = advance_clock(state, 0.0, -2e-4, 16)
    assert state.phase == pytest.approx(5.8e-3, abs=1e-18)
    assert state.period == 5e-3


def test_advance_clock_divergence():
    state = ClockState.at_startup(0.0, 5e-3)
    with pytest.raises(LoopDivergenceError):
        advance_clock(state, -16 * 6e-3, 0.0, 16, slot=7)


def test_free_running_accumulation():
    period = 1.0 / 199.987
    state = ClockState.at_startup(0.123, period)
    slots = 5000
    for _ in range(slots):
        state = advance_clock(state, 0.0, 0.0, 16)
    assert abs(state.phase - state.initial_phase - slots * period) <= 1e-12 * slots * period


def test_timestamp_examples():
    assert timestamp(5e-3, 1e-5) == pytest.approx(5.01e-3, abs=1e-18)
    assert timestamp(0.0, 0.0) == 0.0
    assert timestamp(7.2e-3, 2.4e-5) == pytest.approx(7.224e-3, abs=1e-18)


def test_timestamp_rejects_negative_delay():
    with pytest.raises(InvalidChannelError):
        timestamp(1.0, -1e-9)
