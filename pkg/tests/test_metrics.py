import numpy as np
import pytest

from tdmasync.metrics import Trace, npdr, period_spread, summarize


def make_trace(phases, periods):
    phases = np.asarray(phases, dtype=float)
    periods = np.asarray(periods, dtype=float)
    zeros = np.zeros_like(phases)
    return Trace(
        slots=np.arange(phases.shape[0]),
        phases=phases,
        periods=periods,
        period_corrections=zeros.copy(),
        phase_corrections=zeros.copy(),
    )


def test_npdr_examples():
    assert npdr([1e-3, 1e-3, 1e-3], [5e-3, 5e-3, 5e-3]) == 0.0
    assert npdr([0.0, 1e-3, 2.5e-3], [5e-3, 5e-3, 5e-3]) == pytest.approx(0.5, rel=1e-12)
    assert npdr([0.0, 5e-3], [5e-3, 5e-3]) == pytest.approx(1.0, rel=1e-12)


def test_npdr_needs_two_nodes():
    with pytest.raises(ValueError):
        npdr([1.0], [5e-3])


def test_npdr_shift_invariance_and_period_scaling():
    rng = np.random.default_rng(0)
    for _ in range(50):
        phases = rng.uniform(0, 1e-2, size=8)
        periods = rng.uniform(4e-3, 6e-3, size=8)
        base = npdr(phases, periods)
        assert base >= 0.0
        assert npdr(phases + 0.123, periods) == pytest.approx(base, rel=1e-12)
        assert npdr(phases, 3.0 * periods) == pytest.approx(base / 3.0, rel=1e-12)


def test_period_spread_examples():
    assert period_spread([5e-3, 5e-3, 5e-3]) == (5e-3, 0.0, 0.0)
    mean, spread, std = period_spread([4e-3, 6e-3])
    assert mean == pytest.approx(5e-3, rel=1e-12)
    assert spread == pytest.approx(2e-3, rel=1e-12)
    assert std == pytest.approx(1e-3, rel=1e-12)  # population std


def test_summarize_constant_trace():
    trace = make_trace(np.tile([0.0, 1e-3], (40, 1)), np.full((40, 2), 5e-3))
    summary = summarize(trace)
    assert summary.steady_state_npdr == pytest.approx(summary.final_npdr, rel=1e-12)
    assert summary.final_npdr == pytest.approx(0.2, rel=1e-12)
    assert summary.max_period_spread_s == 0.0
    assert summary.steady_state_mean_period_s == pytest.approx(5e-3, rel=1e-12)
    assert not summary.diverged


def test_summarize_flags_divergence():
    phases = np.zeros((30, 2))
    phases[:, 1] = np.linspace(0.0, 1.0, 30)  # spread grows to 200 periods
    trace = make_trace(phases, np.full((30, 2), 5e-3))
    assert summarize(trace).diverged


def test_summarize_flags_aborted_trace():
    trace = make_trace(np.zeros((10, 2)), np.full((10, 2), 5e-3))
    trace.aborted_at_slot = 9
    assert summarize(trace).diverged


def test_summarize_empty_trace():
    trace = make_trace(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        summarize(trace)


def test_summarize_flags_non_finite():
    phases = np.zeros((20, 2))
    phases[15:, 1] = np.inf  # overflowing clock
    trace = make_trace(phases, np.full((20, 2), 5e-3))
    assert summarize(trace).diverged
