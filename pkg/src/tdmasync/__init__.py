"""Distributed clock phase and frequency synchronization for half-duplex
TDMA wireless networks: deterministic simulator, analytic baselines, the
learned-weight loops with their local unsupervised trainer, and a Monte
Carlo evaluation harness."""

from .channel import (
    LinkTable,
    NodePlacement,
    RadioConfig,
    build_link_table,
    connectivity_fraction,
    propagation_delay,
    received_power_dbm,
)
from .essbs import LoopGains, classic_weights, run_classic_no_period, run_essbs
from .harness import (
    ExperimentConfig,
    baseline_experiment_config,
    emit_plot_data,
    run_monte_carlo,
    run_single,
)
from .metrics import Trace, TraceSummary, npdr, period_spread, summarize
from .pfdsa import SyncStore, pfdsa_ingest, period_correction, phase_correction, run_pfdsa
from .scenario import (
    GenerationConfig,
    Scenario,
    accept_scenario,
    generate_scenario,
    load_scenario,
    save_scenario,
)
from .simcore import ClockState, SlotRegime, advance_clock, regime_of, slot_transmitter, timestamp
from .tape import ComputationTape
from .trainer import TrainingConfig, acquire, replay_losses, train_all, train_node
from .weightnet import WeightNetParams, net_forward, net_init, sgd_step

__version__ = "0.1.0"
