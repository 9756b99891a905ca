"""Experiment runner: scenario search, training, head-to-head evaluation,
Monte Carlo sweeps, and plot-data emission.

Every output file is a pure function of (config, seed): floats are written
with ``repr`` so reruns are byte-identical.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .essbs import LoopGains, run_classic_no_period, run_essbs
from .metrics import Trace, TraceSummary, summarize
from .pfdsa import run_pfdsa
from .scenario import (
    GenerationConfig,
    Scenario,
    accept_scenario,
    generate_scenario,
    save_scenario,
    substream,
)
from .simcore import LoopDivergenceError
from .trainer import TrainAllResult, TrainingConfig, train_all
from .weightnet import WeightNetParams, save_models

log = logging.getLogger(__name__)

ALGORITHMS = ("pfdsa", "essbs", "classic_no_period")
WORKERS_ENV_VAR = "TDMASYNC_WORKERS"

# Two-ray calibration for the baseline deployment: pulls the threshold
# distance down so a 10 km square typically lands near 30% link density.
BASELINE_GAIN_OFFSET_DB = -11.5


class ScenarioSearchExhaustedError(RuntimeError):
    """No generated scenario met the acceptance filter within its budget."""


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass
class ExperimentConfig:
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    gains: LoopGains = field(default_factory=LoopGains)
    test_frames: int = 751
    algorithms: tuple[str, ...] = ("pfdsa", "essbs")
    connectivity_target: float = 0.30
    connectivity_tol: float = 0.05
    scenario_retry_budget: int = 200
    workers: int = 0  # 0: take TDMASYNC_WORKERS, else 1
    write_traces: bool = True

    def validate(self) -> None:
        if not self.algorithms:
            raise ValueError("select at least one algorithm")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)} (choose from {ALGORITHMS})")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ValueError("algorithm list contains duplicates")
        if self.test_frames < 1:
            raise ValueError("test_frames must be positive")
        if self.scenario_retry_budget < 1:
            raise ValueError("scenario retry budget must be positive")

    def effective_workers(self) -> int:
        return self.workers if self.workers >= 1 else default_workers()


def baseline_experiment_config() -> ExperimentConfig:
    """Defaults for the 16-node, 10 km, 30%-connectivity deployment."""
    generation = GenerationConfig()
    generation.radio.gain_offset_db = BASELINE_GAIN_OFFSET_DB
    return ExperimentConfig(generation=generation)


def derive_subseed(master_seed: int, *labels: str) -> int:
    return int(substream(master_seed, *labels).integers(0, 2**63))


def find_accepted_scenario(config: ExperimentConfig, master_seed: int) -> tuple[Scenario, int]:
    """Deterministically retry sub-seeds of the master until one scenario
    passes the connectivity filter; returns (scenario, attempts used)."""
    for attempt in range(config.scenario_retry_budget):
        sub_seed = derive_subseed(master_seed, "scenario-attempt", str(attempt))
        scenario = generate_scenario(sub_seed, config.generation)
        if accept_scenario(scenario, config.connectivity_target, config.connectivity_tol):
            return scenario, attempt + 1
    raise ScenarioSearchExhaustedError(
        f"no accepted scenario within {config.scenario_retry_budget} attempts of master seed {master_seed}"
    )


def evaluate_algorithm(
    scenario: Scenario,
    algorithm: str,
    test_frames: int,
    gains: LoopGains,
    models: dict[int, dict[str, WeightNetParams]] | None = None,
) -> Trace:
    """Run one algorithm; a loop divergence yields the flagged partial trace."""
    try:
        if algorithm == "pfdsa":
            if models is None:
                raise ValueError("pfdsa evaluation needs trained or initial models")
            return run_pfdsa(scenario, models, test_frames, eps_t=gains.eps_t, eps_phi=gains.eps_phi)
        if algorithm == "essbs":
            return run_essbs(scenario, test_frames, gains)
        if algorithm == "classic_no_period":
            return run_classic_no_period(scenario, test_frames, gains)
    except LoopDivergenceError as exc:
        log.info("%s diverged at slot %d; keeping partial trace", algorithm, exc.slot)
        if exc.trace is None:
            raise
        return exc.trace
    raise ValueError(f"unknown algorithm {algorithm!r}")


@dataclass
class RunResult:
    seed: int
    scenario: Scenario
    attempts: int
    traces: dict[str, Trace]
    summaries: dict[str, TraceSummary]
    train_result: TrainAllResult | None
    output_files: list[Path] = field(default_factory=list)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_trace_csv(path: Path, trace: Trace) -> None:
    n = trace.n_nodes
    cols = (
        ["slot", "npdr"]
        + [f"phase_s_{i+1}" for i in range(n)]
        + [f"period_s_{i+1}" for i in range(n)]
        + [f"period_corr_s_{i+1}" for i in range(n)]
        + [f"phase_corr_s_{i+1}" for i in range(n)]
    )
    series = trace.npdr_series()
    lines = [",".join(cols)]
    for r in range(trace.n_slots):
        row = [str(int(trace.slots[r])), _fmt(series[r])]
        row += [_fmt(v) for v in trace.phases[r]]
        row += [_fmt(v) for v in trace.periods[r]]
        row += [_fmt(v) for v in trace.period_corrections[r]]
        row += [_fmt(v) for v in trace.phase_corrections[r]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def load_trace_csv(path: Path) -> Trace:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    n = (len(header) - 2) // 4
    return Trace(
        slots=data[:, 0].astype(int),
        phases=data[:, 2 : 2 + n],
        periods=data[:, 2 + n : 2 + 2 * n],
        period_corrections=data[:, 2 + 2 * n : 2 + 3 * n],
        phase_corrections=data[:, 2 + 3 * n : 2 + 4 * n],
    )


def summary_dict(summary: TraceSummary) -> dict:
    return {
        "final_npdr": summary.final_npdr,
        "steady_state_npdr": summary.steady_state_npdr,
        "max_period_spread_s": summary.max_period_spread_s,
        "final_period_spread_s": summary.final_period_spread_s,
        "steady_state_mean_period_s": summary.steady_state_mean_period_s,
        "diverged": summary.diverged,
    }


def run_single(config: ExperimentConfig, seed: int, out_dir: str | Path | None = None) -> RunResult:
    """Full pipeline on one accepted scenario: train, evaluate, persist."""
    config.validate()
    scenario, attempts = find_accepted_scenario(config, seed)

    train_result = None
    models = None
    if "pfdsa" in config.algorithms:
        train_result = train_all(scenario, config.training, seed, workers=config.effective_workers())
        models = train_result.models

    traces: dict[str, Trace] = {}
    summaries: dict[str, TraceSummary] = {}
    for algorithm in config.algorithms:
        trace = evaluate_algorithm(scenario, algorithm, config.test_frames, config.gains, models)
        traces[algorithm] = trace
        summaries[algorithm] = summarize(trace)

    result = RunResult(seed, scenario, attempts, traces, summaries, train_result)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_scenario(scenario, out / "scenario.json")
        result.output_files.append(out / "scenario.json")
        if models is not None:
            save_models(out / "models.json", models, meta={"seed": seed, "scenario_seed": scenario.seed})
            result.output_files.append(out / "models.json")
        if config.write_traces:
            for algorithm, trace in traces.items():
                path = out / f"trace_{algorithm}.csv"
                write_trace_csv(path, trace)
                result.output_files.append(path)
        doc = {
            "seed": seed,
            "scenario_seed": scenario.seed,
            "scenario_attempts": attempts,
            "algorithms": {name: summary_dict(s) for name, s in summaries.items()},
            "training_skipped_nodes": (
                sorted(r.node_index + 1 for r in train_result.node_results if r.skipped) if train_result else []
            ),
        }
        path = out / "summary.json"
        path.write_text(json.dumps(doc, indent=1, sort_keys=True))
        result.output_files.append(path)
    return result


# ----------------------------------------------------------------------
# Monte Carlo sweep
# ----------------------------------------------------------------------

@dataclass
class MonteCarloAggregate:
    num_requested: int
    seeds: list[int]
    failures: dict[int, str]
    steady_state_npdr: dict[str, list[float]]
    steady_state_mean_period_s: dict[str, list[float]]

    def stats(self) -> dict:
        out: dict = {"num_requested": self.num_requested, "num_succeeded": len(self.seeds) - len(self.failures)}
        for name, values in self.steady_state_npdr.items():
            if values:
                arr = np.asarray(values)
                out[name] = {
                    "mean_npdr": float(arr.mean()),
                    "std_npdr": float(arr.std()),
                    "mean_period_s": float(np.mean(self.steady_state_mean_period_s[name])),
                    "std_period_s": float(np.std(self.steady_state_mean_period_s[name])),
                    "count": len(values),
                }
        npdr_means = {n: out[n]["mean_npdr"] for n in self.steady_state_npdr if n in out}
        if "pfdsa" in npdr_means and "essbs" in npdr_means and npdr_means["pfdsa"] > 0:
            out["npdr_mean_ratio_essbs_over_pfdsa"] = npdr_means["essbs"] / npdr_means["pfdsa"]
            std_p = out["pfdsa"]["std_npdr"]
            if std_p > 0:
                out["npdr_std_ratio_essbs_over_pfdsa"] = out["essbs"]["std_npdr"] / std_p
        return out


def _mc_one(args) -> tuple[int, dict[str, TraceSummary] | None, str | None]:
    config, seed, scenario_dir = args
    try:
        result = run_single(config, seed, out_dir=scenario_dir)
        return seed, result.summaries, None
    except Exception as exc:  # partial failures recorded, sweep continues
        return seed, None, f"{type(exc).__name__}: {exc}"


def run_monte_carlo(
    config: ExperimentConfig,
    num_scenarios: int,
    out_dir: str | Path,
    master_seed: int = 0,
    seeds: list[int] | None = None,
) -> MonteCarloAggregate:
    """Independent single runs over derived (or given) seeds plus histogram
    aggregation."""
    config.validate()
    if seeds is None:
        if num_scenarios < 1:
            raise ValueError("need at least one scenario")
        seeds = [derive_subseed(master_seed, "monte-carlo", str(i)) for i in range(num_scenarios)]
    else:
        if len(set(seeds)) != len(seeds):
            raise ValueError("seed list contains duplicates")
        num_scenarios = len(seeds)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    per_scenario_cfg = ExperimentConfig(**{**asdict_config(config), "write_traces": False, "workers": 1})
    tasks = [(per_scenario_cfg, seed, out / f"scenario_{i:04d}") for i, seed in enumerate(seeds)]
    workers = config.effective_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_mc_one, tasks))
    else:
        outcomes = [_mc_one(t) for t in tasks]

    agg = MonteCarloAggregate(
        num_requested=num_scenarios,
        seeds=seeds,
        failures={},
        steady_state_npdr={name: [] for name in config.algorithms},
        steady_state_mean_period_s={name: [] for name in config.algorithms},
    )
    for seed, summaries, error in outcomes:
        if error is not None:
            agg.failures[seed] = error
            continue
        for name, summary in summaries.items():
            agg.steady_state_npdr[name].append(summary.steady_state_npdr)
            agg.steady_state_mean_period_s[name].append(summary.steady_state_mean_period_s)

    write_histogram_csv(out / "hist_npdr.csv", agg.steady_state_npdr)
    write_histogram_csv(out / "hist_T.csv", agg.steady_state_mean_period_s)
    (out / "montecarlo.json").write_text(
        json.dumps({"stats": agg.stats(), "failures": {str(k): v for k, v in agg.failures.items()}},
                   indent=1, sort_keys=True)
    )
    return agg


def asdict_config(config: ExperimentConfig) -> dict:
    return {
        "generation": config.generation,
        "training": config.training,
        "gains": config.gains,
        "test_frames": config.test_frames,
        "algorithms": config.algorithms,
        "connectivity_target": config.connectivity_target,
        "connectivity_tol": config.connectivity_tol,
        "scenario_retry_budget": config.scenario_retry_budget,
        "workers": config.workers,
        "write_traces": config.write_traces,
    }


def histogram_rows(values: list[float], bins: int = 20) -> list[tuple[float, float, int]]:
    if not values:
        return []
    counts, edges = np.histogram(np.asarray(values), bins=bins)
    return [(float(edges[b]), float(edges[b + 1]), int(counts[b])) for b in range(len(counts))]


def write_histogram_csv(path: Path, values_by_algorithm: dict[str, list[float]], bins: int = 20) -> None:
    lines = ["algorithm,bin_left,bin_right,count"]
    for name in sorted(values_by_algorithm):
        for left, right, count in histogram_rows(values_by_algorithm[name], bins):
            lines.append(f"{name},{_fmt(left)},{_fmt(right)},{count}")
    path.write_text("\n".join(lines) + "\n")


# ----------------------------------------------------------------------
# figure-analog plot data
# ----------------------------------------------------------------------

def emit_plot_data(traces: dict[str, Trace], out_dir: str | Path) -> list[Path]:
    """One CSV per figure analog supported by the traces at hand."""
    if not traces:
        raise ValueError("no traces to emit plot data from")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def offsets_csv(trace: Trace, path: Path) -> None:
        n = trace.n_nodes
        offs = trace.phases - trace.phases.mean(axis=1, keepdims=True)
        lines = ["slot," + ",".join(f"phase_offset_s_{i+1}" for i in range(n))]
        for r in range(trace.n_slots):
            lines.append(str(int(trace.slots[r])) + "," + ",".join(_fmt(v) for v in offs[r]))
        path.write_text("\n".join(lines) + "\n")

    def periods_csv(trace: Trace, path: Path) -> None:
        n = trace.n_nodes
        lines = ["slot," + ",".join(f"period_s_{i+1}" for i in range(n))]
        for r in range(trace.n_slots):
            lines.append(str(int(trace.slots[r])) + "," + ",".join(_fmt(v) for v in trace.periods[r]))
        path.write_text("\n".join(lines) + "\n")

    def npdr_csv(trace: Trace, path: Path) -> None:
        series = trace.npdr_series()
        lines = ["slot,npdr"] + [
            f"{int(trace.slots[r])},{_fmt(series[r])}" for r in range(trace.n_slots)
        ]
        path.write_text("\n".join(lines) + "\n")

    if "classic_no_period" in traces:
        path = out / "fig2.csv"
        offsets_csv(traces["classic_no_period"], path)
        written.append(path)
    if "essbs" in traces:
        periods_csv(traces["essbs"], out / "fig4a.csv")
        npdr_csv(traces["essbs"], out / "fig4b.csv")
        written += [out / "fig4a.csv", out / "fig4b.csv"]
    if "pfdsa" in traces:
        periods_csv(traces["pfdsa"], out / "fig5.csv")
        offsets_csv(traces["pfdsa"], out / "fig6.csv")
        written += [out / "fig5.csv", out / "fig6.csv"]
    if "pfdsa" in traces and "essbs" in traces:
        a, b = traces["pfdsa"], traces["essbs"]
        rows = max(a.n_slots, b.n_slots)
        series_a, series_b = a.npdr_series(), b.npdr_series()
        lines = ["slot,npdr_pfdsa,npdr_essbs"]
        for r in range(rows):
            va = _fmt(series_a[r]) if r < a.n_slots else ""
            vb = _fmt(series_b[r]) if r < b.n_slots else ""
            lines.append(f"{r},{va},{vb}")
        (out / "fig7.csv").write_text("\n".join(lines) + "\n")
        written.append(out / "fig7.csv")
    return written
