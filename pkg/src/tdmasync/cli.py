"""Command-line entry point.

Subcommands mirror the experiment pipeline: ``generate`` searches for
accepted scenarios, ``train`` fits the per-node networks, ``evaluate`` runs
the head-to-head comparison, ``montecarlo`` sweeps many scenarios, and
``plotdata`` turns a run directory into figure CSVs plus rendered PNGs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .harness import (
    ALGORITHMS,
    ExperimentConfig,
    baseline_experiment_config,
    emit_plot_data,
    find_accepted_scenario,
    load_trace_csv,
    run_monte_carlo,
    run_single,
)
from .scenario import load_scenario, save_scenario
from .trainer import train_all
from .weightnet import save_models

log = logging.getLogger("tdmasync")


def load_config_file(path: str) -> ExperimentConfig:
    doc = json.loads(Path(path).read_text())
    config = baseline_experiment_config()
    gen = doc.get("generation", {})
    radio = gen.pop("radio", {})
    for key, value in gen.items():
        setattr(config.generation, key, value)
    for key, value in radio.items():
        setattr(config.generation.radio, key, value)
    for key, value in doc.get("training", {}).items():
        setattr(config.training, key, value)
    for key, value in doc.get("gains", {}).items():
        setattr(config.gains, key, value)
    for key in ("test_frames", "connectivity_target", "connectivity_tol",
                "scenario_retry_budget", "workers", "write_traces"):
        if key in doc:
            setattr(config, key, doc[key])
    if "algorithms" in doc:
        config.algorithms = tuple(doc["algorithms"])
    return config


def add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with ExperimentConfig fields")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--out", default="runs/out", help="output directory")
    parser.add_argument("--nodes", type=int, help="network size N")
    parser.add_argument("--test-frames", type=int, help="TDMA frames in the evaluation phase")
    parser.add_argument("--train-frames", type=int, help="TDMA frames in the acquisition phase")
    parser.add_argument("--eps-t", type=float, help="period loop gain")
    parser.add_argument("--eps-phi", type=float, help="phase loop gain")
    parser.add_argument("--eps-0", type=float, help="classic loop gain")
    parser.add_argument("--learning-rate", type=float, help="SGD step size")
    parser.add_argument("--gain-offset-db", type=float, help="path-loss calibration offset")
    parser.add_argument("--connectivity-target", type=float, help="accepted link fraction")
    parser.add_argument("--connectivity-tol", type=float, help="accepted link fraction tolerance")
    parser.add_argument("--retry-budget", type=int, help="scenario acceptance retries")
    parser.add_argument("--workers", type=int, help="parallel workers (or env TDMASYNC_WORKERS)")
    parser.add_argument(
        "--algorithms", help=f"comma-separated subset of {','.join(ALGORITHMS)}"
    )


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config_file(args.config) if args.config else baseline_experiment_config()
    if args.nodes is not None:
        config.generation.n_nodes = args.nodes
    if args.test_frames is not None:
        config.test_frames = args.test_frames
    if args.train_frames is not None:
        config.training.train_frames = args.train_frames
    if args.eps_t is not None:
        config.training.eps_t = args.eps_t
        config.gains.eps_t = args.eps_t
    if args.eps_phi is not None:
        config.training.eps_phi = args.eps_phi
        config.gains.eps_phi = args.eps_phi
    if args.eps_0 is not None:
        config.gains.eps_0 = args.eps_0
    if args.learning_rate is not None:
        config.training.learning_rate = args.learning_rate
    if args.gain_offset_db is not None:
        config.generation.radio.gain_offset_db = args.gain_offset_db
    if args.connectivity_target is not None:
        config.connectivity_target = args.connectivity_target
    if args.connectivity_tol is not None:
        config.connectivity_tol = args.connectivity_tol
    if args.retry_budget is not None:
        config.scenario_retry_budget = args.retry_budget
    if args.workers is not None:
        config.workers = args.workers
    if args.algorithms:
        config.algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    config.validate()
    return config


def cmd_generate(args: argparse.Namespace) -> int:
    config = build_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    for i in range(args.count):
        try:
            scenario, attempts = find_accepted_scenario(config, args.seed + i)
        except Exception as exc:
            log.error("scenario %d: %s", i, exc)
            failures += 1
            continue
        path = out / f"scenario_{i:04d}.json"
        save_scenario(scenario, path)
        print(f"{path}  (sub-seed {scenario.seed}, accepted after {attempts} attempts)")
    return 1 if failures else 0


def cmd_train(args: argparse.Namespace) -> int:
    config = build_config(args)
    try:
        scenario = load_scenario(args.scenario)
    except Exception as exc:
        log.error("cannot load scenario: %s", exc)
        return 1
    result = train_all(scenario, config.training, args.seed, workers=config.effective_workers())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "models.json"
    save_models(path, result.models, meta={"seed": args.seed, "scenario_seed": scenario.seed})
    for r in result.node_results:
        status = "skipped" if r.skipped else ("failed: " + r.error if r.error else "ok")
        print(f"node {r.node_index + 1}: {status}")
    print(path)
    return 1 if result.failures else 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = build_config(args)
    try:
        result = run_single(config, args.seed, out_dir=args.out)
    except Exception as exc:
        log.error("evaluate failed: %s", exc)
        return 1
    for name, summary in result.summaries.items():
        print(
            f"{name}: steady-state NPDR {summary.steady_state_npdr:.6g}"
            + (" (diverged)" if summary.diverged else "")
        )
    print(f"outputs in {args.out}")
    return 0


def cmd_montecarlo(args: argparse.Namespace) -> int:
    config = build_config(args)
    agg = run_monte_carlo(config, args.scenarios, args.out, master_seed=args.seed)
    stats = agg.stats()
    print(json.dumps(stats, indent=1, sort_keys=True))
    print(f"outputs in {args.out}")
    return 1 if agg.failures else 0


def cmd_plotdata(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    traces = {}
    for name in ALGORITHMS:
        path = run_dir / f"trace_{name}.csv"
        if path.exists():
            traces[name] = load_trace_csv(path)
    if not traces and not (run_dir / "hist_npdr.csv").exists():
        log.error("no trace CSVs or histograms found in %s", run_dir)
        return 1
    out = Path(args.out) if args.out else run_dir
    written = emit_plot_data(traces, out) if traces else []
    for path in written:
        print(path)
    if not args.no_figures:
        from .figures import render_figures

        for src in ("hist_npdr.csv", "hist_T.csv"):
            if (run_dir / src).exists() and out != run_dir:
                (out / src).write_text((run_dir / src).read_text())
        for path in render_figures(out):
            print(path)
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="tdmasync", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate and filter scenarios")
    add_common_flags(p)
    p.add_argument("--count", type=int, default=1, help="number of accepted scenarios to produce")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train per-node networks on a stored scenario")
    add_common_flags(p)
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="train and compare algorithms on one scenario")
    add_common_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("montecarlo", help="sweep many scenarios and aggregate")
    add_common_flags(p)
    p.add_argument("--scenarios", type=int, default=30, help="number of scenarios")
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("plotdata", help="emit figure CSVs (and PNGs) from a run directory")
    p.add_argument("run_dir", help="directory produced by evaluate/montecarlo")
    p.add_argument("--out", help="destination directory (default: run_dir)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.set_defaults(func=cmd_plotdata)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
