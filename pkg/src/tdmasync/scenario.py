"""Reproducible generation and persistence of complete experiment worlds.

A scenario is fully determined by ``(seed, config)``.  Randomness is drawn
from named Philox substreams so adding draws in one stage never perturbs
another stage.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .channel import (
    ColocatedNodesError,
    LinkTable,
    NodePlacement,
    RadioConfig,
    build_link_table,
    connectivity_fraction,
)

SCHEMA_VERSION = 1


class ScenarioFormatError(ValueError):
    """Raised when a persisted scenario file cannot be parsed or validated."""


def substream(seed: int, *labels: str) -> np.random.Generator:
    """Counter-based generator for the named substream of a master seed."""
    tags = [zlib.crc32(label.encode("utf-8")) for label in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *tags])))


@dataclass
class GenerationConfig:
    """Everything besides the seed that shapes a generated scenario."""

    n_nodes: int = 16
    f_nom_hz: float = 200.0
    clock_ppm: float = 150.0
    radio: RadioConfig = field(default_factory=RadioConfig)
    placement_retries: int = 100

    @property
    def nominal_period_s(self) -> float:
        return 1.0 / self.f_nom_hz

    def validate(self) -> None:
        if self.n_nodes < 2:
            raise ValueError(f"need at least 2 nodes, got {self.n_nodes}")
        if self.radio.side_length_m <= 0.0:
            raise ValueError("deployment side length must be positive")
        if self.clock_ppm < 0.0:
            raise ValueError("clock accuracy in ppm cannot be negative")
        if self.f_nom_hz <= 0.0:
            raise ValueError("nominal frequency must be positive")


@dataclass
class Scenario:
    """A complete reproducible world: geometry, links, and initial clocks."""

    seed: int
    config: GenerationConfig
    placements: list[NodePlacement]
    link_table: LinkTable
    initial_periods_s: np.ndarray
    initial_phases_s: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.config.n_nodes


def generate_scenario(seed: int, config: GenerationConfig | None = None) -> Scenario:
    """Draw placements, clock frequencies, and initial phases for one world."""
    config = config or GenerationConfig()
    config.validate()
    n = config.n_nodes
    side = config.radio.side_length_m

    rng_place = substream(seed, "placement")
    link_table = None
    placements: list[NodePlacement] = []
    for _ in range(max(1, config.placement_retries)):
        coords = rng_place.uniform(0.0, side, size=(n, 2))
        placements = [NodePlacement(float(x), float(y)) for x, y in coords]
        try:
            link_table = build_link_table(placements, config.radio)
            break
        except ColocatedNodesError:
            continue
    if link_table is None:
        raise ColocatedNodesError("could not place nodes without collisions within the retry budget")

    spread = config.clock_ppm * 1e-6
    freqs = substream(seed, "clock-freq").uniform(
        config.f_nom_hz * (1.0 - spread), config.f_nom_hz * (1.0 + spread), size=n
    )
    periods = 1.0 / freqs
    phases = substream(seed, "clock-phase").uniform(0.0, 1.0, size=n) * periods

    return Scenario(
        seed=seed,
        config=config,
        placements=placements,
        link_table=link_table,
        initial_periods_s=periods,
        initial_phases_s=phases,
    )


def accept_scenario(scenario: Scenario, target: float = 0.30, tol: float = 0.05) -> bool:
    """True when the link density matches the target and the graph is connected."""
    frac = connectivity_fraction(scenario.link_table)
    return abs(frac - target) <= tol and scenario.link_table.is_connected()


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "seed": scenario.seed,
        "config": {
            "n_nodes": scenario.config.n_nodes,
            "f_nom_hz": scenario.config.f_nom_hz,
            "clock_ppm": scenario.config.clock_ppm,
            "placement_retries": scenario.config.placement_retries,
            "radio": asdict(scenario.config.radio),
        },
        "placements_m": [[p.x, p.y] for p in scenario.placements],
        "initial_period_s": scenario.initial_periods_s.tolist(),
        "initial_phase_s": scenario.initial_phases_s.tolist(),
        "link_power_dbm": scenario.link_table.power_dbm.tolist(),
        "link_delay_s": scenario.link_table.delay_s.tolist(),
        "p_th_dbm": scenario.link_table.p_th_dbm,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: not valid JSON (line {exc.lineno}, col {exc.colno})") from exc

    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioFormatError(f"{path}: unsupported schema version {version!r}")
    try:
        cfg_doc = doc["config"]
        config = GenerationConfig(
            n_nodes=cfg_doc["n_nodes"],
            f_nom_hz=cfg_doc["f_nom_hz"],
            clock_ppm=cfg_doc["clock_ppm"],
            placement_retries=cfg_doc.get("placement_retries", 100),
            radio=RadioConfig(**cfg_doc["radio"]),
        )
        config.validate()
        placements = [NodePlacement(x, y) for x, y in doc["placements_m"]]
        power = np.asarray(doc["link_power_dbm"], dtype=float)
        delay = np.asarray(doc["link_delay_s"], dtype=float)
        table = LinkTable(
            power_dbm=power,
            delay_s=delay,
            above_threshold=power > doc["p_th_dbm"],
            p_th_dbm=doc["p_th_dbm"],
        )
        np.fill_diagonal(table.above_threshold, False)
        scenario = Scenario(
            seed=doc["seed"],
            config=config,
            placements=placements,
            link_table=table,
            initial_periods_s=np.asarray(doc["initial_period_s"], dtype=float),
            initial_phases_s=np.asarray(doc["initial_phase_s"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioFormatError(f"{path}: {exc}") from exc
    n = config.n_nodes
    if not (
        len(placements) == n
        and scenario.initial_periods_s.shape == (n,)
        and scenario.initial_phases_s.shape == (n,)
        and power.shape == (n, n)
        and delay.shape == (n, n)
    ):
        raise ScenarioFormatError(f"{path}: field shapes disagree with n_nodes={n}")
    return scenario
