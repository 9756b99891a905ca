"""Data acquisition and the staggered, unsupervised, per-node training loop.

Each node records every timestamp and power it receives while running the
learned-weight loops with its initial parameters.  Training then replays the
recorded trajectory: the node's own clock is re-simulated under the current
parameters while the recorded stamps act as environment constants, the two
losses are accumulated along the way, and gradients flow back through the
unrolled recursion on the tape.  Within each outer cycle the period network
is updated for the first block of passes and the phase network for the
second, one gradient step per full-trajectory pass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from .pfdsa import make_nodes, pfdsa_step
from .scenario import Scenario, substream
from .simcore import timestamp
from .tape import ComputationTape, Node
from .weightnet import (
    TrainingDivergedError,
    WeightNetParamNodes,
    WeightNetParams,
    clip_gradients,
    net_forward_taped,
    net_init,
    power_feature,
    sgd_step,
)

log = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    """Knobs of the staggered training procedure."""

    outer_cycles: int = 6  # alternation cycles, each T-block then phase-block
    loop_epochs: int = 5  # full-trajectory passes per block
    learning_rate: float = 0.1
    eps_t: float = 0.3
    eps_phi: float = 0.3
    train_frames: int = 126
    grad_clip_norm: float | None = 10.0  # None reproduces the bare update rule
    truncation_slots: int | None = None  # cut gradient flow every so many slots

    def validate(self) -> None:
        if min(self.outer_cycles, self.loop_epochs, self.train_frames) < 1:
            raise ValueError("cycle counts and frame count must be positive")
        if self.learning_rate < 0 or self.eps_t <= 0 or self.eps_phi <= 0:
            raise ValueError("rates and gains must be positive")
        if self.train_frames < 2:
            raise ValueError("training needs at least 2 frames of history")

    @property
    def total_passes(self) -> int:
        return self.outer_cycles * 2 * self.loop_epochs


@dataclass
class NodeAcquisition:
    """One node's recorded observations over the acquisition window."""

    node_index: int  # 0-based
    n_nodes: int
    t_stamp_s: np.ndarray  # (S,) zero where absent
    power_dbm: np.ndarray  # (S,) zero where absent
    present: np.ndarray  # (S,) bool: transmitter was a peer heard above threshold
    first_frame_phases_s: np.ndarray  # (N,) own clock over the first frame
    initial_period_s: float
    nominal_period_s: float
    p_th_dbm: float

    @property
    def n_slots(self) -> int:
        return self.t_stamp_s.shape[0]


def acquire(
    scenario: Scenario, models: dict[int, dict[str, WeightNetParams]], train_frames: int,
    eps_t: float = 0.3, eps_phi: float = 0.3,
) -> list[NodeAcquisition]:
    """Run the loops with fixed parameters while every node records its inputs."""
    if train_frames < 2:
        raise ValueError(f"acquisition needs at least 2 frames, got {train_frames}")
    n = scenario.n_nodes
    n_slots = n * train_frames
    table = scenario.link_table
    nodes = make_nodes(scenario, models)
    t_rec = np.zeros((n, n_slots))
    p_rec = np.zeros((n, n_slots))
    present = np.zeros((n, n_slots), dtype=bool)
    first_phases = np.zeros((n, n))
    for k in range(n_slots):
        if k < n:
            for i in range(n):
                first_phases[i, k] = nodes[i].clock.phase
        tx = k % n
        tx_phase = nodes[tx].clock.phase
        for i in range(n):
            if i != tx and table.above_threshold[i, tx]:
                t_rec[i, k] = timestamp(tx_phase, table.delay_s[i, tx])
                p_rec[i, k] = table.power_dbm[i, tx]
                present[i, k] = True
        pfdsa_step(nodes, scenario, k, eps_t, eps_phi)
    return [
        NodeAcquisition(
            node_index=i,
            n_nodes=n,
            t_stamp_s=t_rec[i],
            power_dbm=p_rec[i],
            present=present[i],
            first_frame_phases_s=first_phases[i],
            initial_period_s=float(scenario.initial_periods_s[i]),
            nominal_period_s=scenario.config.nominal_period_s,
            p_th_dbm=scenario.link_table.p_th_dbm,
        )
        for i in range(n)
    ]


@dataclass
class ReplayResult:
    loss_t: float
    loss_phi: float
    tape: ComputationTape
    loss_t_node: Node
    loss_phi_node: Node
    param_nodes_t: WeightNetParamNodes
    param_nodes_phi: WeightNetParamNodes


def _taped_correction(
    tape: ComputationTape,
    param_nodes: WeightNetParamNodes,
    store_nodes: list[Node],
    power_now: np.ndarray,
    present_now: np.ndarray,
    peer_order: list[int],
    gain: float,
    nominal_period_s: float,
    p_th_dbm: float,
) -> Node | None:
    mask = present_now[peer_order]
    if not mask.any():
        return None
    gathered = tape.gather([store_nodes[j] for j in peer_order], [1.0 / nominal_period_s] * len(peer_order))
    power_feats = np.array(
        [power_feature(power_now[j], p_th_dbm) if present_now[j] else 0.0 for j in peer_order]
    )
    features = tape.interleave_const(gathered, power_feats)
    weights = net_forward_taped(tape, param_nodes, features, mask)
    return tape.scale(tape.dot(weights, gathered), gain * nominal_period_s)


def replay_losses(
    acq: NodeAcquisition, params_t: WeightNetParams, params_phi: WeightNetParams, config: TrainingConfig
) -> ReplayResult:
    """Replay the recorded trajectory under the given parameters and build
    both losses on a fresh tape."""
    n = acq.n_nodes
    i0 = acq.node_index
    n_slots = acq.n_slots
    if n_slots < 2 * n:
        raise ValueError("replay needs at least 2 recorded frames")
    three_n = 3 * n
    tape = ComputationTape()
    param_nodes_t = WeightNetParamNodes.record(tape, params_t)
    param_nodes_phi = WeightNetParamNodes.record(tape, params_phi)
    zero = tape.leaf(0.0)
    peer_order = [j for j in range(n) if j != i0]

    x_phi_nodes: list[Node] = [zero] * n
    x_t_nodes: list[Node] = [zero] * n
    power_now = np.zeros(n)
    present_now = np.zeros(n, dtype=bool)

    # frame-0 store seed: phase differences only, from the recorded first frame
    for j in peer_order:
        if acq.present[j]:
            x_phi_nodes[j] = tape.leaf(acq.t_stamp_s[j] - acq.first_frame_phases_s[j])

    # own clock entering the replay window (no corrections occur in frame 0)
    phi = tape.leaf(acq.first_frame_phases_s[n - 1] + acq.initial_period_s)
    period = tape.leaf(acq.initial_period_s)

    const_phi = 0.0
    for k in range(1, n):
        if acq.present[k]:
            r = acq.t_stamp_s[k] - acq.first_frame_phases_s[k]
            const_phi += math.log(k + 1) * r * r

    phi_terms: list[Node] = []
    phi_weights: list[float] = []
    t_terms: list[Node] = []
    t_weights: list[float] = []
    held_a: Node | None = None

    for k in range(n, n_slots):
        if config.truncation_slots and k > n and (k - n) % config.truncation_slots == 0:
            phi = tape.leaf(phi.value)
            period = tape.leaf(period.value)
            if held_a is not None:
                held_a = tape.leaf(held_a.value)
            x_phi_nodes = [tape.leaf(node.value) if node is not zero else zero for node in x_phi_nodes]
            x_t_nodes = [tape.leaf(node.value) if node is not zero else zero for node in x_t_nodes]

        j0 = k % n
        if acq.present[k]:
            w_k = math.log(k + 1)
            delta = tape.lincomb([phi], [-1.0], constant=float(acq.t_stamp_s[k]))
            x_t_nodes[j0] = tape.lincomb([delta, x_phi_nodes[j0]], [1.0 / n, -1.0 / n])
            x_phi_nodes[j0] = delta
            power_now[j0] = acq.power_dbm[k]
            present_now[j0] = True
            phi_terms.append(delta)
            phi_weights.append(w_k)
            if acq.present[k - n]:
                frame_diff = (float(acq.t_stamp_s[k]) - float(acq.t_stamp_s[k - n])) / n
                t_terms.append(tape.lincomb([period], [-1.0], constant=frame_diff))
                t_weights.append(w_k)

        m = k % three_n
        omega: Node | None = None
        if m == 2 * n - 1:
            held_a = _taped_correction(
                tape, param_nodes_t, x_t_nodes, power_now, present_now, peer_order,
                config.eps_t, acq.nominal_period_s, acq.p_th_dbm,
            )
        elif m == three_n - 1:
            omega = _taped_correction(
                tape, param_nodes_phi, x_phi_nodes, power_now, present_now, peer_order,
                config.eps_phi, acq.nominal_period_s, acq.p_th_dbm,
            )

        a_node = held_a if 2 * n - 1 <= m <= three_n - 2 else None
        if omega is not None:
            phi = tape.lincomb([phi, period, omega], [1.0, 1.0, 1.0])
        else:
            phi = tape.lincomb([phi, period], [1.0, 1.0])
        if a_node is not None:
            period = tape.lincomb([period, a_node], [1.0, 1.0 / n])

    loss_t_node = tape.weighted_squares(t_terms, t_weights)
    loss_phi_node = tape.weighted_squares(phi_terms, phi_weights, constant=const_phi)
    if not (math.isfinite(loss_t_node.value) and math.isfinite(loss_phi_node.value)):
        raise TrainingDivergedError(
            f"non-finite replay loss (L_T={loss_t_node.value}, L_phi={loss_phi_node.value})"
        )
    return ReplayResult(
        loss_t=loss_t_node.value,
        loss_phi=loss_phi_node.value,
        tape=tape,
        loss_t_node=loss_t_node,
        loss_phi_node=loss_phi_node,
        param_nodes_t=param_nodes_t,
        param_nodes_phi=param_nodes_phi,
    )


@dataclass
class NodeTrainingResult:
    node_index: int
    params_t: WeightNetParams
    params_phi: WeightNetParams
    loss_history: list[tuple[float, float]] = field(default_factory=list)  # (L_T, L_phi) per pass
    skipped: bool = False
    error: str | None = None


def train_node(
    acq: NodeAcquisition, params_t: WeightNetParams, params_phi: WeightNetParams, config: TrainingConfig
) -> NodeTrainingResult:
    """Staggered gradient descent on one node's recorded trajectory."""
    config.validate()
    if not acq.present.any():
        log.warning("node %d heard no peer during acquisition; training skipped", acq.node_index + 1)
        return NodeTrainingResult(acq.node_index, params_t.copy(), params_phi.copy(), skipped=True)
    p_t = params_t.copy()
    p_phi = params_phi.copy()
    history: list[tuple[float, float]] = []
    block = config.loop_epochs
    for pass_idx in range(config.total_passes):
        cycle, in_cycle = divmod(pass_idx, 2 * block)
        phase_block = in_cycle >= block
        try:
            replay = replay_losses(acq, p_t, p_phi, config)
            history.append((replay.loss_t, replay.loss_phi))
            if phase_block:
                replay.tape.backward(replay.loss_phi_node)
                grads = replay.param_nodes_phi.gradients()
            else:
                replay.tape.backward(replay.loss_t_node)
                grads = replay.param_nodes_t.gradients()
            if config.grad_clip_norm is not None:
                grads = clip_gradients(grads, config.grad_clip_norm)
            if phase_block:
                p_phi = sgd_step(p_phi, grads, config.learning_rate)
            else:
                p_t = sgd_step(p_t, grads, config.learning_rate)
        except TrainingDivergedError as exc:
            raise TrainingDivergedError(
                f"node {acq.node_index + 1}: diverged at cycle {cycle + 1}, pass {in_cycle + 1}: {exc}"
            ) from exc
    return NodeTrainingResult(acq.node_index, p_t, p_phi, history)


def initial_models(scenario: Scenario, seed: int) -> dict[int, dict[str, WeightNetParams]]:
    """Independent random starting parameters for every node's two networks."""
    n = scenario.n_nodes
    return {
        i: {
            "period": net_init(substream(seed, "net-init", str(i), "period"), n),
            "phase": net_init(substream(seed, "net-init", str(i), "phase"), n),
        }
        for i in range(n)
    }


def _train_task(args) -> NodeTrainingResult:
    acq, p_t, p_phi, config = args
    try:
        return train_node(acq, p_t, p_phi, config)
    except TrainingDivergedError as exc:
        return NodeTrainingResult(acq.node_index, p_t.copy(), p_phi.copy(), skipped=True, error=str(exc))


@dataclass
class TrainAllResult:
    models: dict[int, dict[str, WeightNetParams]]
    node_results: list[NodeTrainingResult]

    @property
    def failures(self) -> list[NodeTrainingResult]:
        return [r for r in self.node_results if r.error is not None]


def train_all(scenario: Scenario, config: TrainingConfig, seed: int, workers: int = 1) -> TrainAllResult:
    """Acquire once, then train every node independently from its own record."""
    config.validate()
    models0 = initial_models(scenario, seed)
    acqs = acquire(scenario, models0, config.train_frames, config.eps_t, config.eps_phi)
    tasks = [(acqs[i], models0[i]["period"], models0[i]["phase"], config) for i in range(scenario.n_nodes)]
    if workers > 1:
        with Pool(processes=workers) as pool:
            results = pool.map(_train_task, tasks)
    else:
        results = [_train_task(task) for task in tasks]
    models = {r.node_index: {"period": r.params_t, "phase": r.params_phi} for r in results}
    for r in results:
        if r.error:
            log.warning("node %d training failed: %s", r.node_index + 1, r.error)
    return TrainAllResult(models=models, node_results=results)
