"""Independent straight-line reimplementations used as test oracles.

Nothing here touches the package's tape, store, or network code paths: the
replay recursion, the layer math, and the losses are written out inline so
they can disagree with the production implementation if either is wrong.
"""

from __future__ import annotations

import math

import numpy as np


def two_ray_power_dbm(tx_dbm: float, h_t: float, h_r: float, d_m: float, offset_db: float = 0.0) -> float:
    """Hand evaluation of the far-field two-ray budget, term by term."""
    return tx_dbm + offset_db + 20.0 * math.log10(h_t * h_r) - 40.0 * math.log10(d_m)


def straight_line_losses(acq, params_t, params_phi, eps_t: float, eps_phi: float) -> tuple[float, float]:
    """Replay one node's recorded trajectory and accumulate both losses.

    ``acq`` only needs the recorded-data attributes (stamps, powers, presence,
    first-frame phases, initial period, scaling constants); parameters are
    consumed as raw arrays.
    """
    n = acq.n_nodes
    i0 = acq.node_index
    n_slots = acq.t_stamp_s.shape[0]
    t_nom = acq.nominal_period_s
    p_th = acq.p_th_dbm
    peers = [j for j in range(n) if j != i0]

    def forward_weights(params, values, powers, seen):
        feats = np.zeros(2 * len(peers))
        for pos, j in enumerate(peers):
            if seen[j]:
                feats[2 * pos] = values[j] / t_nom
                feats[2 * pos + 1] = min(max((powers[j] - p_th) / 60.0, 0.0), 1.5)
        a1 = 1.0 / (1.0 + np.exp(-(params.w1 @ feats + params.b1)))
        a2 = 1.0 / (1.0 + np.exp(-(params.w2 @ a1 + params.b2)))
        logits = params.w3 @ a2 + params.b3
        e = np.exp(logits - logits.max())
        soft = e / e.sum()
        mask = np.array([seen[j] for j in peers], dtype=float)
        kept = soft * mask
        return kept / kept.sum()

    x_phi = np.zeros(n)
    x_t = np.zeros(n)
    powers = np.zeros(n)
    seen = np.zeros(n, dtype=bool)
    for j in peers:
        if acq.present[j]:
            x_phi[j] = acq.t_stamp_s[j] - acq.first_frame_phases_s[j]

    phi = acq.first_frame_phases_s[n - 1] + acq.initial_period_s
    period = acq.initial_period_s

    loss_phi = 0.0
    loss_t = 0.0
    for k in range(1, n):
        if acq.present[k]:
            r = acq.t_stamp_s[k] - acq.first_frame_phases_s[k]
            loss_phi += math.log(k + 1) * r * r

    held = 0.0
    for k in range(n, n_slots):
        j0 = k % n
        if acq.present[k]:
            delta = float(acq.t_stamp_s[k]) - phi
            x_t[j0] = (1.0 / n) * delta + (-1.0 / n) * x_phi[j0]
            x_phi[j0] = delta
            powers[j0] = acq.power_dbm[k]
            seen[j0] = True
            loss_phi += math.log(k + 1) * delta * delta
            if acq.present[k - n]:
                est = (float(acq.t_stamp_s[k]) - float(acq.t_stamp_s[k - n])) / n
                r = est - period
                loss_t += math.log(k + 1) * r * r

        m = k % (3 * n)
        omega = 0.0
        if m == 2 * n - 1:
            if seen.any():
                w = forward_weights(params_t, x_t, powers, seen)
                held = eps_t * t_nom * float(
                    sum(w[pos] * (x_t[j] / t_nom) for pos, j in enumerate(peers))
                )
            else:
                held = 0.0
        elif m == 3 * n - 1:
            if seen.any():
                w = forward_weights(params_phi, x_phi, powers, seen)
                omega = eps_phi * t_nom * float(
                    sum(w[pos] * (x_phi[j] / t_nom) for pos, j in enumerate(peers))
                )
        apply_a = held if (2 * n - 1 <= m <= 3 * n - 2) else 0.0
        phi = phi + period + omega
        period = period + apply_a / n
    return loss_t, loss_phi


def make_random_acquisition(rng: np.random.Generator, n_nodes: int = 3, frames: int = 6, density: float = 0.8):
    """Synthetic recorded trajectory with randomized stamps and presence.

    Stamps follow a noisy free-running clock so residual scales stay
    realistic; presence is random per slot except a node's own slots.
    """
    from tdmasync.trainer import NodeAcquisition

    n_slots = n_nodes * frames
    i0 = int(rng.integers(0, n_nodes))
    t_nom = 5e-3
    own_period = t_nom * (1.0 + rng.uniform(-0.01, 0.01))
    own_phase0 = rng.uniform(0, t_nom)
    present = np.zeros(n_slots, dtype=bool)
    t_stamp = np.zeros(n_slots)
    power = np.zeros(n_slots)
    peer_period = {j: t_nom * (1.0 + rng.uniform(-0.01, 0.01)) for j in range(n_nodes)}
    peer_phase0 = {j: rng.uniform(0, t_nom) for j in range(n_nodes)}
    for k in range(n_slots):
        j = k % n_nodes
        if j == i0:
            continue
        if rng.uniform() < density:
            present[k] = True
            t_stamp[k] = peer_phase0[j] + k * peer_period[j] + rng.uniform(0, 1e-4)
            power[k] = rng.uniform(-110.0, -70.0)
    return NodeAcquisition(
        node_index=i0,
        n_nodes=n_nodes,
        t_stamp_s=t_stamp,
        power_dbm=power,
        present=present,
        first_frame_phases_s=own_phase0 + np.arange(n_nodes) * own_period,
        initial_period_s=own_period,
        nominal_period_s=t_nom,
        p_th_dbm=-114.0,
    )
