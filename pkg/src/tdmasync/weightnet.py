"""The weight-generating network: three dense layers, softmax, and masked
renormalization over the surviving peers.

Inputs are 2(N-1) features: for each peer, in ascending node index, one
time feature (store value in units of the nominal period) and one power
feature ((dBm - threshold)/60, clipped to [0, 1.5]); absent peers contribute
(0, 0).  The same architecture serves both the period and the phase loop with
independent parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tape import ComputationTape, Node

HIDDEN_SIZE = 30
POWER_FEATURE_SPAN_DB = 60.0
POWER_FEATURE_CLIP = 1.5

MODEL_FORMAT_VERSION = 1
FEATURE_ORDERING = "peers ascending by node index, (time, power) pairs"


class EmptyNeighborhoodError(ValueError):
    """Signalled when no peer survives the reception mask."""


@dataclass
class WeightNetParams:
    """Parameters of one weight-generating network."""

    w1: np.ndarray  # (30, 2(N-1))
    b1: np.ndarray  # (30,)
    w2: np.ndarray  # (30, 30)
    b2: np.ndarray  # (30,)
    w3: np.ndarray  # (N-1, 30)
    b3: np.ndarray  # (N-1,)

    @property
    def n_peers(self) -> int:
        return self.w3.shape[0]

    def weight_count(self) -> int:
        return self.w1.size + self.w2.size + self.w3.size

    def bias_count(self) -> int:
        return self.b1.size + self.b2.size + self.b3.size

    def inference_multiply_count(self) -> int:
        """Products needed for one forward pass through the dense layers."""
        return self.w1.size + self.w2.size + self.w3.size

    def copy(self) -> "WeightNetParams":
        return WeightNetParams(*(a.copy() for a in self.arrays()))

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def net_init(rng: np.random.Generator, n_nodes: int) -> WeightNetParams:
    """Uniform fan-based weight draw with zero biases."""
    if n_nodes < 2:
        raise ValueError(f"need at least 2 nodes, got {n_nodes}")
    n_in = 2 * (n_nodes - 1)
    n_out = n_nodes - 1

    def draw(fan_out, fan_in):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_out, fan_in))

    return WeightNetParams(
        w1=draw(HIDDEN_SIZE, n_in),
        b1=np.zeros(HIDDEN_SIZE),
        w2=draw(HIDDEN_SIZE, HIDDEN_SIZE),
        b2=np.zeros(HIDDEN_SIZE),
        w3=draw(n_out, HIDDEN_SIZE),
        b3=np.zeros(n_out),
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _feature_mask(mask: np.ndarray) -> np.ndarray:
    """Per-feature 0/1 vector: both entries of a masked-out peer are silenced."""
    return np.repeat(mask.astype(float), 2)


def net_forward(params: WeightNetParams, features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Combination weights over peers: simplex-valued, zero where masked out.

    Masked-out peers' feature pairs are zeroed before the first layer, so a
    peer below threshold can never influence the surviving weights.
    """
    features = np.asarray(features, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyNeighborhoodError("no peer above the reception threshold")
    if not np.isfinite(features).all():
        raise ValueError("features must be finite")
    features = features * _feature_mask(mask)
    a1 = _sigmoid(params.w1 @ features + params.b1)
    a2 = _sigmoid(params.w2 @ a1 + params.b2)
    logits = params.w3 @ a2 + params.b3
    shifted = np.exp(logits - logits.max())
    probs = shifted / shifted.sum()
    kept = probs * mask
    return kept / kept.sum()


def net_forward_taped(
    tape: ComputationTape, param_nodes: "WeightNetParamNodes", features: Node, mask: np.ndarray
) -> Node:
    """Tape-recorded twin of :func:`net_forward` (same math, differentiable)."""
    if not mask.any():
        raise EmptyNeighborhoodError("no peer above the reception threshold")
    features = tape.mul_const(features, _feature_mask(mask))
    a1 = tape.sigmoid(tape.dense(param_nodes.w1, param_nodes.b1, features))
    a2 = tape.sigmoid(tape.dense(param_nodes.w2, param_nodes.b2, a1))
    logits = tape.dense(param_nodes.w3, param_nodes.b3, a2)
    return tape.masked_renormalize(tape.softmax(logits), mask)


@dataclass
class WeightNetParamNodes:
    """Leaf nodes for one network's parameters on a tape."""

    w1: Node
    b1: Node
    w2: Node
    b2: Node
    w3: Node
    b3: Node

    @classmethod
    def record(cls, tape: ComputationTape, params: WeightNetParams) -> "WeightNetParamNodes":
        return cls(*(tape.leaf(a) for a in params.arrays()))

    def nodes(self) -> tuple[Node, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def gradients(self) -> tuple[np.ndarray, ...]:
        return tuple(n.grad for n in self.nodes())


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


def sgd_step(params: WeightNetParams, grads: tuple[np.ndarray, ...], learning_rate: float) -> WeightNetParams:
    """One gradient-descent update; rejects non-finite gradients."""
    updated = []
    for arr, grad in zip(params.arrays(), grads):
        if arr.shape != grad.shape:
            raise ValueError(f"gradient shape {grad.shape} does not match parameter shape {arr.shape}")
        if not np.isfinite(grad).all():
            raise TrainingDivergedError("non-finite gradient in SGD step")
        updated.append(arr - learning_rate * grad)
    return WeightNetParams(*updated)


def clip_gradients(grads: tuple[np.ndarray, ...], max_norm: float) -> tuple[np.ndarray, ...]:
    """Scale the gradient set so its global L2 norm is at most ``max_norm``."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total <= max_norm or total == 0.0:
        return grads
    factor = max_norm / total
    return tuple(g * factor for g in grads)


def time_feature(value_s: float, nominal_period_s: float) -> float:
    return value_s / nominal_period_s

def power_feature(power_dbm: float, p_th_dbm: float) -> float:
    raw = (power_dbm - p_th_dbm) / POWER_FEATURE_SPAN_DB
    return min(max(raw, 0.0), POWER_FEATURE_CLIP)


def build_features(
    store_values_s: np.ndarray, powers_dbm: np.ndarray, present: np.ndarray, nominal_period_s: float, p_th_dbm: float
) -> np.ndarray:
    """Interleaved (time, power) feature vector over peers; absent peers are (0, 0)."""
    n_peers = store_values_s.shape[0]
    features = np.zeros(2 * n_peers)
    for idx in range(n_peers):
        if present[idx]:
            features[2 * idx] = time_feature(store_values_s[idx], nominal_period_s)
            features[2 * idx + 1] = power_feature(powers_dbm[idx], p_th_dbm)
    return features


def save_models(path: str | Path, models: dict[int, dict[str, WeightNetParams]], meta: dict) -> None:
    """Persist per-node (period, phase) networks with the feature contract."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "feature_ordering": FEATURE_ORDERING,
        "power_feature_span_db": POWER_FEATURE_SPAN_DB,
        "power_feature_clip": POWER_FEATURE_CLIP,
        "meta": meta,
        "nodes": {
            str(node): {
                kind: {name: arr.tolist() for name, arr in zip(("w1", "b1", "w2", "b2", "w3", "b3"), p.arrays())}
                for kind, p in kinds.items()
            }
            for node, kinds in models.items()
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_models(path: str | Path) -> tuple[dict[int, dict[str, WeightNetParams]], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format {doc.get('format_version')!r}")
    models: dict[int, dict[str, WeightNetParams]] = {}
    for node, kinds in doc["nodes"].items():
        models[int(node)] = {
            kind: WeightNetParams(**{name: np.asarray(arrs[name], dtype=float) for name in ("w1", "b1", "w2", "b2", "w3", "b3")})
            for kind, arrs in kinds.items()
        }
    return models, doc.get("meta", {})
