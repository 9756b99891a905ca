"""Minimal reverse-mode differentiation on a flat operation tape.

Values are either Python floats (scalars) or 1-D numpy arrays.  Every
operation appends one node to the tape in creation order, which is already a
topological order, so the backward sweep is a single reverse pass that visits
each node exactly once.

The op set is deliberately small: fused linear combinations for the clock
recursions, dense layers / sigmoid / softmax / masked renormalization for the
weight networks, and a weighted sum-of-squares reducer for the losses.
"""

from __future__ import annotations

import numpy as np


class Node:
    """One recorded value with links to its parents and their local partials."""

    __slots__ = ("value", "parents", "grad", "_backward", "tape_index")

    def __init__(self, value, parents=(), backward=None, tape_index=-1):
        self.value = value
        self.parents = parents
        self.grad = None
        self._backward = backward
        self.tape_index = tape_index


class ComputationTape:
    """Append-only record of primitive operations for one scalar output."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, value, parents=(), backward=None) -> Node:
        node = Node(value, parents, backward, tape_index=len(self.nodes))
        self.nodes.append(node)
        return node

    # ------------------------------------------------------------------
    # leaves
    # ------------------------------------------------------------------
    def leaf(self, value) -> Node:
        """A differentiable input (parameter or state seed)."""
        if isinstance(value, np.ndarray):
            value = value.astype(float, copy=True)
        else:
            value = float(value)
        return self._record(value)

    # ------------------------------------------------------------------
    # scalar plumbing
    # ------------------------------------------------------------------
    def lincomb(self, nodes: list[Node], coeffs: list[float], constant: float = 0.0) -> Node:
        """Scalar value = constant + sum(c_i * x_i)."""
        value = constant
        for node, c in zip(nodes, coeffs):
            value += c * node.value
        coeffs = tuple(coeffs)

        def backward(out):
            g = out.grad
            for node, c in zip(out.parents, coeffs):
                node.grad += c * g

        return self._record(value, tuple(nodes), backward)

    # ------------------------------------------------------------------
    # vector ops for the weight networks
    # ------------------------------------------------------------------
    def gather(self, scalars: list[Node], scales: list[float]) -> Node:
        """Vector value[i] = scales[i] * scalars[i].value."""
        value = np.array([s * n.value for n, s in zip(scalars, scales)])
        scales = tuple(scales)

        def backward(out):
            g = out.grad
            for i, node in enumerate(out.parents):
                node.grad += scales[i] * g[i]

        return self._record(value, tuple(scalars), backward)

    def interleave_const(self, vec: Node, consts: np.ndarray) -> Node:
        """Vector [v0, c0, v1, c1, ...]: differentiable entries at even slots."""
        n = vec.value.shape[0]
        value = np.empty(2 * n)
        value[0::2] = vec.value
        value[1::2] = consts

        def backward(out):
            out.parents[0].grad += out.grad[0::2]

        return self._record(value, (vec,), backward)

    def dense(self, weights: Node, bias: Node, x: Node) -> Node:
        """Affine layer W @ x + b with a matrix-valued weight leaf."""
        value = weights.value @ x.value + bias.value

        def backward(out):
            g = out.grad
            w_node, b_node, x_node = out.parents
            w_node.grad += np.outer(g, x_node.value)
            b_node.grad += g
            x_node.grad += w_node.value.T @ g

        return self._record(value, (weights, bias, x), backward)

    def sigmoid(self, x: Node) -> Node:
        value = 1.0 / (1.0 + np.exp(-x.value))

        def backward(out):
            out.parents[0].grad += out.grad * out.value * (1.0 - out.value)

        return self._record(value, (x,), backward)

    def softmax(self, x: Node) -> Node:
        shifted = x.value - x.value.max()
        e = np.exp(shifted)
        value = e / e.sum()

        def backward(out):
            g = out.grad
            s = out.value
            out.parents[0].grad += s * (g - float(g @ s))

        return self._record(value, (x,), backward)

    def masked_renormalize(self, probs: Node, mask: np.ndarray) -> Node:
        """Zero the masked-out entries and rescale the survivors to sum one."""
        m = mask.astype(float)
        kept = probs.value * m
        total = kept.sum()
        if total <= 0.0:
            raise ValueError("masked renormalization needs positive surviving mass")
        value = kept / total

        def backward(out):
            g = out.grad
            w = out.value
            out.parents[0].grad += m * (g - float(g @ w)) / total

        return self._record(value, (probs,), backward)

    def dot(self, a: Node, b: Node) -> Node:
        """Scalar inner product of two vector nodes."""
        value = float(a.value @ b.value)

        def backward(out):
            a_node, b_node = out.parents
            a_node.grad += out.grad * b_node.value
            b_node.grad += out.grad * a_node.value

        return self._record(value, (a, b), backward)

    def scale(self, x: Node, factor: float) -> Node:
        value = factor * x.value

        def backward(out):
            out.parents[0].grad += factor * out.grad

        return self._record(value, (x,), backward)

    def mul_const(self, x: Node, factors: np.ndarray) -> Node:
        """Elementwise product with a constant vector."""
        value = x.value * factors

        def backward(out):
            out.parents[0].grad += factors * out.grad

        return self._record(value, (x,), backward)

    # ------------------------------------------------------------------
    # loss reduction
    # ------------------------------------------------------------------
    def weighted_squares(self, residuals: list[Node], weights: list[float], constant: float = 0.0) -> Node:
        """Scalar value = constant + sum(w_i * r_i^2) over scalar residual nodes."""
        value = constant
        for node, w in zip(residuals, weights):
            value += w * node.value * node.value
        weights = tuple(weights)

        def backward(out):
            g = out.grad
            for node, w in zip(out.parents, weights):
                node.grad += 2.0 * w * node.value * g

        return self._record(value, tuple(residuals), backward)

    # ------------------------------------------------------------------
    # reverse sweep
    # ------------------------------------------------------------------
    def backward(self, output: Node) -> None:
        """Accumulate d(output)/d(node) into ``grad`` for every tape node."""
        if (
            output.tape_index < 0
            or output.tape_index >= len(self.nodes)
            or self.nodes[output.tape_index] is not output
        ):
            raise ValueError("output node was not recorded on this tape")
        if not isinstance(output.value, float):
            raise ValueError("backward needs a scalar output node")
        for node in self.nodes:
            if isinstance(node.value, np.ndarray):
                node.grad = np.zeros_like(node.value)
            else:
                node.grad = 0.0
        output.grad = 1.0
        for node in reversed(self.nodes[: output.tape_index + 1]):
            if node._backward is not None and _nonzero(node.grad):
                node._backward(node)


def _nonzero(grad) -> bool:
    if isinstance(grad, float):
        return grad != 0.0
    return grad.any()
