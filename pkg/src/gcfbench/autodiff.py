"""Minimal reverse-mode automatic differentiation over dense 2-D arrays.

A ``Tape`` records operations in execution order (a Wengert list). Every
node keeps a re-runnable forward closure, so the whole graph can be
re-evaluated after leaf values are perturbed; that is what makes central
finite-difference gradient checking possible without rebuilding the graph.

Conventions:
* every value is a 2-D numpy array; scalars are shape (1, 1)
* sparse matrices only appear as constants (fixed pattern and values) or
  through ``edge_matmul`` where the pattern is fixed but entries are node
  values
* ``backward`` accumulates gradients on ``node.grad``; only reachable
  nodes receive one
"""

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import NumericalError


def _require_2d(value) -> np.ndarray:
    arr = np.asarray(value)
    if arr.ndim != 2:
        raise ValueError(f"tape values must be 2-D, got shape {arr.shape}")
    return arr


class Node:
    __slots__ = ("value", "parents", "grad", "trainable", "name", "_fwd", "_bwd")

    def __init__(self, value, parents=(), fwd=None, bwd=None, trainable=False, name=None):
        self.value = value
        self.parents = tuple(parents)
        self.grad = None
        self.trainable = trainable
        self.name = name
        self._fwd = fwd
        self._bwd = bwd

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = self.name or "node"
        return f"<{tag} {self.value.shape}{' train' if self.trainable else ''}>"


class Tape:
    """Ordered operation recorder with forward re-evaluation and backward."""

    def __init__(self):
        self.nodes: list = []

    # -- construction ------------------------------------------------------

    def input(self, value, trainable: bool = False, name=None) -> Node:
        node = Node(_require_2d(value), trainable=trainable, name=name)
        self.nodes.append(node)
        return node

    def _register(self, parents, fwd, bwd, name=None) -> Node:
        node = Node(fwd(), parents=parents, fwd=fwd, bwd=bwd, name=name)
        self.nodes.append(node)
        return node

    def parameters(self) -> list:
        return [n for n in self.nodes if n.trainable]

    # -- elementwise -------------------------------------------------------

    def add(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise ValueError("add requires equal shapes")
        return self._register((a, b), lambda: a.value + b.value,
                              lambda g: (g, g), name="add")

    def sub(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise ValueError("sub requires equal shapes")
        return self._register((a, b), lambda: a.value - b.value,
                              lambda g: (g, -g), name="sub")

    def mul(self, a: Node, b: Node) -> Node:
        if a.value.shape != b.value.shape:
            raise ValueError("mul requires equal shapes")
        return self._register((a, b), lambda: a.value * b.value,
                              lambda g: (g * b.value, g * a.value), name="mul")

    def add_const(self, a: Node, const) -> Node:
        const = np.asarray(const)
        if (a.value + const).shape != a.value.shape:
            raise ValueError("add_const must not broadcast-expand the node")
        return self._register((a,), lambda: a.value + const,
                              lambda g: (g,), name="add_const")

    def mul_const(self, a: Node, const) -> Node:
        const = np.asarray(const)
        if (a.value * const).shape != a.value.shape:
            raise ValueError("mul_const must not broadcast-expand the node")
        return self._register((a,), lambda: a.value * const,
                              lambda g: (g * const,), name="mul_const")

    def scale(self, a: Node, scalar: float) -> Node:
        return self.mul_const(a, float(scalar))

    # -- matrix products ---------------------------------------------------

    def matmul(self, a: Node, b: Node, transpose_a: bool = False,
               transpose_b: bool = False) -> Node:
        def fwd():
            A = a.value.T if transpose_a else a.value
            B = b.value.T if transpose_b else b.value
            return A @ B

        def bwd(g):
            A = a.value.T if transpose_a else a.value
            B = b.value.T if transpose_b else b.value
            ga = B @ g.T if transpose_a else g @ B.T
            gb = g.T @ A if transpose_b else A.T @ g
            return ga, gb

        return self._register((a, b), fwd, bwd, name="matmul")

    def sparse_matmul(self, S: sp.spmatrix, x: Node) -> Node:
        """Left-multiply by a constant sparse matrix: S @ x."""
        S = S.tocsr()
        St = S.T.tocsr()
        return self._register(
            (x,),
            lambda: S @ x.value,
            lambda g: (St @ g,),
            name="sparse_matmul",
        )

    def edge_matmul(self, rows, cols, shape, weights: Node, x: Node) -> Node:
        """Multiply by a sparse matrix whose pattern is fixed but whose
        entries are node values: csr(weights at (rows, cols), shape) @ x.

        ``weights`` must be an (E, 1) node aligned with rows/cols.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if weights.value.shape != (rows.shape[0], 1):
            raise ValueError("edge weights must have shape (num_edges, 1)")

        def fwd():
            M = sp.csr_matrix((weights.value.ravel(), (rows, cols)), shape=shape)
            return M @ x.value

        def bwd(g):
            gw = np.sum(g[rows] * x.value[cols], axis=1, keepdims=True)
            Mt = sp.csr_matrix(
                (weights.value.ravel(), (cols, rows)), shape=(shape[1], shape[0])
            )
            return gw, Mt @ g

        return self._register((weights, x), fwd, bwd, name="edge_matmul")

    # -- nonlinearities ----------------------------------------------------

    def leaky_relu(self, a: Node, slope: float = 0.2) -> Node:
        # subgradient at exactly 0 takes the negative-side slope
        return self._register(
            (a,),
            lambda: np.where(a.value > 0, a.value, slope * a.value),
            lambda g: (g * np.where(a.value > 0, 1.0, slope),),
            name="leaky_relu",
        )

    def sigmoid(self, a: Node) -> Node:
        node = self._register((a,), lambda: expit(a.value), None, name="sigmoid")
        node._bwd = lambda g: (g * node.value * (1.0 - node.value),)
        return node

    def tanh(self, a: Node) -> Node:
        node = self._register((a,), lambda: np.tanh(a.value), None, name="tanh")
        node._bwd = lambda g: (g * (1.0 - node.value ** 2),)
        return node

    def exp(self, a: Node) -> Node:
        node = self._register((a,), lambda: np.exp(a.value), None, name="exp")
        node._bwd = lambda g: (g * node.value,)
        return node

    def log(self, a: Node) -> Node:
        return self._register((a,), lambda: np.log(a.value),
                              lambda g: (g / a.value,), name="log")

    def softplus(self, a: Node) -> Node:
        # log(1 + e^x) computed stably for large |x|
        return self._register(
            (a,),
            lambda: np.logaddexp(0.0, a.value),
            lambda g: (g * expit(a.value),),
            name="softplus",
        )

    def pow_const(self, a: Node, exponent: float) -> Node:
        return self._register(
            (a,),
            lambda: a.value ** exponent,
            lambda g: (g * exponent * a.value ** (exponent - 1.0),),
            name="pow_const",
        )

    # -- row-structured ops -------------------------------------------------

    def l2norm_rows(self, a: Node, eps: float = 1e-12) -> Node:
        def fwd():
            n = np.sqrt(np.sum(a.value ** 2, axis=1, keepdims=True) + eps)
            return a.value / n

        def bwd(g):
            n = np.sqrt(np.sum(a.value ** 2, axis=1, keepdims=True) + eps)
            dot = np.sum(g * a.value, axis=1, keepdims=True)
            return (g / n - a.value * (dot / n ** 3),)

        return self._register((a,), fwd, bwd, name="l2norm_rows")

    def softmax_rows(self, a: Node) -> Node:
        def fwd():
            shifted = a.value - a.value.max(axis=1, keepdims=True)
            e = np.exp(shifted)
            return e / e.sum(axis=1, keepdims=True)

        node = self._register((a,), fwd, None, name="softmax_rows")

        def bwd(g):
            y = node.value
            return (y * (g - np.sum(g * y, axis=1, keepdims=True)),)

        node._bwd = bwd
        return node

    def logsumexp_rows(self, a: Node) -> Node:
        def fwd():
            m = a.value.max(axis=1, keepdims=True)
            return m + np.log(np.sum(np.exp(a.value - m), axis=1, keepdims=True))

        def bwd(g):
            m = a.value.max(axis=1, keepdims=True)
            e = np.exp(a.value - m)
            return (g * (e / e.sum(axis=1, keepdims=True)),)

        return self._register((a,), fwd, bwd, name="logsumexp_rows")

    def take_diag(self, a: Node) -> Node:
        if a.value.shape[0] != a.value.shape[1]:
            raise ValueError("take_diag requires a square matrix")

        def bwd(g):
            out = np.zeros_like(a.value)
            np.fill_diagonal(out, g.ravel())
            return (out,)

        return self._register(
            (a,), lambda: np.diag(a.value).reshape(-1, 1).copy(), bwd, name="take_diag"
        )

    # -- shape manipulation --------------------------------------------------

    def concat_cols(self, *parts: Node) -> Node:
        widths = [p.value.shape[1] for p in parts]

        def bwd(g):
            grads, at = [], 0
            for w in widths:
                grads.append(g[:, at:at + w])
                at += w
            return tuple(grads)

        return self._register(
            tuple(parts),
            lambda: np.concatenate([p.value for p in parts], axis=1),
            bwd,
            name="concat_cols",
        )

    def slice_cols(self, a: Node, start: int, stop: int) -> Node:
        def bwd(g):
            out = np.zeros_like(a.value)
            out[:, start:stop] = g
            return (out,)

        return self._register(
            (a,), lambda: a.value[:, start:stop].copy(), bwd, name="slice_cols"
        )

    def gather_rows(self, a: Node, indices) -> Node:
        indices = np.asarray(indices, dtype=np.int64)

        def bwd(g):
            out = np.zeros_like(a.value)
            np.add.at(out, indices, g)
            return (out,)

        return self._register(
            (a,), lambda: a.value[indices], bwd, name="gather_rows"
        )

    def reduce_sum(self, a: Node, axis=None) -> Node:
        if axis not in (None, 0, 1):
            raise ValueError("axis must be None, 0 or 1")

        def fwd():
            if axis is None:
                return a.value.sum().reshape(1, 1)
            return a.value.sum(axis=axis, keepdims=True)

        def bwd(g):
            return (np.broadcast_to(g, a.value.shape).copy(),)

        return self._register((a,), fwd, bwd, name="reduce_sum")

    # -- evaluation ----------------------------------------------------------

    def forward(self) -> None:
        """Recompute every non-leaf node in recording order."""
        for node in self.nodes:
            if node._fwd is not None:
                node.value = node._fwd()

    def backward(self, loss: Node) -> None:
        """Accumulate d loss / d node on every reachable node's ``grad``."""
        if loss.value.shape != (1, 1):
            raise ValueError(f"loss must be scalar (1, 1), got {loss.value.shape}")
        if not np.isfinite(loss.value[0, 0]):
            raise NumericalError("loss is not finite")
        for node in self.nodes:
            # trainable leaves start at zero so unreachable parameters
            # still report a (zero) gradient after the sweep
            node.grad = np.zeros_like(node.value) if node.trainable else None
        loss.grad = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.grad is None or not node.parents:
                continue
            contribs = node._bwd(node.grad)
            for parent, contrib in zip(node.parents, contribs):
                if contrib is None:
                    continue
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.value)
                parent.grad = parent.grad + contrib


def check_gradients(tape: Tape, loss: Node, eps: float = 1e-4) -> float:
    """Compare backward gradients of every trainable leaf against central
    finite differences of the re-run forward pass.

    Returns the maximum relative error
    ``|g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)`` across all coordinates.
    Raises NumericalError if any forward value is non-finite.
    """
    tape.forward()
    for node in tape.nodes:
        if not np.all(np.isfinite(node.value)):
            raise NumericalError(f"non-finite forward value at {node!r}")
    tape.backward(loss)
    params = tape.parameters()
    analytic = {id(p): (p.grad.copy() if p.grad is not None
                        else np.zeros_like(p.value)) for p in params}

    worst = 0.0
    for p in params:
        g_ad = analytic[id(p)]
        flat = p.value.reshape(-1)
        for j in range(flat.shape[0]):
            orig = flat[j]
            flat[j] = orig + eps
            tape.forward()
            f_plus = float(loss.value[0, 0])
            flat[j] = orig - eps
            tape.forward()
            f_minus = float(loss.value[0, 0])
            flat[j] = orig
            g_fd = (f_plus - f_minus) / (2.0 * eps)
            g = g_ad.reshape(-1)[j]
            rel = abs(g - g_fd) / max(1e-8, abs(g) + abs(g_fd))
            worst = max(worst, rel)
    tape.forward()
    return worst
