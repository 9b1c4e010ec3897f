"""Dense kernels, losses, and gradient checking for the graph network.

Everything runs on float64 numpy arrays; sparse adjacencies switch to a CSR
product once graphs are large enough for sparsity to pay off. Operations are
pure and deterministic (fixed summation order) so repeated runs are
byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse

from .errors import LabelOutOfRange, NonFiniteGradient, ShapeMismatch

DENSE_NODE_LIMIT = 64


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit shape validation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatch(f"matmul needs 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def softmax(x: np.ndarray) -> np.ndarray:
    """Stable softmax: shifts by the max so exp never overflows."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max()
    e = np.exp(shifted)
    return e / e.sum()


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """-log p[label], with p clamped to 1e-12 so the log stays finite."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.shape[0]:
        raise LabelOutOfRange(f"label {label} outside {probs.shape[0]} classes")
    return float(-np.log(max(probs[label], 1e-12)))


def grad_check(
    f: Callable[[np.ndarray], tuple[float, np.ndarray]],
    params: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps a flat parameter vector to (loss, gradient). Each coordinate
    is perturbed by +/-eps; the relative error is |a-n|/max(|a|,|n|,1e-8).
    Raises NonFiniteGradient if either gradient goes non-finite.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps {eps} outside [1e-7, 1e-3]")
    params = np.asarray(params, dtype=np.float64)
    _, analytic = f(params)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != params.shape:
        raise ShapeMismatch(f"gradient shape {analytic.shape} != params {params.shape}")
    if not np.all(np.isfinite(analytic)):
        raise NonFiniteGradient("analytic gradient has non-finite entries")

    worst = 0.0
    for i in range(params.size):
        bump = np.zeros_like(params)
        bump.flat[i] = eps
        plus, _ = f(params + bump)
        minus, _ = f(params - bump)
        numeric = (plus - minus) / (2.0 * eps)
        if not np.isfinite(numeric):
            raise NonFiniteGradient(f"numeric gradient non-finite at index {i}")
        a = analytic.flat[i]
        worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-8))
    return worst


@dataclass(frozen=True)
class SparseAdjacency:
    """Symmetric normalized adjacency stored as sorted COO triples.

    Small graphs keep a cached dense matrix (the product is faster than CSR
    overhead below ~64 nodes); larger ones multiply through scipy CSR.
    """

    node_count: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    _dense: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_triples(
        cls, node_count: int, rows: np.ndarray, cols: np.ndarray, values: np.ndarray
    ) -> "SparseAdjacency":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (rows.shape == cols.shape == values.shape):
            raise ShapeMismatch("rows, cols, values must have equal length")
        if not np.all(np.isfinite(values)):
            raise NonFiniteGradient("adjacency values must be finite")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        dense = None
        if node_count < DENSE_NODE_LIMIT:
            dense = np.zeros((node_count, node_count))
            dense[rows, cols] = values
        return cls(node_count, rows, cols, values, dense)

    def to_dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense.copy()
        dense = np.zeros((self.node_count, self.node_count))
        dense[self.rows, self.cols] = self.values
        return dense

    def apply(self, x: np.ndarray) -> np.ndarray:
        """S @ x for a (node_count, k) feature matrix."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.node_count:
            raise ShapeMismatch(f"expected {self.node_count} rows, got {x.shape[0]}")
        if self._dense is not None:
            return self._dense @ x
        csr = sparse.csr_matrix(
            (self.values, (self.rows, self.cols)), shape=(self.node_count, self.node_count)
        )
        return np.asarray(csr @ x)
