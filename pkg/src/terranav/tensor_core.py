"""Dense rank-3 tensors with named-axis slicing, plus the scalar kernels
(log-cosh loss, Frobenius norm, depth-slice contraction) everything else
is built from.
"""

from __future__ import annotations

import numpy as np

HEIGHT = "height"
WIDTH = "width"
DEPTH = "depth"
AXES = (HEIGHT, WIDTH, DEPTH)

LOG2 = float(np.log(2.0))

# Above this magnitude log(cosh(x)) switches to |x| + log1p(exp(-2|x|)) - log 2.
# At |x| = 20 the discarded term is exp(-40), far below double resolution, yet
# the log1p form keeps the branch exact instead of overflowing cosh.
STABLE_THRESHOLD = 20.0


class DimensionError(ValueError):
    """A shape or index disagrees with what the operation requires."""


class NumericError(ArithmeticError):
    """A numeric kernel received or produced non-finite values."""


class Tensor3:
    """Immutable dense rank-3 array with axes named height, width, depth.

    Storage is row-major: entry (i, j, k) lives at flat offset
    ``((i * width) + j) * depth + k``.  Serialized payloads use exactly this
    element order, so checkpoints are portable across implementations.

    Instances are safe to share across threads: the wrapped array is made
    read-only at construction and every accessor returns read-only views.
    """

    __slots__ = ("_a",)

    def __init__(self, array):
        a = np.array(array, dtype=float)
        if a.ndim != 3:
            raise DimensionError(f"Tensor3 requires a rank-3 array, got rank {a.ndim}")
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        self._a = a

    @classmethod
    def zeros(cls, height, width, depth):
        return cls(np.zeros((height, width, depth)))

    @classmethod
    def from_flat(cls, flat, height, width, depth):
        flat = np.asarray(flat, dtype=float)
        if flat.size != height * width * depth:
            raise DimensionError(
                f"flat payload has {flat.size} entries, expected "
                f"{height}*{width}*{depth}"
            )
        return cls(flat.reshape(height, width, depth))

    @property
    def data(self) -> np.ndarray:
        """Read-only (height, width, depth) ndarray view."""
        return self._a

    @property
    def shape(self):
        return self._a.shape

    @property
    def height(self) -> int:
        return self._a.shape[0]

    @property
    def width(self) -> int:
        return self._a.shape[1]

    @property
    def depth(self) -> int:
        return self._a.shape[2]

    @property
    def flat(self) -> np.ndarray:
        """The documented row-major element order as a 1-D view."""
        return self._a.reshape(-1)

    def size_along(self, axis) -> int:
        return self._a.shape[AXES.index(_check_axis(axis))]

    def unstack(self, axis, index) -> np.ndarray:
        """Return the 2-D slice at ``index`` along the named axis.

        Slices are read-only views; use :meth:`stack` to rebuild a tensor
        from modified slices.
        """
        axis = _check_axis(axis)
        n = self.size_along(axis)
        if not 0 <= index < n:
            raise DimensionError(f"index {index} out of range for {axis} of size {n}")
        if axis == HEIGHT:
            return self._a[index, :, :]
        if axis == WIDTH:
            return self._a[:, index, :]
        return self._a[:, :, index]

    def unstack_all(self, axis):
        """All slices along the named axis, in index order."""
        return [self.unstack(axis, i) for i in range(self.size_along(axis))]

    @classmethod
    def stack(cls, axis, mats) -> "Tensor3":
        """Rebuild a tensor from 2-D slices along the named axis.

        Inverse of :meth:`unstack_all`: stacking the slices obtained from a
        tensor along the same axis reproduces it exactly.
        """
        axis = _check_axis(axis)
        arr = np.stack([np.asarray(m, dtype=float) for m in mats], axis=AXES.index(axis))
        if arr.ndim != 3:
            raise DimensionError("stack expects 2-D slices")
        return cls(arr)

    def __repr__(self):
        return f"Tensor3(height={self.height}, width={self.width}, depth={self.depth})"


def _check_axis(axis):
    if axis not in AXES:
        raise DimensionError(f"unknown axis {axis!r}, expected one of {AXES}")
    return axis


def contract(w: Tensor3, x) -> np.ndarray:
    """Depth-slice contraction: ``out = sum_k W(k) @ x[:, k]``.

    ``w`` has shape (out_dim, in_dim, depth) and ``x`` pairs one in_dim
    column with each depth slice, so the result is a length out_dim vector.
    This is the unique bilinear map consistent with those shapes.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DimensionError(f"contract input must be 2-D, got rank {x.ndim}")
    if x.shape != (w.width, w.depth):
        raise DimensionError(
            f"contract input shape {x.shape} does not match tensor "
            f"({w.width}, {w.depth})"
        )
    return np.einsum("ijk,jk->i", w.data, x)


def log_cosh(values) -> np.ndarray:
    """Elementwise log(cosh(x)) with an overflow-safe branch for large |x|."""
    x = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericError("log_cosh received non-finite input")
    ax = np.abs(x)
    small = ax <= STABLE_THRESHOLD
    # evaluate cosh only where it cannot overflow
    safe = np.where(small, x, 0.0)
    out = np.where(small, np.log(np.cosh(safe)), ax + np.log1p(np.exp(-2.0 * ax)) - LOG2)
    return out


def log_cosh_sum(m) -> float:
    """Sum of log(cosh(entry)) over all entries of ``m``."""
    return float(np.sum(log_cosh(m)))


def log_cosh_grad(m) -> np.ndarray:
    """Exact elementwise derivative of log(cosh(x)), which is tanh(x)."""
    x = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericError("log_cosh_grad received non-finite input")
    return np.tanh(x)


def fro_norm(m) -> float:
    """Frobenius norm sqrt(sum of squared entries); plain L2 for vectors."""
    return float(np.sqrt(np.sum(np.square(np.asarray(m, dtype=float)))))
