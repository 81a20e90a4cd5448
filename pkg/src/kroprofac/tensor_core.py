"""Shape-level algebra: vectorization, Kronecker products, and the
Pitsianis-Van Loan block rearrangement.

The rearrangement maps a p1*p2 x q1*q2 matrix to a p2*q2 x p1*q1 matrix
whose rows are the vectorized p1 x q1 blocks of the input.  A sum of d
Kronecker products becomes a rank-d matrix under this map, which is what
the whole estimation pipeline rests on.

All functions are pure; indices in docstrings are 0-based.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass(frozen=True)
class Dims:
    """Response dimensions (p1, p2), predictor dimensions (q1, q2), and an
    optional sample size n."""

    p1: int
    p2: int
    q1: int
    q2: int
    n: int | None = None

    def __post_init__(self):
        for name in ("p1", "p2", "q1", "q2"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DimensionError(f"{name} must be a positive integer, got {v!r}")
        if self.n is not None and (int(self.n) != self.n or self.n < 1):
            raise DimensionError(f"n must be a positive integer, got {self.n!r}")

    @property
    def nu_shape(self):
        """Shape of the stacked coefficient matrix nu."""
        return (self.p1 * self.p2, self.q1 * self.q2)

    @property
    def rearranged_shape(self):
        """Shape of the rearranged coefficient matrix R(nu)."""
        return (self.p2 * self.q2, self.p1 * self.q1)


def vec(m):
    """Column-major vectorization: output[j*rows + i] = m[i, j]."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"vec expects a matrix, got ndim={m.ndim}")
    return m.flatten(order="F")


def vec_inv(v, p, q):
    """Inverse vectorization: reshape a length p*q vector to p x q,
    column by column, so that vec(vec_inv(v, p, q)) == v exactly."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size != p * q:
        raise DimensionError(f"vector of length {v.size} cannot fill a {p}x{q} matrix")
    return v.reshape((p, q), order="F")


def kron(a, b):
    """Kronecker product: block (i, j) of the result is a[i, j] * b."""
    return np.kron(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def rearrange(m, dims):
    """Block rearrangement R(m).

    Partition m (p1*p2 x q1*q2) into p1 x q1 blocks M_ij with i in [p2],
    j in [q2]; output row j*p2 + i is vec(M_ij)'.  Implemented as a single
    entry permutation (one gather pass, no block copies).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != dims.nu_shape:
        raise DimensionError(
            f"rearrange expects shape {dims.nu_shape}, got {m.shape}"
        )
    p1, p2, q1, q2 = dims.p1, dims.p2, dims.q1, dims.q2
    blocks = m.reshape(p2, p1, q2, q1)
    return np.ascontiguousarray(
        blocks.transpose(2, 0, 3, 1).reshape(p2 * q2, p1 * q1)
    )


def rearrange_inv(rm, dims):
    """Inverse of :func:`rearrange`: rearrange(rearrange_inv(rm)) == rm
    entrywise exactly."""
    rm = np.asarray(rm, dtype=np.float64)
    if rm.shape != dims.rearranged_shape:
        raise DimensionError(
            f"rearrange_inv expects shape {dims.rearranged_shape}, got {rm.shape}"
        )
    p1, p2, q1, q2 = dims.p1, dims.p2, dims.q1, dims.q2
    blocks = rm.reshape(q2, p2, q1, p1)
    return np.ascontiguousarray(
        blocks.transpose(1, 3, 0, 2).reshape(p1 * p2, q1 * q2)
    )
