from __future__ import annotations

import numpy as np


class MatrixOp:
    """Linear generator z' = A z stored through its matrix A.

    As operators on coordinate functions, L_A L_B has matrix B A, so
    ``a @ b`` multiplies in reversed order.
    """

    __slots__ = ("m",)

    def __init__(self, m):
        m = np.array(m, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("MatrixOp needs a square matrix")
        self.m = m

    @property
    def dim(self) -> int:
        return self.m.shape[0]

    def _check(self, other):
        if not isinstance(other, MatrixOp):
            raise TypeError("expected MatrixOp")
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch {self.dim} vs {other.dim}")

    def __add__(self, other):
        self._check(other)
        return MatrixOp(self.m + other.m)

    def __sub__(self, other):
        self._check(other)
        return MatrixOp(self.m - other.m)

    def __neg__(self):
        return MatrixOp(-self.m)

    def __mul__(self, s):
        return MatrixOp(self.m * s)

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check(other)
        return MatrixOp(other.m @ self.m)

    def zero_like(self):
        return MatrixOp(np.zeros_like(self.m))

    def norm(self) -> float:
        return float(np.max(np.abs(self.m))) if self.m.size else 0.0

    def real(self) -> np.ndarray:
        return self.m.real.copy()

    def __repr__(self):
        return f"MatrixOp({self.m!r})"
