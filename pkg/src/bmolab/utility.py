"""Exponential utility and its truncations ``U_k`` that live on ``(-k-1, inf)``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def exp_utility(x):
    return -np.exp(-np.asarray(x, dtype=float))


@dataclass(frozen=True)
class TruncatedUtility:
    """``U_k = -exp(-x)`` on ``[-k, inf)`` glued C^1 to a log barrier at ``-k-1``.

    On ``(-k-1, -k)``: ``U_k(x) = -e^k (1 - log(x + k + 1))``.  The conjugate
    ``V_k(y) = sup_x [U_k(x) - x y]`` is

    * ``y log y - y`` for ``0 < y <= e^k``,
    * ``(k+1) y - e^k (2 - k + log y)`` for ``y > e^k``.
    """

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"truncation level must be >= 1, got {self.k}")

    @property
    def barrier(self) -> float:
        return -self.k - 1.0

    @property
    def knee(self) -> float:
        return -float(self.k)

    def U(self, x):
        x = np.asarray(x, dtype=float)
        k = self.k
        ek = math.exp(k)
        with np.errstate(divide="ignore", invalid="ignore"):
            barrier = -ek * (1.0 - np.log(x + k + 1.0))
        out = np.where(x >= -k, -np.exp(-np.maximum(x, -k)), barrier)
        return np.where(x > -k - 1.0, out, -np.inf)

    def dU(self, x):
        x = np.asarray(x, dtype=float)
        k = self.k
        with np.errstate(divide="ignore", invalid="ignore"):
            barrier = math.exp(k) / (x + k + 1.0)
        out = np.where(x >= -k, np.exp(-np.maximum(x, -k)), barrier)
        return np.where(x > -k - 1.0, out, np.inf)

    def d2U(self, x):
        x = np.asarray(x, dtype=float)
        k = self.k
        with np.errstate(divide="ignore", invalid="ignore"):
            barrier = -math.exp(k) / (x + k + 1.0) ** 2
        out = np.where(x >= -k, -np.exp(-np.maximum(x, -k)), barrier)
        return np.where(x > -k - 1.0, out, -np.inf)

    def V(self, y):
        y = np.asarray(y, dtype=float)
        k = self.k
        ek = math.exp(k)
        ly = np.log(np.where(y > 0, y, 1.0))
        low = y * ly - y
        high = (k + 1.0) * y - ek * (2.0 - k + ly)
        return np.where(y <= ek, low, high)

    def U_shifted(self, x):
        """``U_k(x - (k+1))``, a utility on the positive half-line."""
        return self.U(np.asarray(x, dtype=float) - (self.k + 1.0))

    def V_shifted(self, y):
        """Conjugate of :meth:`U_shifted`; equals ``V(y) - (k+1) y``."""
        y = np.asarray(y, dtype=float)
        return self.V(y) - (self.k + 1.0) * y


def make_truncated_utility(k: int) -> TruncatedUtility:
    return TruncatedUtility(int(k))
