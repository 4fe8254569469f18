"""Nearest-neighbour queries with a mix of periodic and open axes."""
import numpy as np
from scipy.spatial import cKDTree


class PeriodicTree:
    """cKDTree where axis ``k`` is periodic with ``periods[k]`` (``None`` = open).

    Open axes get a box much larger than the data so that no wrap occurs.
    """

    def __init__(self, X, periods):
        X = np.asarray(X, float)
        X = X[:, None] if X.ndim == 1 else X
        periods = list(periods) if periods is not None else [None] * X.shape[1]
        self.lo = np.zeros(X.shape[1])
        self.box = np.zeros(X.shape[1])
        for k, T in enumerate(periods):
            if T:
                self.lo[k] = 0.0
                self.box[k] = T
            else:
                a, b = X[:, k].min(), X[:, k].max()
                span = max(b - a, 1.0)
                self.lo[k] = a - 2 * span
                self.box[k] = 5 * span
        self.periods = periods
        self.tree = cKDTree(self._map(X), boxsize=self.box)

    def _map(self, Y):
        Y = np.asarray(Y, float)
        Y = Y[:, None] if Y.ndim == 1 else Y
        Z = np.mod(Y - self.lo, self.box)
        Z[Z >= self.box] = 0.0
        return Z

    def query(self, Y, k=1):
        return self.tree.query(self._map(Y), k=k)
