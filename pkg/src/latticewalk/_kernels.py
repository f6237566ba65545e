"""Compiled inner loops for Monte Carlo trajectory evolution.

The hot path applies a per-trajectory sequence of precomputed momentum-space
step matrices to a batch of wavefunctions.  Falls back to a pure-numpy
implementation when numba is unavailable; both paths produce bit-identical
results (same operation order).
"""

from __future__ import annotations

import numpy as np

__all__ = ["advance_batch", "HAVE_NUMBA"]


def _advance_batch_numpy(psi, tables, idx):
    """Apply tables[idx[m, b]] to psi[m] pointwise in momentum, in order b."""
    for b in range(idx.shape[1]):
        sel = tables[idx[:, b]]  # (M, N, d, d)
        np.einsum("mnij,mnj->mni", sel, psi, out=psi, casting="no")
    return psi


try:
    from numba import njit

    HAVE_NUMBA = True

    @njit(cache=True, fastmath=False)
    def _advance_batch_numba(psi, tables, idx):  # pragma: no cover - compiled
        n_traj, n_grid, d = psi.shape
        n_blocks = idx.shape[1]
        tmp = np.empty(d, dtype=psi.dtype)
        for m in range(n_traj):
            for b in range(n_blocks):
                t = tables[idx[m, b]]
                if d == 2:
                    for n in range(n_grid):
                        a0 = psi[m, n, 0]
                        a1 = psi[m, n, 1]
                        psi[m, n, 0] = t[n, 0, 0] * a0 + t[n, 0, 1] * a1
                        psi[m, n, 1] = t[n, 1, 0] * a0 + t[n, 1, 1] * a1
                else:
                    for n in range(n_grid):
                        for i in range(d):
                            acc = t[n, i, 0] * psi[m, n, 0]
                            for j in range(1, d):
                                acc += t[n, i, j] * psi[m, n, j]
                            tmp[i] = acc
                        for i in range(d):
                            psi[m, n, i] = tmp[i]
        return psi

    def advance_batch(psi, tables, idx):
        if idx.shape[1] == 0:
            return psi
        return _advance_batch_numba(psi, tables, idx)

except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def advance_batch(psi, tables, idx):
        if idx.shape[1] == 0:
            return psi
        return _advance_batch_numpy(psi, tables, idx)
