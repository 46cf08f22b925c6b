"""Numeric kernels for value iteration, with optional numba acceleration.

The Bellman sweep over an enumerated MDP is the one genuinely hot loop
in the package (everything else is event-driven simulation). Two
interchangeable implementations live here: a vectorized pure-numpy one
and a numba @njit one. The active default is numba when it is importable
and the QLSCHED_DISABLE_NUMBA environment variable is unset; both
callables stay importable either way so benchmarks and parity tests can
compare them directly.

Layout shared by all kernels: states 0..S-1 each own a contiguous span
of action rows (act_indptr), every row has a reward and a CSR span of
(column, probability) transition entries (csr_indptr/csr_cols/csr_probs).
Every state has at least one row and every row at least one entry.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


def _env_disabled() -> bool:
    return os.environ.get("QLSCHED_DISABLE_NUMBA", "").strip().lower() in (
        "1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def bellman_sweep_numpy(v, act_indptr, row_reward, csr_indptr, csr_cols,
                        csr_probs, gamma):
    """One synchronous Bellman backup; returns the new value vector."""
    ev = np.add.reduceat(csr_probs * v[csr_cols], csr_indptr[:-1])
    q = row_reward + gamma * ev
    return np.maximum.reduceat(q, act_indptr[:-1])


def greedy_rows_numpy(v, act_indptr, row_reward, csr_indptr, csr_cols,
                      csr_probs, gamma):
    """Best row per state under v (lowest row index on exact ties)."""
    ev = np.add.reduceat(csr_probs * v[csr_cols], csr_indptr[:-1])
    q = row_reward + gamma * ev
    best_q = np.maximum.reduceat(q, act_indptr[:-1])
    counts = np.diff(act_indptr)
    is_max = q >= np.repeat(best_q, counts)
    rows = np.arange(q.size)
    sentinel = q.size
    return np.minimum.reduceat(np.where(is_max, rows, sentinel), act_indptr[:-1])


def _bellman_sweep_loop(v, act_indptr, row_reward, csr_indptr, csr_cols,
                        csr_probs, gamma):
    n_states = act_indptr.size - 1
    out = np.empty(n_states, dtype=np.float64)
    for s in range(n_states):
        best = -1e300
        for r in range(act_indptr[s], act_indptr[s + 1]):
            ev = 0.0
            for e in range(csr_indptr[r], csr_indptr[r + 1]):
                ev += csr_probs[e] * v[csr_cols[e]]
            q = row_reward[r] + gamma * ev
            if q > best:
                best = q
        out[s] = best
    return out


def _greedy_rows_loop(v, act_indptr, row_reward, csr_indptr, csr_cols,
                      csr_probs, gamma):
    n_states = act_indptr.size - 1
    out = np.empty(n_states, dtype=np.int64)
    for s in range(n_states):
        best = -1e300
        best_row = act_indptr[s]
        for r in range(act_indptr[s], act_indptr[s + 1]):
            ev = 0.0
            for e in range(csr_indptr[r], csr_indptr[r + 1]):
                ev += csr_probs[e] * v[csr_cols[e]]
            q = row_reward[r] + gamma * ev
            if q > best:
                best = q
                best_row = r
        out[s] = best_row
    return out


if HAVE_NUMBA:
    bellman_sweep_numba = njit(cache=True)(_bellman_sweep_loop)
    greedy_rows_numba = njit(cache=True)(_greedy_rows_loop)
else:
    bellman_sweep_numba = _bellman_sweep_loop
    greedy_rows_numba = _greedy_rows_loop

if USE_NUMBA:
    bellman_sweep = bellman_sweep_numba
    greedy_rows = greedy_rows_numba
else:
    bellman_sweep = bellman_sweep_numpy
    greedy_rows = greedy_rows_numpy
