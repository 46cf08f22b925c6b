"""Parity between the numpy, loop and numba value-iteration kernels."""

import os
import subprocess
import sys

import numpy as np
import pytest

from qlsched import backends
from qlsched.backends import (
    _bellman_sweep_loop,
    _greedy_rows_loop,
    bellman_sweep,
    bellman_sweep_numpy,
    greedy_rows,
    greedy_rows_numpy,
)
from qlsched.mdp import build_oracle_mdp


def random_instance(rng, n_states=None):
    """Random CSR layout in the shared kernel format."""
    s = n_states or int(rng.integers(2, 30))
    act_counts = rng.integers(1, 5, size=s)
    act_indptr = np.zeros(s + 1, dtype=np.int64)
    np.cumsum(act_counts, out=act_indptr[1:])
    rows = int(act_indptr[-1])
    entry_counts = rng.integers(1, 6, size=rows)
    csr_indptr = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(entry_counts, out=csr_indptr[1:])
    nnz = int(csr_indptr[-1])
    csr_cols = rng.integers(0, s, size=nnz).astype(np.int64)
    probs = rng.uniform(0.05, 1.0, size=nnz)
    for r in range(rows):
        sl = slice(csr_indptr[r], csr_indptr[r + 1])
        probs[sl] /= probs[sl].sum()
    row_reward = rng.uniform(-1.0, 1.0, size=rows)
    v = rng.normal(size=s)
    return v, act_indptr, row_reward, csr_indptr, csr_cols, probs


def oracle_arrays(mdp, rng):
    v = rng.normal(size=mdp.num_states)
    return (v, mdp.act_indptr, mdp.row_reward, mdp.csr_indptr, mdp.csr_cols,
            mdp.csr_probs)


def test_numpy_matches_loop_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(25):
        args = random_instance(rng)
        gamma = float(rng.uniform(0.0, 0.99))
        np.testing.assert_allclose(bellman_sweep_numpy(*args, gamma),
                                   _bellman_sweep_loop(*args, gamma),
                                   rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(greedy_rows_numpy(*args, gamma),
                                      _greedy_rows_loop(*args, gamma))


def test_numpy_matches_loop_on_real_mdp():
    rng = np.random.default_rng(1)
    mdp = build_oracle_mdp(num_vms=2, buffer_capacity=3, num_classes=2)
    for _ in range(5):
        args = oracle_arrays(mdp, rng)
        np.testing.assert_allclose(bellman_sweep_numpy(*args, 0.9),
                                   _bellman_sweep_loop(*args, 0.9),
                                   rtol=1e-12, atol=1e-12)
        np.testing.assert_array_equal(greedy_rows_numpy(*args, 0.9),
                                      _greedy_rows_loop(*args, 0.9))


def test_duplicate_transition_columns_sum():
    # two entries landing on the same column must both contribute
    act_indptr = np.array([0, 1], dtype=np.int64)
    csr_indptr = np.array([0, 2], dtype=np.int64)
    csr_cols = np.array([0, 0], dtype=np.int64)
    probs = np.array([0.6, 0.4])
    reward = np.array([1.0])
    v = np.array([2.0])
    expected = 1.0 + 0.9 * 2.0
    for fn in (bellman_sweep_numpy, _bellman_sweep_loop, bellman_sweep):
        out = fn(v, act_indptr, reward, csr_indptr, csr_cols, probs, 0.9)
        assert out[0] == pytest.approx(expected)


def test_greedy_ties_pick_lowest_row():
    # two identical rows for one state
    act_indptr = np.array([0, 2], dtype=np.int64)
    csr_indptr = np.array([0, 1, 2], dtype=np.int64)
    csr_cols = np.array([0, 0], dtype=np.int64)
    probs = np.array([1.0, 1.0])
    reward = np.array([0.5, 0.5])
    v = np.array([1.0])
    for fn in (greedy_rows_numpy, _greedy_rows_loop, greedy_rows):
        assert fn(v, act_indptr, reward, csr_indptr, csr_cols, probs, 0.9)[0] == 0


def test_active_dispatch_matches_numpy():
    rng = np.random.default_rng(2)
    for _ in range(10):
        args = random_instance(rng)
        np.testing.assert_allclose(bellman_sweep(*args, 0.9),
                                   bellman_sweep_numpy(*args, 0.9),
                                   rtol=1e-10, atol=1e-12)
        np.testing.assert_array_equal(greedy_rows(*args, 0.9),
                                      greedy_rows_numpy(*args, 0.9))


def test_numba_kernels_match_when_available():
    if not backends.HAVE_NUMBA:
        pytest.skip("numba not importable here")
    rng = np.random.default_rng(3)
    for _ in range(5):
        args = random_instance(rng, n_states=12)
        np.testing.assert_allclose(backends.bellman_sweep_numba(*args, 0.9),
                                   bellman_sweep_numpy(*args, 0.9),
                                   rtol=1e-10, atol=1e-12)
        np.testing.assert_array_equal(backends.greedy_rows_numba(*args, 0.9),
                                      greedy_rows_numpy(*args, 0.9))


def test_env_flag_disables_numba():
    code = (
        "from qlsched import backends\n"
        "assert backends.USE_NUMBA is False\n"
        "assert backends.bellman_sweep is backends.bellman_sweep_numpy\n"
        "assert backends.greedy_rows is backends.greedy_rows_numpy\n"
        "print('ok')\n"
    )
    env = dict(os.environ, QLSCHED_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "ok"


def test_env_flag_accepts_common_spellings():
    for value in ("true", "YES", " on "):
        env = dict(os.environ, QLSCHED_DISABLE_NUMBA=value)
        out = subprocess.run(
            [sys.executable, "-c",
             "from qlsched import backends; print(backends.USE_NUMBA)"],
            env=env, capture_output=True, text=True)
        assert out.stdout.strip() == "False"


def test_unset_flag_prefers_numba_when_present():
    env = {k: v for k, v in os.environ.items() if k != "QLSCHED_DISABLE_NUMBA"}
    code = (
        "from qlsched import backends\n"
        "print(backends.USE_NUMBA == backends.HAVE_NUMBA)\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.stdout.strip() == "True"
