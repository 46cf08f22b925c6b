"""Times the two Bellman-sweep implementations on a mid-size model.

Run:  python benchmarks/bench_backends.py

Both backends are imported directly, so the comparison works no matter
what QLSCHED_DISABLE_NUMBA is set to. The first compiled call is timed
separately because it includes JIT compilation.
"""

import time

import numpy as np

from qlsched.backends import (HAVE_NUMBA, bellman_sweep_numba,
                              bellman_sweep_numpy, greedy_rows_numba,
                              greedy_rows_numpy)
from qlsched.mdp import build_oracle_mdp


def time_fn(fn, *args, repeat=20):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    mdp = build_oracle_mdp(num_vms=4, buffer_capacity=5, num_classes=4)
    v = np.zeros(mdp.num_states)
    args = (v, mdp.act_indptr, mdp.row_reward, mdp.csr_indptr,
            mdp.csr_cols, mdp.csr_probs, 0.9)
    print(f"states: {mdp.num_states}, rows: {len(mdp.row_reward)}, "
          f"entries: {len(mdp.csr_probs)}")

    t_np = time_fn(bellman_sweep_numpy, *args)
    print(f"numpy sweep:           {t_np * 1e3:8.3f} ms")

    if not HAVE_NUMBA:
        print("numba not installed; skipping compiled backend")
        return

    t0 = time.perf_counter()
    out = bellman_sweep_numba(*args)
    print(f"numba first call:      {(time.perf_counter() - t0) * 1e3:8.3f} ms (includes compile)")
    t_nb = time_fn(bellman_sweep_numba, *args)
    print(f"numba sweep:           {t_nb * 1e3:8.3f} ms   ({t_np / t_nb:.1f}x vs numpy)")

    np.testing.assert_allclose(out, bellman_sweep_numpy(*args), rtol=1e-12)

    t_np_g = time_fn(greedy_rows_numpy, *args)
    greedy_rows_numba(*args)
    t_nb_g = time_fn(greedy_rows_numba, *args)
    print(f"numpy greedy extract:  {t_np_g * 1e3:8.3f} ms")
    print(f"numba greedy extract:  {t_nb_g * 1e3:8.3f} ms   ({t_np_g / t_nb_g:.1f}x vs numpy)")


if __name__ == "__main__":
    main()
