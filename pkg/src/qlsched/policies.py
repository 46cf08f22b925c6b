"""Scheduling policies: four classic baselines, a buffer-only learner and
the length-aware Q-learning scheduler's evaluation wrapper.

Every select function takes the live cluster and returns a VM index, or
None when every buffer is full (the defer signal; the driver then parks
the task in the global queue and asks again at the next event).
"""

from __future__ import annotations

import numpy as np

from . import mdp
from .envs import FreeBufferView, LengthAwareView
from .qlearn import QTable, select_action

POLICY_NAMES = ("random", "fifo", "mixed", "greedy", "qsch", "qlearn")
LEARNING_POLICIES = ("qsch", "qlearn")


def random_select(cluster, rng: np.random.Generator):
    """Uniform draw over all VMs; full draws redraw over the free ones."""
    free = cluster.feasible_vms()
    if not free:
        return None
    k = len(cluster.vms)
    pick = int(rng.integers(k))
    if cluster.vms[pick].free_slots > 0:
        return pick
    return free[int(rng.integers(len(free)))]


def fifo_select(cluster, rng=None):
    """VM whose head-of-line work finishes earliest, among those with space."""
    free = cluster.feasible_vms()
    if not free:
        return None
    clock = cluster.clock
    return min(free, key=lambda i: (cluster.vms[i].available_at(clock), i))


def mixed_select(cluster, rng: np.random.Generator):
    """Random draw, corrected to the max-free-buffer VM when the draw is not one."""
    free_counts = cluster.free_counts()
    top = max(free_counts)
    if top == 0:
        return None
    pick = int(rng.integers(len(cluster.vms)))
    if free_counts[pick] == top:
        return pick
    return free_counts.index(top)  # lowest index among the maxima


def greedy_select(cluster, rng=None):
    """VM with the largest free-buffer count, lowest index on ties."""
    free_counts = cluster.free_counts()
    top = max(free_counts)
    if top == 0:
        return None
    return free_counts.index(top)


class QschAgent:
    """Buffer-state-only Q-learning baseline.

    The table is keyed by the free-buffer vector alone. Exploration is
    epsilon-greedy; exploitation breaks ties by lowest index (unlike the
    length-aware scheduler, whose ties are resolved at random).
    """

    def __init__(self, num_vms: int, w_buffer: float = 0.5, w_wait: float = 0.5,
                 table: QTable | None = None):
        self.view = FreeBufferView(w_buffer, w_wait)
        self.table = table if table is not None else QTable(num_vms + 1)

    def state_of(self, cluster):
        return self.view.state(cluster)

    def reward_of(self, cluster, action: int) -> float:
        return self.view.reward(cluster, action)

    def select(self, cluster, rng: np.random.Generator, epsilon: float = 0.0):
        actions = cluster.feasible_vms()
        if not actions:
            return None
        if epsilon > 0.0 and rng.random() < epsilon:
            return actions[int(rng.integers(len(actions)))]
        state = self.state_of(cluster)
        best = None
        best_q = -np.inf
        for a in actions:
            q = self.table.q(state, a)
            if q > best_q:
                best, best_q = a, q
        return best


class QlearnPolicy:
    """Greedy evaluation wrapper around a trained length-aware table."""

    def __init__(self, table: QTable, range_mi: int = mdp.DEFAULT_RANGE_MI,
                 l_cap: int = mdp.DEFAULT_L_CAP):
        self.table = table
        self.view = LengthAwareView(range_mi, l_cap)

    def __call__(self, cluster, rng: np.random.Generator):
        actions = cluster.feasible_vms()
        if not actions:
            return None
        state = self.view.state(cluster)
        return select_action(state, self.table, 0.0, rng, actions)
