"""State encoding, reward shaping and the enumerable oracle MDP.

The scheduler's state is the vector (B_1..B_K, L-class_1..L-class_K):
per-VM occupied buffer counts followed by per-VM discretized total
assigned lengths (class = floor(total / range), capped). The reward for
assigning to VM a in state s is +1 when a has the fewest occupied
buffers, otherwise -1 when it carries the largest length class,
otherwise 0; the +1 case wins when both apply.

The oracle MDP is a small abstract model of those dynamics (one arrival
per epoch, geometric service) used to certify the learner's policy
against exact value iteration. It is not a timing model.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import backends
from .errors import CapacityError

DEFAULT_RANGE_MI = 10_000
DEFAULT_L_CAP = 40
MAX_ORACLE_STATES = 100_000


def discretize_length(total_mi: int, range_mi: int = DEFAULT_RANGE_MI,
                      l_cap: int = DEFAULT_L_CAP) -> int:
    """Length class of a total assigned length: floor(total/range), capped."""
    if range_mi <= 0:
        raise ValueError("range_mi must be > 0")
    if total_mi < 0:
        raise ValueError("total_mi must be >= 0")
    if l_cap < 0:
        raise ValueError("l_cap must be >= 0")
    return min(int(total_mi // range_mi), l_cap)


def encode_state(cluster, range_mi: int = DEFAULT_RANGE_MI,
                 l_cap: int = DEFAULT_L_CAP) -> tuple:
    """Observed scheduler state of a cluster, as a flat tuple of 2K ints."""
    b = cluster.occupied_counts()
    l = cluster.assigned_lengths()
    return tuple(b) + tuple(discretize_length(x, range_mi, l_cap) for x in l)


def split_state(state: tuple) -> tuple[tuple, tuple]:
    k = len(state) // 2
    return state[:k], state[k:]


def feasible_vms_of_state(state: tuple, capacities) -> list[int]:
    """VM indices whose buffer is below capacity in the given state."""
    b, _ = split_state(state)
    if np.isscalar(capacities):
        capacities = [capacities] * len(b)
    return [i for i, (bi, ni) in enumerate(zip(b, capacities)) if bi < ni]


def reward(state: tuple, action: int, capacities) -> int:
    """Immediate reward for assigning the arriving task to `action`.

    +1 when the VM has minimal occupied-buffer count (this wins), else -1
    when it has the maximal length class, else 0. Raises on infeasible
    actions (buffer at capacity).
    """
    b, l = split_state(state)
    if np.isscalar(capacities):
        capacities = [capacities] * len(b)
    if not (0 <= action < len(b)):
        raise ValueError(f"action {action} out of range for {len(b)} VMs")
    if b[action] >= capacities[action]:
        raise ValueError(f"action {action} infeasible: buffer at capacity")
    if b[action] == min(b):
        return 1
    if l[action] == max(l):
        return -1
    return 0


def default_service_probability(mips: float, slot_seconds: float,
                                mean_task_length: float) -> float:
    """Per-epoch head-task completion probability matching mean service rate."""
    return min(1.0, mips * slot_seconds / mean_task_length)


@dataclass
class OracleMdp:
    """Enumerated abstract scheduling MDP in flattened row/CSR form.

    Action ids 0..K-1 assign the arriving task to that VM; action id K is
    the forced defer used by all-buffers-full states (reward 0, no
    arrival admitted). Rows for state s live at
    act_indptr[s]:act_indptr[s+1]; act_action maps row to action id.
    """

    num_vms: int
    buffer_capacity: int
    num_classes: int
    p_c: float
    gamma: float
    arrival_probs: np.ndarray
    act_indptr: np.ndarray
    act_action: np.ndarray
    row_reward: np.ndarray
    csr_indptr: np.ndarray
    csr_cols: np.ndarray
    csr_probs: np.ndarray
    _row_cum: list = field(default=None, repr=False)

    @property
    def num_states(self) -> int:
        return self.act_indptr.size - 1

    @property
    def defer_action(self) -> int:
        return self.num_vms

    @property
    def shape(self) -> tuple:
        k, n, c = self.num_vms, self.buffer_capacity, self.num_classes
        return (n + 1,) * k + (c,) * k

    def state_index(self, state: tuple) -> int:
        return int(np.ravel_multi_index(state, self.shape))

    def index_state(self, idx: int) -> tuple:
        return tuple(int(x) for x in np.unravel_index(idx, self.shape))

    def feasible_actions(self, state: tuple) -> list[int]:
        """VM actions open in `state`; [defer] when every buffer is full."""
        b = state[: self.num_vms]
        acts = [i for i, bi in enumerate(b) if bi < self.buffer_capacity]
        return acts if acts else [self.defer_action]

    def row_of(self, idx: int, action: int) -> int:
        for r in range(self.act_indptr[idx], self.act_indptr[idx + 1]):
            if self.act_action[r] == action:
                return int(r)
        raise ValueError(f"action {action} infeasible in state {self.index_state(idx)}")

    def kernel_row(self, state: tuple, action: int):
        """Transition distribution of (state, action) as (columns, probs)."""
        r = self.row_of(self.state_index(state), action)
        sl = slice(self.csr_indptr[r], self.csr_indptr[r + 1])
        return self.csr_cols[sl], self.csr_probs[sl]

    def reward_of(self, state: tuple, action: int) -> float:
        return float(self.row_reward[self.row_of(self.state_index(state), action)])

    def sample_next(self, idx: int, action: int, rng) -> int:
        """Draw a successor state index for Q-learning rollouts."""
        if self._row_cum is None:
            self._row_cum = [None] * self.row_reward.size
        r = self.row_of(idx, action)
        cum = self._row_cum[r]
        if cum is None:
            sl = slice(self.csr_indptr[r], self.csr_indptr[r + 1])
            cum = np.cumsum(self.csr_probs[sl])
            self._row_cum[r] = cum
        j = int(np.searchsorted(cum, rng.random(), side="right"))
        j = min(j, cum.size - 1)  # guard the 1.0-boundary draw
        return int(self.csr_cols[self.csr_indptr[r] + j])

    def reachable_from_empty(self) -> np.ndarray:
        """Bool mask of states reachable from all-zeros under any actions."""
        mask = np.zeros(self.num_states, dtype=bool)
        start = self.state_index((0,) * (2 * self.num_vms))
        mask[start] = True
        frontier = deque([start])
        while frontier:
            s = frontier.popleft()
            for r in range(self.act_indptr[s], self.act_indptr[s + 1]):
                for e in range(self.csr_indptr[r], self.csr_indptr[r + 1]):
                    if self.csr_probs[e] <= 0.0:
                        continue
                    nxt = int(self.csr_cols[e])
                    if not mask[nxt]:
                        mask[nxt] = True
                        frontier.append(nxt)
        return mask


def build_oracle_mdp(num_vms: int, buffer_capacity: int, num_classes: int,
                     arrival_probs=None, p_c: float = 0.5, gamma: float = 0.9,
                     max_states: int = MAX_ORACLE_STATES) -> OracleMdp:
    """Enumerate the abstract scheduling MDP.

    Per decision epoch: one task with length class c ~ arrival_probs is
    assigned by the action, then every VM that was busy before the
    assignment completes its head with probability p_c, independently. A
    departure at VM k removes the state-average length share
    floor(l_k / b_k). Kernel rows are exact products of those independent
    events and sum to 1.
    """
    k, n, c = num_vms, buffer_capacity, num_classes
    if k < 1 or n < 1 or c < 1:
        raise ValueError("need num_vms, buffer_capacity, num_classes >= 1")
    if not (0.0 <= p_c <= 1.0):
        raise ValueError("p_c must be in [0, 1]")
    if not (0.0 <= gamma < 1.0):
        raise ValueError("gamma must be in [0, 1)")
    if arrival_probs is None:
        arrival_probs = np.full(c, 1.0 / c)
    arrival_probs = np.asarray(arrival_probs, dtype=float)
    if arrival_probs.shape != (c,) or np.any(arrival_probs < 0):
        raise ValueError("arrival_probs must be a non-negative vector of len num_classes")
    if abs(float(arrival_probs.sum()) - 1.0) > 1e-9:
        raise ValueError("arrival_probs must sum to 1 within 1e-9")

    num_states = (n + 1) ** k * c**k
    if num_states > max_states:
        raise CapacityError(
            f"{num_states} states exceed the enumeration limit {max_states}")

    shape = (n + 1,) * k + (c,) * k
    digits = np.array(np.unravel_index(np.arange(num_states), shape))
    b = digits[:k].T.astype(np.int64)          # (S, K) occupied counts
    l = digits[k:].T.astype(np.int64)          # (S, K) length classes
    busy = b >= 1
    avg = np.where(busy, l // np.maximum(b, 1), 0)

    feas = b < n                               # (S, K)
    n_actions = feas.sum(axis=1)
    n_rows_per_state = np.where(n_actions > 0, n_actions, 1)
    act_indptr = np.zeros(num_states + 1, dtype=np.int64)
    np.cumsum(n_rows_per_state, out=act_indptr[1:])
    num_rows = int(act_indptr[-1])

    # rank of action a among the feasible actions of each state
    rank = np.cumsum(feas, axis=1) - feas
    act_action = np.full(num_rows, k, dtype=np.int64)  # defer unless overwritten
    for a in range(k):
        rows = act_indptr[:-1][feas[:, a]] + rank[feas[:, a], a]
        act_action[rows] = a

    row_reward = np.zeros(num_rows, dtype=np.float64)
    b_min = b.min(axis=1)
    l_max = l.max(axis=1)
    for a in range(k):
        rows = act_indptr[:-1][feas[:, a]] + rank[feas[:, a], a]
        r_a = np.where(b[feas[:, a], a] == b_min[feas[:, a]], 1.0,
                       np.where(l[feas[:, a], a] == l_max[feas[:, a]], -1.0, 0.0))
        row_reward[rows] = r_a

    # transition entries: per (action, departure mask, arrival class), all
    # states at once; impossible outcomes (departure at an idle VM) get
    # probability 0 and are filtered out below.
    ent_rows, ent_cols, ent_probs = [], [], []
    masks = [np.array([(m >> j) & 1 for j in range(k)], dtype=np.int64)
             for m in range(2**k)]

    def mask_prob(depart):
        w = np.ones(num_states)
        for j in range(k):
            if depart[j]:
                w = w * np.where(busy[:, j], p_c, 0.0)
            else:
                w = w * np.where(busy[:, j], 1.0 - p_c, 1.0)
        return w

    for a in range(k):
        sel = feas[:, a]
        if not np.any(sel):
            continue
        rows_a = act_indptr[:-1][sel] + rank[sel, a]
        for depart in masks:
            w = mask_prob(depart)[sel]
            if not np.any(w > 0):
                continue
            b2 = b[sel] + np.eye(k, dtype=np.int64)[a][None, :] - depart[None, :] * busy[sel]
            for ci in range(c):
                p = w * arrival_probs[ci]
                keep = p > 0
                if not np.any(keep):
                    continue
                l_arr = l[sel].copy()
                l_arr[:, a] = np.minimum(l_arr[:, a] + ci, c - 1)
                l2 = np.maximum(l_arr - avg[sel] * depart[None, :], 0)
                cols = np.ravel_multi_index(
                    tuple(b2[keep].T) + tuple(l2[keep].T), shape)
                ent_rows.append(rows_a[keep])
                ent_cols.append(cols)
                ent_probs.append(p[keep])

    # defer rows: no arrival, departures only
    full = ~feas.any(axis=1)
    if np.any(full):
        rows_d = act_indptr[:-1][full]
        for depart in masks:
            w = mask_prob(depart)[full]
            keep = w > 0
            if not np.any(keep):
                continue
            b2 = b[full] - depart[None, :] * busy[full]
            l2 = np.maximum(l[full] - avg[full] * depart[None, :], 0)
            cols = np.ravel_multi_index(
                tuple(b2[keep].T) + tuple(l2[keep].T), shape)
            ent_rows.append(rows_d[keep])
            ent_cols.append(cols)
            ent_probs.append(w[keep])

    rows = np.concatenate(ent_rows)
    cols = np.concatenate(ent_cols)
    probs = np.concatenate(ent_probs)
    order = np.argsort(rows, kind="stable")
    rows, cols, probs = rows[order], cols[order], probs[order]
    csr_indptr = np.zeros(num_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_rows), out=csr_indptr[1:])
    assert np.all(np.diff(csr_indptr) > 0), "every row needs transition mass"

    return OracleMdp(
        num_vms=k, buffer_capacity=n, num_classes=c, p_c=p_c, gamma=gamma,
        arrival_probs=arrival_probs, act_indptr=act_indptr,
        act_action=act_action, row_reward=row_reward, csr_indptr=csr_indptr,
        csr_cols=cols.astype(np.int64), csr_probs=probs.astype(np.float64))


@dataclass
class ValueIterationResult:
    values: np.ndarray
    policy: np.ndarray      # action id per state (num_vms means defer)
    deltas: list
    sweeps: int


def value_iteration(mdp: OracleMdp, tol: float = 1e-8,
                    max_sweeps: int = 100_000) -> ValueIterationResult:
    """Solve the MDP to max-norm tolerance tol; ties go to the lowest action."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    v = np.zeros(mdp.num_states, dtype=np.float64)
    deltas = []
    args = (mdp.act_indptr, mdp.row_reward, mdp.csr_indptr, mdp.csr_cols,
            mdp.csr_probs, mdp.gamma)
    for sweep in range(1, max_sweeps + 1):
        v_new = backends.bellman_sweep(v, *args)
        delta = float(np.max(np.abs(v_new - v)))
        deltas.append(delta)
        v = v_new
        if delta <= tol:
            break
    else:
        raise RuntimeError(f"value iteration did not reach tol={tol} "
                           f"in {max_sweeps} sweeps")
    best_rows = backends.greedy_rows(v, *args)
    policy = mdp.act_action[best_rows]
    return ValueIterationResult(values=v, policy=policy, deltas=deltas,
                                sweeps=len(deltas))


def action_values(mdp: OracleMdp, values: np.ndarray) -> np.ndarray:
    """Per-row q(s,a) = r + gamma * E[v(s')] for the given value vector."""
    ev = np.add.reduceat(mdp.csr_probs * values[mdp.csr_cols],
                         mdp.csr_indptr[:-1])
    return mdp.row_reward + mdp.gamma * ev
