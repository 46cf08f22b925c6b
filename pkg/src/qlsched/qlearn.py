"""Tabular Q-learning with visit-count learning rates.

The table is sparse: a state's row materializes on first touch. The
learning rate for the t-th update of a pair is 1 / (1 + visits^0.65),
exploration is epsilon-greedy with a linearly decaying epsilon, and
training stops when the greedy action of every visited state survives a
whole cycle unchanged or when the repeater budget runs out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NoFeasibleActionError

DEFAULT_LR_EXPONENT = 0.65


@dataclass
class LearnerConfig:
    gamma: float = 0.9
    epsilon0: float = 1.0
    total_cycles: int = 10_000
    repeater_threshold: int = 500
    lr_exponent: float = DEFAULT_LR_EXPONENT

    def __post_init__(self):
        if not (0.0 < self.gamma < 1.0):
            raise ConfigError("gamma must be in (0, 1)")
        if not (0.0 <= self.epsilon0 <= 1.0):
            raise ConfigError("epsilon0 must be in [0, 1]")
        if self.total_cycles < 1:
            raise ConfigError("total_cycles must be a positive integer")
        if self.repeater_threshold < 1:
            raise ConfigError("repeater_threshold must be a positive integer")
        if self.lr_exponent <= 0:
            raise ConfigError("lr_exponent must be > 0")


def learning_rate(visits: int, exponent: float = DEFAULT_LR_EXPONENT) -> float:
    """Step size for the update following `visits` prior updates of a pair."""
    if visits < 0:
        raise ValueError("visits must be >= 0")
    return 1.0 / (1.0 + visits**exponent)


def decay_epsilon(epsilon0: float, cycle: int, total_cycles: int) -> float:
    """Linear decay epsilon0 * (1 - cycle/total_cycles), clamped at 0."""
    if cycle < 0:
        raise ValueError("cycle must be >= 0")
    if total_cycles < 1:
        raise ValueError("total_cycles must be >= 1")
    return max(0.0, epsilon0 * (1.0 - cycle / total_cycles))


class QTable:
    """Sparse q/visit store keyed by state tuples.

    num_actions is the full action-slot count (VM indices plus the defer
    slot). greedy_map holds the lowest-index greedy action of every state
    that has received at least one update; it is maintained incrementally
    so the convergence check stays cheap.
    """

    def __init__(self, num_actions: int):
        self.num_actions = num_actions
        self._q: dict = {}
        self._visits: dict = {}
        self._feasible: dict = {}
        self.greedy_map: dict = {}

    def __len__(self):
        return len(self._q)

    def states(self):
        return self._q.keys()

    def ensure(self, state, feasible):
        """Materialize a state row; records its feasible action set."""
        if state not in self._q:
            self._q[state] = [0.0] * self.num_actions
            self._visits[state] = [0] * self.num_actions
            self._feasible[state] = tuple(feasible)

    def feasible(self, state):
        return self._feasible.get(state)

    def q(self, state, action) -> float:
        row = self._q.get(state)
        return 0.0 if row is None else row[action]

    def visits(self, state, action) -> int:
        row = self._visits.get(state)
        return 0 if row is None else row[action]

    def max_q(self, state, actions) -> float:
        """max over the given actions; unseen states read as all zeros."""
        row = self._q.get(state)
        if row is None:
            return 0.0
        return max(row[a] for a in actions)

    def greedy(self, state, actions=None) -> int:
        """Lowest-index argmax over the state's feasible actions."""
        if actions is None:
            actions = self._feasible[state]
        row = self._q.get(state)
        if row is None:
            return actions[0]
        best = max(row[a] for a in actions)
        for a in actions:
            if row[a] == best:
                return a
        raise AssertionError("unreachable")


def select_action(state, table: QTable, epsilon: float,
                  rng: np.random.Generator, actions) -> int:
    """Epsilon-greedy action choice over the feasible actions.

    With probability epsilon the action is uniform over `actions`;
    otherwise the q-argmax, with exact ties broken uniformly at random.
    Raises NoFeasibleActionError when `actions` is empty (the caller must
    defer the task).
    """
    actions = list(actions)
    if not actions:
        raise NoFeasibleActionError("every VM buffer is full")
    if len(actions) == 1:
        return actions[0]
    if epsilon > 0.0 and rng.random() < epsilon:
        return actions[int(rng.integers(len(actions)))]
    row = table._q.get(state)
    if row is None:
        return actions[int(rng.integers(len(actions)))]
    best = max(row[a] for a in actions)
    ties = [a for a in actions if row[a] == best]
    if len(ties) == 1:
        return ties[0]
    return ties[int(rng.integers(len(ties)))]


def update_q(table: QTable, state, action, reward_value: float, next_state,
             next_actions, gamma: float,
             lr_exponent: float = DEFAULT_LR_EXPONENT) -> float:
    """One Q-learning backup; returns the new q(state, action).

    The step size comes from the pair's visit count before this update,
    the bootstrap is the max over the next state's feasible actions, and
    the visit count then increments. The state must have been ensure()d.
    """
    beta = learning_rate(table._visits[state][action], lr_exponent)
    target = reward_value + gamma * table.max_q(next_state, next_actions)
    row = table._q[state]
    new_q = (1.0 - beta) * row[action] + beta * target
    row[action] = new_q
    table._visits[state][action] += 1
    if __debug__:
        bound = 1.0 / (1.0 - gamma) + 1e-9
        assert abs(new_q) <= bound, f"|q|={new_q} escapes the reward bound"
    table.greedy_map[state] = table.greedy(state)
    return new_q


@dataclass
class ConvergenceMonitor:
    repeater: int = 0
    best_action_snapshot: dict | None = None


def check_convergence(monitor: ConvergenceMonitor, table: QTable,
                      threshold: int) -> bool:
    """End-of-cycle stop test.

    Stops when the greedy action of every visited state matches the
    previous cycle's snapshot (newly visited states count as mismatches)
    or when the repeater exceeds the threshold. Otherwise refreshes the
    snapshot and increments the repeater.
    """
    current = table.greedy_map
    if monitor.best_action_snapshot is not None and monitor.best_action_snapshot == current:
        return True
    if monitor.repeater > threshold:
        return True
    monitor.best_action_snapshot = dict(current)
    monitor.repeater += 1
    return False


@dataclass
class TrainResult:
    table: QTable
    cycles_run: int
    stop_reason: str                 # "stable", "budget" or "schedule"
    trace: list = field(default_factory=list)

    def greedy_policy(self):
        """Evaluation-time policy: argmax q with uniform random tie-break."""
        table = self.table

        def policy(state, actions, rng):
            return select_action(state, table, 0.0, rng, actions)

        return policy


def train(env, cfg: LearnerConfig, seed) -> TrainResult:
    """Run epsilon-greedy Q-learning episodes until convergence.

    env protocol: num_actions; reset(rng) -> (state, actions);
    step(action, rng) -> (reward, next_state, next_actions, terminal);
    episode_metrics() -> dict or None, called after each episode for the
    convergence trace.
    """
    rng = np.random.default_rng(seed)
    table = QTable(env.num_actions)
    monitor = ConvergenceMonitor()
    trace = []
    stop_reason = "schedule"
    cycles = 0
    for cycle in range(cfg.total_cycles):
        epsilon = decay_epsilon(cfg.epsilon0, cycle, cfg.total_cycles)
        state, actions = env.reset(rng)
        while True:
            table.ensure(state, actions)
            action = select_action(state, table, epsilon, rng, actions)
            reward_value, next_state, next_actions, terminal = env.step(action, rng)
            update_q(table, state, action, reward_value, next_state,
                     next_actions, cfg.gamma, cfg.lr_exponent)
            state, actions = next_state, next_actions
            if terminal:
                break
        cycles = cycle + 1
        metrics = env.episode_metrics()
        row = {"cycle": cycle, "epsilon": epsilon,
               "states_seen": len(table)}
        if metrics:
            row.update(metrics)
        trace.append(row)
        if check_convergence(monitor, table, cfg.repeater_threshold):
            stop_reason = "budget" if monitor.repeater > cfg.repeater_threshold else "stable"
            break
    return TrainResult(table=table, cycles_run=cycles,
                       stop_reason=stop_reason, trace=trace)


def export_qtable(table: QTable) -> str:
    """CSV dump of the learned entries: state,action,q,visits.

    States render as dash-joined (b, l) vectors. Only pairs that
    received at least one update appear; rows sort by state then action.
    """
    lines = ["state,action,q,visits"]
    for state in sorted(table.states()):
        for action in range(table.num_actions):
            v = table._visits[state][action]
            if v == 0:
                continue
            key = "-".join(str(x) for x in state)
            lines.append(f"{key},{action},{table._q[state][action]:.9g},{v}")
    return "\n".join(lines) + "\n"
