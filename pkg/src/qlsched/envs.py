"""Environment adapters that feed the Q-learning loop.

A learner env walks decision points: observe a state, pick a feasible
action, collect the reward and the state at the next decision point.
SimulationEnv wraps the discrete-event simulator (fresh workload per
episode); OracleEnv rolls out the enumerable oracle MDP. The state and
reward a SimulationEnv exposes come from a pluggable view so the
length-aware scheduler and the buffer-only baseline share the loop.
"""

from __future__ import annotations

import numpy as np

from . import mdp
from .simulate import Simulation
from .workload import DEFAULT_D_MAX, ScenarioConfig, generate_workload


class LengthAwareView:
    """State (B_1..B_K, Lclass_1..Lclass_K); reward from mdp.reward."""

    def __init__(self, range_mi: int = mdp.DEFAULT_RANGE_MI,
                 l_cap: int = mdp.DEFAULT_L_CAP):
        self.range_mi = range_mi
        self.l_cap = l_cap

    def state(self, cluster):
        return mdp.encode_state(cluster, self.range_mi, self.l_cap)

    def feasible(self, cluster):
        return cluster.feasible_vms()

    def reward(self, cluster, action):
        return float(mdp.reward(self.state(cluster), action, cluster.capacities()))


class FreeBufferView:
    """State = free-buffer vector; reward mixes free space and queueing delay.

    reward = w_buffer * (free fraction of the chosen VM)
           - w_wait * (its backlog normalized by the largest backlog).
    """

    def __init__(self, w_buffer: float = 0.5, w_wait: float = 0.5):
        if not (0.0 <= w_buffer <= 1.0 and 0.0 <= w_wait <= 1.0):
            raise ValueError("view weights must lie in [0, 1]")
        self.w_buffer = w_buffer
        self.w_wait = w_wait

    def state(self, cluster):
        return tuple(cluster.free_counts())

    def feasible(self, cluster):
        return cluster.feasible_vms()

    def reward(self, cluster, action):
        cap = cluster.vms[action].spec.buffer_capacity
        free_frac = cluster.vms[action].free_slots / cap
        backlogs = [cluster.backlog_seconds(i) for i in range(len(cluster.vms))]
        top = max(backlogs)
        delay = backlogs[action] / top if top > 0 else 0.0
        return self.w_buffer * free_frac - self.w_wait * delay


class SimulationEnv:
    """Q-learning episodes over freshly generated workloads.

    Each reset draws a new workload from the scenario's generator (seeded
    off the training stream, so evaluation workloads stay held out). The
    episode ends when the run has fully drained; completions that the
    final next_decision() sweep processes are included, so
    episode_metrics() sees the whole horizon.
    """

    def __init__(self, scenario: ScenarioConfig, vm_specs, view,
                 slot_seconds: float = 1.0, failure_ratio: float = 0.0,
                 max_attempts: int = 10, d_max: int = DEFAULT_D_MAX):
        self.scenario = scenario
        self.vm_specs = list(vm_specs)
        self.view = view
        self.slot_seconds = slot_seconds
        self.failure_ratio = failure_ratio
        self.max_attempts = max_attempts
        self.d_max = d_max
        self.num_actions = len(self.vm_specs) + 1  # VM indices plus defer
        self.sim: Simulation | None = None

    def reset(self, rng: np.random.Generator):
        workload = generate_workload(self.scenario, int(rng.integers(2**63)),
                                     self.d_max)
        failure_rng = np.random.default_rng(int(rng.integers(2**63)))
        self.sim = Simulation(self.vm_specs, workload,
                              slot_seconds=self.slot_seconds,
                              failure_ratio=self.failure_ratio,
                              max_attempts=self.max_attempts,
                              failure_rng=failure_rng)
        task = self.sim.next_decision()
        assert task is not None
        cluster = self.sim.cluster
        return self.view.state(cluster), self.view.feasible(cluster)

    def step(self, action: int, rng: np.random.Generator):
        cluster = self.sim.cluster
        reward_value = self.view.reward(cluster, action)
        self.sim.apply(action)
        task = self.sim.next_decision()
        terminal = task is None
        # next_decision only pauses when some buffer has space (or the run
        # drained, leaving everything free), so the action set is never empty
        state = self.view.state(cluster)
        return reward_value, state, self.view.feasible(cluster), terminal

    def episode_metrics(self):
        done = [r for r in self.sim.records if not r.aborted]
        if not done:
            return None
        waits = [r.finish_time - r.submit_time - r.exec_time for r in done]
        resp = [r.finish_time - r.submit_time for r in done]
        return {"avg_wait_s": float(np.mean(waits)),
                "avg_response_s": float(np.mean(resp))}


class OracleEnv:
    """Fixed-horizon rollouts of an OracleMdp, starting from the empty state."""

    def __init__(self, oracle: mdp.OracleMdp, horizon: int = 50):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.mdp = oracle
        self.horizon = horizon
        self.num_actions = oracle.num_vms + 1
        self._tuples: dict[int, tuple] = {}
        self._idx = None
        self._steps = 0

    def _tuple_of(self, idx: int) -> tuple:
        t = self._tuples.get(idx)
        if t is None:
            t = self.mdp.index_state(idx)
            self._tuples[idx] = t
        return t

    def reset(self, rng: np.random.Generator):
        self._idx = self.mdp.state_index((0,) * (2 * self.mdp.num_vms))
        self._steps = 0
        state = self._tuple_of(self._idx)
        return state, self.mdp.feasible_actions(state)

    def step(self, action: int, rng: np.random.Generator):
        state = self._tuple_of(self._idx)
        reward_value = self.mdp.reward_of(state, action)
        self._idx = self.mdp.sample_next(self._idx, action, rng)
        self._steps += 1
        nxt = self._tuple_of(self._idx)
        return (reward_value, nxt, self.mdp.feasible_actions(nxt),
                self._steps >= self.horizon)

    def episode_metrics(self):
        return None
