"""Hybrid-time simulation driver.

Arrivals land at discrete slot boundaries (slot n at n * slot_seconds);
service runs in continuous seconds. Tasks wait in a global FCFS queue
until some VM buffer has space; the scheduling policy is consulted once
per admission, at slot boundaries and immediately after completion
events that free buffer space. Failed attempts requeue to the tail of
the global queue and are rescheduled like fresh submissions.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .cluster import DEFAULT_MAX_ATTEMPTS, ClusterState, VmSpec, maybe_fail
from .workload import TaskSpec


class Simulation:
    """Single run of one workload against one cluster under one policy.

    The caller drives it: next_decision() advances time until a task can
    be admitted somewhere (returning that task) or the run is fully
    drained (returning None); apply(vm_index) admits the pending task.
    """

    def __init__(self, vm_specs: list[VmSpec], workload: list[TaskSpec],
                 slot_seconds: float = 1.0, failure_ratio: float = 0.0,
                 max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                 failure_rng: np.random.Generator | None = None):
        if slot_seconds <= 0:
            raise ValueError("slot_seconds must be > 0")
        self.cluster = ClusterState(vm_specs)
        self.slot_seconds = slot_seconds
        self.failure_ratio = failure_ratio
        self.max_attempts = max_attempts
        self.failure_rng = failure_rng if failure_rng is not None else np.random.default_rng(0)
        self._pending = deque(sorted(workload, key=lambda t: (t.arrival_slot, t.id)))
        self._queue: deque[TaskSpec] = deque()
        self._attempts: dict[int, int] = {}
        self.records = []

    # -- state checks -------------------------------------------------------

    @property
    def global_queue_length(self) -> int:
        return len(self._queue)

    def all_assigned(self) -> bool:
        """True once every submitted task sits in some VM buffer (or is done)."""
        return not self._pending and not self._queue

    def finished(self) -> bool:
        return self.all_assigned() and self.cluster.is_idle()

    # -- driving ------------------------------------------------------------

    def next_decision(self):
        """Advance until a task is admittable; return it, or None when drained."""
        while True:
            if self._queue and self.cluster.has_free_buffer():
                return self._queue[0]
            t_event = self.cluster.next_event_time()
            t_slot = (self._pending[0].arrival_slot * self.slot_seconds
                      if self._pending else None)
            if t_event is not None and (t_slot is None or t_event <= t_slot):
                self._process_event()
            elif t_slot is not None:
                self._inject_arrivals(t_slot)
            else:
                # no arrivals left, no events pending; queue must be empty
                assert not self._queue
                return None

    def apply(self, vm_index: int):
        """Admit the pending decision task to vm_index at the current clock."""
        task = self._queue.popleft()
        n = self._attempts.get(task.id, 0) + 1
        self._attempts[task.id] = n
        self.cluster.admit(task, vm_index, attempt=n)

    def drain(self, policy, rng: np.random.Generator | None = None):
        """Run to completion, consulting policy(cluster, rng) per admission."""
        while True:
            task = self.next_decision()
            if task is None:
                return self.records
            vm = policy(self.cluster, rng)
            assert vm is not None, "policy deferred although a buffer had space"
            self.apply(vm)

    # -- internals ------------------------------------------------------------

    def _inject_arrivals(self, t_slot: float):
        assert t_slot >= self.cluster.clock - 1e-9
        self.cluster.clock = max(self.cluster.clock, t_slot)
        slot = self._pending[0].arrival_slot
        while self._pending and self._pending[0].arrival_slot == slot:
            self._queue.append(self._pending.popleft())

    def _process_event(self):
        def outcome(task, vm_index, attempt):
            return maybe_fail(task, self.failure_ratio, attempt,
                              self.failure_rng, self.max_attempts)

        records, requeued = self.cluster.advance_to_next_event(outcome)
        self.records.extend(records)
        self._queue.extend(requeued)


def run_policy_simulation(vm_specs, workload, policy,
                          slot_seconds: float = 1.0,
                          failure_ratio: float = 0.0,
                          max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                          policy_rng: np.random.Generator | None = None,
                          failure_rng: np.random.Generator | None = None):
    """Convenience wrapper: simulate one workload end to end.

    policy(cluster, rng) -> vm index (None only when every buffer is
    full, which the driver never asks about). Returns the completion
    records, aborted attempts included.
    """
    sim = Simulation(vm_specs, workload, slot_seconds=slot_seconds,
                     failure_ratio=failure_ratio, max_attempts=max_attempts,
                     failure_rng=failure_rng)
    return sim.drain(policy, policy_rng)
