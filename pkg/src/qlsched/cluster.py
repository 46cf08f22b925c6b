"""Cloud model: VMs with finite buffers, PE servers and completion events.

Each VM owns one FIFO buffer of capacity N shared by `pes` independent
single-server processing elements. A task's service time is
length / mips seconds, deterministic. Time inside a run is continuous
(seconds); scheduling happens at discrete instants chosen by the driver.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import BufferFullError
from .workload import TaskSpec

DEFAULT_MAX_ATTEMPTS = 10


@dataclass(frozen=True)
class VmSpec:
    index: int
    mips: float
    buffer_capacity: int
    ram_mb: float = 1740.0
    bandwidth_mbps: float = 1000.0
    pes: int = 1


@dataclass(frozen=True)
class CompletionRecord:
    """Outcome of one task's final service attempt on a VM.

    submit_time is the admission instant of that attempt, finish_time the
    completion (or abort) instant and exec_time = length / mips.
    """

    task_id: int
    submit_time: float
    finish_time: float
    exec_time: float
    vm_index: int
    attempts: int
    aborted: bool = False


class FailureOutcome(enum.Enum):
    COMPLETE = "complete"
    REQUEUE = "requeue"
    ABORT = "abort"


def maybe_fail(task: TaskSpec, failure_ratio: float, attempts: int,
               rng: np.random.Generator,
               max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> FailureOutcome:
    """Draw the fate of a finishing service attempt.

    One Bernoulli(failure_ratio) draw per attempt. A failed attempt is
    requeued while attempts < max_attempts and aborted once the budget is
    exhausted. The uniform is drawn even at ratio 0 so runs with
    different ratios share one failure stream.
    """
    if not (0.0 <= failure_ratio <= 1.0):
        raise ValueError("failure_ratio must be in [0, 1]")
    if attempts < 1:
        raise ValueError("attempts counts the current attempt, so >= 1")
    u = rng.random()
    if u >= failure_ratio:
        return FailureOutcome.COMPLETE
    return FailureOutcome.REQUEUE if attempts < max_attempts else FailureOutcome.ABORT


class _Queued:
    """One buffered task instance plus its service bookkeeping."""

    __slots__ = ("task", "admit_time", "attempt", "pe", "finish")

    def __init__(self, task, admit_time, attempt):
        self.task = task
        self.admit_time = admit_time
        self.attempt = attempt
        self.pe = None        # PE index once in service
        self.finish = None    # completion instant once in service


class VmState:
    def __init__(self, spec: VmSpec):
        self.spec = spec
        self.queue: list[_Queued] = []      # admission order; in-service entries carry pe/finish
        self.pe_busy: list[_Queued | None] = [None] * spec.pes

    @property
    def occupied(self) -> int:
        return len(self.queue)

    @property
    def assigned_length(self) -> int:
        return sum(q.task.length for q in self.queue)

    @property
    def free_slots(self) -> int:
        return self.spec.buffer_capacity - len(self.queue)

    def available_at(self, clock: float) -> float:
        """Instant the next PE frees up (now, if any PE is idle)."""
        if any(q is None for q in self.pe_busy):
            return clock
        return min(q.finish for q in self.pe_busy)

    def _start_service(self, entry: _Queued, pe: int, now: float):
        entry.pe = pe
        entry.finish = now + entry.task.length / self.spec.mips
        self.pe_busy[pe] = entry

    def _feed_idle_pes(self, now: float):
        for pe, busy in enumerate(self.pe_busy):
            if busy is not None:
                continue
            waiting = next((q for q in self.queue if q.pe is None), None)
            if waiting is None:
                break
            self._start_service(waiting, pe, now)


class ClusterState:
    """All VMs plus the simulation clock."""

    def __init__(self, vm_specs: list[VmSpec]):
        self.vms = [VmState(s) for s in vm_specs]
        self.clock = 0.0

    # -- observation helpers used by schedulers ---------------------------

    def occupied_counts(self) -> list[int]:
        return [vm.occupied for vm in self.vms]

    def assigned_lengths(self) -> list[int]:
        return [vm.assigned_length for vm in self.vms]

    def free_counts(self) -> list[int]:
        return [vm.free_slots for vm in self.vms]

    def capacities(self) -> list[int]:
        return [vm.spec.buffer_capacity for vm in self.vms]

    def feasible_vms(self) -> list[int]:
        return [i for i, vm in enumerate(self.vms) if vm.free_slots > 0]

    def has_free_buffer(self) -> bool:
        return any(vm.free_slots > 0 for vm in self.vms)

    def is_idle(self) -> bool:
        return all(vm.occupied == 0 for vm in self.vms)

    def backlog_seconds(self, vm_index: int) -> float:
        """Work queued at a VM, in seconds of single-PE service remaining.

        In-service tasks count their remaining time, waiting tasks their
        full time; the total is divided by the PE count as an estimate of
        the delay a new arrival would see.
        """
        vm = self.vms[vm_index]
        secs = 0.0
        for q in vm.queue:
            if q.finish is not None:
                secs += max(0.0, q.finish - self.clock)
            else:
                secs += q.task.length / vm.spec.mips
        return secs / vm.spec.pes

    # -- mutation ----------------------------------------------------------

    def admit(self, task: TaskSpec, vm_index: int, attempt: int = 1):
        """Append task to vm_index's buffer at the current clock.

        Starts service immediately when a PE is idle. Raises
        BufferFullError when the buffer is at capacity.
        """
        vm = self.vms[vm_index]
        if vm.free_slots <= 0:
            raise BufferFullError(
                f"VM {vm_index} buffer at capacity {vm.spec.buffer_capacity}")
        entry = _Queued(task, self.clock, attempt)
        vm.queue.append(entry)
        vm._feed_idle_pes(self.clock)
        if __debug__:
            self._assert_occupancy()

    def next_event_time(self):
        """Earliest pending completion instant, or None when all idle."""
        times = [q.finish for vm in self.vms for q in vm.pe_busy if q is not None]
        return min(times) if times else None

    def advance_to_next_event(self, outcome=None):
        """Process the single earliest completion event.

        outcome(task, vm_index, attempt) may return a FailureOutcome;
        completions yield a CompletionRecord, requeues hand the task back
        to the caller, aborts yield a record flagged aborted. With no
        outcome hook every event completes. Returns
        (records, requeued_tasks). No-op when every PE is idle.
        """
        best = None
        for vi, vm in enumerate(self.vms):
            for pe, q in enumerate(vm.pe_busy):
                if q is None:
                    continue
                key = (q.finish, vi, pe)
                if best is None or key < best:
                    best = key
        if best is None:
            return [], []
        finish, vi, pe = best
        vm = self.vms[vi]
        entry = vm.pe_busy[pe]
        assert finish >= self.clock - 1e-9
        self.clock = finish
        vm.pe_busy[pe] = None
        vm.queue.remove(entry)
        vm._feed_idle_pes(self.clock)

        fate = FailureOutcome.COMPLETE
        if outcome is not None:
            fate = outcome(entry.task, vi, entry.attempt)
        records, requeued = [], []
        if fate is FailureOutcome.REQUEUE:
            requeued.append(entry.task)
        else:
            records.append(CompletionRecord(
                task_id=entry.task.id,
                submit_time=entry.admit_time,
                finish_time=finish,
                exec_time=entry.task.length / vm.spec.mips,
                vm_index=vi,
                attempts=entry.attempt,
                aborted=fate is FailureOutcome.ABORT,
            ))
        if __debug__:
            self._assert_occupancy()
        return records, requeued

    def _assert_occupancy(self):
        total_cap = 0
        total_occ = 0
        for vm in self.vms:
            assert 0 <= vm.occupied <= vm.spec.buffer_capacity
            total_cap += vm.spec.buffer_capacity
            total_occ += vm.occupied
        assert 0 <= total_occ <= total_cap


def admit(cluster: ClusterState, task: TaskSpec, vm_index: int, attempt: int = 1):
    cluster.admit(task, vm_index, attempt)
    return cluster


def advance_to_next_event(cluster: ClusterState):
    """Advance to the earliest completion; returns (records, cluster)."""
    records, requeued = cluster.advance_to_next_event()
    assert not requeued
    return records, cluster
