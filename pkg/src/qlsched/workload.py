"""Task workloads: trace parsing, synthetic generation and slotted arrivals.

A workload is a list of tasks, each with an integer id, a non-negative
arrival slot and a length in million instructions (MI). Traces are CSV
lines ``id,arrival_slot,length_mi`` with an optional header. Synthetic
workloads draw lengths uniformly from a configured range and spread
arrivals over slots according to an arrival model (iid or Markov counts
per slot).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, TraceParseError

DEFAULT_D_MAX = 5
ARRIVAL_MODES = ("iid", "markov")

# generate_workload gives up if the arrival model yields this many empty
# slots in a row (e.g. a point mass on zero arrivals).
_MAX_IDLE_SLOTS = 1_000_000


@dataclass(frozen=True)
class TaskSpec:
    """One task: identity, arrival slot and length in MI."""

    id: int
    arrival_slot: int
    length: int


@dataclass
class ScenarioConfig:
    """Static description of one simulated scenario.

    num_datacenters and num_hosts are carried for reporting only; the
    simulator models VMs directly.
    """

    num_tasks: int
    length_min: int
    length_max: int
    num_vms: int
    vm_mips: float
    vm_ram_mb: float = 1740.0
    vm_bandwidth_mbps: float = 1000.0
    buffer_min: int = 5
    buffer_max: int = 15
    num_pes: int = 1
    num_datacenters: int = 1
    num_hosts: int = 1
    arrival_mode: str = "iid"
    arrival_mean: float = 1.0

    def __post_init__(self):
        if self.num_tasks < 1:
            raise ConfigError("num_tasks must be >= 1")
        if not (0 < self.length_min <= self.length_max):
            raise ConfigError("need 0 < length_min <= length_max")
        if self.num_vms < 1:
            raise ConfigError("num_vms must be >= 1")
        if self.vm_mips <= 0:
            raise ConfigError("vm_mips must be > 0")
        if not (1 <= self.buffer_min <= self.buffer_max):
            raise ConfigError("need 1 <= buffer_min <= buffer_max")
        if self.num_pes < 1:
            raise ConfigError("num_pes must be >= 1")
        if self.arrival_mode not in ARRIVAL_MODES:
            raise ConfigError(f"arrival_mode must be one of {ARRIVAL_MODES}")
        if self.arrival_mean <= 0:
            raise ConfigError("arrival_mean must be > 0")


@dataclass
class ArrivalModel:
    """Distribution of the per-slot arrival count d_n on {0..d_max}.

    mode "iid": each slot draws from `probs` independently.
    mode "markov": `matrix[prev]` is the distribution of the next count,
    rows indexed by the previous slot's count.
    """

    mode: str
    probs: np.ndarray | None = None
    matrix: np.ndarray | None = None
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.mode == "iid":
            p = np.asarray(self.probs, dtype=float)
            if p.ndim != 1 or p.size < 1:
                raise ConfigError("iid arrival probs must be a 1-d vector")
            self._check_row(p)
            self.probs = p
            self._cum = np.cumsum(p)
        elif self.mode == "markov":
            m = np.asarray(self.matrix, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ConfigError("markov arrival matrix must be square")
            for row in m:
                self._check_row(row)
            self.matrix = m
            self._cum = np.cumsum(m, axis=1)
        else:
            raise ConfigError(f"arrival mode must be one of {ARRIVAL_MODES}")

    @staticmethod
    def _check_row(row):
        if np.any(row < 0):
            raise ConfigError("arrival probabilities must be non-negative")
        if abs(float(row.sum()) - 1.0) > 1e-9:
            raise ConfigError("arrival probability rows must sum to 1 within 1e-9")

    @property
    def d_max(self) -> int:
        n = self.probs.size if self.mode == "iid" else self.matrix.shape[0]
        return n - 1

    @classmethod
    def iid_binomial(cls, d_max: int = DEFAULT_D_MAX, mean: float = 1.0) -> "ArrivalModel":
        """iid counts ~ Binomial(d_max, mean/d_max), so E[d] = mean."""
        if not (0 < mean <= d_max):
            raise ConfigError("need 0 < mean <= d_max for binomial arrivals")
        k = np.arange(d_max + 1)
        p = mean / d_max
        from math import comb

        pmf = np.array([comb(d_max, int(i)) * p**i * (1 - p) ** (d_max - i) for i in k])
        pmf /= pmf.sum()
        return cls(mode="iid", probs=pmf)

    @classmethod
    def markov_sticky(cls, d_max: int = DEFAULT_D_MAX, mean: float = 1.0,
                      stickiness: float = 0.5) -> "ArrivalModel":
        """Sticky chain: rows = stickiness*I + (1-stickiness)*binomial pmf.

        The stationary distribution is the binomial itself, so the
        long-run mean arrival count stays `mean`.
        """
        base = cls.iid_binomial(d_max, mean).probs
        m = stickiness * np.eye(d_max + 1) + (1.0 - stickiness) * base[None, :]
        return cls(mode="markov", matrix=m)


def arrival_model_for(cfg: ScenarioConfig, d_max: int = DEFAULT_D_MAX) -> ArrivalModel:
    if cfg.arrival_mode == "iid":
        return ArrivalModel.iid_binomial(d_max, cfg.arrival_mean)
    return ArrivalModel.markov_sticky(d_max, cfg.arrival_mean)


def sample_arrivals(model: ArrivalModel, prev: int, rng: np.random.Generator) -> int:
    """Draw one slot's arrival count; `prev` is the previous slot's count."""
    if not (0 <= prev <= model.d_max):
        raise ValueError(f"prev count {prev} outside support 0..{model.d_max}")
    cum = model._cum if model.mode == "iid" else model._cum[prev]
    return int(np.searchsorted(cum, rng.random(), side="right"))


def generate_workload(cfg: ScenarioConfig, seed: int,
                      d_max: int = DEFAULT_D_MAX) -> list[TaskSpec]:
    """Synthesize cfg.num_tasks tasks with uniform lengths and slotted arrivals.

    Deterministic in (cfg, seed). Ids are assigned 0..n-1 in arrival
    order, so arrival slots are non-decreasing in id. Slots are shifted
    so the first arrival lands in slot 0; makespans then measure the
    span of actual work rather than an arbitrary idle lead-in.
    """
    rng = np.random.default_rng(seed)
    model = arrival_model_for(cfg, d_max)
    slots: list[int] = []
    slot = 0
    prev = 0
    idle = 0
    while len(slots) < cfg.num_tasks:
        d = sample_arrivals(model, prev, rng)
        prev = d
        slots.extend([slot] * d)
        idle = idle + 1 if d == 0 else 0
        if idle > _MAX_IDLE_SLOTS:
            raise ConfigError("arrival model produced no arrivals for too long")
        slot += 1
    slots = slots[: cfg.num_tasks]
    first = slots[0]
    lengths = rng.integers(cfg.length_min, cfg.length_max + 1, size=cfg.num_tasks)
    return [TaskSpec(i, slots[i] - first, int(lengths[i])) for i in range(cfg.num_tasks)]


def serialize(tasks: list[TaskSpec]) -> str:
    """Render tasks as a trace: header plus one id,arrival_slot,length_mi line each."""
    lines = ["id,arrival_slot,length_mi"]
    lines.extend(f"{t.id},{t.arrival_slot},{t.length}" for t in tasks)
    return "\n".join(lines) + "\n"


def parse_trace(raw) -> list[TaskSpec]:
    """Parse a CSV trace into TaskSpecs.

    Accepts a string, an open text file or any iterable of lines. An
    optional header line is skipped. Errors carry 1-based file line
    numbers.
    """
    if isinstance(raw, str):
        lines = io.StringIO(raw)
    else:
        lines = raw
    tasks: list[TaskSpec] = []
    seen: set[int] = set()
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text:
            continue
        parts = [p.strip() for p in text.split(",")]
        if lineno == 1 and not _is_data_row(parts):
            continue  # header
        if len(parts) != 3:
            raise TraceParseError(f"malformed row (expected 3 fields) at line {lineno}")
        try:
            tid, slot, length = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            raise TraceParseError(f"malformed row (non-integer field) at line {lineno}") from None
        if tid < 0:
            raise TraceParseError(f"negative id at line {lineno}")
        if slot < 0:
            raise TraceParseError(f"negative arrival slot at line {lineno}")
        if length <= 0:
            raise TraceParseError(f"non-positive length at line {lineno}")
        if tid in seen:
            raise TraceParseError(f"duplicate id {tid} at line {lineno}")
        seen.add(tid)
        tasks.append(TaskSpec(tid, slot, length))
    return tasks


def _is_data_row(parts) -> bool:
    try:
        [int(p) for p in parts]
        return True
    except ValueError:
        return False
