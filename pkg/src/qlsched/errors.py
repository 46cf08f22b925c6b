"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Bad experiment configuration (unknown key, out-of-range value)."""


class TraceParseError(ValueError):
    """Malformed workload trace line."""


class BufferFullError(RuntimeError):
    """Admission attempted on a VM whose buffer is at capacity."""


class NoFeasibleActionError(RuntimeError):
    """Every VM buffer is full; the caller must defer the task."""


class CapacityError(ValueError):
    """Requested oracle MDP would enumerate too many states."""


class MetricsError(ValueError):
    """Metric requested on an empty or inconsistent record set."""
