"""Discrete-event cloud task scheduling with tabular Q-learning.

Simulates a cluster of single-queue virtual machines fed from a global
FCFS queue, and compares learned schedulers against random, FIFO,
load-mixing and greedy baselines.
"""

from .cluster import ClusterState, CompletionRecord, VmSpec, maybe_fail
from .errors import (BufferFullError, CapacityError, ConfigError,
                     MetricsError, NoFeasibleActionError, TraceParseError)
from .mdp import (OracleMdp, build_oracle_mdp, discretize_length,
                  encode_state, reward, value_iteration)
from .metrics import MetricsReport, aggregate, build_report
from .policies import (POLICY_NAMES, QlearnPolicy, QschAgent, fifo_select,
                       greedy_select, mixed_select, random_select)
from .qlearn import (LearnerConfig, QTable, TrainResult, export_qtable,
                     select_action, train, update_q)
from .runner import ExperimentPlan, RunOutputs, parse_config, run_plan
from .simulate import Simulation, run_policy_simulation
from .workload import (ScenarioConfig, TaskSpec, generate_workload,
                       parse_trace, serialize)

__version__ = "0.1.0"

__all__ = [
    "BufferFullError", "CapacityError", "ClusterState", "CompletionRecord",
    "ConfigError", "ExperimentPlan", "LearnerConfig", "MetricsError",
    "MetricsReport", "NoFeasibleActionError", "OracleMdp", "POLICY_NAMES",
    "QTable", "QlearnPolicy", "QschAgent", "RunOutputs", "ScenarioConfig",
    "Simulation", "TaskSpec", "TraceParseError", "TrainResult", "VmSpec",
    "aggregate", "build_oracle_mdp", "build_report", "discretize_length",
    "encode_state", "export_qtable", "fifo_select", "generate_workload",
    "greedy_select", "maybe_fail", "mixed_select", "parse_config",
    "parse_trace", "random_select", "reward", "run_plan",
    "run_policy_simulation", "select_action", "serialize", "train",
    "update_q", "value_iteration",
]
