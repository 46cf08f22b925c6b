"""Experiment plans: config parsing, sweep execution and CSV reports.

A plan crosses task counts, buffer sizes and failure ratios over a set
of policies. Learning policies are trained once per sweep point on
fresh workloads from the same generator, then evaluated greedily on the
replication workloads (seed = base seed + replication index, shared by
every policy so comparisons are paired). Outputs: runs.csv (one row per
policy and replication), summary.csv (per-point aggregates),
convergence.csv (per-training-cycle trace) and one q-table dump per
trained policy and point.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np
import yaml

from . import mdp
from .cluster import DEFAULT_MAX_ATTEMPTS, VmSpec
from .envs import FreeBufferView, LengthAwareView, SimulationEnv
from .errors import ConfigError
from .metrics import aggregate, build_report
from .policies import (POLICY_NAMES, QlearnPolicy, QschAgent, fifo_select,
                       greedy_select, mixed_select, random_select)
from .qlearn import LearnerConfig, export_qtable, train
from .simulate import run_policy_simulation
from .workload import DEFAULT_D_MAX, ScenarioConfig, generate_workload

log = logging.getLogger(__name__)


@dataclass
class ExperimentPlan:
    scenario: ScenarioConfig
    policies: list = field(default_factory=lambda: list(POLICY_NAMES))
    task_counts: list = None
    buffer_sizes: list = None
    failure_ratios: list = field(default_factory=lambda: [0.0])
    replications: int = 20
    seed: int = 1
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    slot_seconds: float = 1.0
    range_mi: int = mdp.DEFAULT_RANGE_MI
    l_cap: int = mdp.DEFAULT_L_CAP
    arrival_dmax: int = DEFAULT_D_MAX
    qsch_w_buffer: float = 0.5
    qsch_w_wait: float = 0.5
    max_attempts: int = DEFAULT_MAX_ATTEMPTS
    out_dir: str | None = None

    def __post_init__(self):
        if self.task_counts is None:
            self.task_counts = [self.scenario.num_tasks]
        if self.buffer_sizes is None:
            self.buffer_sizes = [self.scenario.buffer_max]
        if not self.task_counts or not self.buffer_sizes or not self.failure_ratios:
            raise ConfigError("sweep lists must be non-empty")
        for name in self.policies:
            if name not in POLICY_NAMES:
                raise ConfigError(f"unknown policy {name!r} (choose from {POLICY_NAMES})")
        if not self.policies:
            raise ConfigError("policies must be non-empty")
        if any(t < 1 for t in self.task_counts):
            raise ConfigError("task_counts entries must be >= 1")
        if any(b < 1 for b in self.buffer_sizes):
            raise ConfigError("buffer_sizes entries must be >= 1")
        if any(not (0.0 <= f <= 1.0) for f in self.failure_ratios):
            raise ConfigError("failure_ratios entries must lie in [0, 1]")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if self.slot_seconds <= 0:
            raise ConfigError("slot_seconds must be > 0")
        if self.range_mi <= 0:
            raise ConfigError("range_mi must be > 0")
        if self.l_cap < 0:
            raise ConfigError("l_cap must be >= 0")
        if self.arrival_dmax < 1:
            raise ConfigError("arrival_dmax must be >= 1")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")


_SCENARIO_KEYS = {
    "num_tasks", "length_min", "length_max", "num_vms", "vm_mips", "vm_ram_mb",
    "vm_bandwidth_mbps", "buffer_min", "buffer_max", "num_pes",
    "num_datacenters", "num_hosts", "arrival_mode", "arrival_mean",
}
_LEARNER_KEYS = {"gamma", "epsilon0", "total_cycles", "repeater_threshold",
                 "lr_exponent"}
_PLAN_KEYS = {
    "scenario", "learner", "policies", "task_counts", "buffer_sizes",
    "failure_ratios", "replications", "seed", "slot_seconds", "range_mi",
    "l_cap", "arrival_dmax", "qsch_w_buffer", "qsch_w_wait", "max_attempts",
    "out_dir",
}


def parse_config(path: str) -> ExperimentPlan:
    """Load a YAML plan file; unknown keys raise ConfigError naming them."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of keys to values")
    for key in raw:
        if key not in _PLAN_KEYS:
            raise ConfigError(f"unknown config key: {key}")
    if "scenario" not in raw or not isinstance(raw["scenario"], dict):
        raise ConfigError("config needs a 'scenario' mapping")
    for key in raw["scenario"]:
        if key not in _SCENARIO_KEYS:
            raise ConfigError(f"unknown config key: scenario.{key}")
    learner_raw = raw.get("learner", {})
    if not isinstance(learner_raw, dict):
        raise ConfigError("'learner' must be a mapping")
    for key in learner_raw:
        if key not in _LEARNER_KEYS:
            raise ConfigError(f"unknown config key: learner.{key}")

    scenario = ScenarioConfig(**raw["scenario"])
    learner = LearnerConfig(**learner_raw)
    plan_kwargs = {k: v for k, v in raw.items() if k not in ("scenario", "learner")}
    return ExperimentPlan(scenario=scenario, learner=learner, **plan_kwargs)


@dataclass
class RunOutputs:
    runs: list
    summary: list
    convergence: list
    num_vms: int

    def summary_row(self, policy: str, tasks=None, buffer=None, failure=None):
        rows = [r for r in self.summary
                if r["policy"] == policy
                and (tasks is None or r["tasks"] == tasks)
                and (buffer is None or r["buffer"] == buffer)
                and (failure is None or r["failure_ratio"] == failure)]
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} summary rows match "
                           f"({policy}, {tasks}, {buffer}, {failure})")
        return rows[0]

    def run_values(self, policy: str, metric: str, tasks=None, buffer=None,
                   failure=None):
        """Per-replication metric values, ordered by (sweep point, seed)."""
        out = [r[metric] for r in self.runs
               if r["policy"] == policy
               and (tasks is None or r["tasks"] == tasks)
               and (buffer is None or r["buffer"] == buffer)
               and (failure is None or r["failure_ratio"] == failure)]
        if not out:
            raise KeyError(f"no runs match ({policy}, {tasks}, {buffer}, {failure})")
        return out

    def pooled_mean(self, policy: str, metric: str, **point) -> float:
        return float(np.mean(self.run_values(policy, metric, **point)))


def _vm_specs(scenario: ScenarioConfig, buffer_size: int):
    return [VmSpec(index=i, mips=scenario.vm_mips, buffer_capacity=buffer_size,
                   ram_mb=scenario.vm_ram_mb,
                   bandwidth_mbps=scenario.vm_bandwidth_mbps,
                   pes=scenario.num_pes)
            for i in range(scenario.num_vms)]


def _train_policy(plan: ExperimentPlan, name: str, scenario_pt, vm_specs,
                  failure_ratio: float, point_idx: int):
    if name == "qlearn":
        view = LengthAwareView(plan.range_mi, plan.l_cap)
    else:
        view = FreeBufferView(plan.qsch_w_buffer, plan.qsch_w_wait)
    env = SimulationEnv(scenario_pt, vm_specs, view,
                        slot_seconds=plan.slot_seconds,
                        failure_ratio=failure_ratio,
                        max_attempts=plan.max_attempts,
                        d_max=plan.arrival_dmax)
    seed = [plan.seed, 1009, point_idx, POLICY_NAMES.index(name)]
    result = train(env, plan.learner, seed)
    log.info("trained %s at point %d: %d cycles, stop=%s, states=%d",
             name, point_idx, result.cycles_run, result.stop_reason,
             len(result.table))
    return result


def _eval_policy_fn(plan: ExperimentPlan, name: str, trained):
    if name == "random":
        return random_select
    if name == "fifo":
        return fifo_select
    if name == "mixed":
        return mixed_select
    if name == "greedy":
        return greedy_select
    if name == "qsch":
        agent = QschAgent(plan.scenario.num_vms, plan.qsch_w_buffer,
                          plan.qsch_w_wait, table=trained.table)
        return lambda cluster, rng: agent.select(cluster, rng, epsilon=0.0)
    if name == "qlearn":
        return QlearnPolicy(trained.table, plan.range_mi, plan.l_cap)
    raise ConfigError(f"unknown policy {name!r}")


def run_plan(plan: ExperimentPlan, out_dir: str | None = None) -> RunOutputs:
    """Execute the full sweep; write CSVs when an output directory is set."""
    out_dir = out_dir if out_dir is not None else plan.out_dir
    runs, summary, convergence = [], [], []
    qtables = {}
    points = list(product(enumerate(plan.task_counts),
                          enumerate(plan.buffer_sizes),
                          enumerate(plan.failure_ratios)))
    for (ti, tasks), (bi, buf), (fi, fr) in points:
        point_idx = ((ti * len(plan.buffer_sizes)) + bi) * len(plan.failure_ratios) + fi
        scenario_pt = replace(plan.scenario, num_tasks=tasks)
        vm_specs = _vm_specs(scenario_pt, buf)
        for name in plan.policies:
            trained = None
            if name in ("qlearn", "qsch"):
                trained = _train_policy(plan, name, scenario_pt, vm_specs,
                                        fr, point_idx)
                for row in trained.trace:
                    convergence.append({
                        "policy": name, "tasks": tasks, "buffer": buf,
                        "failure_ratio": fr, "cycle": row["cycle"],
                        "epsilon": row["epsilon"],
                        "avg_wait_s": row.get("avg_wait_s"),
                    })
                qtables[(name, tasks, buf, fr)] = trained.table
            policy_fn = _eval_policy_fn(plan, name, trained)
            reports = []
            for rep in range(plan.replications):
                workload = generate_workload(scenario_pt, plan.seed + rep,
                                             plan.arrival_dmax)
                policy_rng = np.random.default_rng(
                    [plan.seed, 2003, point_idx, POLICY_NAMES.index(name), rep])
                failure_rng = np.random.default_rng(
                    [plan.seed, 3001, ti, bi, rep])
                records = run_policy_simulation(
                    vm_specs, workload, policy_fn,
                    slot_seconds=plan.slot_seconds, failure_ratio=fr,
                    max_attempts=plan.max_attempts, policy_rng=policy_rng,
                    failure_rng=failure_rng)
                report = build_report(records, vm_specs)
                reports.append(report)
                runs.append({
                    "policy": name, "seed": plan.seed + rep, "tasks": tasks,
                    "buffer": buf, "failure_ratio": fr,
                    "avg_response_s": report.avg_response_s,
                    "avg_wait_s": report.avg_wait_s,
                    "makespan_s": report.makespan_s,
                    "utilization": report.utilization,
                    "load_share": report.load_share,
                    "aborts": report.abort_count,
                })
            mean, sd = aggregate(reports)
            summary.append({
                "policy": name, "tasks": tasks, "buffer": buf,
                "failure_ratio": fr, "replications": plan.replications,
                "mean_response_s": mean.avg_response_s,
                "sd_response_s": sd.avg_response_s,
                "mean_wait_s": mean.avg_wait_s, "sd_wait_s": sd.avg_wait_s,
                "mean_makespan_s": mean.makespan_s,
                "sd_makespan_s": sd.makespan_s,
                "mean_aborts": mean.abort_count,
            })
            log.info("point t=%d b=%d f=%.2f %-6s mean response %.2f s, "
                     "makespan %.2f s", tasks, buf, fr, name,
                     mean.avg_response_s, mean.makespan_s)
    outputs = RunOutputs(runs=runs, summary=summary, convergence=convergence,
                         num_vms=plan.scenario.num_vms)
    if out_dir:
        _write_outputs(outputs, qtables, out_dir)
    return outputs


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def _write_outputs(outputs: RunOutputs, qtables: dict, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    k = outputs.num_vms
    run_cols = (["policy", "seed", "tasks", "buffer", "failure_ratio",
                 "avg_response_s", "avg_wait_s", "makespan_s"]
                + [f"util_vm{i}" for i in range(k)]
                + [f"load_vm{i}" for i in range(k)] + ["aborts"])
    with open(os.path.join(out_dir, "runs.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(run_cols)
        for r in outputs.runs:
            w.writerow([_fmt(r["policy"]), r["seed"], r["tasks"], r["buffer"],
                        _fmt(float(r["failure_ratio"])),
                        _fmt(r["avg_response_s"]), _fmt(r["avg_wait_s"]),
                        _fmt(r["makespan_s"])]
                       + [_fmt(u) for u in r["utilization"]]
                       + [_fmt(s) for s in r["load_share"]] + [r["aborts"]])
    sum_cols = ["policy", "tasks", "buffer", "failure_ratio", "replications",
                "mean_response_s", "sd_response_s", "mean_wait_s", "sd_wait_s",
                "mean_makespan_s", "sd_makespan_s", "mean_aborts"]
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(sum_cols)
        for r in outputs.summary:
            w.writerow([r["policy"], r["tasks"], r["buffer"],
                        _fmt(float(r["failure_ratio"])), r["replications"]]
                       + [_fmt(r[c]) for c in sum_cols[5:]])
    with open(os.path.join(out_dir, "convergence.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "tasks", "buffer", "failure_ratio", "cycle",
                    "epsilon", "avg_wait_s"])
        for r in outputs.convergence:
            w.writerow([r["policy"], r["tasks"], r["buffer"],
                        _fmt(float(r["failure_ratio"])), r["cycle"],
                        _fmt(r["epsilon"]), _fmt(r["avg_wait_s"])])
    for (name, tasks, buf, fr), table in qtables.items():
        fname = f"qtable_{name}_t{tasks}_b{buf}_f{fr:g}.csv"
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8") as fh:
            fh.write(export_qtable(table))
