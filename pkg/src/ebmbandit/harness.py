"""Sequential simulation loop, regret traces and aggregation over seeds."""
from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import RunConfig
from .environment import (EnvTruth, generate_hierarchical_env, generate_sparse_env, load_env,
                          sample_arrival, sample_context, sample_reward)
from .policies import make_agent

logger = logging.getLogger(__name__)

# Independent streams per replication so that arrivals, contexts and noise
# are common random numbers across policies.
_STREAMS = ("env", "arrival", "context", "reward", "policy", "counterfactual")


class EpisodeError(RuntimeError):
    def __init__(self, message, seed=None, step=None):
        super().__init__(message)
        self.seed = seed
        self.step = step


@dataclass
class RegretTrace:
    """Per-step record of one episode.

    ``per_instance_cumulative`` has shape ``(n, N)``; row ``t`` holds every
    instance's running regret after step ``t + 1``.
    """

    seed: int
    instance: np.ndarray
    arm: np.ndarray
    optimal_arm: np.ndarray
    regret: np.ndarray
    cumulative: np.ndarray
    per_instance_cumulative: np.ndarray
    contexts: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return self.regret.shape[0]

    @property
    def n_instances(self) -> int:
        return self.per_instance_cumulative.shape[1]

    def instance_counts(self) -> np.ndarray:
        return np.bincount(self.instance, minlength=self.n_instances)


def replication_streams(seed: int) -> dict:
    children = np.random.SeedSequence(int(seed)).spawn(len(_STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, children)}


def build_env(config: RunConfig, seed: Optional[int] = None) -> EnvTruth:
    """Resolve the environment of ``config`` for the replication with ``seed``."""
    spec = config.env
    if spec.source == "file":
        return load_env(spec.path)
    if spec.seed is not None:
        rng = np.random.default_rng(spec.seed)
    else:
        rng = replication_streams(seed)["env"]
    ctx = spec.context_distribution()
    if spec.mode == "sparse":
        return generate_sparse_env(spec.n_instances, spec.n_arms, spec.dim, spec.sparsity,
                                   spec.delta_scale, spec.arrival, rng, ctx)
    return generate_hierarchical_env(spec.n_instances, spec.n_arms, spec.dim, spec.arrival, rng, ctx)


def _run(env: EnvTruth, config: RunConfig, seed: int, weighted: bool) -> RegretTrace:
    n, N = config.horizon, env.N
    streams = replication_streams(seed)
    agent = make_agent(config.policy, env, config.estimation, config.eb)

    instance = np.empty(n, dtype=np.int64)
    arm = np.empty(n, dtype=np.int64)
    optimal = np.empty(n, dtype=np.int64)
    regret = np.empty(n)
    per_instance = np.zeros((n, N))
    contexts = np.empty((n, env.d))
    running = np.zeros(N)

    for step in range(n):
        t = step + 1
        j = sample_arrival(env.arrival, streams["arrival"])
        x = sample_context(env.context, env.d, streams["context"])
        try:
            decision = agent.decide(j, x, t, streams["policy"])
            k = decision.arm
            means = env.beta[j] @ x
            best = int(np.argmax(means))
            r_j = max(float(means[best] - means[k]), 0.0)
            if weighted:
                step_regret = np.zeros(N)
                step_regret[j] = env.arrival[j] * r_j
                for i in range(N):
                    if i == j or env.arrival[i] == 0.0:
                        continue
                    alt = agent.decide(i, x, t, streams["counterfactual"]).arm
                    m_i = env.beta[i] @ x
                    step_regret[i] = env.arrival[i] * max(float(m_i.max() - m_i[alt]), 0.0)
                running += step_regret
                r = float(step_regret.sum())
            else:
                running[j] += r_j
                r = r_j
            y = sample_reward(env, j, k, x, streams["reward"])
            agent.update(j, k, x, y)
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            raise EpisodeError(f"seed {seed}, step {t}: {exc}", seed, t) from exc
        instance[step], arm[step], optimal[step], regret[step] = j, k, best, r
        per_instance[step] = running
        contexts[step] = x

    return RegretTrace(int(seed), instance, arm, optimal, regret, np.cumsum(regret),
                       per_instance, contexts)


def run_episode(env: EnvTruth, config: RunConfig, seed: int) -> RegretTrace:
    """One episode with realized regret ``x'beta_{pi*} - x'beta_{pi}`` at the arriving instance."""
    return _run(env, config, seed, weighted=False)


def weighted_regret_trace(env: EnvTruth, config: RunConfig, seed: int) -> RegretTrace:
    """One episode with arrival-weighted regret ``sum_j p_j r_{j,t}``.

    Every instance is asked for the decision it would make on ``x_t``;
    only the arriving instance pulls and learns.  Counterfactual sampling
    uses its own random stream, so the realized path matches
    :func:`run_episode` for the same seed.
    """
    return _run(env, config, seed, weighted=True)


def _episode_for_seed(args):
    config, seed = args
    env = build_env(config, seed)
    if config.regret_mode == "weighted":
        return weighted_regret_trace(env, config, seed)
    return run_episode(env, config, seed)


@dataclass
class AggregateResult:
    """Cross-seed summaries of cumulative regret.

    ``total`` maps a statistic name (``mean``, ``sd``, ``q10``, ``q50``,
    ``q90``) to an ``(n,)`` curve; ``per_instance`` maps the same names to
    ``(N, n)`` curves.
    """

    config: RunConfig
    traces: list
    total: dict
    per_instance: dict

    @property
    def final_total(self) -> np.ndarray:
        return np.array([tr.cumulative[-1] for tr in self.traces])

    def final_instance(self, j: int) -> np.ndarray:
        return np.array([tr.per_instance_cumulative[-1, j] for tr in self.traces])


def _summaries(stack: np.ndarray) -> dict:
    """Statistics over axis 0 (seeds)."""
    ddof = 1 if stack.shape[0] > 1 else 0
    q10, q50, q90 = np.quantile(stack, [0.1, 0.5, 0.9], axis=0)
    return {"mean": stack.mean(axis=0), "sd": stack.std(axis=0, ddof=ddof),
            "q10": q10, "q50": q50, "q90": q90}


def aggregate(config: RunConfig, traces: Sequence[RegretTrace]) -> AggregateResult:
    traces = list(traces)
    total = np.stack([tr.cumulative for tr in traces])
    inst = np.stack([tr.per_instance_cumulative.T for tr in traces])
    return AggregateResult(config, traces, _summaries(total), _summaries(inst))


def run_replications(config: RunConfig, jobs: int = 1) -> AggregateResult:
    """Run one episode per seed and summarize; results do not depend on ``jobs``."""
    tasks = [(config, s) for s in config.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            traces = list(pool.map(_episode_for_seed, tasks))
    else:
        traces = [_episode_for_seed(task) for task in tasks]
    return aggregate(config, traces)


# -- output files ----------------------------------------------------------

STATS = ("mean", "sd", "q10", "q50", "q90")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def traces_csv(traces: Sequence[RegretTrace]) -> str:
    """Per-step rows for every seed: ``seed, t, instance, arm, optimal_arm, regret, cum_regret, cum_regret_instance_j``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    N = traces[0].n_instances
    w.writerow(["seed", "t", "instance", "arm", "optimal_arm", "regret", "cum_regret"]
               + [f"cum_regret_instance_{j}" for j in range(N)])
    for tr in traces:
        for i in range(tr.horizon):
            w.writerow([tr.seed, i + 1, int(tr.instance[i]), int(tr.arm[i]), int(tr.optimal_arm[i]),
                        _fmt(tr.regret[i]), _fmt(tr.cumulative[i])]
                       + [_fmt(v) for v in tr.per_instance_cumulative[i]])
    return buf.getvalue()


def aggregate_csv(result: AggregateResult) -> str:
    """One row per step; columns ``t`` then ``<metric>_<stat>`` for total and each instance."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    N = result.per_instance["mean"].shape[0]
    metrics = [("total", result.total, None)] + [
        (f"instance_{j}", result.per_instance, j) for j in range(N)]
    w.writerow(["t"] + [f"{name}_{s}" for name, _, _ in metrics for s in STATS])
    n = result.total["mean"].shape[0]
    for i in range(n):
        row = [i + 1]
        for _, curves, j in metrics:
            for s in STATS:
                row.append(_fmt(curves[s][i] if j is None else curves[s][j, i]))
        w.writerow(row)
    return buf.getvalue()


def read_traces_csv(path) -> dict:
    """Final cumulative regret per seed from a trace CSV, keyed by seed."""
    finals = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            finals[int(row["seed"])] = float(row["cum_regret"])
    return finals


def write_run(result: AggregateResult, out_dir) -> Path:
    """Write ``traces.csv``, ``aggregate.csv`` and the resolved ``config.json`` to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = result.config.to_dict()
    echo["output_dir"] = None
    meta = {"config": echo, "regret_mode": result.config.regret_mode,
            "policy_label": result.config.policy.label}
    (out / "config.json").write_text(json.dumps(meta["config"], indent=2, sort_keys=True) + "\n")
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    (out / "traces.csv").write_text(traces_csv(result.traces))
    (out / "aggregate.csv").write_text(aggregate_csv(result))
    return out
