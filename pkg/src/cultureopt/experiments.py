"""Benchmark harness: scenario grid, macro-replications, metric tables.

A scenario fixes the uncertainty level of the synthetic plant
(batch-to-batch spread and process noise), the training-set size m, and
the number of macro-replications. One macro-replication is a full
end-to-end repeat: draw a fresh dataset from the ground truth, fit both
the posterior ensemble and the least-squares baseline on it, then score
predictions against fresh test runs or decisions against the simulator.
Every random stream is derived from a root seed and a label path, so any
table cell reproduces exactly from (root seed, scenario, replication).
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from cultureopt.baseline import DeterministicTheta, ls_decide, ls_fit
from cultureopt.inference import (
    ABCConfig,
    PosteriorEnsemble,
    UniformBoxPrior,
    abc_smc,
    default_theta_prior,
    pooled_abc_smc,
    predictive_state_means,
)
from cultureopt.kinetics import (
    GroundTruthConfig,
    GroundTruthProcess,
    ModelTheta,
    PhaseParams,
    ProcessState,
    Trajectory,
    sde_rollout,
)
from cultureopt.planning import (
    DecisionProblem,
    PlannerConfig,
    greedy_control,
)

__all__ = [
    "B2B_SIGMA",
    "Scenario",
    "MetricTable",
    "seed_schedule",
    "default_truth_theta",
    "ground_truth_config",
    "generate_dataset",
    "prediction_error_experiment",
    "decision_experiment",
    "exchange_reward_curve",
]

#: Batch-to-batch growth-rate std by level name.
B2B_SIGMA = {"high": 0.016, "low": 0.008}

#: Case-study kinetic constants shared by both phases.
_TRUE_KS = 3.4
_TRUE_KC = 2.6
_TRUE_RD = 0.005
_TRUE_MU = (0.057, 0.0285)


def default_truth_theta(sigma_g: float) -> ModelTheta:
    """Ground-truth kinetics: two phases, shared inhibition constants."""
    p1 = PhaseParams(mu_g=_TRUE_MU[0], sigma_g=sigma_g, k_s=_TRUE_KS, k_c=_TRUE_KC, r_d=_TRUE_RD)
    p2 = PhaseParams(mu_g=_TRUE_MU[1], sigma_g=sigma_g, k_s=_TRUE_KS, k_c=_TRUE_KC, r_d=_TRUE_RD)
    return ModelTheta(phases=(p1, p2), t_star=18.0)


@dataclass(frozen=True)
class Scenario:
    """One cell of the uncertainty/sample-size grid."""

    b2b: str = "low"
    sigma_n: float = 0.01
    m: int = 20
    replications: int = 10
    n_test: int = 200
    root_seed: int = 20240

    def __post_init__(self) -> None:
        if self.b2b not in B2B_SIGMA:
            raise ValueError(f"b2b level must be one of {sorted(B2B_SIGMA)}")
        if self.sigma_n < 0.0:
            raise ValueError("sigma_n must be >= 0")
        if self.m < 1 or self.replications < 1 or self.n_test < 1:
            raise ValueError("m, replications and n_test must be >= 1")

    @property
    def sigma_g(self) -> float:
        return B2B_SIGMA[self.b2b]

    @property
    def label(self) -> str:
        return f"b2b={self.b2b},sn={self.sigma_n:g},m={self.m}"


def ground_truth_config(scenario: Scenario) -> GroundTruthConfig:
    return GroundTruthConfig(theta=default_truth_theta(scenario.sigma_g),
                             sigma_n=scenario.sigma_n)


def seed_schedule(root_seed: int, *labels) -> np.random.Generator:
    """Deterministic, collision-resistant RNG substream for a label path.

    Labels are hashed (order-sensitive) into the spawn key of a seed
    sequence rooted at ``root_seed``; the same inputs always produce the
    same stream and distinct label paths produce independent streams.
    """
    if len(set(map(repr, labels))) != len(labels):
        raise ValueError(f"duplicate label in seed schedule: {labels!r}")
    digest = hashlib.sha256("\x1f".join(repr(l) for l in labels).encode()).digest()
    spawn_key = tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=spawn_key))


def generate_dataset(config: GroundTruthConfig, m: int, rng: np.random.Generator,
                     horizon_hours: float = 30.0) -> list[Trajectory]:
    """Draw m uncontrolled training runs; only observed densities are kept."""
    out = sde_rollout(config, m, horizon_hours, rng)
    return [Trajectory(hours=out["hours"], rho_obs=out["rho_obs"][i]) for i in range(m)]


@dataclass
class MetricTable:
    """Flat result table with provenance; one dict per cell."""

    rows: list[dict] = field(default_factory=list)

    def add(self, **cell) -> None:
        self.rows.append(cell)

    def column(self, name: str, **match) -> list:
        return [row[name] for row in self.rows
                if all(row.get(k) == v for k, v in match.items())]

    def single(self, name: str, **match) -> float:
        values = self.column(name, **match)
        if len(values) != 1:
            raise KeyError(f"expected one row for {match}, found {len(values)}")
        return values[0]

    def to_csv(self, path) -> None:
        if not self.rows:
            raise ValueError("empty table")
        fields: list[str] = []
        for row in self.rows:
            for key in row:
                if key not in fields:
                    fields.append(key)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                                 for k, v in row.items()})

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.rows, fh, indent=1)


# ---------------------------------------------------------------------------
# Prediction-error experiment
# ---------------------------------------------------------------------------

def _fit_hybrid(dataset: Sequence[Trajectory], abc_config: ABCConfig, prior: UniformBoxPrior,
                rng: np.random.Generator, n_runs: int = 1) -> PosteriorEnsemble:
    if n_runs <= 1:
        return abc_smc(dataset, prior, abc_config, rng)
    return pooled_abc_smc(dataset, prior, abc_config, rng, n_runs=n_runs)


def _ls_predictions(theta: DeterministicTheta, rho0: np.ndarray, horizon_steps: int,
                    dt_obs: float, dt_fine: float = 0.01) -> tuple[np.ndarray, np.ndarray]:
    from cultureopt.baseline import _fine_grid
    _, rho, inh = _fine_grid(theta, rho0, horizon_steps * dt_obs, dt_fine, dt_obs)
    return rho, inh


def _expected_truth_states(config: GroundTruthConfig, rho0: np.ndarray, horizon_steps: int,
                           inner_reps: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Conditional-mean density/inhibitor of the true process per start.

    Estimated with ``inner_reps`` ground-truth runs per initial density,
    all drawn in one batch; returns arrays (len(rho0), horizon_steps+1).
    """
    n0 = rho0.size
    starts = np.tile(rho0, inner_reps)
    out = sde_rollout(config, starts.size, horizon_steps * config.dt_obs, rng, rho0=starts)
    rho = out["rho_true"].reshape(inner_reps, n0, horizon_steps + 1).mean(axis=0)
    inh = out["inhibitor_true"].reshape(inner_reps, n0, horizon_steps + 1).mean(axis=0)
    return rho, inh


def _prediction_rep(scenario: Scenario, rep: int, horizons: tuple[int, ...],
                    abc_config: ABCConfig, prior: UniformBoxPrior, ls_restarts: int,
                    n_mc: int, horizon_steps: int, target_reps: int,
                    abc_runs: int) -> dict[tuple[str, str, int], float]:
    """One macro-replication of the prediction experiment (picklable)."""
    config = ground_truth_config(scenario)
    dt_obs = config.dt_obs
    base = (scenario.root_seed, "predict", scenario.label, rep)
    dataset = generate_dataset(config, scenario.m, seed_schedule(*base, "data"))
    ensemble = _fit_hybrid(dataset, abc_config, prior, seed_schedule(*base, "abc"),
                           n_runs=abc_runs)
    theta_ls, _ = ls_fit(dataset, restarts=ls_restarts, rng=seed_schedule(*base, "ls"))

    rho0 = sde_rollout(config, scenario.n_test, dt_obs,
                       seed_schedule(*base, "test"))["rho_true"][:, 0]
    true_rho, true_inh = _expected_truth_states(config, rho0, horizon_steps, target_reps,
                                                seed_schedule(*base, "target"))
    hyb_rho, hyb_inh = predictive_state_means(ensemble, rho0, horizon_steps, n_mc,
                                              seed_schedule(*base, "mc"), dt=dt_obs)
    ls_rho, ls_inh = _ls_predictions(theta_ls, rho0, horizon_steps, dt_obs)

    out: dict[tuple[str, str, int], float] = {}
    for h in horizons:
        for method, rho_hat, inh_hat in (("hybrid", hyb_rho, hyb_inh), ("ls", ls_rho, ls_inh)):
            out[(method, "rho", h)] = float(np.mean(np.abs(true_rho[:, h] - rho_hat[:, h])))
            out[(method, "inhibitor", h)] = float(
                np.mean(np.abs(true_inh[:, h] - inh_hat[:, h])))
    return out


def _map_reps(worker, args_list, jobs: int) -> list:
    if jobs <= 1 or len(args_list) <= 1:
        return [worker(*args) for args in args_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(worker, *args) for args in args_list]
        return [f.result() for f in futures]


def prediction_error_experiment(scenario: Scenario, horizons: Sequence[int] = (1, 6, 10),
                                abc_config: ABCConfig | None = None,
                                prior: UniformBoxPrior | None = None,
                                ls_restarts: int = 8, n_mc: int = 1000,
                                horizon_steps: int = 10, target_reps: int = 400,
                                abc_runs: int = 3, jobs: int = 1) -> MetricTable:
    """Mean absolute error of look-ahead state predictions, both methods.

    Per macro-replication: fit both models on a fresh m-run dataset, then
    predict ``n_test`` fresh test starts. The hybrid predictor is the
    posterior-predictive mean; the baseline predictor is its
    deterministic trajectory. The target is the true process's expected
    state given each test start (``target_reps`` inner runs), for both
    density and inhibitor, at the requested look-ahead steps.
    """
    abc_config = abc_config if abc_config is not None else ABCConfig()
    prior = prior if prior is not None else default_theta_prior()
    dt_obs = ground_truth_config(scenario).dt_obs
    args = [(scenario, rep, tuple(horizons), abc_config, prior, ls_restarts, n_mc, horizon_steps,
             target_reps, abc_runs)
            for rep in range(scenario.replications)]
    rep_results = _map_reps(_prediction_rep, args, jobs)

    per_rep: dict[tuple[str, str, int], list[float]] = {}
    for result in rep_results:
        for key, value in result.items():
            per_rep.setdefault(key, []).append(value)

    table = MetricTable()
    for (method, state, h), values in sorted(per_rep.items()):
        arr = np.asarray(values)
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        table.add(experiment="prediction_error", scenario=scenario.label, b2b=scenario.b2b,
                  sigma_n=scenario.sigma_n, m=scenario.m, method=method, state=state,
                  horizon_steps=h, horizon_hours=h * dt_obs, mae=float(arr.mean()),
                  se=se, ci95=1.96 * se, replications=arr.size,
                  root_seed=scenario.root_seed)
    return table


# ---------------------------------------------------------------------------
# Decision experiment
# ---------------------------------------------------------------------------

def _schedule_expected_reward(problem: DecisionProblem, schedule: tuple[float, ...],
                              config: GroundTruthConfig, n_eval: int,
                              rng_seed: int) -> tuple[float, float]:
    """Mean and SE of a schedule's reward over fresh ground-truth runs."""
    rng = np.random.default_rng(rng_seed)
    interventions = [problem.intervention(h, problem.action_name) for h in schedule]
    out = sde_rollout(config, n_eval, problem.horizon_hours, rng, interventions=interventions)
    rewards = np.array([
        problem.terminal_reward(float(rt), len(schedule), rho_0=float(r0))
        for rt, r0 in zip(out["rho_true"][:, -1], out["rho_true"][:, 0])
    ])
    return float(rewards.mean()), float(rewards.std(ddof=1) / math.sqrt(n_eval))


def _decision_rep(scenario: Scenario, problem: DecisionProblem, rep: int,
                  planner_config: PlannerConfig, abc_config: ABCConfig,
                  prior: UniformBoxPrior, ls_restarts: int,
                  n_eval: int) -> dict[str, object]:
    """One macro-replication of the decision experiment (picklable)."""
    config = ground_truth_config(scenario)
    label = (scenario.root_seed, "decide", problem.kind, scenario.label, rep)
    dataset = generate_dataset(config, scenario.m, seed_schedule(*label, "data"))
    ensemble = _fit_hybrid(dataset, abc_config, prior, seed_schedule(*label, "abc"))
    theta_ls, _ = ls_fit(dataset, restarts=ls_restarts, rng=seed_schedule(*label, "ls"))

    env = GroundTruthProcess(config, seed_schedule(*label, "env"))
    planner_seed = int(seed_schedule(*label, "planner").integers(np.iinfo(np.int64).max))
    trace = greedy_control(ProcessState(rho=env.rho_initial, inhibitor=0.0), ensemble,
                           problem, planner_config, environment=env, seed=planner_seed)
    ls_schedule = ls_decide(theta_ls, problem)[0].schedule

    eval_seed = int(seed_schedule(*label, "eval").integers(np.iinfo(np.int64).max))
    hyb_mean, _ = _schedule_expected_reward(problem, trace.schedule, config, n_eval, eval_seed)
    ls_mean, _ = _schedule_expected_reward(problem, ls_schedule, config, n_eval, eval_seed)
    return {"hybrid": hyb_mean, "ls": ls_mean, "hybrid_realized": trace.terminal_reward,
            "hybrid_schedule": trace.schedule, "ls_schedule": ls_schedule}


def decision_experiment(scenario: Scenario, problem: DecisionProblem,
                        planner_config: PlannerConfig | None = None,
                        abc_config: ABCConfig | None = None,
                        prior: UniformBoxPrior | None = None,
                        ls_restarts: int = 8, n_eval: int = 400, jobs: int = 1) -> MetricTable:
    """Head-to-head decision quality of the posterior planner vs baseline.

    Per macro-replication both methods are fitted on one fresh dataset.
    The hybrid controller runs greedily against a live ground-truth
    process (closed loop); the baseline picks its schedule by exhaustive
    search on its own deterministic model. Each method's executed
    schedule is then scored by its expected reward over ``n_eval`` fresh
    ground-truth runs (shared seed, so methods face common noise), which
    the table reports alongside the hybrid episode's realized reward.
    """
    planner_config = planner_config if planner_config is not None else PlannerConfig(b=2, j=1)
    abc_config = abc_config if abc_config is not None else ABCConfig()
    prior = prior if prior is not None else default_theta_prior()

    args = [(scenario, problem, rep, planner_config, abc_config, prior, ls_restarts, n_eval)
            for rep in range(scenario.replications)]
    rep_results = _map_reps(_decision_rep, args, jobs)

    rows: dict[str, list[float]] = {"hybrid": [], "ls": [], "hybrid_realized": []}
    schedules: dict[str, list[tuple[float, ...]]] = {"hybrid": [], "ls": []}
    for result in rep_results:
        rows["hybrid"].append(result["hybrid"])
        rows["ls"].append(result["ls"])
        rows["hybrid_realized"].append(result["hybrid_realized"])
        schedules["hybrid"].append(result["hybrid_schedule"])
        schedules["ls"].append(result["ls_schedule"])

    table = MetricTable()
    for method in ("hybrid", "ls"):
        arr = np.asarray(rows[method])
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        table.add(experiment="decision", problem=problem.kind, scenario=scenario.label,
                  b2b=scenario.b2b, sigma_n=scenario.sigma_n, m=scenario.m, method=method,
                  mean_reward=float(arr.mean()), se=se, ci95=1.96 * se,
                  replications=arr.size, n_eval=n_eval,
                  mean_realized=float(np.mean(rows["hybrid_realized"])) if method == "hybrid"
                  else None,
                  schedules=";".join(",".join(f"{h:g}" for h in s) or "-"
                                     for s in schedules[method]),
                  root_seed=scenario.root_seed)
    return table


# ---------------------------------------------------------------------------
# Reward curves for external plotting
# ---------------------------------------------------------------------------

def _bootstrap_ci(values: np.ndarray, n_boot: int, rng: np.random.Generator,
                  level: float = 0.95) -> tuple[float, float]:
    means = np.empty(n_boot)
    n = values.size
    for b in range(n_boot):
        means[b] = values[rng.integers(0, n, size=n)].mean()
    lo, hi = np.quantile(means, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def exchange_reward_curve(config: GroundTruthConfig, problem: DecisionProblem, n_reps: int,
                          rng: np.random.Generator, n_boot: int = 1000,
                          method: str = "truth") -> MetricTable:
    """Mean reward versus intervention hour with bootstrap bands."""
    table = MetricTable()
    boot_rng = np.random.default_rng(rng.integers(np.iinfo(np.int64).max))
    base_seed = int(rng.integers(np.iinfo(np.int64).max))
    for schedule in problem.schedules():
        local = np.random.default_rng(base_seed)
        interventions = [problem.intervention(h, problem.action_name) for h in schedule]
        out = sde_rollout(config, n_reps, problem.horizon_hours, local,
                          interventions=interventions)
        rewards = np.array([
            problem.terminal_reward(float(rt), len(schedule), rho_0=float(r0))
            for rt, r0 in zip(out["rho_true"][:, -1], out["rho_true"][:, 0])
        ])
        lo, hi = _bootstrap_ci(rewards, n_boot, boot_rng)
        hour = schedule[0] if schedule else -1.0
        table.add(hour=float(hour), mean=float(rewards.mean()), ci_lo=lo, ci_hi=hi,
                  method=method, n_reps=n_reps)
    return table
