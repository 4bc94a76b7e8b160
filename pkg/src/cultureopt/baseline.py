"""Deterministic-ODE comparator: least-squares fit plus brute-force search.

The baseline ignores all stochasticity: it integrates the mechanistic
growth/inhibitor equations deterministically, fits the kinetic
coefficients by minimizing the squared error on observed densities
(derivative-free simplex descent from random restarts), and picks
intervention schedules by exhaustively evaluating its own deterministic
rollouts. Phase growth rates are fitted separately; the inhibition and
decay coefficients are shared across phases.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from numba import njit
from scipy.optimize import Bounds, minimize

from cultureopt.kinetics import (
    Intervention,
    ModelTheta,
    PhaseParams,
    Trajectory,
    growth_rate_term,
    hybrid_rollout,
)
from cultureopt.planning import DecisionProblem, ScheduleResult

__all__ = [
    "DeterministicTheta",
    "DEFAULT_FIT_BOUNDS",
    "ode_solve",
    "ls_fit",
    "ls_decide",
]

#: Search box for the five fitted coefficients, matching the inference
#: prior ranges for the corresponding parameters.
DEFAULT_FIT_BOUNDS = {
    "mu_g_1": (0.0, 0.2),
    "mu_g_2": (0.0, 0.2),
    "k_s": (0.0, 5.0),
    "k_c": (0.0, 5.0),
    "r_d": (0.0, 0.05),
}


@dataclass(frozen=True)
class DeterministicTheta:
    """Noise-free kinetic parameter set of the baseline model."""

    mu_g_1: float
    mu_g_2: float
    k_s: float
    k_c: float
    r_d: float
    t_star: float = 18.0

    def as_vector(self) -> np.ndarray:
        return np.array([self.mu_g_1, self.mu_g_2, self.k_s, self.k_c, self.r_d])

    @classmethod
    def from_vector(cls, vec: np.ndarray, t_star: float = 18.0) -> "DeterministicTheta":
        return cls(*(float(x) for x in vec), t_star=t_star)

    def to_model_theta(self) -> ModelTheta:
        """Equivalent full parameter set with all noise terms zeroed."""
        p1 = PhaseParams(mu_g=self.mu_g_1, sigma_g=0.0, k_s=self.k_s, k_c=self.k_c, r_d=self.r_d)
        p2 = PhaseParams(mu_g=self.mu_g_2, sigma_g=0.0, k_s=self.k_s, k_c=self.k_c, r_d=self.r_d)
        return ModelTheta(phases=(p1, p2), t_star=self.t_star)

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_model_theta().to_dict(), fh, indent=1)

    @classmethod
    def from_json(cls, path) -> "DeterministicTheta":
        with open(path) as fh:
            data = json.load(fh)
        theta = ModelTheta.from_dict(data)
        return cls(mu_g_1=theta.growth.mu_g, mu_g_2=theta.stationary.mu_g,
                   k_s=theta.growth.k_s, k_c=theta.growth.k_c, r_d=theta.growth.r_d,
                   t_star=theta.t_star)


def _fine_grid(theta: DeterministicTheta, rho0: np.ndarray, horizon_hours: float,
               dt_fine: float, dt_obs: float,
               interventions: Sequence[Intervention] = ()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Euler-integrate the noise-free model; return series on the obs grid."""
    n_fine = int(round(horizon_hours / dt_fine))
    if abs(n_fine * dt_fine - horizon_hours) > 1e-9:
        raise ValueError("horizon_hours must be a multiple of dt_fine")
    stride = int(round(dt_obs / dt_fine))
    if abs(stride * dt_fine - dt_obs) > 1e-9:
        raise ValueError("dt_fine must divide the observation interval")
    rho0 = np.atleast_1d(np.asarray(rho0, dtype=float))
    rho, inh, _ = hybrid_rollout(theta.to_model_theta(), rho0, n_fine, dt_fine,
                                 np.random.default_rng(0), interventions=interventions,
                                 with_noise=False)
    hours = np.arange(0, n_fine + 1, stride) * dt_fine
    return hours, rho[:, ::stride], inh[:, ::stride]


def ode_solve(theta: DeterministicTheta, rho0: float, horizon_hours: float,
              dt_fine: float = 0.01, dt_obs: float = 3.0,
              interventions: Sequence[Intervention] = ()) -> Trajectory:
    """Deterministic trajectory of the baseline model on the obs grid.

    ``dt_fine`` is the inner Euler step (must be at most 0.1 hr); no
    randomness is involved, so repeated calls are bit-identical.
    """
    if dt_fine > 0.1:
        raise ValueError("dt_fine must be <= 0.1 hr")
    hours, rho, inh = _fine_grid(theta, np.array([rho0]), horizon_hours, dt_fine, dt_obs,
                                 interventions)
    return Trajectory(hours=hours, rho_obs=rho[0], inhibitor_true=inh[0], rho_true=rho[0].copy(),
                      interventions=tuple(interventions))


@njit(cache=True)
def _euler_obs_grid(rho0: np.ndarray, mu_1: float, mu_2: float, k_s: float, k_c: float,
                    r_d: float, t_star: float, dt: float, stride: int,
                    n_obs: int) -> np.ndarray:  # pragma: no cover - exercised via ls_fit
    """Compiled no-intervention Euler integration, densities on the obs grid."""
    m = rho0.size
    out = np.empty((m, n_obs + 1))
    for i in range(m):
        rho = rho0[i]
        inh = 0.0
        out[i, 0] = rho
        hour = 0.0
        for k in range(n_obs * stride):
            mu = mu_1 if hour < t_star else mu_2
            arg = k_s * (k_c - inh)
            if arg >= 0.0:
                factor = 1.0 if arg > 700.0 else 1.0 / (1.0 + math.exp(-arg))
            else:
                e = math.exp(arg) if arg > -700.0 else 0.0
                factor = e / (1.0 + e)
            d_rho = dt * mu * rho * factor
            inh = inh + d_rho - dt * r_d * inh
            rho = rho + d_rho
            hour += dt
            if (k + 1) % stride == 0:
                out[i, (k + 1) // stride] = rho
    return out


def _sse_objective(vec: np.ndarray, obs: np.ndarray, dt_fine: float, dt_obs: float,
                   t_star: float) -> float:
    vec = np.clip(vec, 0.0, None)
    stride = int(round(dt_obs / dt_fine))
    rho = _euler_obs_grid(np.ascontiguousarray(obs[:, 0]), vec[0], vec[1], vec[2], vec[3],
                          vec[4], t_star, dt_fine, stride, obs.shape[1] - 1)
    diff = rho - obs
    return float(np.sum(diff * diff))


def ls_fit(dataset: Sequence[Trajectory], bounds: Mapping[str, tuple[float, float]] | None = None,
           restarts: int = 20, rng: np.random.Generator | None = None, dt_fine: float = 0.01,
           t_star: float = 18.0, max_iterations: int = 600) -> tuple[DeterministicTheta, float]:
    """Least-squares fit of the deterministic model to observed densities.

    Each trajectory's prediction starts from its own first measured
    density. Runs ``restarts`` Nelder-Mead descents from uniform random
    points in the bound box and returns the best (theta, objective).
    """
    if not dataset:
        raise ValueError("dataset must contain at least one trajectory")
    if rng is None:
        rng = np.random.default_rng(0)
    bounds = dict(DEFAULT_FIT_BOUNDS if bounds is None else bounds)
    names = list(DEFAULT_FIT_BOUNDS)
    lows = np.array([bounds[n][0] for n in names])
    highs = np.array([bounds[n][1] for n in names])

    hours = dataset[0].hours
    dt_obs = float(hours[1] - hours[0])
    obs = np.stack([traj.rho_obs for traj in dataset])

    def objective(vec: np.ndarray) -> float:
        return _sse_objective(vec, obs, dt_fine, dt_obs, t_star)

    best_vec: np.ndarray | None = None
    best_val = math.inf
    box = Bounds(lows, highs)
    for _ in range(max(restarts, 1)):
        start = rng.uniform(lows, highs)
        res = minimize(objective, start, method="Nelder-Mead", bounds=box,
                       options={"maxiter": max_iterations, "xatol": 1e-6, "fatol": 1e-8})
        if res.fun < best_val:
            best_val = float(res.fun)
            best_vec = np.asarray(res.x)
    assert best_vec is not None
    return DeterministicTheta.from_vector(best_vec, t_star=t_star), best_val


def ls_decide(theta: DeterministicTheta, problem: DecisionProblem,
              dt_fine: float = 0.01) -> list[ScheduleResult]:
    """Exhaustive deterministic schedule search under the fitted model.

    Every schedule is rolled out once (the model has no randomness) from
    the problem's reference initial density; results are ranked by
    predicted reward, ties toward earlier schedules. All schedules
    integrate together as one vectorized batch.
    """
    schedules = problem.schedules()
    n = len(schedules)
    mt = theta.to_model_theta()
    rho_f, inh_f = problem.action_factors(problem.action_name)
    steps_per_chunk = int(round(problem.dt / dt_fine))
    if abs(steps_per_chunk * dt_fine - problem.dt) > 1e-9:
        raise ValueError("dt_fine must divide the decision interval")

    rho = np.full(n, float(problem.rho_initial))
    inh = np.zeros(n)
    for step in range(1, problem.horizon_steps + 1):
        hour = (step - 1) * problem.dt
        mask = np.array([any(abs(h - hour) < 1e-9 for h in s) for s in schedules])
        if mask.any():
            rho[mask] *= rho_f
            inh[mask] *= inh_f
        for k in range(steps_per_chunk):
            p = mt.phase_at(hour + k * dt_fine)
            d_rho = dt_fine * growth_rate_term(rho, inh, p.mu_g, p.k_s, p.k_c)
            inh = inh + d_rho - dt_fine * p.r_d * inh
            rho = rho + d_rho

    results = []
    for schedule, rho_end in zip(schedules, rho):
        reward = problem.terminal_reward(float(rho_end), len(schedule),
                                         rho_0=float(problem.rho_initial))
        results.append(ScheduleResult(schedule=schedule, mean_reward=reward, se_reward=0.0,
                                      n_reps=1))
    results.sort(key=lambda r: (-r.mean_reward, len(r.schedule), r.schedule))
    return results
