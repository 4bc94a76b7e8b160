"""Two-phase cell-culture kinetics with inhibitor feedback.

The mechanistic core is a logistic-inhibition growth model: cell density
grows at a phase-dependent rate, throttled by an accumulating growth
inhibitor, and the inhibitor tracks density gains while decaying slowly.
Two simulators are built on top of it:

* a discrete-time *hybrid* model (Euler step of the mechanistic terms plus
  Gaussian residuals on both states), used for inference and planning;
* a *ground-truth* stochastic-differential-equation simulator
  (Euler-Maruyama with Brownian process noise, random initial density,
  per-batch random growth rates, and measurement error on recorded
  densities), used to generate synthetic datasets and to evaluate
  decision policies.

All stepping functions accept numpy arrays and broadcast across ensemble
members, so batches of trajectories run as vectorized loops over time.
Every stochastic operation takes an explicit ``numpy.random.Generator``;
nothing reads global RNG state.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "PARAM_NAMES",
    "PhaseParams",
    "ModelTheta",
    "ProcessState",
    "GroundTruthConfig",
    "Intervention",
    "Trajectory",
    "growth_rate_term",
    "inhibitor_term",
    "phase_of",
    "hybrid_step_mean",
    "hybrid_step_sample",
    "hybrid_rollout",
    "simulate_hybrid_trajectory",
    "sde_rollout",
    "simulate_ground_truth",
    "GroundTruthProcess",
    "trajectory_to_csv",
    "trajectory_from_csv",
]

#: Flat parameter layout used for inference vectors and JSON files.
#: Phase 1 is the growth phase, phase 2 the stationary phase.
PARAM_NAMES = (
    "mu_g_1", "sigma_g_1", "k_s_1", "k_c_1", "r_d_1", "v_rho_1", "v_inh_1",
    "mu_g_2", "sigma_g_2", "k_s_2", "k_c_2", "r_d_2", "v_rho_2", "v_inh_2",
)

_FIELDS_PER_PHASE = 7


@dataclass(frozen=True)
class PhaseParams:
    """Kinetic and noise parameters of one culture phase.

    mu_g / sigma_g : mean and batch-to-batch std of the growth rate (1/hr)
    k_s            : inhibitor sensitivity (steepness of the shut-off)
    k_c            : inhibitor threshold (half-inhibition concentration)
    r_d            : inhibitor decay rate (1/hr)
    v_rho / v_inh  : residual std of the hybrid one-step update, per state
    """

    mu_g: float
    sigma_g: float
    k_s: float
    k_c: float
    r_d: float
    v_rho: float = 0.0
    v_inh: float = 0.0

    def __post_init__(self) -> None:
        for name in ("mu_g", "sigma_g", "k_s", "k_c", "r_d", "v_rho", "v_inh"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise ValueError(f"PhaseParams.{name} must be finite and >= 0, got {value!r}")

    def as_tuple(self) -> tuple[float, ...]:
        return (self.mu_g, self.sigma_g, self.k_s, self.k_c, self.r_d, self.v_rho, self.v_inh)


@dataclass(frozen=True)
class ModelTheta:
    """Full transition-model parameter set: two phases plus the switch hour."""

    phases: tuple[PhaseParams, PhaseParams]
    t_star: float = 18.0

    def __post_init__(self) -> None:
        if len(self.phases) != 2:
            raise ValueError("ModelTheta requires exactly two phases (growth, stationary)")
        if not (self.t_star > 0.0 and math.isfinite(self.t_star)):
            raise ValueError(f"t_star must be a positive finite hour, got {self.t_star!r}")

    @property
    def growth(self) -> PhaseParams:
        return self.phases[0]

    @property
    def stationary(self) -> PhaseParams:
        return self.phases[1]

    def phase_at(self, hour: float) -> PhaseParams:
        return self.phases[phase_of(hour, self.t_star) - 1]

    def to_vector(self) -> np.ndarray:
        """Flat 14-vector in :data:`PARAM_NAMES` order (t_star not included)."""
        return np.array(self.phases[0].as_tuple() + self.phases[1].as_tuple(), dtype=float)

    @classmethod
    def from_vector(cls, vec: np.ndarray, t_star: float = 18.0) -> "ModelTheta":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (len(PARAM_NAMES),):
            raise ValueError(f"expected a {len(PARAM_NAMES)}-vector, got shape {vec.shape}")
        p1 = PhaseParams(*vec[:_FIELDS_PER_PHASE])
        p2 = PhaseParams(*vec[_FIELDS_PER_PHASE:])
        return cls(phases=(p1, p2), t_star=t_star)

    def to_dict(self) -> dict[str, float]:
        out = {name: float(v) for name, v in zip(PARAM_NAMES, self.to_vector())}
        out["t_star"] = float(self.t_star)
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "ModelTheta":
        vec = np.array([data[name] for name in PARAM_NAMES], dtype=float)
        return cls.from_vector(vec, t_star=float(data.get("t_star", 18.0)))


@dataclass(frozen=True)
class ProcessState:
    """Culture state at one discrete decision epoch.

    ``step`` is 1-based; ``hour`` must equal ``(step - 1) * dt`` for the
    decision grid in use.
    """

    rho: float
    inhibitor: float
    step: int = 1
    hour: float = 0.0

    def __post_init__(self) -> None:
        if self.rho < 0.0 or self.inhibitor < 0.0:
            raise ValueError(f"state values must be >= 0, got rho={self.rho}, inhibitor={self.inhibitor}")
        if self.step < 1:
            raise ValueError(f"step is 1-based, got {self.step}")


@dataclass(frozen=True)
class GroundTruthConfig:
    """Settings of the ground-truth SDE simulator.

    ``theta`` supplies kinetics and batch-effect stds (its residual stds
    are ignored here; process noise enters through ``sigma_n`` instead).
    Measurement error ``sigma_m`` applies to recorded densities only and
    never feeds back into the dynamics.
    """

    theta: ModelTheta
    sigma_n: float = 0.01
    sigma_m: float = 0.2
    mu_rho0: float = 3.0
    sigma_rho0: float = 0.03
    dt_sde: float = 0.01
    dt_obs: float = 3.0

    def __post_init__(self) -> None:
        for name in ("sigma_n", "sigma_m", "sigma_rho0"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.dt_sde <= 0.0 or self.dt_obs <= 0.0:
            raise ValueError("dt_sde and dt_obs must be positive")
        ratio = self.dt_obs / self.dt_sde
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(f"dt_sde={self.dt_sde} must divide dt_obs={self.dt_obs} evenly")

    @property
    def inner_steps_per_obs(self) -> int:
        return int(round(self.dt_obs / self.dt_sde))

    def to_dict(self) -> dict[str, float]:
        out = self.theta.to_dict()
        out.update(
            sigma_n=float(self.sigma_n),
            sigma_m=float(self.sigma_m),
            mu_rho0=float(self.mu_rho0),
            sigma_rho0=float(self.sigma_rho0),
            dt_sde=float(self.dt_sde),
            dt_obs=float(self.dt_obs),
        )
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "GroundTruthConfig":
        theta = ModelTheta.from_dict(data)
        kwargs = {
            name: float(data[name])
            for name in ("sigma_n", "sigma_m", "mu_rho0", "sigma_rho0", "dt_sde", "dt_obs")
            if name in data
        }
        return cls(theta=theta, **kwargs)


@dataclass(frozen=True)
class Intervention:
    """Instantaneous state rescaling applied at a scheduled hour.

    Medium exchange keeps density and zeroes the inhibitor
    (``rho_factor=1, inhibitor_factor=0``); an n-fold vessel expansion
    dilutes both by ``1/n``. The hour must lie on the observation grid of
    the simulator that applies it.
    """

    hour: float
    name: str
    rho_factor: float = 1.0
    inhibitor_factor: float = 1.0

    def __post_init__(self) -> None:
        if self.rho_factor < 0.0 or self.inhibitor_factor < 0.0:
            raise ValueError("intervention factors must be >= 0")


def _intervention_map(interventions: Iterable[Intervention]) -> dict[float, Intervention]:
    out: dict[float, Intervention] = {}
    for iv in interventions:
        key = round(float(iv.hour), 9)
        if key in out:
            raise ValueError(f"two interventions scheduled at hour {iv.hour}")
        out[key] = iv
    return out


@dataclass
class Trajectory:
    """Time-stamped series of one culture run.

    ``rho_obs`` carries measured densities. Ground-truth runs may also
    carry noiseless latent series (``rho_true``, ``inhibitor_true``) and
    the realized per-phase growth rates, for diagnostics and scoring;
    inference inputs must be stripped of those via :meth:`observed_view`.
    """

    hours: np.ndarray
    rho_obs: np.ndarray
    inhibitor_true: np.ndarray | None = None
    rho_true: np.ndarray | None = None
    interventions: tuple[Intervention, ...] = ()
    batch_growth_rates: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        self.hours = np.asarray(self.hours, dtype=float)
        self.rho_obs = np.asarray(self.rho_obs, dtype=float)
        if self.hours.ndim != 1 or self.hours.shape != self.rho_obs.shape:
            raise ValueError("hours and rho_obs must be 1-d arrays of equal length")
        if np.any(np.diff(self.hours) <= 0.0):
            raise ValueError("hours must be strictly increasing")
        for name in ("inhibitor_true", "rho_true"):
            series = getattr(self, name)
            if series is not None:
                series = np.asarray(series, dtype=float)
                if series.shape != self.hours.shape:
                    raise ValueError(f"{name} length must match hours")
                setattr(self, name, series)

    def __len__(self) -> int:
        return int(self.hours.size)

    @property
    def rho_initial(self) -> float:
        return float(self.rho_obs[0])

    def observed_view(self) -> "Trajectory":
        """Copy with latent series and batch effects removed."""
        return Trajectory(hours=self.hours.copy(), rho_obs=self.rho_obs.copy(),
                          interventions=self.interventions)


# ---------------------------------------------------------------------------
# Mechanistic terms
# ---------------------------------------------------------------------------

def _stable_sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    # 1 / (1 + exp(-x)) without overflow for any float argument.
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def growth_rate_term(rho, inhibitor, r_g, k_s, k_c):
    """Instantaneous density growth d(rho)/dt.

    Growth proceeds at rate ``r_g`` scaled by a logistic shut-off in the
    inhibitor: the factor is ~1 well below the threshold ``k_c``, 1/2 at
    the threshold, and ~0 well above it. Total on all valid inputs; the
    exponent is evaluated overflow-safely.
    """
    return r_g * np.asarray(rho, dtype=float) * _stable_sigmoid(k_s * (k_c - np.asarray(inhibitor, dtype=float)))


def inhibitor_term(drho_dt, inhibitor, r_d):
    """Instantaneous inhibitor change: tracks density gains minus decay."""
    return drho_dt - r_d * np.asarray(inhibitor, dtype=float)


def phase_of(hour: float, t_star: float) -> int:
    """Phase index at a given hour: 1 before ``t_star``, 2 from it on."""
    if hour < 0.0:
        raise ValueError(f"hour must be >= 0, got {hour}")
    return 1 if hour < t_star else 2


def _mean_increments(rho, inhibitor, r_g, k_s, k_c, r_d, dt):
    """One Euler step of the mechanistic terms; returns (d_rho, d_inh).

    Transiently negative noisy states are tolerated by gating growth at
    zero density (an empty culture does not grow or shrink), so additive
    noise stays unbiased near zero instead of being rectified into
    spurious growth; the signed decay term mean-reverts the inhibitor.
    """
    rho_eff = np.maximum(np.asarray(rho, dtype=float), 0.0)
    inh_eff = np.maximum(np.asarray(inhibitor, dtype=float), 0.0)
    d_rho = dt * growth_rate_term(rho_eff, inh_eff, r_g, k_s, k_c)
    d_inh = d_rho - dt * r_d * np.asarray(inhibitor, dtype=float)
    return d_rho, d_inh


def hybrid_step_mean(state: ProcessState, theta: ModelTheta, r_g_realized: float, dt: float) -> ProcessState:
    """Noiseless one-step update of the discrete-time hybrid model.

    The phase is selected from ``state.hour`` against ``theta.t_star``;
    the realized growth rate is passed in so batch effects stay fixed
    along a trajectory.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    p = theta.phase_at(state.hour)
    d_rho, d_inh = _mean_increments(state.rho, state.inhibitor, r_g_realized, p.k_s, p.k_c, p.r_d, dt)
    return ProcessState(rho=float(state.rho + d_rho), inhibitor=float(state.inhibitor + d_inh),
                        step=state.step + 1, hour=state.hour + dt)


def hybrid_step_sample(state: ProcessState, theta: ModelTheta, r_g_realized: float, dt: float,
                       rng: np.random.Generator) -> ProcessState:
    """One stochastic hybrid step: the mean update plus Gaussian residuals.

    Residuals are independent per state with phase stds (v_rho, v_inh);
    negative results are clamped at zero.
    """
    mean = hybrid_step_mean(state, theta, r_g_realized, dt)
    p = theta.phase_at(state.hour)
    rho = mean.rho + p.v_rho * rng.standard_normal()
    inh = mean.inhibitor + p.v_inh * rng.standard_normal()
    return ProcessState(rho=max(rho, 0.0), inhibitor=max(inh, 0.0), step=mean.step, hour=mean.hour)


# ---------------------------------------------------------------------------
# Hybrid-model trajectory simulation (vectorized across a batch)
# ---------------------------------------------------------------------------

def _theta_rows(thetas: ModelTheta | np.ndarray, n: int) -> np.ndarray:
    """Normalize parameters to an (n, 14) array in PARAM_NAMES order."""
    if isinstance(thetas, ModelTheta):
        return np.broadcast_to(thetas.to_vector(), (n, len(PARAM_NAMES))).copy()
    arr = np.asarray(thetas, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[1] != len(PARAM_NAMES):
        raise ValueError(f"parameter rows must have {len(PARAM_NAMES)} columns")
    if arr.shape[0] == 1 and n > 1:
        arr = np.broadcast_to(arr, (n, len(PARAM_NAMES))).copy()
    if arr.shape[0] != n:
        raise ValueError(f"got {arr.shape[0]} parameter rows for a batch of {n}")
    return arr


def hybrid_rollout(thetas: ModelTheta | np.ndarray, rho0: np.ndarray, horizon_steps: int, dt: float,
                   rng: np.random.Generator, t_star: float = 18.0,
                   interventions: Sequence[Intervention] = (), with_noise: bool = True,
                   r_g: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate a batch of hybrid-model trajectories on the decision grid.

    Parameters
    ----------
    thetas : ModelTheta or (n, 14) array
        One shared parameter set or one row per trajectory.
    rho0 : (n,) array
        Initial densities; the inhibitor starts at zero.
    horizon_steps, dt
        Number of decision steps H and the step width in hours; the
        output has H+1 grid points.
    rng
        Source for batch effects and residual noise.
    t_star
        Phase-switch hour (used when ``thetas`` is an array; a
        ``ModelTheta`` carries its own).
    interventions
        State rescalings applied at their scheduled hours, before the
        step taken from that hour; recorded values are post-intervention.
    with_noise
        If False, residuals are skipped and the realized growth rates
        equal their means (the deterministic Euler recursion).
    r_g : (n, 2) array, optional
        Pre-drawn per-phase growth rates; drawn from the batch-effect
        distribution when omitted.

    Returns
    -------
    rho, inhibitor : (n, H+1) arrays, and the realized r_g as (n, 2).
    """
    rho0 = np.atleast_1d(np.asarray(rho0, dtype=float))
    n = rho0.size
    params = _theta_rows(thetas, n)
    if isinstance(thetas, ModelTheta):
        t_star = thetas.t_star
    if horizon_steps < 1:
        raise ValueError("horizon_steps must be >= 1")

    mu_g = params[:, [0, 7]]
    sigma_g = params[:, [1, 8]]
    k_s = params[:, [2, 9]]
    k_c = params[:, [3, 10]]
    r_d = params[:, [4, 11]]
    v_rho = params[:, [5, 12]]
    v_inh = params[:, [6, 13]]

    if r_g is None:
        if with_noise:
            r_g = mu_g + sigma_g * rng.standard_normal((n, 2))
        else:
            r_g = mu_g.copy()
    else:
        r_g = np.asarray(r_g, dtype=float).reshape(n, 2)

    schedule = _intervention_map(interventions)
    rho = np.empty((n, horizon_steps + 1))
    inh = np.empty((n, horizon_steps + 1))
    cur_rho = rho0.copy()
    cur_inh = np.zeros(n)

    for k in range(horizon_steps + 1):
        hour = k * dt
        iv = schedule.get(round(hour, 9))
        if iv is not None:
            cur_rho = cur_rho * iv.rho_factor
            cur_inh = cur_inh * iv.inhibitor_factor
        rho[:, k] = cur_rho
        inh[:, k] = cur_inh
        if k == horizon_steps:
            break
        p = phase_of(hour, t_star) - 1
        d_rho, d_inh = _mean_increments(cur_rho, cur_inh, r_g[:, p], k_s[:, p], k_c[:, p], r_d[:, p], dt)
        cur_rho = cur_rho + d_rho
        cur_inh = cur_inh + d_inh
        if with_noise:
            cur_rho = cur_rho + v_rho[:, p] * rng.standard_normal(n)
            cur_inh = cur_inh + v_inh[:, p] * rng.standard_normal(n)

    return rho, inh, r_g


def simulate_hybrid_trajectory(theta: ModelTheta, rho0: float, horizon_steps: int, dt: float,
                               rng: np.random.Generator,
                               interventions: Sequence[Intervention] = ()) -> Trajectory:
    """Single hybrid-model trajectory as a :class:`Trajectory`.

    Per-phase growth rates are drawn once for the whole run (the batch
    effect); residual noise is added at every step. The latent inhibitor
    series is retained on the returned object.
    """
    rho, inh, r_g = hybrid_rollout(theta, np.array([rho0]), horizon_steps, dt, rng,
                                   interventions=interventions)
    hours = np.arange(horizon_steps + 1) * dt
    return Trajectory(hours=hours, rho_obs=rho[0], inhibitor_true=inh[0], rho_true=rho[0].copy(),
                      interventions=tuple(interventions),
                      batch_growth_rates=tuple(float(x) for x in r_g[0]))


# ---------------------------------------------------------------------------
# Ground-truth SDE simulation
# ---------------------------------------------------------------------------

def _sde_advance(cur_rho: np.ndarray, cur_inh: np.ndarray, hour: float, n_inner: int,
                 theta: ModelTheta, r_g: np.ndarray, sigma_n: float, dt: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, float]:
    """Advance a batch by ``n_inner`` Euler-Maruyama steps of width dt.

    The density increment (drift plus its own Brownian term) feeds the
    inhibitor equation, which adds an independent Brownian term of the
    same scale. Noise may push states transiently negative; the drift is
    gated at zero (see :func:`_mean_increments`) so the noise stays
    unbiased instead of accumulating a spurious positive floor.
    """
    n = cur_rho.size
    sqrt_dt = math.sqrt(dt)
    for _ in range(n_inner):
        p = phase_of(hour, theta.t_star) - 1
        ph = theta.phases[p]
        d_rho, d_inh = _mean_increments(cur_rho, cur_inh, r_g[:, p], ph.k_s, ph.k_c, ph.r_d, dt)
        if sigma_n > 0.0:
            noise = sigma_n * sqrt_dt * rng.standard_normal(n)
            d_rho = d_rho + noise
            d_inh = d_inh + noise + sigma_n * sqrt_dt * rng.standard_normal(n)
        cur_rho = cur_rho + d_rho
        cur_inh = cur_inh + d_inh
        hour += dt
    return cur_rho, cur_inh, hour


def sde_rollout(config: GroundTruthConfig, n: int, horizon_hours: float, rng: np.random.Generator,
                interventions: Sequence[Intervention] = (),
                rho0: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Simulate ``n`` independent ground-truth runs on the observation grid.

    Returns arrays keyed ``hours`` (K,), ``rho_true``/``inhibitor_true``/
    ``rho_obs`` (n, K), and the realized per-phase growth rates ``r_g``
    (n, 2). Interventions apply instantaneously at their scheduled hours
    (recorded values are post-intervention); measurement error perturbs
    ``rho_obs`` only.
    """
    n_obs = int(round(horizon_hours / config.dt_obs))
    if abs(n_obs * config.dt_obs - horizon_hours) > 1e-9 or n_obs < 1:
        raise ValueError("horizon_hours must be a positive multiple of dt_obs")
    theta = config.theta
    if rho0 is None:
        cur_rho = config.mu_rho0 + config.sigma_rho0 * rng.standard_normal(n)
        cur_rho = np.clip(cur_rho, 0.0, None)
    else:
        cur_rho = np.atleast_1d(np.asarray(rho0, dtype=float)).copy()
        if cur_rho.size != n:
            raise ValueError("rho0 must have one entry per trajectory")
    cur_inh = np.zeros(n)
    mu_g = np.array([theta.growth.mu_g, theta.stationary.mu_g])
    sigma_g = np.array([theta.growth.sigma_g, theta.stationary.sigma_g])
    r_g = mu_g + sigma_g * rng.standard_normal((n, 2))

    schedule = _intervention_map(interventions)
    inner = config.inner_steps_per_obs
    hours = np.arange(n_obs + 1) * config.dt_obs
    rho_true = np.empty((n, n_obs + 1))
    inh_true = np.empty((n, n_obs + 1))
    hour = 0.0
    for k in range(n_obs + 1):
        iv = schedule.get(round(hour, 9))
        if iv is not None:
            cur_rho = cur_rho * iv.rho_factor
            cur_inh = cur_inh * iv.inhibitor_factor
        rho_true[:, k] = cur_rho
        inh_true[:, k] = cur_inh
        if k == n_obs:
            break
        cur_rho, cur_inh, hour = _sde_advance(cur_rho, cur_inh, hour, inner, theta, r_g,
                                              config.sigma_n, config.dt_sde, rng)
        hour = (k + 1) * config.dt_obs  # avoid float drift across chunks
    rho_obs = rho_true + config.sigma_m * rng.standard_normal((n, n_obs + 1)) if config.sigma_m > 0.0 \
        else rho_true.copy()
    return {"hours": hours, "rho_true": rho_true, "inhibitor_true": inh_true,
            "rho_obs": rho_obs, "r_g": r_g}


def simulate_ground_truth(config: GroundTruthConfig, horizon_hours: float, rng: np.random.Generator,
                          interventions: Sequence[Intervention] = ()) -> Trajectory:
    """One ground-truth run packaged as a :class:`Trajectory`."""
    out = sde_rollout(config, 1, horizon_hours, rng, interventions=interventions)
    return Trajectory(hours=out["hours"], rho_obs=out["rho_obs"][0],
                      inhibitor_true=out["inhibitor_true"][0], rho_true=out["rho_true"][0],
                      interventions=tuple(interventions),
                      batch_growth_rates=tuple(float(x) for x in out["r_g"][0]))


class GroundTruthProcess:
    """Stateful single-run ground-truth simulator for closed-loop control.

    Exposes the true latent state, noisy observations, instantaneous
    state rescaling, and stepwise advancement on the observation grid.
    """

    def __init__(self, config: GroundTruthConfig, rng: np.random.Generator,
                 rho0: float | None = None) -> None:
        self.config = config
        self._rng = rng
        if rho0 is None:
            rho0 = config.mu_rho0 + config.sigma_rho0 * rng.standard_normal()
        self._rho = max(float(rho0), 0.0)
        self._inh = 0.0
        self._hour = 0.0
        theta = config.theta
        mu = np.array([theta.growth.mu_g, theta.stationary.mu_g])
        sig = np.array([theta.growth.sigma_g, theta.stationary.sigma_g])
        self._r_g = (mu + sig * rng.standard_normal(2))[None, :]
        self.rho_initial = self._rho

    @property
    def hour(self) -> float:
        return self._hour

    @property
    def rho(self) -> float:
        return self._rho

    @property
    def inhibitor(self) -> float:
        return self._inh

    def observe(self) -> float:
        """Current density with measurement error applied."""
        return self._rho + self.config.sigma_m * float(self._rng.standard_normal())

    def apply_scaling(self, rho_factor: float, inhibitor_factor: float) -> None:
        self._rho *= rho_factor
        self._inh *= inhibitor_factor

    def advance(self, hours: float | None = None) -> None:
        """Integrate forward by ``hours`` (default: one observation interval)."""
        if hours is None:
            hours = self.config.dt_obs
        n_inner = int(round(hours / self.config.dt_sde))
        if abs(n_inner * self.config.dt_sde - hours) > 1e-9:
            raise ValueError("advance length must be a multiple of dt_sde")
        rho = np.array([self._rho])
        inh = np.array([self._inh])
        rho, inh, _ = _sde_advance(rho, inh, self._hour, n_inner, self.config.theta, self._r_g,
                                   self.config.sigma_n, self.config.dt_sde, self._rng)
        self._rho = float(rho[0])
        self._inh = float(inh[0])
        self._hour += hours


# ---------------------------------------------------------------------------
# CSV export
# ---------------------------------------------------------------------------

def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write a trajectory as CSV (hour, rho_obs[, latent series], intervention)."""
    schedule = _intervention_map(traj.interventions)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["hour", "rho_obs"]
        if traj.rho_true is not None:
            header.append("rho_true")
        if traj.inhibitor_true is not None:
            header.append("inhibitor_true")
        header.append("intervention")
        writer.writerow(header)
        for k, hour in enumerate(traj.hours):
            row: list[object] = [repr(float(hour)), repr(float(traj.rho_obs[k]))]
            if traj.rho_true is not None:
                row.append(repr(float(traj.rho_true[k])))
            if traj.inhibitor_true is not None:
                row.append(repr(float(traj.inhibitor_true[k])))
            iv = schedule.get(round(float(hour), 9))
            row.append(iv.name if iv is not None else "")
            writer.writerow(row)


def trajectory_from_csv(path) -> Trajectory:
    """Read a trajectory written by :func:`trajectory_to_csv`.

    Intervention names round-trip as annotations with identity factors;
    the numeric series already embed their effect.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    hours = np.array([float(r["hour"]) for r in rows])
    rho_obs = np.array([float(r["rho_obs"]) for r in rows])
    rho_true = None
    inhibitor_true = None
    if rows and "rho_true" in rows[0]:
        rho_true = np.array([float(r["rho_true"]) for r in rows])
    if rows and "inhibitor_true" in rows[0]:
        inhibitor_true = np.array([float(r["inhibitor_true"]) for r in rows])
    interventions = tuple(
        Intervention(hour=float(r["hour"]), name=r["intervention"])
        for r in rows if r.get("intervention")
    )
    return Trajectory(hours=hours, rho_obs=rho_obs, inhibitor_true=inhibitor_true,
                      rho_true=rho_true, interventions=interventions)
