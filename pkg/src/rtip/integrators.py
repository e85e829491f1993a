"""Fixed-step deterministic (RK4) and stochastic (Euler-Maruyama) integration.

Single trajectories run through an unrolled scalar fast path; grids and
ensembles run through vectorized batch steppers operating on (n, d) state
arrays. Noise increments come from a counter-based generator keyed by the
trajectory seed, so ensembles are reproducible member-by-member regardless
of batch composition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonFiniteState

__all__ = [
    "IntegratorConfig",
    "NoiseModel",
    "Trajectory",
    "integrate_ode",
    "integrate_ode_batch",
    "integrate_sde",
    "integrate_sde_batch",
    "rk4_step_batch",
    "noise_increments",
]

METHOD_RK4 = "rk4"
METHOD_EM = "euler_maruyama"


@dataclass(frozen=True, eq=False)
class IntegratorConfig:
    """Fixed-step integration setup; t_end < t_start runs backward in time."""

    dt: float
    t_start: float
    t_end: float
    method: str = METHOD_RK4
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if self.t_end == self.t_start:
            raise ConfigError("t_end must differ from t_start")
        if self.method not in (METHOD_RK4, METHOD_EM):
            raise ConfigError(f"unknown method: {self.method!r}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ConfigError(f"record_stride must be an integer >= 1, got {self.record_stride}")
        span = abs(self.t_end - self.t_start)
        n = round(span / self.dt)
        if n < 1 or abs(n * self.dt - span) > 1e-9 * max(1.0, span):
            raise ConfigError(
                f"time span {span:g} is not an integer multiple of dt={self.dt:g}"
            )

    @property
    def n_steps(self) -> int:
        return round(abs(self.t_end - self.t_start) / self.dt)

    @property
    def signed_dt(self) -> float:
        return self.dt if self.t_end > self.t_start else -self.dt


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Additive noise sigma * A dW with structure matrix A (units yr^-1/2)."""

    sigma: float
    A: np.ndarray

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if not np.all(np.isfinite(A)):
            raise ConfigError("noise structure matrix must be finite")
        object.__setattr__(self, "A", A)

    @classmethod
    def amoc_default(cls, sigma: float = 0.01) -> "NoiseModel":
        return cls(sigma=sigma, A=np.array([[0.1263, -0.0869], [0.0, 0.1008]]))

    @classmethod
    def scalar(cls, sigma: float) -> "NoiseModel":
        return cls(sigma=sigma, A=np.array([[1.0]]))

    @property
    def n_sources(self) -> int:
        return self.A.shape[1]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded time series of states with provenance."""

    times: np.ndarray
    states: np.ndarray
    seed: int | None = None
    forcing_id: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if len(times) != len(states):
            raise ValueError("times and states must have equal length")
        d = np.diff(times)
        if len(d) and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("times must be strictly monotone")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _record_times(cfg: IntegratorConfig) -> np.ndarray:
    idx = np.arange(0, cfg.n_steps + 1, cfg.record_stride)
    if idx[-1] != cfg.n_steps:
        idx = np.append(idx, cfg.n_steps)
    return idx


def integrate_ode(model, forcing, x0, cfg: IntegratorConfig) -> Trajectory:
    """Fixed-step RK4 solution of dx/dt = f(x, forcing(t)) for one state.

    Backward integration is requested by t_end < t_start. Raises
    NonFiniteState if a component blows up.
    """
    if cfg.method != METHOD_RK4:
        raise ConfigError("integrate_ode requires the deterministic rk4 method")
    dt = cfg.signed_dt
    n = cfg.n_steps
    rec = _record_times(cfg)
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    d = x.shape[0]
    out = np.empty((len(rec), d))
    out[0] = x
    t0 = cfg.t_start
    half = 0.5 * dt
    sixth = dt / 6.0
    value = forcing.value
    j = 1
    if d == 2:
        f = model.rhs_scalar
        sn, st = float(x[0]), float(x[1])
        for k in range(n):
            t = t0 + k * dt
            p1 = value(t)
            pm = value(t + half)
            p2 = value(t + dt)
            a1, b1 = f(sn, st, p1)
            a2, b2 = f(sn + half * a1, st + half * b1, pm)
            a3, b3 = f(sn + half * a2, st + half * b2, pm)
            a4, b4 = f(sn + dt * a3, st + dt * b3, p2)
            sn += sixth * (a1 + 2.0 * (a2 + a3) + a4)
            st += sixth * (b1 + 2.0 * (b2 + b3) + b4)
            if k + 1 == rec[j]:
                if not (math.isfinite(sn) and math.isfinite(st)):
                    raise NonFiniteState(f"state non-finite at t={t + dt:g}")
                out[j] = (sn, st)
                j += 1
        if not (math.isfinite(sn) and math.isfinite(st)):
            raise NonFiniteState("state non-finite at end of integration")
    elif d == 1:
        f = model.rhs_scalar
        xv = float(x[0])
        for k in range(n):
            t = t0 + k * dt
            p1 = value(t)
            pm = value(t + half)
            p2 = value(t + dt)
            (a1,) = f(xv, p1)
            (a2,) = f(xv + half * a1, pm)
            (a3,) = f(xv + half * a2, pm)
            (a4,) = f(xv + dt * a3, p2)
            xv += sixth * (a1 + 2.0 * (a2 + a3) + a4)
            if k + 1 == rec[j]:
                if not math.isfinite(xv):
                    raise NonFiniteState(f"state non-finite at t={t + dt:g}")
                out[j] = xv
                j += 1
        if not math.isfinite(xv):
            raise NonFiniteState("state non-finite at end of integration")
    else:
        times, states = integrate_ode_batch(model, forcing, x[None, :], cfg)
        return Trajectory(times=times, states=states[:, 0, :], forcing_id=forcing.id)
    times = cfg.t_start + rec * dt
    return Trajectory(times=times, states=out, forcing_id=forcing.id)


def rk4_step_batch(model, forcing, t: float, X: np.ndarray, dt: float) -> np.ndarray:
    """One RK4 step of a batch of states X (n, d); dt may be negative."""
    value = forcing.value
    p1 = value(t)
    pm = value(t + 0.5 * dt)
    p2 = value(t + dt)
    k1 = model.rhs(X, p1)
    k2 = model.rhs(X + (0.5 * dt) * k1, pm)
    k3 = model.rhs(X + (0.5 * dt) * k2, pm)
    k4 = model.rhs(X + dt * k3, p2)
    return X + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def integrate_ode_batch(model, forcing, X0: np.ndarray, cfg: IntegratorConfig):
    """RK4 for a batch of initial states; returns (times, states (n_rec, n, d))."""
    if cfg.method != METHOD_RK4:
        raise ConfigError("integrate_ode_batch requires the deterministic rk4 method")
    dt = cfg.signed_dt
    n = cfg.n_steps
    rec = _record_times(cfg)
    X = np.array(X0, dtype=float)
    out = np.empty((len(rec),) + X.shape)
    out[0] = X
    j = 1
    for k in range(n):
        X = rk4_step_batch(model, forcing, cfg.t_start + k * dt, X, dt)
        if k + 1 == rec[j]:
            if not np.all(np.isfinite(X)):
                raise NonFiniteState(f"batch state non-finite at t={cfg.t_start + (k + 1) * dt:g}")
            out[j] = X
            j += 1
    return cfg.t_start + rec * dt, out


def noise_increments(seed: int, n_steps: int, n_sources: int) -> np.ndarray:
    """Standard-normal increments (n_steps, n_sources) from a Philox stream.

    The stream is keyed by the trajectory seed alone, so the same seed
    reproduces the same increments bit-for-bit in any batch arrangement.
    """
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    return gen.standard_normal((n_steps, n_sources))


def integrate_sde(
    model, forcing, x0, noise: NoiseModel, seed: int, cfg: IntegratorConfig
) -> Trajectory:
    """Euler-Maruyama solution x_{k+1} = x_k + f dt + sigma * A xi sqrt(dt).

    Identical (seed, cfg, inputs) reproduce bit-identical trajectories.
    """
    if cfg.method != METHOD_EM:
        raise ConfigError("integrate_sde requires the euler_maruyama method")
    if cfg.signed_dt < 0:
        raise ConfigError("stochastic integration must run forward in time")
    times, states = integrate_sde_batch(
        model, forcing, np.atleast_1d(np.asarray(x0, dtype=float))[None, :],
        noise, np.array([seed], dtype=np.uint64), cfg,
    )
    return Trajectory(times=times, states=states[:, 0, :], seed=int(seed),
                      forcing_id=forcing.id)


def integrate_sde_batch(
    model, forcing, X0: np.ndarray, noise: NoiseModel, seeds, cfg: IntegratorConfig
):
    """Euler-Maruyama for a batch; member i uses the stream keyed by seeds[i].

    Returns (times, states (n_rec, n, d)).
    """
    if cfg.method != METHOD_EM:
        raise ConfigError("integrate_sde_batch requires the euler_maruyama method")
    dt = cfg.signed_dt
    if dt < 0:
        raise ConfigError("stochastic integration must run forward in time")
    n = cfg.n_steps
    rec = _record_times(cfg)
    X = np.array(X0, dtype=float)
    nb, d = X.shape
    m = noise.n_sources
    scale = noise.sigma * math.sqrt(dt)
    SA = (scale * noise.A).T  # (m, d); xi (n, m) @ SA -> (n, d)
    xi = np.empty((n, nb, m))
    for i, s in enumerate(np.asarray(seeds)):
        xi[:, i, :] = noise_increments(int(s), n, m)
    out = np.empty((len(rec), nb, d))
    out[0] = X
    j = 1
    for k in range(n):
        t = cfg.t_start + k * dt
        X = X + model.rhs(X, forcing.value(t)) * dt + xi[k] @ SA
        if k + 1 == rec[j]:
            if not np.all(np.isfinite(X)):
                raise NonFiniteState(f"batch state non-finite at t={t + dt:g}")
            out[j] = X
            j += 1
    return cfg.t_start + rec * dt, out
