"""Seeded Monte-Carlo ensembles with tip/no-tip classification.

Balanced ensembles draw members with consecutive seeds starting at the base
seed and retain the first n of each class, so their composition is a pure
function of the base seed. Classification integrates deterministically from
each member's final state under frozen forcing and labels by the attractor
ball reached.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dynamics import Amoc3Box, AmocParams, ConstantForcing, EquilibriumSet
from .errors import ClassStarvation, ConfigError, Unresolved
from .integrators import (
    METHOD_EM,
    IntegratorConfig,
    NoiseModel,
    Trajectory,
    integrate_sde_batch,
    rk4_step_batch,
)

__all__ = [
    "EnsembleSpec",
    "LabeledEnsemble",
    "classify_basin",
    "classify_tip",
    "build_balanced_ensemble",
    "R_CLASS",
    "T_HORIZON",
]

log = logging.getLogger(__name__)

R_CLASS = 0.05
T_HORIZON = 2000.0

LABEL_NO_TIP = 0
LABEL_TIP = 1
LABEL_UNRESOLVED = -1


def classify_basin(
    X: np.ndarray,
    params: AmocParams,
    H: float,
    eq: EquilibriumSet,
    *,
    r_class: float = R_CLASS,
    t_horizon: float = T_HORIZON,
    dt: float = 0.1,
    check_every: int = 50,
) -> np.ndarray:
    """Labels for a batch of states relaxed under frozen forcing H.

    Returns 1 where the state reaches the OFF ball (tips), 0 for the ON
    ball, -1 if neither ball is reached within t_horizon. Resolved members
    stop being integrated, so only near-boundary states pay the full horizon.
    """
    model = Amoc3Box(params)
    frozen = ConstantForcing(H)
    X = np.atleast_2d(np.asarray(X, dtype=float)).copy()
    n = len(X)
    labels = np.full(n, LABEL_UNRESOLVED, dtype=np.int8)
    active = np.arange(n)
    n_steps = round(t_horizon / dt)
    for k in range(n_steps):
        X = rk4_step_batch(model, frozen, k * dt, X, dt)
        if (k + 1) % check_every == 0 or k + 1 == n_steps:
            d_on = np.linalg.norm(X - eq.on_state, axis=1)
            d_off = np.linalg.norm(X - eq.off_state, axis=1)
            hit_on = d_on < r_class
            hit_off = d_off < r_class
            labels[active[hit_on]] = LABEL_NO_TIP
            labels[active[hit_off]] = LABEL_TIP
            resolved = hit_on | hit_off
            if resolved.all():
                return labels
            if resolved.any():
                keep = ~resolved
                X = X[keep]
                active = active[keep]
    return labels


def classify_tip(
    traj: Trajectory,
    eq: EquilibriumSet,
    params: AmocParams,
    *,
    H: float = 0.0,
    r_class: float = R_CLASS,
    t_horizon: float = T_HORIZON,
    dt: float = 0.1,
) -> bool:
    """Tip label for one trajectory: relax its final state under frozen H.

    Raises Unresolved if neither the ON nor the OFF ball is reached within
    t_horizon; such members are reported and excluded from ensembles.
    """
    label = classify_basin(
        traj.final_state[None, :],
        params,
        H,
        eq,
        r_class=r_class,
        t_horizon=t_horizon,
        dt=dt,
    )[0]
    if label == LABEL_UNRESOLVED:
        raise Unresolved(
            f"trajectory endpoint {tuple(np.round(traj.final_state, 4))} reached "
            f"neither attractor ball within {t_horizon:g} years"
        )
    return bool(label == LABEL_TIP)


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    """Recipe for a balanced tipped/non-tipped ensemble."""

    n_target_per_class: int
    x0: np.ndarray
    t_init: float
    forcing: object
    noise: NoiseModel
    base_seed: int
    max_draws: int

    def __post_init__(self):
        if self.n_target_per_class < 1:
            raise ConfigError(
                f"n_target_per_class must be >= 1, got {self.n_target_per_class}"
            )
        if self.max_draws < 2 * self.n_target_per_class:
            raise ConfigError(
                f"max_draws={self.max_draws} cannot fill two classes of "
                f"{self.n_target_per_class}"
            )
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))


@dataclass(frozen=True, eq=False)
class LabeledEnsemble:
    """Trajectories with tip labels; class counts match the spec's target."""

    trajectories: tuple
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=bool)
        if len(labels) != len(self.trajectories):
            raise ValueError("labels and trajectories must have equal length")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "trajectories", tuple(self.trajectories))

    @property
    def n_members(self) -> int:
        return len(self.trajectories)

    @property
    def times(self) -> np.ndarray:
        return self.trajectories[0].times

    @property
    def seeds(self) -> np.ndarray:
        return np.array([tr.seed for tr in self.trajectories], dtype=np.uint64)

    def states_matrix(self) -> np.ndarray:
        """Member states stacked as (n_members, n_times, dim)."""
        return np.stack([tr.states for tr in self.trajectories])


def build_balanced_ensemble(
    spec: EnsembleSpec,
    params: AmocParams,
    eq: EquilibriumSet,
    *,
    dt: float = 0.1,
    record_stride: int = 10,
    r_class: float = R_CLASS,
    t_horizon: float = T_HORIZON,
    chunk: int = 64,
) -> LabeledEnsemble:
    """Draw members with seeds base_seed, base_seed+1, ... until both classes
    hold n_target_per_class trajectories.

    Retention is in seed order, so the result is deterministic for a given
    spec. Raises ClassStarvation (with achieved counts) if max_draws is
    reached first; unresolved members are logged and skipped.
    """
    model = Amoc3Box(params)
    t_end = spec.forcing.end_time
    if t_end <= spec.t_init:
        raise ConfigError(
            f"ensemble start t_init={spec.t_init:g} must precede end of forcing {t_end:g}"
        )
    cfg = IntegratorConfig(
        dt=dt,
        t_start=spec.t_init,
        t_end=t_end,
        method=METHOD_EM,
        record_stride=record_stride,
    )
    target = spec.n_target_per_class
    kept: dict[int, list[Trajectory]] = {LABEL_TIP: [], LABEL_NO_TIP: []}
    n_drawn = 0
    n_unresolved = 0
    while n_drawn < spec.max_draws and (
        len(kept[LABEL_TIP]) < target or len(kept[LABEL_NO_TIP]) < target
    ):
        n_now = min(chunk, spec.max_draws - n_drawn)
        seeds = spec.base_seed + np.arange(n_drawn, n_drawn + n_now, dtype=np.uint64)
        X0 = np.tile(spec.x0, (n_now, 1))
        times, states = integrate_sde_batch(
            model, spec.forcing, X0, spec.noise, seeds, cfg
        )
        labels = classify_basin(
            states[-1],
            params,
            H=spec.forcing.value(t_end + 1.0),
            eq=eq,
            r_class=r_class,
            t_horizon=t_horizon,
            dt=dt,
        )
        for i in range(n_now):
            lab = int(labels[i])
            if lab == LABEL_UNRESOLVED:
                n_unresolved += 1
                continue
            if len(kept[lab]) < target:
                kept[lab].append(
                    Trajectory(
                        times=times,
                        states=states[:, i, :],
                        seed=int(seeds[i]),
                        forcing_id=spec.forcing.id,
                    )
                )
        n_drawn += n_now
    if n_unresolved:
        log.warning("%d unresolved member(s) excluded from ensemble", n_unresolved)
    n_tip = len(kept[LABEL_TIP])
    n_no = len(kept[LABEL_NO_TIP])
    if n_tip < target or n_no < target:
        raise ClassStarvation(
            f"max_draws={spec.max_draws} reached with {n_tip} tipped and "
            f"{n_no} non-tipped members (target {target} each)",
            n_tipped=n_tip,
            n_not_tipped=n_no,
        )
    tip_seeds = {tr.seed for tr in kept[LABEL_TIP]}
    members = kept[LABEL_NO_TIP] + kept[LABEL_TIP]
    members.sort(key=lambda tr: tr.seed)
    labels = np.array([tr.seed in tip_seeds for tr in members], dtype=bool)
    return LabeledEnsemble(trajectories=tuple(members), labels=labels)
