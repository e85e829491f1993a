"""Per-member indicator series: box salinities, signed threshold distance,
and the squared return rate on sliding windows.

All indicator series for one ensemble share the ensemble's time grid;
values that are undefined (return-rate windows before enough history, or
degenerate windows) are NaN.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensembles import LabeledEnsemble
from .integrators import Trajectory
from .threshold import ThresholdHistory, is_inside, distance_to_polyline

__all__ = [
    "IndicatorSeries",
    "INDICATOR_SN",
    "INDICATOR_ST",
    "INDICATOR_R",
    "INDICATOR_RR",
    "indicator_salinity",
    "indicator_rtip",
    "return_rate_sq",
    "ensemble_salinity",
    "ensemble_rtip",
    "ensemble_return_rate",
    "compute_indicators",
    "RETURN_RATE_WINDOW",
    "RHO_FLOOR",
]

INDICATOR_SN = "S_N"
INDICATOR_ST = "S_T"
INDICATOR_R = "R_INDICATOR"
INDICATOR_RR = "RETURN_RATE_SQ"

RETURN_RATE_WINDOW = 200.0
RHO_FLOOR = 1e-6
_VAR_FLOOR = 1e-14

_BOX_COLUMN = {"N": 0, "T": 1}


@dataclass(frozen=True, eq=False)
class IndicatorSeries:
    """values[m, k] is indicator `indicator_id` for member m at times[k]."""

    indicator_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        times = np.asarray(self.times, dtype=float)
        if values.shape[1] != len(times):
            raise ValueError("values grid must be members x times")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    @property
    def n_members(self) -> int:
        return self.values.shape[0]

    def at_time(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise KeyError(f"no indicator sample at t={t:g}")
        return self.values[:, k]


def indicator_salinity(traj: Trajectory, which_box: str) -> np.ndarray:
    """Rescaled salinity of box "N" or "T" at each snapshot time."""
    return traj.states[:, _BOX_COLUMN[which_box]].copy()


def indicator_rtip(
    traj: Trajectory, history: ThresholdHistory, off_state
) -> np.ndarray:
    """Signed distance to the time-matched threshold along one trajectory.

    The threshold at the latest snapshot time not later than t is used.
    """
    out = np.empty(len(traj.times))
    for k, t in enumerate(traj.times):
        curve = history.at_or_before(float(t))
        mag = distance_to_polyline(traj.states[k], curve)[0]
        sign = 1.0 if is_inside(traj.states[k], curve, off_state) else -1.0
        out[k] = sign * mag
    return out


def _detrended_lag1(values: np.ndarray) -> np.ndarray:
    """Lag-1 autoregression coefficient of linearly detrended windows.

    values has shape (..., w). A small-sample correction of +(1 + 3*rho)/w
    is applied to offset the downward bias of the least-squares estimator
    on short windows.
    """
    w = values.shape[-1]
    t = np.arange(w, dtype=float)
    t_c = t - t.mean()
    denom_t = float(np.sum(t_c * t_c))
    mean = values.mean(axis=-1, keepdims=True)
    slope = (values * t_c).sum(axis=-1, keepdims=True) / denom_t
    resid = values - mean - slope * t_c
    num = np.sum(resid[..., 1:] * resid[..., :-1], axis=-1)
    den = np.sum(resid[..., :-1] ** 2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = num / den
    rho = rho + (1.0 + 3.0 * rho) / w
    var = resid.var(axis=-1)
    rho = np.where(var < _VAR_FLOOR, np.nan, rho)
    return rho


def return_rate_sq(
    values: np.ndarray,
    dt_sample: float,
    window: float = RETURN_RATE_WINDOW,
    *,
    rho_floor: float = RHO_FLOOR,
    min_samples: int = 10,
) -> np.ndarray:
    """Squared return rate on sliding windows ending at each sample time.

    Each window is linearly detrended, a lag-1 autoregression coefficient
    rho is fitted by least squares, and the return rate is
    alpha = -ln(max(rho, rho_floor)) / dt_sample; alpha**2 is returned.
    Before one full window of history exists the window expands from the
    series start, so values are defined from min_samples onward; earlier
    entries, and windows with variance below 1e-14 (degenerate), are NaN.
    """
    values = np.asarray(values, dtype=float)
    single = values.ndim == 1
    V = np.atleast_2d(values)
    n = V.shape[1]
    w = round(window / dt_sample) + 1
    if w < 10:
        raise ValueError(f"window of {w} samples is too short (need >= 10)")
    if min_samples < 10:
        raise ValueError("min_samples must be >= 10")
    out = np.full(V.shape, np.nan)

    def alpha_sq(rho):
        with np.errstate(invalid="ignore"):
            a = -np.log(np.maximum(rho, rho_floor)) / dt_sample
        return a**2

    if n >= w:
        windows = np.lib.stride_tricks.sliding_window_view(V, w, axis=1)
        out[:, w - 1 :] = alpha_sq(_detrended_lag1(windows))
    for k in range(min_samples - 1, min(w - 1, n)):
        out[:, k] = alpha_sq(_detrended_lag1(V[:, : k + 1]))
    return out[0] if single else out


def ensemble_salinity(ens: LabeledEnsemble, which_box: str) -> IndicatorSeries:
    ind = INDICATOR_SN if which_box == "N" else INDICATOR_ST
    return IndicatorSeries(
        indicator_id=ind,
        times=ens.times,
        values=ens.states_matrix()[:, :, _BOX_COLUMN[which_box]],
    )


def ensemble_rtip(
    ens: LabeledEnsemble, history: ThresholdHistory, off_state
) -> IndicatorSeries:
    """Signed threshold distances for all members.

    Sample times falling between threshold snapshots share one curve, so
    they are evaluated in a single batched geometry call per snapshot.
    """
    states = ens.states_matrix()
    times = ens.times
    n_m = ens.n_members
    values = np.empty((n_m, len(times)))
    curves = [history.at_or_before(float(t)) for t in times]
    k = 0
    while k < len(times):
        j = k
        while j + 1 < len(times) and curves[j + 1] is curves[k]:
            j += 1
        curve = curves[k]
        X = states[:, k : j + 1, :].reshape(-1, 2)
        mag = distance_to_polyline(X, curve)
        side = is_inside(X, curve, off_state)
        sd = np.where(side, mag, -mag).reshape(n_m, j + 1 - k)
        values[:, k : j + 1] = sd
        k = j + 1
    return IndicatorSeries(indicator_id=INDICATOR_R, times=times, values=values)


def ensemble_return_rate(
    sn_series: IndicatorSeries, window: float = RETURN_RATE_WINDOW
) -> IndicatorSeries:
    """Squared return rate of the northern-box salinity series."""
    dt = float(sn_series.times[1] - sn_series.times[0])
    return IndicatorSeries(
        indicator_id=INDICATOR_RR,
        times=sn_series.times,
        values=return_rate_sq(sn_series.values, dt, window),
    )


def compute_indicators(
    ens: LabeledEnsemble,
    history: ThresholdHistory,
    off_state,
    *,
    return_rate_window: float = RETURN_RATE_WINDOW,
) -> dict[str, IndicatorSeries]:
    """All four indicator series on the ensemble's common time grid."""
    sn = ensemble_salinity(ens, "N")
    st = ensemble_salinity(ens, "T")
    r = ensemble_rtip(ens, history, off_state)
    rr = ensemble_return_rate(sn, return_rate_window)
    return {s.indicator_id: s for s in (sn, st, r, rr)}
