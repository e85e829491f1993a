"""ROC analysis of indicators as binary tip/no-tip classifiers over time.

Each indicator has a fixed orientation: "low" means low values signal
tipping (salinities and the signed threshold distance), "high" means high
values do (squared return rate). Orientations are fixed globally per
indicator, so skill below coin-flip shows up as AUC < 0.5 rather than
being silently flipped.

The threshold sweep uses the exact sorted sample values plus a sentinel
(no binning); members equal to the threshold are classified positive.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SingleClass
from .ews import INDICATOR_R, INDICATOR_RR, INDICATOR_SN, INDICATOR_ST, IndicatorSeries

__all__ = [
    "RocCurve",
    "ThresholdStats",
    "ConstrainedChoice",
    "SkillReport",
    "ORIENTATIONS",
    "FIXED_THRESHOLDS",
    "roc_at_time",
    "auc",
    "optimal_threshold",
    "fixed_threshold_stats",
    "constrained_threshold",
    "compute_skill",
    "SKILL_COLUMNS",
]

ORIENT_LOW = "low"
ORIENT_HIGH = "high"

# S_N and the signed threshold distance fall toward tipping; the tropical
# box salinifies when the circulation weakens, and a sinking return rate is
# the classical slowing-down signal read through its square here
ORIENTATIONS = {
    INDICATOR_SN: ORIENT_LOW,
    INDICATOR_ST: ORIENT_HIGH,
    INDICATOR_R: ORIENT_LOW,
    INDICATOR_RR: ORIENT_HIGH,
}

FIXED_THRESHOLDS = {
    INDICATOR_SN: 0.034,
    INDICATOR_ST: 0.0366,
    INDICATOR_R: 0.0,
}

_TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class RocCurve:
    """Monotone ROC step curve from (0,0) to (1,1).

    thresholds[j] is the swept threshold whose positive set realises point
    j; thresholds[0] is the sentinel admitting no member (-inf for "low"
    orientation, +inf for "high").
    """

    t: float
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    orientation: str

    def __post_init__(self):
        fpr = np.asarray(self.fpr, dtype=float)
        tpr = np.asarray(self.tpr, dtype=float)
        thr = np.asarray(self.thresholds, dtype=float)
        if not (len(fpr) == len(tpr) == len(thr)):
            raise ValueError("fpr, tpr, thresholds must be aligned")
        if fpr[0] != 0 or tpr[0] != 0 or fpr[-1] != 1 or tpr[-1] != 1:
            raise ValueError("ROC curve must run from (0,0) to (1,1)")
        if np.any(np.diff(fpr) < 0) or np.any(np.diff(tpr) < 0):
            raise ValueError("ROC curve must be componentwise nondecreasing")
        object.__setattr__(self, "fpr", fpr)
        object.__setattr__(self, "tpr", tpr)
        object.__setattr__(self, "thresholds", thr)


def _scores(values: np.ndarray, orientation: str) -> np.ndarray:
    if orientation == ORIENT_HIGH:
        return values
    if orientation == ORIENT_LOW:
        return -values
    raise ValueError(f"unknown orientation {orientation!r}")


def _thresholds_from_scores(scores: np.ndarray, orientation: str) -> np.ndarray:
    return scores if orientation == ORIENT_HIGH else -scores


def roc_at_time(
    values: np.ndarray,
    labels: np.ndarray,
    orientation: str,
    t: float = 0.0,
) -> RocCurve:
    """ROC curve sweeping every distinct sample value as a threshold.

    Members with NaN values are excluded pairwise with their labels;
    SingleClass is raised when only one label remains.
    """
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    ok = np.isfinite(values)
    values = values[ok]
    labels = labels[ok]
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass(
            f"need both classes at t={t:g}: {n_pos} positive, {n_neg} negative"
        )
    s = _scores(values, orientation)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    lab_sorted = labels[order]
    # group tied scores: cumulative counts evaluated at the end of each group
    tp = np.cumsum(lab_sorted)
    fp = np.cumsum(~lab_sorted)
    last_of_group = np.append(s_sorted[1:] != s_sorted[:-1], True)
    tp_g = tp[last_of_group]
    fp_g = fp[last_of_group]
    thr_scores = s_sorted[last_of_group]
    fpr = np.concatenate([[0.0], fp_g / n_neg])
    tpr = np.concatenate([[0.0], tp_g / n_pos])
    sentinel = math.inf if orientation == ORIENT_HIGH else -math.inf
    thresholds = np.concatenate(
        [[sentinel], _thresholds_from_scores(thr_scores, orientation)]
    )
    return RocCurve(t=t, fpr=fpr, tpr=tpr, thresholds=thresholds, orientation=orientation)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve (ties earn half credit)."""
    return float(np.trapz(curve.tpr, curve.fpr))


def optimal_threshold(curve: RocCurve) -> tuple[float, float, float]:
    """Swept threshold minimising squared distance FPR^2 + (1-TPR)^2 to (0,1).

    Distance ties (within 1e-12) are broken toward lower FPR, then higher
    TPR, then the earlier swept point.
    Returns (threshold, fpr, tpr).
    """
    d2 = curve.fpr**2 + (1.0 - curve.tpr) ** 2
    tied = np.flatnonzero(d2 <= d2.min() + _TIE_TOL)
    best = tied[np.lexsort((tied, -curve.tpr[tied], curve.fpr[tied]))[0]]
    return (
        float(curve.thresholds[best]),
        float(curve.fpr[best]),
        float(curve.tpr[best]),
    )


@dataclass(frozen=True)
class ThresholdStats:
    """Confusion statistics at one threshold; NaN marks empty denominators."""

    tpr: float
    fpr: float
    specificity: float
    false_omission_rate: float
    informedness: float


def fixed_threshold_stats(
    values: np.ndarray,
    labels: np.ndarray,
    threshold: float,
    orientation: str,
) -> ThresholdStats:
    """Sensitivity, specificity, false omission rate, and informedness.

    Members equal to the threshold are classified positive.
    """
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    ok = np.isfinite(values)
    values = values[ok]
    labels = labels[ok]
    if orientation == ORIENT_LOW:
        pred = values <= threshold
    else:
        pred = values >= threshold
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    tn = int(np.sum(~pred & ~labels))
    tpr = tp / (tp + fn) if tp + fn else math.nan
    fpr = fp / (fp + tn) if fp + tn else math.nan
    f_or = fn / (fn + tn) if fn + tn else math.nan
    spec = 1.0 - fpr
    return ThresholdStats(
        tpr=tpr,
        fpr=fpr,
        specificity=spec,
        false_omission_rate=f_or,
        informedness=tpr + spec - 1.0,
    )


@dataclass(frozen=True)
class ConstrainedChoice:
    """Threshold meeting a sensitivity or specificity floor."""

    threshold: float
    tpr: float
    fpr: float
    satisfied: bool

    @property
    def specificity(self) -> float:
        return 1.0 - self.fpr


def constrained_threshold(
    curve: RocCurve, constraint: str, level: float
) -> ConstrainedChoice:
    """Best threshold subject to TPR >= level ("min_sensitivity") or
    1 - FPR >= level ("min_specificity"); maximises the other metric.

    The sentinel endpoints make the constraint always satisfiable; if the
    interior never meets it, the boundary point is returned with
    satisfied=False only when even the endpoints miss the level.
    """
    if constraint == "min_sensitivity":
        ok = curve.tpr >= level
        score = -curve.fpr  # maximise specificity
        tie = curve.tpr
    elif constraint == "min_specificity":
        ok = (1.0 - curve.fpr) >= level
        score = curve.tpr
        tie = -curve.fpr
    else:
        raise ValueError(f"unknown constraint {constraint!r}")
    if not ok.any():
        # fall back to the point closest to the constraint
        gap = (
            level - curve.tpr
            if constraint == "min_sensitivity"
            else level - (1.0 - curve.fpr)
        )
        best = int(np.argmin(gap))
        return ConstrainedChoice(
            threshold=float(curve.thresholds[best]),
            tpr=float(curve.tpr[best]),
            fpr=float(curve.fpr[best]),
            satisfied=False,
        )
    idx = np.flatnonzero(ok)
    best = idx[np.lexsort((idx, -tie[idx], -score[idx]))[0]]
    return ConstrainedChoice(
        threshold=float(curve.thresholds[best]),
        tpr=float(curve.tpr[best]),
        fpr=float(curve.fpr[best]),
        satisfied=True,
    )


SKILL_COLUMNS = (
    "indicator_id",
    "t",
    "auc",
    "opt_threshold",
    "opt_tpr",
    "opt_fpr",
    "informedness",
    "for",
    "fixed_tpr",
    "fixed_fpr",
    "fixed_for",
    "constrained_spec_at_sens95",
    "constrained_sens_at_spec95",
)


@dataclass(frozen=True, eq=False)
class SkillReport:
    """Per-time classification skill for each indicator."""

    times: np.ndarray
    data: dict

    def column(self, indicator_id: str, name: str) -> np.ndarray:
        return self.data[indicator_id][name]

    def rows(self):
        for ind, cols in self.data.items():
            for k, t in enumerate(self.times):
                yield {
                    "indicator_id": ind,
                    "t": t,
                    **{name: cols[name][k] for name in SKILL_COLUMNS[2:]},
                }


def compute_skill(
    series: dict[str, IndicatorSeries],
    labels: np.ndarray,
    *,
    fixed_thresholds: dict[str, float] | None = None,
    orientations: dict[str, str] | None = None,
    sens_level: float = 0.95,
    spec_level: float = 0.95,
) -> SkillReport:
    """ROC skill of every indicator at every shared sample time.

    Times where an indicator is undefined for all members (or a single
    class remains) produce NaN rows.
    """
    fixed = dict(FIXED_THRESHOLDS)
    if fixed_thresholds:
        fixed.update(fixed_thresholds)
    orients = dict(ORIENTATIONS)
    if orientations:
        orients.update(orientations)
    labels = np.asarray(labels, dtype=bool)
    times = next(iter(series.values())).times
    data: dict[str, dict[str, np.ndarray]] = {}
    for ind, s in series.items():
        if not np.array_equal(s.times, times):
            raise ValueError("indicator series must share one time grid")
        cols = {name: np.full(len(times), np.nan) for name in SKILL_COLUMNS[2:]}
        orientation = orients[ind]
        for k, t in enumerate(times):
            vals = s.values[:, k]
            try:
                curve = roc_at_time(vals, labels, orientation, t=float(t))
            except SingleClass:
                continue
            cols["auc"][k] = auc(curve)
            thr, fpr, tpr = optimal_threshold(curve)
            cols["opt_threshold"][k] = thr
            cols["opt_tpr"][k] = tpr
            cols["opt_fpr"][k] = fpr
            stats_opt = fixed_threshold_stats(vals, labels, thr, orientation)
            cols["informedness"][k] = stats_opt.informedness
            cols["for"][k] = stats_opt.false_omission_rate
            if ind in fixed:
                stats_fix = fixed_threshold_stats(vals, labels, fixed[ind], orientation)
                cols["fixed_tpr"][k] = stats_fix.tpr
                cols["fixed_fpr"][k] = stats_fix.fpr
                cols["fixed_for"][k] = stats_fix.false_omission_rate
            c_sens = constrained_threshold(curve, "min_sensitivity", sens_level)
            cols["constrained_spec_at_sens95"][k] = c_sens.specificity
            c_spec = constrained_threshold(curve, "min_specificity", spec_level)
            cols["constrained_sens_at_spec95"][k] = c_spec.tpr
        data[ind] = cols
    return SkillReport(times=times, data=data)
