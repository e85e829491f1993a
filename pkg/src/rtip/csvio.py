"""Deterministic CSV writers/readers for all artifact schemas.

Floats are written with repr (shortest round-trip), NaN as an empty cell,
so identical inputs produce byte-identical files.
"""
from __future__ import annotations

import csv
import math

import numpy as np

from .ensembles import LabeledEnsemble
from .integrators import Trajectory
from .skill import SKILL_COLUMNS, RocCurve, SkillReport
from .threshold import FateMap, ThresholdHistory

__all__ = [
    "write_trajectory",
    "write_history",
    "write_fatemap",
    "write_ensemble",
    "write_indicators",
    "write_skill",
    "write_roc_curves",
    "write_forcing_series",
    "write_rows",
    "read_rows",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, (np.bool_, bool)):
        return str(int(v))
    return str(v)


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_rows(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, list(r)


def write_trajectory(path, traj: Trajectory) -> None:
    d = traj.dim
    header = ["t"] + [f"x{i + 1}" for i in range(d)] + ["seed", "forcing_id"]
    rows = (
        [t, *traj.states[k], traj.seed, traj.forcing_id]
        for k, t in enumerate(traj.times)
    )
    write_rows(path, header, rows)


def write_history(path, history: ThresholdHistory) -> None:
    def rows():
        for c in history.curves:
            for i, (x1, x2) in enumerate(c.points):
                yield [c.t, i, x1, x2]

    write_rows(path, ["t", "point_index", "x1", "x2"], rows())


def write_fatemap(path, fm: FateMap) -> None:
    pts = fm.points()
    flat = fm.flat()
    rows = ([pts[i, 0], pts[i, 1], int(flat[i])] for i in range(len(pts)))
    write_rows(path, ["x1", "x2", "tipped"], rows)


def write_ensemble(traj_path, labels_path, ens: LabeledEnsemble) -> None:
    d = ens.trajectories[0].dim
    header = ["member_index", "t"] + [f"x{i + 1}" for i in range(d)]

    def traj_rows():
        for m, tr in enumerate(ens.trajectories):
            for k, t in enumerate(tr.times):
                yield [m, t, *tr.states[k]]

    write_rows(traj_path, header, traj_rows())
    write_rows(
        labels_path,
        ["member_index", "seed", "tipped"],
        ([m, tr.seed, int(ens.labels[m])] for m, tr in enumerate(ens.trajectories)),
    )


def write_indicators(path, series: dict) -> None:
    def rows():
        for ind_id, s in series.items():
            for m in range(s.n_members):
                for k, t in enumerate(s.times):
                    yield [ind_id, m, t, s.values[m, k]]

    write_rows(path, ["indicator_id", "member_index", "t", "value"], rows())


def write_skill(path, report: SkillReport) -> None:
    write_rows(
        path,
        SKILL_COLUMNS,
        ([row[c] for c in SKILL_COLUMNS] for row in report.rows()),
    )


def write_roc_curves(path, curves: dict[str, list[RocCurve]]) -> None:
    def rows():
        for ind_id, curve_list in curves.items():
            for c in curve_list:
                for j in range(len(c.fpr)):
                    yield [ind_id, c.t, c.fpr[j], c.tpr[j], c.thresholds[j]]

    write_rows(path, ["indicator_id", "t", "fpr", "tpr", "threshold"], rows())


def write_forcing_series(path, forcing, times) -> None:
    write_rows(path, ["t", "level"], ([t, forcing.value(float(t))] for t in times))
