"""Time-evolving tipping threshold: seeding, backward evolution, and geometry.

The threshold at the end of forcing is the frozen-system basin boundary
(the stable manifold of the saddle edge state). It is traced by backward
integration from the edge state along its stable eigendirection, then
evolved backward under the nonautonomous field with periodic re-sampling
to uniform arc-length spacing. Points that leave an enlarged phase window
during backward evolution are dropped at the next re-interpolation.

Inside/outside queries use the parity of transversal crossings of the
segment joining the collapsed (OFF) state to the query point with the
threshold polyline; the signed distance is the minimum distance to the
polyline, positive inside the non-tipping region and negative outside.
Re-sampling uses a cubic spline in arc length: chord-based (linear)
re-interpolation drifts inward at curved sections, and over hundreds of
re-interpolations that bias is large enough to misplace the threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import Amoc3Box, AmocParams, ConstantForcing, EquilibriumSet
from .ensembles import classify_basin
from .errors import ConfigError, CurveCollapse, DegenerateIntersection, DegenerateManifold
from .integrators import rk4_step_batch

__all__ = [
    "Window",
    "DEFAULT_WINDOW",
    "ThresholdCurve",
    "ThresholdHistory",
    "FateMap",
    "resample_curve",
    "seed_basin_boundary",
    "evolve_threshold_backward",
    "is_inside",
    "signed_distance",
    "distance_to_polyline",
    "grid_fate_map",
    "boundary_cell_mask",
    "near_boundary_mask",
]

TOL_GEO = 1e-9
TARGET_SPACING = 0.01
REINTERP_DT = 1.0
SNAPSHOT_DT = 5.0
ARC_EXTENT = 20.0


@dataclass(frozen=True, eq=False)
class Window:
    """Axis-aligned phase-plane window (rescaled salinity units)."""

    x_min: float = -3.0
    x_max: float = 1.0
    y_min: float = -1.5
    y_max: float = 1.5

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ConfigError("window bounds must satisfy max > min")

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        return (
            (X[:, 0] >= self.x_min)
            & (X[:, 0] <= self.x_max)
            & (X[:, 1] >= self.y_min)
            & (X[:, 1] <= self.y_max)
        )

    def enlarged(self, factor: float = 2.0) -> "Window":
        cx = 0.5 * (self.x_min + self.x_max)
        cy = 0.5 * (self.y_min + self.y_max)
        hx = 0.5 * factor * (self.x_max - self.x_min)
        hy = 0.5 * factor * (self.y_max - self.y_min)
        return Window(cx - hx, cx + hx, cy - hy, cy + hy)

    def grid(self, n1: int, n2: int | None = None):
        n2 = n1 if n2 is None else n2
        return np.linspace(self.x_min, self.x_max, n1), np.linspace(self.y_min, self.y_max, n2)

    def as_tuple(self):
        return (self.x_min, self.x_max, self.y_min, self.y_max)


DEFAULT_WINDOW = Window()


@dataclass(frozen=True, eq=False)
class ThresholdCurve:
    """Ordered threshold polyline at one instant."""

    t: float
    points: np.ndarray
    closed: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
            raise CurveCollapse(
                f"threshold curve needs >= 3 planar points, got shape {pts.shape}"
            )
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg == 0.0):
            raise CurveCollapse("threshold curve has coincident consecutive points")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return len(self.points)

    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        pts = self.points
        if self.closed:
            return pts, np.vstack([pts[1:], pts[:1]])
        return pts[:-1], pts[1:]


@dataclass(frozen=True, eq=False)
class ThresholdHistory:
    """Uniformly spaced sequence of threshold snapshots, ascending in time."""

    curves: tuple

    def __post_init__(self):
        curves = tuple(self.curves)
        times = np.array([c.t for c in curves])
        if len(curves) < 1:
            raise CurveCollapse("threshold history is empty")
        d = np.diff(times)
        if len(d) and (np.any(d <= 0) or np.ptp(d) > 1e-6 * max(1.0, d[0])):
            raise ConfigError("history time stamps must increase uniformly")
        object.__setattr__(self, "curves", curves)

    @property
    def times(self) -> np.ndarray:
        return np.array([c.t for c in self.curves])

    def at_or_before(self, t: float) -> ThresholdCurve:
        """Snapshot at the latest time <= t (final snapshot for later t)."""
        times = self.times
        i = int(np.searchsorted(times, t + 1e-9)) - 1
        if i < 0:
            raise KeyError(f"no threshold snapshot at or before t={t:g}")
        return self.curves[min(i, len(self.curves) - 1)]


# ---------------------------------------------------------------------------
# curve construction


def resample_curve(points: np.ndarray, spacing: float) -> np.ndarray:
    """Re-sample a polyline to uniform arc-length spacing via cubic spline."""
    pts = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-12])
    pts = pts[keep]
    if len(pts) < 3:
        return pts
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    length = s[-1]
    n = max(int(round(length / spacing)) + 1, 3)
    si = np.linspace(0.0, length, n)
    if len(pts) < 4:
        return np.column_stack(
            [np.interp(si, s, pts[:, 0]), np.interp(si, s, pts[:, 1])]
        )
    return CubicSpline(s, pts, axis=0)(si)


def _clip_to_window(inside_pt: np.ndarray, outside_pt: np.ndarray, win: Window) -> np.ndarray:
    """Point where the segment inside->outside crosses the window boundary."""
    d = outside_pt - inside_pt
    t_hit = 1.0
    for lo, hi, i in ((win.x_min, win.x_max, 0), (win.y_min, win.y_max, 1)):
        if d[i] > 0 and outside_pt[i] > hi:
            t_hit = min(t_hit, (hi - inside_pt[i]) / d[i])
        elif d[i] < 0 and outside_pt[i] < lo:
            t_hit = min(t_hit, (lo - inside_pt[i]) / d[i])
    return inside_pt + t_hit * d


def seed_basin_boundary(
    H_final: float,
    params: AmocParams,
    eq: EquilibriumSet,
    *,
    arc_extent: float = ARC_EXTENT,
    window: Window = DEFAULT_WINDOW,
    clip_factor: float = 2.0,
    dt: float = 0.1,
    target_spacing: float = TARGET_SPACING,
    eps: float = 1e-6,
    t_seed: float = 0.0,
    min_arc: float = 0.05,
    max_steps: int = 2_000_000,
) -> ThresholdCurve:
    """Trace the frozen-system basin boundary through the edge state.

    Both stable-manifold branches are obtained by backward integration from
    edge_state +/- eps * v_s, truncated at arc_extent total arc length or on
    leaving the clip window (the phase window enlarged by clip_factor, the
    same region used to drop points during backward evolution). The
    branches are concatenated through the edge state and re-sampled to
    uniform spacing.
    """
    model = Amoc3Box(params)
    clip_win = window.enlarged(clip_factor)
    v_s = eq.edge_eigen.stable_vector
    frozen = ConstantForcing(H_final)

    def trace(sign: float) -> np.ndarray:
        x = eq.edge_state + sign * eps * v_s
        sn, st = float(x[0]), float(x[1])
        pts = [(sn, st)]
        arc = 0.0
        h = -dt  # backward step
        half = 0.5 * h
        sixth = h / 6.0
        f = model.rhs_scalar
        H = H_final
        for _ in range(max_steps):
            a1, b1 = f(sn, st, H)
            a2, b2 = f(sn + half * a1, st + half * b1, H)
            a3, b3 = f(sn + half * a2, st + half * b2, H)
            a4, b4 = f(sn + h * a3, st + h * b3, H)
            sn_new = sn + sixth * (a1 + 2.0 * (a2 + a3) + a4)
            st_new = st + sixth * (b1 + 2.0 * (b2 + b3) + b4)
            if not (math.isfinite(sn_new) and math.isfinite(st_new)):
                break
            step_len = math.hypot(sn_new - sn, st_new - st)
            inside = (
                clip_win.x_min <= sn_new <= clip_win.x_max
                and clip_win.y_min <= st_new <= clip_win.y_max
            )
            if not inside:
                hit = _clip_to_window(
                    np.array([sn, st]), np.array([sn_new, st_new]), clip_win
                )
                pts.append((hit[0], hit[1]))
                arc += math.hypot(hit[0] - sn, hit[1] - st)
                break
            sn, st = sn_new, st_new
            pts.append((sn, st))
            arc += step_len
            if arc >= arc_extent:
                break
        if arc < min_arc:
            raise DegenerateManifold(
                f"manifold branch from edge state reached arc length {arc:.3g} "
                f"(< {min_arc:g}) before leaving the window"
            )
        return np.array(pts)

    branch_a = trace(+1.0)
    branch_b = trace(-1.0)
    poly = np.vstack([branch_a[::-1], eq.edge_state[None, :], branch_b])
    return ThresholdCurve(t=t_seed, points=resample_curve(poly, target_spacing))


def evolve_threshold_backward(
    seed: ThresholdCurve,
    forcing,
    params: AmocParams,
    t_start: float,
    *,
    snapshot_dt: float = SNAPSHOT_DT,
    reinterp_dt: float = REINTERP_DT,
    target_spacing: float = TARGET_SPACING,
    dt: float = 0.1,
    window: Window = DEFAULT_WINDOW,
    drop_factor: float = 2.0,
) -> ThresholdHistory:
    """Evolve the seeded threshold backward in time under the forced field.

    Every reinterp_dt, points that left the enlarged phase window (or blew
    up) are dropped and the surviving polyline is re-sampled to uniform
    arc-length spacing. Snapshots are stored every snapshot_dt down to
    t_start, which may predate the start of forcing.
    """
    if t_start >= seed.t:
        raise ConfigError(f"t_start={t_start:g} must precede the seed time {seed.t:g}")
    nsub = round(reinterp_dt / dt)
    if nsub < 1 or abs(nsub * dt - reinterp_dt) > 1e-9:
        raise ConfigError("reinterp_dt must be a positive multiple of dt")
    snap_every = round(snapshot_dt / reinterp_dt)
    if snap_every < 1 or abs(snap_every * reinterp_dt - snapshot_dt) > 1e-9:
        raise ConfigError("snapshot_dt must be a positive multiple of reinterp_dt")
    n_blocks = math.ceil((seed.t - t_start) / reinterp_dt - 1e-9)

    model = Amoc3Box(params)
    drop_win = window.enlarged(drop_factor)
    P = seed.points.copy()
    t = seed.t
    snaps = [ThresholdCurve(t=t, points=P.copy())]
    for b in range(n_blocks):
        alive = np.ones(len(P), dtype=bool)
        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(nsub):
                Xa = P[alive]
                Xn = rk4_step_batch(model, forcing, t - s * dt, Xa, -dt)
                P[alive] = Xn
                finite = np.isfinite(Xn).all(axis=1)
                ok = finite & drop_win.contains(np.where(np.isfinite(Xn), Xn, 0.0))
                if not ok.all():
                    idx = np.flatnonzero(alive)
                    alive[idx[~ok]] = False
                    if not alive.any():
                        break
        t = seed.t - (b + 1) * reinterp_dt
        P = P[alive]
        if len(P) >= 3:
            P = P[np.isfinite(P).all(axis=1)]
            P = P[drop_win.contains(P)]
        if len(P) < 3:
            raise CurveCollapse(
                f"threshold polyline degenerated to {len(P)} points at t={t:g}"
            )
        P = resample_curve(P, target_spacing)
        if (b + 1) % snap_every == 0:
            snaps.append(ThresholdCurve(t=t, points=P.copy()))
    return ThresholdHistory(curves=tuple(reversed(snaps)))


# ---------------------------------------------------------------------------
# parity and signed distance

_CHUNK = 256


def _crossings_chunk(anchor: np.ndarray, X: np.ndarray, E0: np.ndarray,
                     E1: np.ndarray, tol: float):
    """Transversal crossing counts of segments anchor->x with the polyline.

    Returns (counts, degenerate) for the chunk X (n, 2). A query is flagged
    degenerate when the segment passes within tol of a polyline vertex away
    from the query point itself, or runs collinear-overlapping an edge.
    """
    A = anchor
    D = X - A  # (n, 2)
    F = E1 - E0  # (m, 2)
    AE0 = E0 - A
    AE1 = E1 - A
    s1 = D[:, None, 0] * AE0[None, :, 1] - D[:, None, 1] * AE0[None, :, 0]
    s2 = D[:, None, 0] * AE1[None, :, 1] - D[:, None, 1] * AE1[None, :, 0]
    s3 = F[:, 0] * (A[1] - E0[:, 1]) - F[:, 1] * (A[0] - E0[:, 0])  # (m,)
    s4 = F[None, :, 0] * (X[:, None, 1] - E0[None, :, 1]) - F[None, :, 1] * (
        X[:, None, 0] - E0[None, :, 0]
    )
    counts = ((s1 * s2 < 0) & (s3[None, :] * s4 < 0)).sum(axis=1)

    # vertex-grazing: distance from each polyline vertex to segment [A, x]
    # (only the leading vertex of each edge; the final vertex is E1[-1])
    V = np.vstack([E0, E1[-1:]])  # (m+1, 2)
    seg_len2 = np.einsum("ij,ij->i", D, D)  # (n,)
    AV = V - A  # (m+1, 2)
    proj = np.einsum("nk,mk->nm", D, AV) / np.maximum(seg_len2[:, None], 1e-300)
    proj = np.clip(proj, 0.0, 1.0)
    closest = A + proj[..., None] * D[:, None, :]  # (n, m+1, 2)
    dv = np.linalg.norm(V[None, :, :] - closest, axis=2)
    far_from_query = np.linalg.norm(V[None, :, :] - X[:, None, :], axis=2) > 10 * tol
    degen = np.any((dv < tol) & far_from_query, axis=1)

    # collinear overlap: both A and x within tol of an edge's line while the
    # boxes overlap
    f_len = np.maximum(np.linalg.norm(F, axis=1), 1e-300)
    near_a = np.abs(s3) < tol * f_len
    near_x = np.abs(s4) < tol * f_len[None, :]
    lo = np.minimum(E0, E1)
    hi = np.maximum(E0, E1)
    qlo = np.minimum(X[:, None, :], A[None, None, :])
    qhi = np.maximum(X[:, None, :], A[None, None, :])
    boxes = np.all((qlo <= hi[None, :, :] + tol) & (qhi >= lo[None, :, :] - tol), axis=2)
    degen |= np.any(near_a[None, :] & near_x & boxes, axis=1)
    return counts, degen


def _parity_batch(anchor, X, curve: ThresholdCurve, tol: float):
    E0, E1 = curve.segments()
    counts = np.empty(len(X), dtype=int)
    degen = np.empty(len(X), dtype=bool)
    for i in range(0, len(X), _CHUNK):
        c, d = _crossings_chunk(anchor, X[i : i + _CHUNK], E0, E1, tol)
        counts[i : i + _CHUNK] = c
        degen[i : i + _CHUNK] = d
    return counts, degen


def is_inside(
    x,
    curve: ThresholdCurve,
    off_state,
    *,
    tol_geo: float = TOL_GEO,
    max_retries: int = 8,
):
    """Parity test: odd crossings of the segment off_state -> x mean inside.

    On a degenerate configuration (vertex grazing or collinear overlap) the
    anchor is perturbed by 10*tol_geo in a rotating direction, up to
    max_retries times, before DegenerateIntersection is raised. Accepts a
    single state (2,) or a batch (n, 2).
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    single = np.asarray(x).ndim == 1
    anchor = np.asarray(off_state, dtype=float)
    counts, degen = _parity_batch(anchor, X, curve, tol_geo)
    if degen.any():
        for i in np.flatnonzero(degen):
            counts[i] = _retry_parity(anchor, X[i], curve, tol_geo, max_retries)
    inside = counts % 2 == 1
    return bool(inside[0]) if single else inside


def _retry_parity(anchor, xq, curve, tol, max_retries):
    for attempt in range(max_retries):
        ang = 2.0 * math.pi * attempt / max_retries
        shift = 10.0 * tol * (attempt + 1) * np.array([math.cos(ang), math.sin(ang)])
        c, d = _parity_batch(anchor + shift, xq[None, :], curve, tol)
        if not d[0]:
            return int(c[0])
    raise DegenerateIntersection(
        f"parity undecidable for query {tuple(np.round(xq, 6))} after "
        f"{max_retries} anchor perturbations"
    )


def distance_to_polyline(x, curve: ThresholdCurve) -> np.ndarray:
    """Minimum Euclidean distance from point(s) to the curve's segments."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    E0, E1 = curve.segments()
    F = E1 - E0
    f2 = np.maximum(np.einsum("ij,ij->i", F, F), 1e-300)
    out = np.empty(len(X))
    for i in range(0, len(X), _CHUNK):
        Xc = X[i : i + _CHUNK]
        W = Xc[:, None, :] - E0[None, :, :]  # (n, m, 2)
        tpar = np.clip(np.einsum("nmk,mk->nm", W, F) / f2[None, :], 0.0, 1.0)
        closest = E0[None, :, :] + tpar[..., None] * F[None, :, :]
        d = np.linalg.norm(Xc[:, None, :] - closest, axis=2)
        out[i : i + _CHUNK] = d.min(axis=1)
    return out


def signed_distance(
    x,
    curve: ThresholdCurve,
    off_state,
    *,
    tol_geo: float = TOL_GEO,
    max_retries: int = 8,
):
    """Signed distance to the threshold: positive inside, negative outside."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    single = np.asarray(x).ndim == 1
    mag = distance_to_polyline(X, curve)
    side = is_inside(X, curve, off_state, tol_geo=tol_geo, max_retries=max_retries)
    val = np.where(side, mag, -mag)
    return float(val[0]) if single else val


# ---------------------------------------------------------------------------
# brute-force fate map


@dataclass(frozen=True, eq=False)
class FateMap:
    """Tip/no-tip classification of a grid of initial states at one time."""

    t_init: float
    x1: np.ndarray
    x2: np.ndarray
    tipped: np.ndarray
    forcing_id: str = ""

    def points(self) -> np.ndarray:
        GX, GY = np.meshgrid(self.x1, self.x2, indexing="ij")
        return np.column_stack([GX.ravel(), GY.ravel()])

    def flat(self) -> np.ndarray:
        return self.tipped.ravel()


def grid_fate_map(
    t_init: float,
    forcing,
    params: AmocParams,
    grid,
    eq: EquilibriumSet,
    *,
    dt: float = 0.1,
    r_class: float = 0.05,
    t_horizon: float = 2000.0,
) -> FateMap:
    """Classify every grid point by integrating through the full forcing.

    grid is a pair of axis arrays (x1, x2). Each point is integrated from
    t_init to the end of forcing under the nonautonomous field, then relaxed
    under frozen forcing and labelled by the attractor ball it lands in.
    """
    x1, x2 = (np.asarray(g, dtype=float) for g in grid)
    GX, GY = np.meshgrid(x1, x2, indexing="ij")
    X = np.column_stack([GX.ravel(), GY.ravel()])
    model = Amoc3Box(params)
    t_end = forcing.end_time
    if t_init < t_end:
        n = round((t_end - t_init) / dt)
        t_stop = t_init + n * dt
        for k in range(n):
            X = rk4_step_batch(model, forcing, t_init + k * dt, X, dt)
    else:
        t_stop = t_init
    labels = classify_basin(
        X,
        params,
        H=forcing.value(t_stop + 1.0),
        eq=eq,
        r_class=r_class,
        t_horizon=t_horizon,
        dt=dt,
    )
    tipped = (labels != 0).reshape(len(x1), len(x2))
    return FateMap(
        t_init=float(t_init), x1=x1, x2=x2, tipped=tipped, forcing_id=forcing.id
    )


def boundary_cell_mask(tipped: np.ndarray) -> np.ndarray:
    """Cells with at least one 4-neighbour of the opposite class."""
    b = np.zeros_like(tipped, dtype=bool)
    b[:-1, :] |= tipped[:-1, :] != tipped[1:, :]
    b[1:, :] |= tipped[1:, :] != tipped[:-1, :]
    b[:, :-1] |= tipped[:, :-1] != tipped[:, 1:]
    b[:, 1:] |= tipped[:, 1:] != tipped[:, :-1]
    return b


def near_boundary_mask(tipped: np.ndarray, cells: int = 2) -> np.ndarray:
    """Cells within `cells` grid steps of the classification boundary."""
    m = boundary_cell_mask(tipped)
    out = m.copy()
    for _ in range(cells):
        grown = out.copy()
        grown[:-1, :] |= out[1:, :]
        grown[1:, :] |= out[:-1, :]
        grown[:, :-1] |= out[:, 1:]
        grown[:, 1:] |= out[:, :-1]
        out = grown
    return out
