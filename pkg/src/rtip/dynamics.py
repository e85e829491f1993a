"""Forcing profiles, model vector fields, parameters, and equilibrium analysis.

Two model systems are provided:

* a 1-D double-well normal form whose forcing is a smooth monotone ramp
  saturating at a maximum level, used to illustrate rate-dependent tipping;
* a 2-D three-box ocean salinity model forced by a piecewise-linear
  freshwater hosing profile, with an overturning transport q that switches
  between a positive-circulation and a reversed-circulation branch.

The box model is solved in rescaled salinities s_i = 100*(S_i - S0)
throughout (better numerical conditioning); time is measured in years.
Conversion helpers between raw and rescaled salinity are provided.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from functools import cached_property

import numpy as np

from .errors import ClassificationFailure, ConfigError, ConvergenceFailure

__all__ = [
    "TanhRampForcing",
    "HosingProfile",
    "ConstantForcing",
    "ExampleParams",
    "AmocParams",
    "EdgeEigen",
    "EquilibriumSet",
    "Example1D",
    "Amoc3Box",
    "eval_tanh_ramp",
    "eval_hosing",
    "example_rhs",
    "example_frozen_roots",
    "example_upper_branch_exists",
    "amoc_q",
    "amoc_sip",
    "amoc_rhs",
    "amoc_jacobian",
    "total_salt_content",
    "rescale_salinity",
    "raw_salinity",
    "find_equilibria",
    "default_newton_seeds",
]


# ---------------------------------------------------------------------------
# forcing profiles


@dataclass(frozen=True, eq=False)
class TanhRampForcing:
    """Monotone forcing ramp p(t) = (p_plus/2)*(tanh(theta*t) + 1).

    Starts at 0 in the far past and saturates at p_plus; theta >= 0 sets the
    rate of the shift.
    """

    p_plus: float
    theta: float

    def __post_init__(self):
        if not self.p_plus > 0:
            raise ConfigError(f"p_plus must be > 0, got {self.p_plus}")
        if self.theta < 0:
            raise ConfigError(f"theta must be >= 0, got {self.theta}")

    def value(self, t):
        if isinstance(t, (float, int)):
            return 0.5 * self.p_plus * (math.tanh(self.theta * t) + 1.0)
        return 0.5 * self.p_plus * (np.tanh(self.theta * np.asarray(t)) + 1.0)

    @property
    def id(self) -> str:
        return f"tanh_pp{self.p_plus:g}_th{self.theta:g}"


@dataclass(frozen=True, eq=False)
class HosingProfile:
    """Piecewise-linear hosing: rise over T_rise, plateau T_plat, fall T_fall.

    Equals H0 for t <= 0 and for t >= T_rise + T_plat + T_fall; continuous
    and piecewise linear in between. Durations are in years.
    """

    H0: float = 0.0
    H_max: float = 0.38
    T_rise: float = 100.0
    T_plat: float = 300.0
    T_fall: float = 200.0

    def __post_init__(self):
        for name in ("T_rise", "T_plat", "T_fall"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")

    @property
    def end_time(self) -> float:
        return self.T_rise + self.T_plat + self.T_fall

    def value(self, t):
        if isinstance(t, (float, int)):
            if t <= 0.0 or t >= self.end_time:
                return self.H0
            if t <= self.T_rise:
                return self.H0 + (self.H_max - self.H0) * t / self.T_rise
            if t <= self.T_rise + self.T_plat:
                return self.H_max
            return self.H_max - (self.H_max - self.H0) * (
                t - self.T_rise - self.T_plat
            ) / self.T_fall
        xp = [0.0, self.T_rise, self.T_rise + self.T_plat, self.end_time]
        fp = [self.H0, self.H_max, self.H_max, self.H0]
        return np.interp(np.asarray(t, dtype=float), xp, fp, left=self.H0, right=self.H0)

    @property
    def id(self) -> str:
        return (
            f"hosing_h0{self.H0:g}_hm{self.H_max:g}_r{self.T_rise:g}"
            f"_p{self.T_plat:g}_f{self.T_fall:g}"
        )


@dataclass(frozen=True, eq=False)
class ConstantForcing:
    """Frozen forcing held at a fixed level."""

    level: float = 0.0

    def value(self, t):
        if isinstance(t, (float, int)):
            return self.level
        return np.full(np.shape(t), self.level)

    @property
    def end_time(self) -> float:
        return 0.0

    @property
    def id(self) -> str:
        return f"const_{self.level:g}"


def eval_tanh_ramp(f: TanhRampForcing, t):
    """Forcing level of the tanh ramp at time t."""
    return f.value(t)


def eval_hosing(h: HosingProfile, t):
    """Hosing level of the piecewise-linear profile at time t."""
    return h.value(t)


# ---------------------------------------------------------------------------
# 1-D example system


@dataclass(frozen=True, eq=False)
class ExampleParams:
    """Parameters for the 1-D double-well example."""

    p_plus: float = 1.7
    theta: float = 0.08
    sigma: float = 0.1

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")


def example_rhs(x, p, p_plus):
    """Time derivative -x**3/3 + x - p*(p_plus - p) of the 1-D example."""
    return -(x**3) / 3.0 + x - p * (p_plus - p)


def example_frozen_roots(p: float, p_plus: float) -> np.ndarray:
    """Real equilibria of the frozen 1-D system at forcing level p, ascending."""
    c = p * (p_plus - p)
    roots = np.roots([1.0, 0.0, -3.0, 3.0 * c])
    real = roots[np.abs(roots.imag) < 1e-9].real
    return np.sort(real)

def example_upper_branch_exists(p: float, p_plus: float) -> bool:
    """Whether the frozen 1-D system has an attracting upper equilibrium (x > 1)."""
    r = example_frozen_roots(p, p_plus)
    return bool(r.size > 0 and r[-1] > 1.0)


class Example1D:
    """1-D example system; state arrays have shape (n, 1)."""

    dim = 1

    def __init__(self, params: ExampleParams | None = None):
        self.params = params if params is not None else ExampleParams()

    def rhs(self, X: np.ndarray, p: float) -> np.ndarray:
        x = X[:, 0]
        return (-(x**3) / 3.0 + x - p * (self.params.p_plus - p))[:, None]

    def rhs_scalar(self, x: float, p: float):
        return (-(x * x * x) / 3.0 + x - p * (self.params.p_plus - p),)


# ---------------------------------------------------------------------------
# three-box AMOC model

# mapping from parameter-table key names (as used in JSON documents) to
# dataclass field names; only "lambda" needs renaming (reserved word)
_AMOC_KEY_TO_FIELD = {
    "S0": "S0",
    "alpha": "alpha",
    "beta": "beta",
    "lambda": "lam",
    "mu": "mu",
    "T_S": "T_S",
    "T_0": "T_0",
    "gamma": "gamma",
    "Y": "Y",
    "K_N": "K_N",
    "K_S": "K_S",
    "S_S": "S_S",
    "S_B": "S_B",
    "C": "C",
    "V_N": "V_N",
    "V_T": "V_T",
    "V_S": "V_S",
    "V_IP": "V_IP",
    "V_B": "V_B",
    "F_N0": "F_N0",
    "F_N1": "F_N1",
    "F_T0": "F_T0",
    "F_T1": "F_T1",
}
_AMOC_FIELD_TO_KEY = {v: k for k, v in _AMOC_KEY_TO_FIELD.items()}


@dataclass(frozen=True, eq=False)
class AmocParams:
    """Default physical parameters of the three-box overturning model.

    Units: salinities and hosing levels dimensionless, volumes m^3,
    transports m^3/s, temperatures degC, Y seconds per year. `lam` is the
    density-to-transport coefficient (key "lambda" in JSON documents).
    """

    S0: float = 0.035
    alpha: float = 0.12
    beta: float = 790.0
    lam: float = 1.62e7
    mu: float = 22e-8
    T_S: float = 7.919
    T_0: float = 3.87
    gamma: float = 0.36
    Y: float = 3.15e7
    K_N: float = 1.762e6
    K_S: float = 1.872e6
    S_S: float = 0.034427
    S_B: float = 0.034538
    C: float = 4.4735e16
    V_N: float = 0.3683e17
    V_T: float = 0.5418e17
    V_S: float = 0.6097e17
    V_IP: float = 1.4860e17
    V_B: float = 9.9250e17
    F_N0: float = 0.4860e6
    F_N1: float = 0.1311e6
    F_T0: float = -0.997e6
    F_T1: float = 0.6961e6

    def __post_init__(self):
        for name in ("V_N", "V_T", "V_S", "V_IP", "V_B"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.Y > 0:
            raise ConfigError(f"Y must be > 0, got {self.Y}")

    @classmethod
    def from_dict(cls, d: dict) -> "AmocParams":
        """Build from a dict of table-named keys; missing keys use defaults."""
        kwargs = {}
        for key, val in d.items():
            if key not in _AMOC_KEY_TO_FIELD:
                raise ConfigError(f"unknown model parameter key: {key!r}")
            kwargs[_AMOC_KEY_TO_FIELD[key]] = float(val)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "AmocParams":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            _AMOC_FIELD_TO_KEY[f.name]: getattr(self, f.name) for f in fields(self)
        }

    # rescaled constant salinities of the diagnostic boxes
    @cached_property
    def s_s(self) -> float:
        return 100.0 * (self.S_S - self.S0)

    @cached_property
    def s_b(self) -> float:
        return 100.0 * (self.S_B - self.S0)

    @cached_property
    def _consts(self) -> tuple:
        """Precomputed coefficients for the rescaled vector field.

        q = qa + qb*(s_n - s_s); s_ip = ip0 + ipn*s_n + ipt*s_t;
        flux terms fN(H) = 100*S0*(F_N0 + F_N1*H), likewise fT.
        """
        den = 1.0 + self.lam * self.alpha * self.mu
        qa = self.lam * self.alpha * (self.T_S - self.T_0) / den
        qb = self.lam * self.beta / (100.0 * den)
        v_sum = self.V_N + self.V_T + self.V_S + self.V_IP + self.V_B
        ip0 = (
            100.0 * (self.C - self.S0 * v_sum) / self.V_IP
            - (self.V_S * self.s_s + self.V_B * self.s_b) / self.V_IP
        )
        ipn = -self.V_N / self.V_IP
        ipt = -self.V_T / self.V_IP
        cN = self.Y / self.V_N
        cT = self.Y / self.V_T
        return (qa, qb, ip0, ipn, ipt, cN, cT, self.s_s, self.s_b)


def rescale_salinity(S, S0: float = 0.035):
    """Raw salinity -> rescaled units s = 100*(S - S0)."""
    return 100.0 * (np.asarray(S) - S0) if not isinstance(S, (float, int)) else 100.0 * (S - S0)


def raw_salinity(s, S0: float = 0.035):
    """Rescaled salinity -> raw units S = S0 + s/100."""
    return S0 + np.asarray(s) / 100.0 if not isinstance(s, (float, int)) else S0 + s / 100.0


def amoc_q(state, params: AmocParams):
    """Overturning volume transport q in m^3/s for rescaled state(s).

    Positive q is the normal circulation; q < 0 is the reversed (collapsed)
    branch. Accepts shape (2,) or (..., 2).
    """
    qa, qb, *_ , s_s, _ = _consts_of(params)
    s_n = np.asarray(state, dtype=float)[..., 0]
    return qa + qb * (s_n - s_s)


def _consts_of(params: AmocParams) -> tuple:
    return params._consts


def amoc_sip(state, params: AmocParams):
    """Rescaled Indo-Pacific salinity from total-salt conservation."""
    _, _, ip0, ipn, ipt, *_ = _consts_of(params)
    st = np.asarray(state, dtype=float)
    return ip0 + ipn * st[..., 0] + ipt * st[..., 1]


def total_salt_content(state, params: AmocParams):
    """Reconstructed total salt content sum_i V_i * S_i (raw units).

    Equals params.C identically; used to verify the conservation-based
    elimination of the Indo-Pacific box.
    """
    st = np.asarray(state, dtype=float)
    s_ip = amoc_sip(st, params)
    p = params
    return (
        p.V_N * raw_salinity(st[..., 0], p.S0)
        + p.V_T * raw_salinity(st[..., 1], p.S0)
        + p.V_S * p.S_S
        + p.V_B * p.S_B
        + p.V_IP * raw_salinity(s_ip, p.S0)
    )


def amoc_rhs(state, H: float, params: AmocParams):
    """Rescaled salinity derivatives (per year) of the three-box model.

    Selects the positive- or reversed-circulation branch by the sign of q;
    the field is continuous at q = 0. Accepts shape (2,) or (n, 2) and
    returns the matching shape.
    """
    qa, qb, ip0, ipn, ipt, cN, cT, s_s, s_b = _consts_of(params)
    X = np.asarray(state, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    sn = X2[..., 0]
    st = X2[..., 1]
    q = qa + qb * (sn - s_s)
    aq = np.abs(q)
    fN = 100.0 * params.S0 * (params.F_N0 + params.F_N1 * H)
    fT = 100.0 * params.S0 * (params.F_T0 + params.F_T1 * H)
    s_ip = ip0 + ipn * sn + ipt * st
    d_tn = st - sn
    g = params.gamma
    f1_pos = cN * ((q + params.K_N) * d_tn - fN)
    f2_pos = cT * (
        q * (g * s_s + (1.0 - g) * s_ip - st)
        + params.K_S * (s_s - st)
        + params.K_N * (sn - st)
        - fT
    )
    f1_neg = cN * (aq * (s_b - sn) + params.K_N * d_tn - fN)
    f2_neg = cT * (
        aq * (sn - st) + params.K_S * (s_s - st) + params.K_N * (sn - st) - fT
    )
    pos = q >= 0
    out = np.stack(
        [np.where(pos, f1_pos, f1_neg), np.where(pos, f2_pos, f2_neg)], axis=-1
    )
    return out[0] if single else out


def amoc_jacobian(state, H: float, params: AmocParams, h: float = 1e-6) -> np.ndarray:
    """Jacobian of the rescaled field by central finite differences.

    The field is only piecewise smooth across q = 0, so differences with a
    small step are used instead of analytic branch-wise derivatives.
    """
    x = np.asarray(state, dtype=float)
    J = np.empty((2, 2))
    for j in range(2):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (amoc_rhs(xp, H, params) - amoc_rhs(xm, H, params)) / (2.0 * h)
    return J


class Amoc3Box:
    """Three-box model adapter for the integrators; states are (n, 2) arrays."""

    dim = 2

    def __init__(self, params: AmocParams | None = None):
        self.params = params if params is not None else AmocParams()
        self._c = _consts_of(self.params)

    def rhs(self, X: np.ndarray, H: float) -> np.ndarray:
        return amoc_rhs(X, H, self.params)

    def rhs_scalar(self, sn: float, st: float, H: float):
        qa, qb, ip0, ipn, ipt, cN, cT, s_s, s_b = self._c
        p = self.params
        q = qa + qb * (sn - s_s)
        fN = 100.0 * p.S0 * (p.F_N0 + p.F_N1 * H)
        fT = 100.0 * p.S0 * (p.F_T0 + p.F_T1 * H)
        if q >= 0.0:
            s_ip = ip0 + ipn * sn + ipt * st
            f1 = cN * ((q + p.K_N) * (st - sn) - fN)
            f2 = cT * (
                q * (p.gamma * s_s + (1.0 - p.gamma) * s_ip - st)
                + p.K_S * (s_s - st)
                + p.K_N * (sn - st)
                - fT
            )
        else:
            f1 = cN * (-q * (s_b - sn) + p.K_N * (st - sn) - fN)
            f2 = cT * (-q * (sn - st) + p.K_S * (s_s - st) + p.K_N * (sn - st) - fT)
        return f1, f2

    def jacobian(self, x, H: float, h: float = 1e-6) -> np.ndarray:
        return amoc_jacobian(x, H, self.params, h)


# ---------------------------------------------------------------------------
# equilibria of the frozen box model


@dataclass(frozen=True, eq=False)
class EdgeEigen:
    """Eigenstructure of the Jacobian at the edge (saddle) state."""

    stable_value: float
    stable_vector: np.ndarray
    unstable_value: float
    unstable_vector: np.ndarray


@dataclass(frozen=True, eq=False)
class EquilibriumSet:
    """ON/OFF attractors and the saddle edge state of the frozen model."""

    on_state: np.ndarray
    off_state: np.ndarray
    edge_state: np.ndarray
    edge_eigen: EdgeEigen
    H: float


def default_newton_seeds(
    window=(-3.0, 1.0, -1.5, 1.5), n: int = 5
) -> np.ndarray:
    """n-by-n grid of Newton starting points over the phase window."""
    xs = np.linspace(window[0], window[1], n)
    ys = np.linspace(window[2], window[3], n)
    GX, GY = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([GX.ravel(), GY.ravel()])


def _newton_root(x0, H, params, tol, max_iter=60, h_jac=1e-6):
    x = np.array(x0, dtype=float)
    for _ in range(max_iter):
        f = amoc_rhs(x, H, params)
        if np.max(np.abs(f)) < tol:
            return x
        J = amoc_jacobian(x, H, params, h_jac)
        try:
            dx = np.linalg.solve(J, -f)
        except np.linalg.LinAlgError:
            return None
        x = x + dx
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1e4:
            return None
    f = amoc_rhs(x, H, params)
    return x if np.max(np.abs(f)) < tol else None


def _nullcline_st(sn, H: float, params: AmocParams):
    """Tropical salinity on the northern-box nullcline (f1 = 0).

    q depends on s_n only, so the f1 = 0 set is an explicit graph
    s_t = g(s_n) on both circulation branches (continuous at q = 0).
    """
    qa, qb, ip0, ipn, ipt, cN, cT, s_s, s_b = _consts_of(params)
    q = qa + qb * (np.asarray(sn, dtype=float) - s_s)
    fN = 100.0 * params.S0 * (params.F_N0 + params.F_N1 * H)
    return np.where(
        q >= 0,
        sn + fN / (q + params.K_N),
        sn + (fN - np.abs(q) * (s_b - sn)) / params.K_N,
    )


def _nullcline_roots(H, params, lo, hi, n_scan=6001):
    """All equilibria via 1-D bracketing of f2 along the f1 nullcline."""

    def h(sn):
        sn = np.atleast_1d(np.asarray(sn, dtype=float))
        st = _nullcline_st(sn, H, params)
        return amoc_rhs(np.stack([sn, st], axis=-1), H, params)[..., 1]

    grid = np.linspace(lo, hi, n_scan)
    vals = h(grid)
    sign = np.sign(vals)
    roots = []
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        a, b = grid[i], grid[i + 1]
        fa = vals[i]
        for _ in range(80):
            m = 0.5 * (a + b)
            fm = h(m)[0]
            if fm == 0.0:
                a = b = m
                break
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
        sn = 0.5 * (a + b)
        roots.append(np.array([sn, float(_nullcline_st(sn, H, params))]))
    for i in np.flatnonzero(vals == 0.0):
        roots.append(np.array([grid[i], float(_nullcline_st(grid[i], H, params))]))
    return roots


def find_equilibria(
    H: float,
    params: AmocParams,
    seeds: np.ndarray | None = None,
    *,
    tol_eq: float = 1e-10,
    dedup_tol: float = 1e-6,
    h_jac: float = 1e-6,
    scan_range: tuple[float, float] = (-4.0, 2.0),
) -> EquilibriumSet:
    """Locate and classify the frozen-model equilibria at hosing level H.

    Every equilibrium lies on the northern-box nullcline, which is an
    explicit graph over s_n, so candidates come from 1-D bracketing along
    it; each candidate (plus any user-provided Newton seeds) is polished by
    Newton iteration and duplicates are merged within dedup_tol. Returns
    the stable root with the largest rescaled northern salinity as ON, the
    smallest as OFF, and the saddle as the edge state. (A grid of 2-D
    Newton seeds alone is not reliable here: the saddle's Newton basin is a
    sliver that even dense grids miss.)

    Raises ConvergenceFailure if no candidate converges and
    ClassificationFailure if the expected bistable structure (two stable
    roots plus one saddle) is not found.
    """
    # converge well below tol_eq so residuals pass with margin
    newton_tol = min(tol_eq * 1e-3, 1e-13)
    candidates = _nullcline_roots(H, params, scan_range[0], scan_range[1])
    if seeds is not None:
        candidates.extend(np.asarray(seeds, dtype=float))
    roots: list[np.ndarray] = []
    n_failed = 0
    for x0 in candidates:
        r = _newton_root(x0, H, params, newton_tol, h_jac=h_jac)
        if r is None:
            n_failed += 1
            continue
        if not any(np.linalg.norm(r - other) < dedup_tol for other in roots):
            roots.append(r)
    if not roots:
        raise ConvergenceFailure(
            f"root polishing failed for all {len(candidates)} candidates at H={H:g}"
        )
    stable: list[np.ndarray] = []
    saddles: list[np.ndarray] = []
    for r in roots:
        ev = np.linalg.eigvals(amoc_jacobian(r, H, params, h_jac))
        if np.all(ev.real < 0):
            stable.append(r)
        elif ev.real.min() < 0 < ev.real.max() and np.all(np.abs(ev.imag) < 1e-12):
            saddles.append(r)
    if len(stable) < 2 or not saddles:
        raise ClassificationFailure(
            f"expected two stable roots and a saddle at H={H:g}; found "
            f"{len(stable)} stable and {len(saddles)} saddle(s) among {len(roots)} roots"
        )
    stable.sort(key=lambda r: r[0])
    edge = saddles[0]
    ev, V = np.linalg.eig(amoc_jacobian(edge, H, params, h_jac))
    ev = ev.real
    V = V.real
    i_s = int(np.argmin(ev))
    i_u = int(np.argmax(ev))
    eigen = EdgeEigen(
        stable_value=float(ev[i_s]),
        stable_vector=V[:, i_s] / np.linalg.norm(V[:, i_s]),
        unstable_value=float(ev[i_u]),
        unstable_vector=V[:, i_u] / np.linalg.norm(V[:, i_u]),
    )
    return EquilibriumSet(
        on_state=stable[-1],
        off_state=stable[0],
        edge_state=edge,
        edge_eigen=eigen,
        H=float(H),
    )
