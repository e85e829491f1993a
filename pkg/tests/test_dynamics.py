import json
import math

import numpy as np
import pytest

from rtip.dynamics import (
    Amoc3Box,
    AmocParams,
    HosingProfile,
    TanhRampForcing,
    amoc_jacobian,
    amoc_q,
    amoc_rhs,
    amoc_sip,
    eval_hosing,
    eval_tanh_ramp,
    example_frozen_roots,
    example_rhs,
    example_upper_branch_exists,
    find_equilibria,
    total_salt_content,
)
from rtip.errors import ClassificationFailure, ConfigError


# ---------------------------------------------------------------------------
# forcing profiles


def test_tanh_ramp_values():
    f = TanhRampForcing(p_plus=1.7, theta=0.08)
    assert eval_tanh_ramp(f, 0.0) == pytest.approx(0.85, abs=1e-15)
    assert eval_tanh_ramp(f, 1e9) == pytest.approx(1.7, abs=1e-12)
    f2 = TanhRampForcing(p_plus=1.7, theta=0.4)
    # direct arithmetic oracle
    assert eval_tanh_ramp(f2, 5.0) == pytest.approx(
        1.7 * (math.tanh(2.0) + 1.0) / 2.0, rel=1e-15
    )


def test_tanh_ramp_monotone_property():
    rng = np.random.default_rng(3)
    f = TanhRampForcing(p_plus=1.7, theta=0.05)
    for _ in range(500):
        t1, t2 = np.sort(rng.uniform(-500, 500, size=2))
        assert f.value(t1) <= f.value(t2) + 1e-15
    lo, hi = f.value(-1e12), f.value(1e12)
    assert 0.0 <= lo and hi <= 1.7


def test_tanh_ramp_validation():
    with pytest.raises(ConfigError):
        TanhRampForcing(p_plus=-1.0, theta=0.1)
    with pytest.raises(ConfigError):
        TanhRampForcing(p_plus=1.0, theta=-0.1)


def test_hosing_values():
    h = HosingProfile(H0=0.0, H_max=0.38, T_rise=100, T_plat=300, T_fall=200)
    assert eval_hosing(h, 100.0) == pytest.approx(0.38, abs=1e-15)
    assert eval_hosing(h, -50.0) == 0.0
    # midpoint of the ramp-down, arithmetic oracle
    assert eval_hosing(h, 500.0) == pytest.approx(0.19, abs=1e-15)
    assert eval_hosing(h, 1e6) == 0.0


def test_hosing_continuity_at_breakpoints():
    h = HosingProfile(H0=0.05, H_max=0.4, T_rise=80, T_plat=120, T_fall=160)
    for tb in (0.0, 80.0, 200.0, 360.0):
        assert h.value(tb - 1e-9) == pytest.approx(h.value(tb + 1e-9), abs=1e-9)


def test_hosing_lipschitz_property():
    h = HosingProfile(H0=0.0, H_max=0.38, T_rise=100, T_plat=300, T_fall=200)
    slope_max = (h.H_max - h.H0) * max(1.0 / h.T_rise, 1.0 / h.T_fall)
    rng = np.random.default_rng(11)
    for _ in range(500):
        t = rng.uniform(-100, 700)
        d = rng.uniform(0, 50)
        assert abs(h.value(t + d) - h.value(t)) <= slope_max * d + 1e-12


def test_hosing_array_matches_scalar():
    h = HosingProfile()
    ts = np.linspace(-50, 700, 301)
    arr = h.value(ts)
    assert arr == pytest.approx([h.value(float(t)) for t in ts], abs=1e-15)


# ---------------------------------------------------------------------------
# 1-D example system


def test_example_rhs_zeros():
    assert example_rhs(0.0, 0.0, 1.7) == 0.0
    assert example_rhs(math.sqrt(3.0), 0.0, 1.7) == pytest.approx(0.0, abs=1e-15)


def test_example_fold_structure():
    # the upper branch survives all forcing levels iff p_plus < 2*sqrt(2)/sqrt(3)
    p_c = 2.0 * math.sqrt(2.0) / math.sqrt(3.0)
    for p_plus in (1.5, 1.6, p_c - 1e-3):
        assert all(
            example_upper_branch_exists(p, p_plus)
            for p in np.linspace(0, p_plus, 400)
        )
    for p_plus in (p_c + 1e-3, 1.7, 2.0):
        assert not all(
            example_upper_branch_exists(p, p_plus)
            for p in np.linspace(0, p_plus, 400)
        )


def test_example_frozen_roots_are_roots():
    rng = np.random.default_rng(5)
    for _ in range(50):
        p_plus = rng.uniform(1.0, 2.0)
        p = rng.uniform(0.0, p_plus)
        for r in example_frozen_roots(p, p_plus):
            assert example_rhs(r, p, p_plus) == pytest.approx(0.0, abs=1e-9)


# ---------------------------------------------------------------------------
# box model


def test_q_at_reference_salinity(params):
    # direct arithmetic oracle: q = lam*alpha*(T_S - T_0)/(1 + lam*alpha*mu)
    # when S_N equals the southern-box salinity
    s_state = np.array([params.s_s, 0.0])
    expected = (
        params.lam
        * params.alpha
        * (params.T_S - params.T_0)
        / (1.0 + params.lam * params.alpha * params.mu)
    )
    assert amoc_q(s_state, params) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(5.5133e6, rel=1e-4)


def test_q_independent_of_salinity_when_beta_zero(params):
    p0 = AmocParams(beta=0.0)
    qs = [float(amoc_q(np.array([sn, 0.0]), p0)) for sn in (-2.0, 0.0, 1.5)]
    assert qs[0] == qs[1] == qs[2]


def test_q_sign_change_at_numerator_root(params):
    # q crosses zero exactly where alpha*(T_S - T_0) + beta*(S_N - S_S) = 0
    sn_star = params.s_s - 100.0 * params.alpha * (params.T_S - params.T_0) / params.beta
    eps = 1e-9
    assert amoc_q(np.array([sn_star + eps, 0.0]), params) > 0
    assert amoc_q(np.array([sn_star - eps, 0.0]), params) < 0
    assert amoc_q(np.array([sn_star, 0.0]), params) == pytest.approx(0.0, abs=1e-4)


def test_salt_conservation(params):
    rng = np.random.default_rng(7)
    states = rng.uniform(-3, 3, size=(200, 2))
    C_rec = total_salt_content(states, params)
    assert np.max(np.abs(C_rec / params.C - 1.0)) < 1e-12


def _rhs_branch_oracle(state, H, params, branch):
    """Literal transcription of each circulation branch, for cross-checking."""
    sn, st = state
    q = float(amoc_q(np.asarray(state), params))
    s_ip = float(amoc_sip(np.asarray(state), params))
    fN = 100.0 * params.S0 * (params.F_N0 + params.F_N1 * H)
    fT = 100.0 * params.S0 * (params.F_T0 + params.F_T1 * H)
    g = params.gamma
    if branch == "pos":
        f1 = (q * (st - sn) + params.K_N * (st - sn) - fN) * params.Y / params.V_N
        f2 = (
            q * (g * params.s_s + (1 - g) * s_ip - st)
            + params.K_S * (params.s_s - st)
            + params.K_N * (sn - st)
            - fT
        ) * params.Y / params.V_T
    else:
        f1 = (abs(q) * (params.s_b - sn) + params.K_N * (st - sn) - fN) * params.Y / params.V_N
        f2 = (
            abs(q) * (sn - st)
            + params.K_S * (params.s_s - st)
            + params.K_N * (sn - st)
            - fT
        ) * params.Y / params.V_T
    return np.array([f1, f2])


def test_branch_selection_consistency(params):
    rng = np.random.default_rng(17)
    states = rng.uniform(-3, 3, size=(1000, 2))
    H = 0.2
    out = amoc_rhs(states, H, params)
    for state, f in zip(states, out):
        q = float(amoc_q(state, params))
        branch = "pos" if q >= 0 else "neg"
        expected = _rhs_branch_oracle(state, H, params, branch)
        assert f == pytest.approx(expected, rel=1e-13, abs=1e-18)


def test_branch_continuity_at_zero_transport(params):
    # both branch expressions coincide where q = 0
    sn_star = params.s_s - 100.0 * params.alpha * (params.T_S - params.T_0) / params.beta
    for st in (-1.0, 0.3, 2.0):
        state = (sn_star, st)
        pos = _rhs_branch_oracle(state, 0.1, params, "pos")
        neg = _rhs_branch_oracle(state, 0.1, params, "neg")
        assert pos == pytest.approx(neg, abs=1e-12)
        assert amoc_rhs(np.array(state), 0.1, params) == pytest.approx(pos, abs=1e-12)


def test_rhs_shapes(params):
    x = np.array([0.1, -0.2])
    single = amoc_rhs(x, 0.0, params)
    batch = amoc_rhs(np.tile(x, (5, 1)), 0.0, params)
    assert single.shape == (2,)
    assert batch.shape == (5, 2)
    assert batch == pytest.approx(np.tile(single, (5, 1)))


def test_scalar_path_matches_vector_path(params):
    model = Amoc3Box(params)
    rng = np.random.default_rng(23)
    for _ in range(200):
        sn, st = rng.uniform(-3, 3, size=2)
        H = rng.uniform(0, 0.4)
        f1, f2 = model.rhs_scalar(sn, st, H)
        vec = amoc_rhs(np.array([sn, st]), H, params)
        assert (f1, f2) == pytest.approx(tuple(vec), rel=1e-15)


# ---------------------------------------------------------------------------
# equilibria


def _grid_refine_oracle(H, params):
    """Dense grid search plus Newton refinement, independent of the
    nullcline-reduction path used by find_equilibria."""
    best = []
    xs = np.linspace(-0.5, 0.2, 141)
    ys = np.linspace(-0.3, 1.2, 151)
    GX, GY = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([GX.ravel(), GY.ravel()])
    F = amoc_rhs(pts, H, params)
    mag = np.abs(F).max(axis=1)
    order = np.argsort(mag)
    roots = []
    for idx in order[:400]:
        x = pts[idx].copy()
        for _ in range(80):
            f = amoc_rhs(x, H, params)
            if np.max(np.abs(f)) < 1e-12:
                break
            J = amoc_jacobian(x, H, params)
            try:
                x = x + np.linalg.solve(J, -f)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 10:
                break
        else:
            continue
        if np.max(np.abs(amoc_rhs(x, H, params))) < 1e-12 and not any(
            np.linalg.norm(x - r) < 1e-6 for r in roots
        ):
            roots.append(x)
    return sorted(roots, key=lambda r: r[0])


def test_equilibria_match_grid_oracle(params, eq0):
    oracle = _grid_refine_oracle(0.0, params)
    assert len(oracle) == 3
    assert eq0.off_state == pytest.approx(oracle[0], abs=1e-8)
    assert eq0.edge_state == pytest.approx(oracle[1], abs=1e-8)
    assert eq0.on_state == pytest.approx(oracle[2], abs=1e-8)


def test_equilibria_residuals(params, eq0):
    for x in (eq0.on_state, eq0.off_state, eq0.edge_state):
        assert np.max(np.abs(amoc_rhs(x, 0.0, params))) < 1e-10


def test_edge_is_saddle(params, eq0):
    ev = np.linalg.eigvals(amoc_jacobian(eq0.edge_state, 0.0, params))
    assert ev.real.min() < 0 < ev.real.max()
    assert eq0.edge_eigen.stable_value < 0 < eq0.edge_eigen.unstable_value


def test_attractors_are_stable(params, eq0):
    for x in (eq0.on_state, eq0.off_state):
        ev = np.linalg.eigvals(amoc_jacobian(x, 0.0, params))
        assert np.all(ev.real < 0)


def test_edge_unstable_direction_connects_attractors(params, eq0):
    # forward integration from edge +/- eps along the unstable eigenvector
    from rtip.dynamics import ConstantForcing
    from rtip.integrators import IntegratorConfig, integrate_ode

    model = Amoc3Box(params)
    cfg = IntegratorConfig(dt=0.1, t_start=0.0, t_end=10000.0, record_stride=1000)
    ends = []
    for sgn in (+1.0, -1.0):
        x0 = eq0.edge_state + sgn * 1e-6 * eq0.edge_eigen.unstable_vector
        traj = integrate_ode(model, ConstantForcing(0.0), x0, cfg)
        ends.append(traj.final_state)
    d = lambda a, b: np.linalg.norm(a - b)
    reached = {
        "on": any(d(e, eq0.on_state) < 1e-6 for e in ends),
        "off": any(d(e, eq0.off_state) < 1e-6 for e in ends),
    }
    assert reached["on"] and reached["off"]


def test_equilibria_exist_across_hosing_range(params):
    for H in (0.1, 0.25, 0.38):
        eq = find_equilibria(H, params)
        assert eq.on_state[0] > eq.off_state[0]


def test_classification_failure_outside_bistable_range(params):
    with pytest.raises(ClassificationFailure):
        find_equilibria(3.0, params)


# ---------------------------------------------------------------------------
# parameters and JSON loading


def test_default_parameter_values(params):
    assert params.S0 == 0.035
    assert params.alpha == 0.12
    assert params.beta == 790.0
    assert params.lam == 1.62e7
    assert params.mu == 22e-8
    assert params.T_S == 7.919
    assert params.T_0 == 3.87
    assert params.gamma == 0.36
    assert params.Y == 3.15e7
    assert params.K_N == 1.762e6
    assert params.K_S == 1.872e6
    assert params.S_S == 0.034427
    assert params.S_B == 0.034538
    assert params.C == 4.4735e16
    assert params.V_N == 0.3683e17
    assert params.V_T == 0.5418e17
    assert params.V_S == 0.6097e17
    assert params.V_IP == 1.4860e17
    assert params.V_B == 9.9250e17
    assert params.F_N0 == 0.4860e6
    assert params.F_N1 == 0.1311e6
    assert params.F_T0 == -0.997e6
    assert params.F_T1 == 0.6961e6


def test_params_json_roundtrip(tmp_path, params):
    doc = {"V_N": 4e16, "lambda": 1.5e7, "T_rise": None}
    doc.pop("T_rise")  # forcing keys live in the forcing block, not here
    path = tmp_path / "params.json"
    path.write_text(json.dumps(doc))
    p = AmocParams.from_json(path)
    assert p.V_N == 4e16
    assert p.lam == 1.5e7
    assert p.beta == params.beta  # untouched defaults
    assert AmocParams.from_dict(p.to_dict()).to_dict() == p.to_dict()


def test_params_unknown_key_rejected():
    with pytest.raises(ConfigError, match="V_X"):
        AmocParams.from_dict({"V_X": 1.0})


def test_params_invalid_volume():
    with pytest.raises(ConfigError):
        AmocParams(V_N=-1.0)
