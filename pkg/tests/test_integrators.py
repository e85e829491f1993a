import math

import numpy as np
import pytest

from rtip.dynamics import (
    Amoc3Box,
    ConstantForcing,
    Example1D,
    ExampleParams,
    TanhRampForcing,
)
from rtip.errors import ConfigError, NonFiniteState
from rtip.integrators import (
    METHOD_EM,
    IntegratorConfig,
    NoiseModel,
    Trajectory,
    integrate_ode,
    integrate_ode_batch,
    integrate_sde,
    integrate_sde_batch,
    noise_increments,
)


def test_config_validation():
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=-0.1, t_start=0.0, t_end=1.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.1, t_start=1.0, t_end=1.0)
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.1, t_start=0.0, t_end=1.0, record_stride=0)
    with pytest.raises(ConfigError):
        IntegratorConfig(dt=0.3, t_start=0.0, t_end=1.0)  # not a multiple
    cfg = IntegratorConfig(dt=0.1, t_start=1.0, t_end=0.0)
    assert cfg.signed_dt == -0.1
    assert cfg.n_steps == 10


def test_noise_model_defaults():
    nm = NoiseModel.amoc_default()
    assert nm.sigma == 0.01
    assert nm.A == pytest.approx(np.array([[0.1263, -0.0869], [0.0, 0.1008]]))
    with pytest.raises(ConfigError):
        NoiseModel(sigma=-1.0, A=[[1.0]])


def test_trajectory_validation():
    with pytest.raises(ValueError):
        Trajectory(times=[0.0, 1.0, 1.0], states=np.zeros((3, 2)))
    with pytest.raises(ValueError):
        Trajectory(times=[0.0, 1.0], states=np.zeros((3, 2)))
    tr = Trajectory(times=[2.0, 1.0, 0.0], states=np.zeros(3))  # backward ok
    assert tr.dim == 1


def test_amoc_fixed_point(params, eq0):
    model = Amoc3Box(params)
    cfg = IntegratorConfig(dt=0.1, t_start=0.0, t_end=500.0, record_stride=100)
    traj = integrate_ode(model, ConstantForcing(0.0), eq0.on_state, cfg)
    assert np.linalg.norm(traj.final_state - eq0.on_state) < 1e-8


def test_amoc_tipping_outcomes(params, eq0, hosing300, hosing400):
    model = Amoc3Box(params)
    for forcing, tips in ((hosing300, False), (hosing400, True)):
        cfg = IntegratorConfig(
            dt=0.1, t_start=0.0, t_end=forcing.end_time + 1500.0, record_stride=100
        )
        traj = integrate_ode(model, forcing, eq0.on_state, cfg)
        d_on = np.linalg.norm(traj.final_state - eq0.on_state)
        d_off = np.linalg.norm(traj.final_state - eq0.off_state)
        assert (d_off < d_on) == tips


def test_scalar_and_batch_paths_agree(params, eq0, hosing300):
    model = Amoc3Box(params)
    cfg = IntegratorConfig(dt=0.5, t_start=0.0, t_end=200.0, record_stride=50)
    traj = integrate_ode(model, hosing300, eq0.on_state, cfg)
    times, states = integrate_ode_batch(model, hosing300, eq0.on_state[None, :], cfg)
    assert times == pytest.approx(traj.times)
    assert states[:, 0, :] == pytest.approx(traj.states, rel=1e-13, abs=1e-15)


def test_step_refinement_order(params, eq0, hosing300):
    # endpoint mid-transient; all step sizes divide the forcing breakpoints,
    # and the no-tip run keeps q > 0 so the field stays smooth along it
    model = Amoc3Box(params)

    def endpoint(dt):
        cfg = IntegratorConfig(dt=dt, t_start=0.0, t_end=352.0, record_stride=10**9)
        return integrate_ode(model, hosing300, eq0.on_state, cfg).final_state

    x4, x2, x1 = endpoint(4.0), endpoint(2.0), endpoint(1.0)
    e1 = np.linalg.norm(x4 - x2)
    e2 = np.linalg.norm(x2 - x1)
    order = math.log2(e1 / e2)
    assert order >= 3.5


def test_time_reversal(params, eq0, hosing300):
    model = Amoc3Box(params)
    fwd = integrate_ode(
        model,
        hosing300,
        eq0.on_state,
        IntegratorConfig(dt=0.1, t_start=0.0, t_end=300.0, record_stride=3000),
    )
    back = integrate_ode(
        model,
        hosing300,
        fwd.final_state,
        IntegratorConfig(dt=0.1, t_start=300.0, t_end=0.0, record_stride=3000),
    )
    assert np.linalg.norm(back.final_state - eq0.on_state) < 1e-6


def test_nonfinite_detection(params):
    # backward integration far from the attractors blows up
    model = Amoc3Box(params)
    cfg = IntegratorConfig(dt=0.1, t_start=0.0, t_end=-200.0, record_stride=1)
    with pytest.raises(NonFiniteState):
        integrate_ode(model, ConstantForcing(0.0), np.array([8.0, -6.0]), cfg)


def test_sde_with_zero_noise_is_euler(params, eq0, hosing300):
    model = Amoc3Box(params)
    dt = 0.1
    n = 500
    cfg = IntegratorConfig(
        dt=dt, t_start=0.0, t_end=n * dt, method=METHOD_EM, record_stride=1
    )
    traj = integrate_sde(model, hosing300, eq0.on_state, NoiseModel(0.0, np.eye(2)), 1, cfg)
    # local forward-Euler oracle
    x = eq0.on_state.copy()
    for k in range(n):
        x = x + model.rhs(x[None, :], hosing300.value(k * dt))[0] * dt
    assert traj.final_state == pytest.approx(x, abs=0.0)  # exact


def test_sde_determinism_byte_level(params, eq0, hosing300):
    model = Amoc3Box(params)
    cfg = IntegratorConfig(
        dt=0.1, t_start=0.0, t_end=100.0, method=METHOD_EM, record_stride=10
    )
    nm = NoiseModel.amoc_default()
    a = integrate_sde(model, hosing300, eq0.on_state, nm, 42, cfg)
    b = integrate_sde(model, hosing300, eq0.on_state, nm, 42, cfg)
    assert a.states.tobytes() == b.states.tobytes()
    c = integrate_sde(model, hosing300, eq0.on_state, nm, 43, cfg)
    assert a.states.tobytes() != c.states.tobytes()


def test_sde_batch_matches_single(params, eq0, hosing300):
    model = Amoc3Box(params)
    cfg = IntegratorConfig(
        dt=0.1, t_start=0.0, t_end=50.0, method=METHOD_EM, record_stride=10
    )
    nm = NoiseModel.amoc_default()
    X0 = np.tile(eq0.on_state, (3, 1))
    times, states = integrate_sde_batch(model, hosing300, X0, nm, [7, 8, 9], cfg)
    for i, seed in enumerate((7, 8, 9)):
        single = integrate_sde(model, hosing300, eq0.on_state, nm, seed, cfg)
        assert states[:, i, :].tobytes() == single.states.tobytes()


def test_noise_increment_statistics(params, eq0):
    # one-step increments of the driving noise match sigma^2 A A^T dt
    model = Amoc3Box(params)
    nm = NoiseModel.amoc_default()
    dt = 0.1
    n = 10_000
    cfg = IntegratorConfig(dt=dt, t_start=0.0, t_end=dt, method=METHOD_EM)
    X0 = np.tile(eq0.on_state, (n, 1))
    seeds = np.arange(n, dtype=np.uint64)
    _, states = integrate_sde_batch(model, ConstantForcing(0.0), X0, nm, seeds, cfg)
    drift = model.rhs(X0, 0.0) * dt
    incr = states[-1] - X0 - drift
    sample_cov = np.cov(incr.T, bias=True)
    target = nm.sigma**2 * (nm.A @ nm.A.T) * dt
    rel = np.linalg.norm(sample_cov - target) / np.linalg.norm(target)
    assert rel < 0.05
    assert np.abs(incr.mean(axis=0)) == pytest.approx([0.0, 0.0], abs=5e-6)


def test_example_ensemble_splits(params):
    # intermediate ramp rate with noise: some members tip, some do not
    ex = ExampleParams(p_plus=1.7, theta=0.08, sigma=0.1)
    model = Example1D(ex)
    forcing = TanhRampForcing(p_plus=ex.p_plus, theta=ex.theta)
    cfg = IntegratorConfig(
        dt=0.01, t_start=-100.0, t_end=100.0, method=METHOD_EM, record_stride=100
    )
    X0 = np.full((100, 1), math.sqrt(3.0))
    _, states = integrate_sde_batch(
        model, forcing, X0, NoiseModel.scalar(ex.sigma), np.arange(100), cfg
    )
    finals = states[-1, :, 0]
    assert (finals < 0).any() and (finals > 0).any()


def test_counter_based_increments_reproducible():
    a = noise_increments(123, 50, 2)
    b = noise_increments(123, 50, 2)
    assert a.tobytes() == b.tobytes()
    assert a.shape == (50, 2)
