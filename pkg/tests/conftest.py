import numpy as np
import pytest

from rtip.dynamics import AmocParams, HosingProfile, find_equilibria
from rtip.ensembles import EnsembleSpec, build_balanced_ensemble
from rtip.integrators import NoiseModel
from rtip.threshold import evolve_threshold_backward, seed_basin_boundary


@pytest.fixture(scope="session")
def params():
    return AmocParams()


@pytest.fixture(scope="session")
def eq0(params):
    return find_equilibria(0.0, params)


@pytest.fixture(scope="session")
def hosing300():
    return HosingProfile(H0=0.0, H_max=0.38, T_rise=100.0, T_plat=300.0, T_fall=200.0)


@pytest.fixture(scope="session")
def hosing400():
    return HosingProfile(H0=0.0, H_max=0.38, T_rise=100.0, T_plat=400.0, T_fall=200.0)


@pytest.fixture(scope="session")
def frozen_boundary(params, eq0):
    """Basin boundary of the unforced system, stamped at t=0."""
    return seed_basin_boundary(0.0, params, eq0, t_seed=0.0)


@pytest.fixture(scope="session")
def history300(params, eq0, hosing300):
    seed = seed_basin_boundary(0.0, params, eq0, t_seed=hosing300.end_time)
    return evolve_threshold_backward(seed, hosing300, params, t_start=0.0)


@pytest.fixture(scope="session")
def history400(params, eq0, hosing400):
    seed = seed_basin_boundary(0.0, params, eq0, t_seed=hosing400.end_time)
    return evolve_threshold_backward(seed, hosing400, params, t_start=0.0)


@pytest.fixture(scope="session")
def small_ensemble(params, eq0, hosing300):
    """25 + 25 members of the default noisy scenario."""
    spec = EnsembleSpec(
        n_target_per_class=25,
        x0=eq0.on_state,
        t_init=0.0,
        forcing=hosing300,
        noise=NoiseModel.amoc_default(),
        base_seed=1,
        max_draws=600,
    )
    return build_balanced_ensemble(spec, params, eq0)
