import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from otdftle import AbcFlow, ConfigError, DimensionError, IntegrationDivergedError, LinearSystem
from otdftle.integrators import IntegratorConfig, integrate_coupled, integrate_matrix_ode, integrate_state
from otdftle.models import FunctionSystem

from .conftest import ABC_Z_CROSS


def test_config_validation():
    for kw in ({"dt": 0, "T": 1}, {"dt": 0.1, "T": -1}, {"dt": 0.3, "T": 1.0}, {"dt": 0.1, "T": 1, "scheme": "euler"}):
        with pytest.raises(ConfigError):
            IntegratorConfig(**kw)
    cfg = IntegratorConfig(dt=0.1, T=1.0, t0=2.0)
    assert cfg.n_steps == 10
    assert cfg.times[0] == 2.0 and cfg.times[-1] == 3.0


def test_zero_field_is_constant():
    sys = LinearSystem(np.zeros((3, 3)))
    traj = integrate_state(sys, [1.0, 2.0, 3.0], IntegratorConfig(0.1, 1.0))
    assert np.all(traj.states == [1.0, 2.0, 3.0])


def test_exponential_decay():
    traj = integrate_state(LinearSystem([[-1.0]]), [1.0], IntegratorConfig(0.01, 1.0))
    assert abs(traj.final[0] - math.exp(-1)) < 1e-9


def test_fourth_order_convergence():
    errs = []
    for dt in (0.1, 0.05):
        fin = integrate_state(LinearSystem([[-1.0]]), [1.0], IntegratorConfig(dt, 1.0)).final[0]
        errs.append(abs(fin - math.exp(-1)))
    assert 12 <= errs[0] / errs[1] <= 20


def test_abc_step_halving():
    a = integrate_state(AbcFlow(), ABC_Z_CROSS, IntegratorConfig(0.01, 8.0)).final
    b = integrate_state(AbcFlow(), ABC_Z_CROSS, IntegratorConfig(0.005, 8.0)).final
    assert np.max(np.abs(a - b)) < 1e-6


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        integrate_state(AbcFlow(), [1.0, 2.0], IntegratorConfig(0.1, 1.0))


def test_divergence_reports_step():
    sys = FunctionSystem(1, lambda z, t: z**2, lambda z, t: 2 * z[None, :])
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(IntegrationDivergedError) as info:
        integrate_state(sys, [1.0], IntegratorConfig(0.1, 5.0))
    assert info.value.step >= 1
    assert 0 < info.value.time <= 5.0


def test_matrix_zero_rhs():
    M0 = np.arange(6.0).reshape(3, 2)
    out = integrate_matrix_ode(lambda M, t: np.zeros_like(M), M0, IntegratorConfig(0.1, 1.0))
    assert out.values.shape == (11, 3, 2)
    assert np.all(out.values == M0)


@given(st.integers(0, 2**32 - 1))
def test_matrix_ode_matches_expm(seed):
    A = np.random.default_rng(seed).normal(size=(3, 3))
    A *= 2.0 / max(np.linalg.norm(A, 2), 1e-12)
    out = integrate_matrix_ode(lambda M, t: A @ M, np.eye(3), IntegratorConfig(1e-3, 1.0))
    np.testing.assert_allclose(out.final, scipy.linalg.expm(A), atol=1e-8)


def test_matrix_and_state_integrators_agree():
    a = np.array([-1.0, 0.5, 2.0])
    state = integrate_state(LinearSystem(np.diag(a)), np.ones(3), IntegratorConfig(0.01, 1.0)).final
    mat = integrate_matrix_ode(lambda M, t: a[:, None] * M, np.ones((3, 1)), IntegratorConfig(0.01, 1.0)).final
    np.testing.assert_array_equal(state, mat[:, 0])


def test_post_step_and_observe_calls():
    seen = []
    integrate_coupled(
        lambda t, y: (np.ones_like(y[0]),),
        (np.zeros(1),),
        IntegratorConfig(0.25, 1.0),
        post_step=lambda t, y: (y[0] * 0,),
        observe=lambda k, t, y: seen.append((k, t, y[0][0])),
    )
    assert [s[0] for s in seen] == [0, 1, 2, 3, 4]
    assert all(s[2] == 0 for s in seen)


def test_trajectory_interpolation():
    traj = integrate_state(LinearSystem([[1.0]]), [1.0], IntegratorConfig(0.5, 1.0))
    mid = traj.interpolate(0.25)
    assert mid[0] == pytest.approx(0.5 * (traj.states[0][0] + traj.states[1][0]))
    assert traj.interpolate(-1)[0] == 1.0
