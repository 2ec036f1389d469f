import numpy as np
import pytest

from ppimpc import casestudy
from ppimpc.errors import ControllerFailureError, InvalidArgumentError
from ppimpc.sim import (
    DisturbanceSpec,
    monte_carlo,
    run_stream,
    sample_disturbance,
    simulate_closed_loop,
)


def gauss(seed=0):
    return DisturbanceSpec("gaussian", casestudy.MU_W, casestudy.SIGMA_W, seed)


@pytest.mark.parametrize("kind,df", [("gaussian", None), ("uniform-box", None), ("scaled-t", 5.0)])
def test_disturbance_moments(kind, df):
    mean = np.array([0.1, -0.2])
    cov = np.array([[0.04, 0.01], [0.01, 0.02]])
    spec = DisturbanceSpec(kind, mean, cov, 3, df)
    w = sample_disturbance(spec, run_stream(3, 0), 400000)
    assert w.mean(0) == pytest.approx(mean, abs=2e-3)
    assert np.cov(w.T) == pytest.approx(cov, abs=2e-3 if kind == "scaled-t" else 5e-4)


def test_uniform_box_is_bounded():
    spec = DisturbanceSpec("uniform-box", [0.0], [[1.0]], 0)
    w = sample_disturbance(spec, run_stream(0, 0), 10000)
    assert np.abs(w).max() <= np.sqrt(3.0)


def test_disturbance_spec_validation():
    with pytest.raises(InvalidArgumentError):
        DisturbanceSpec("laplace", [0.0], [[1.0]])
    with pytest.raises(InvalidArgumentError):
        DisturbanceSpec("scaled-t", [0.0], [[1.0]], df=2.0)
    with pytest.raises(InvalidArgumentError):
        DisturbanceSpec("gaussian", [0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(InvalidArgumentError):
        DisturbanceSpec("gaussian", [0.0], [[1.0]], seed=-1)


def test_streams_are_reproducible_and_distinct():
    a = run_stream(7, 3).standard_normal(5)
    b = run_stream(7, 3).standard_normal(5)
    c = run_stream(7, 4).standard_normal(5)
    d = run_stream(8, 3).standard_normal(5)
    assert a.tolist() == b.tolist()
    assert a.tolist() != c.tolist() and a.tolist() != d.tolist()


def test_closed_loop_log(dcdc, dcdc_ocp):
    log = simulate_closed_loop(dcdc, dcdc_ocp, casestudy.X0, 25, gauss())
    assert log.T == 25
    assert log.x.shape == (26, 2) and log.w.shape == (25, 2)
    assert np.array_equal(log.x, log.z + log.s)
    assert log.feasible.all()
    # dynamics of the real state
    for k in range(25):
        x_next = dcdc.model.A @ log.x[k] + dcdc.model.B @ log.u[k] + log.w[k]
        assert log.x[k + 1] == pytest.approx(x_next, abs=1e-14)
    # error dynamics s+ = A_K s + w
    for k in range(25):
        assert log.s[k + 1] == pytest.approx(dcdc.A_K @ log.s[k] + log.w[k], abs=1e-13)


def test_zero_horizon(dcdc, dcdc_ocp):
    log = simulate_closed_loop(dcdc, dcdc_ocp, casestudy.X0, 0, gauss())
    assert log.T == 0 and log.feasible.tolist() == [True]


def test_explicit_disturbances(dcdc, dcdc_ocp):
    W = np.zeros((5, 2))
    log = simulate_closed_loop(dcdc, dcdc_ocp, casestudy.X0, 5, gauss(), disturbances=W)
    assert np.allclose(log.s, 0.0)


def test_failure_from_infeasible_start(dcdc, dcdc_ocp):
    with pytest.raises(ControllerFailureError) as info:
        simulate_closed_loop(dcdc, dcdc_ocp, np.array([30.0, 30.0]), 10, gauss())
    err = info.value
    assert err.step == 0
    assert err.partial.x.shape == (1, 2)
    assert not err.partial.feasible.any()


def test_monte_carlo_reproduces_single_runs(dcdc, dcdc_ocp):
    spec = gauss(11)
    rep = monte_carlo(dcdc, dcdc_ocp, casestudy.X0, 25, 5, spec, keep_states=True)
    for i in range(5):
        log = simulate_closed_loop(dcdc, dcdc_ocp, casestudy.X0, 25, spec, stream=run_stream(11, i))
        assert np.array_equal(rep.nominal.z, log.z)
        assert np.abs(rep.states[:, i] - log.x).max() <= 1e-12


def test_monte_carlo_is_deterministic_and_prefix_stable(dcdc, dcdc_ocp):
    a = monte_carlo(dcdc, dcdc_ocp, casestudy.X0, 25, 50, gauss(3), keep_states=True)
    b = monte_carlo(dcdc, dcdc_ocp, casestudy.X0, 25, 80, gauss(3), keep_states=True)
    assert np.array_equal(a.states, b.states[:, :50])
    c = monte_carlo(dcdc, dcdc_ocp, casestudy.X0, 25, 50, gauss(3))
    assert a.summary() == c.summary()


def test_single_run_rates_are_binary(dcdc, dcdc_ocp):
    rep = monte_carlo(dcdc, dcdc_ocp, casestudy.X0, 25, 1, gauss())
    assert set(np.unique(rep.state_violation)) <= {0.0, 1.0}
    assert set(np.unique(rep.input_violation)) <= {0.0, 1.0}
    assert np.isnan(rep.chebyshev_coverage[0])


def test_violations_counted(dcdc, dcdc_ocp):
    # inflated noise forces violations; the counting must agree with a direct check
    spec = DisturbanceSpec("gaussian", casestudy.MU_W, 0.25 * np.eye(2), 0)
    rep = monte_carlo(dcdc, dcdc_ocp, casestudy.X0, 10, 200, spec, window=(1, 9), keep_states=True)
    direct = np.array([[not dcdc.model.X.contains(rep.states[k, i]) for i in range(200)] for k in range(11)])
    assert rep.state_violation == pytest.approx(direct.mean(1))
    assert rep.window_state_violation == pytest.approx(direct[1:10].mean())
    assert rep.trajectory_state_violation == pytest.approx(direct[1:10].any(0).mean())
    assert rep.window_state_violation > 0


def test_window_validation(dcdc, dcdc_ocp):
    with pytest.raises(InvalidArgumentError):
        monte_carlo(dcdc, dcdc_ocp, casestudy.X0, 5, 10, gauss(), window=(1, 9))
    with pytest.raises(InvalidArgumentError):
        monte_carlo(dcdc, dcdc_ocp, casestudy.X0, 5, 0, gauss(), window=(1, 3))


@pytest.mark.parametrize("kind,df", [("uniform-box", None), ("scaled-t", 3.0)])
def test_chebyshev_coverage_other_families(dcdc, dcdc_ocp, kind, df):
    spec = DisturbanceSpec(kind, casestudy.MU_W, casestudy.SIGMA_W, 0, df)
    rep = monte_carlo(dcdc, dcdc_ocp, casestudy.X0, 25, 2000, spec)
    assert np.nanmin(rep.chebyshev_coverage) >= 0.8


def test_input_decomposition_is_exact(dcdc, dcdc_ocp):
    log = simulate_closed_loop(dcdc, dcdc_ocp, casestudy.X0, 25, gauss(2))
    K = dcdc.terminal.K
    for k in range(26):
        assert np.array_equal(log.u[k], log.v[k] + K @ log.s[k])


def test_ppi_residence(dcdc, dcdc_ocp):
    rep = monte_carlo(dcdc, dcdc_ocp, casestudy.X0, 25, 4000, gauss(6))
    assert rep.ppi_residence[0] == 1.0
    assert rep.ppi_residence.min() >= 1 - dcdc.model.eps_x
