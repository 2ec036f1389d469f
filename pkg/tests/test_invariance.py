import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppimpc.errors import InvalidArgumentError, NonTerminationError
from ppimpc.geometry import Polytope, ellipsoid_support, polytope_support
from ppimpc.invariance import (
    build_ppi,
    compute_cstar,
    compute_dstar,
    confidence_ellipsoid,
    direction_fan,
    max_pi_set,
    ppi_certificate,
    propagate_moments,
    reach_support,
)


def test_propagate_moments_closed_form():
    A = np.array([[0.5, 0.1], [0.0, 0.8]])
    mu = np.array([0.1, -0.2])
    S = np.array([[0.2, 0.05], [0.05, 0.1]])
    tr = propagate_moments(A, mu, S, [1.0, 2.0], 30)
    assert tr.horizon == 30
    assert np.all(tr.covariances[0] == 0)
    # k-step mean is A^k s0 + sum A^j mu
    Ak = np.linalg.matrix_power(A, 7)
    mean7 = Ak @ [1.0, 2.0] + sum(np.linalg.matrix_power(A, j) @ mu for j in range(7))
    assert tr.means[7] == pytest.approx(mean7)
    # covariance converges to the discrete Lyapunov solution
    Sinf = np.linalg.solve(np.eye(4) - np.kron(A, A), S.ravel()).reshape(2, 2)
    assert tr.covariances[30] == pytest.approx(Sinf, abs=1e-6)


def test_propagate_moments_matches_sampling():
    rng = np.random.default_rng(0)
    A = np.array([[0.6, 0.2], [-0.1, 0.7]])
    mu = np.array([0.05, 0.0])
    S = np.diag([0.04, 0.01])
    tr = propagate_moments(A, mu, S, [0.0, 0.0], 5)
    s = np.zeros((200000, 2))
    for _ in range(5):
        s = s @ A.T + rng.multivariate_normal(mu, S, size=s.shape[0])
    assert s.mean(0) == pytest.approx(tr.means[5], abs=3e-3)
    assert np.cov(s.T) == pytest.approx(tr.covariances[5], abs=2e-3)


def test_confidence_ellipsoid_chebyshev_bound():
    # the multivariate Chebyshev radius n/eps guarantees coverage 1 - eps
    rng = np.random.default_rng(1)
    S = np.array([[1.0, 0.4], [0.4, 0.5]])
    E = confidence_ellipsoid([0, 0], S, 2, 0.2)
    assert E.radius_sq == pytest.approx(10.0)
    w = rng.multivariate_normal([0, 0], S, size=50000)
    assert E.contains(w).mean() >= 0.8
    with pytest.raises(InvalidArgumentError):
        confidence_ellipsoid([0, 0], S, 2, 0.0)
    with pytest.raises(InvalidArgumentError):
        confidence_ellipsoid([0, 0], S, 2, 1.5)


def test_dstar_closed_form():
    P = direction_fan(8)
    mu, S = np.array([0.005, 0.005]), 1e-4 * np.eye(2)
    d = compute_dstar(P, mu, S, 2, 0.2)
    assert d == pytest.approx(P @ mu + np.sqrt(2 * np.einsum("ij,jk,ik->i", P, S, P) / 0.2))


@pytest.mark.parametrize("a", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
def test_scalar_cstar_matches_geometric_series(a):
    d = 0.37
    P = np.array([[1.0], [-1.0]])
    c = compute_cstar(P, [[a]], [d, d])
    q = d + c
    # fixed point of q = a q + d
    assert q == pytest.approx([d / (1 - a)] * 2, abs=1e-9)


def test_scalar_cstar_negative_gain():
    d = np.array([0.3, 0.1])
    c = compute_cstar(np.array([[1.0], [-1.0]]), [[-0.5]], d)
    q = d + c
    # s+ = -0.5 s + w, w in [-0.1, 0.3]: q+ = 0.5 q- + 0.3, q- = 0.5 q+ + 0.1
    qp = (0.3 + 0.5 * 0.1) / 0.75
    qm = 0.5 * qp + 0.1
    assert q == pytest.approx([qp, qm], abs=1e-9)


def test_cstar_is_support_of_image():
    A_K = np.array([[0.9, 0.2], [-0.3, 0.7]])
    P = direction_fan(12)
    d = compute_dstar(P, [0.01, 0.0], 0.01 * np.eye(2), 2, 0.3)
    c = compute_cstar(P, A_K, d)
    R = Polytope(P, d + c)
    for i, p in enumerate(P):
        assert polytope_support(R, A_K.T @ p) == pytest.approx(c[i], abs=1e-9)


def test_ppi_certificate_and_empirical_invariance():
    A_K = np.array([[0.8, 0.3], [-0.2, 0.6]])
    mu, S = np.array([0.02, -0.01]), np.array([[0.02, 0.005], [0.005, 0.01]])
    S_ppi = build_ppi(direction_fan(24), A_K, mu, S, 2, 0.2)
    assert S_ppi.certificate_slack.min() >= -1e-8
    assert S_ppi.qstar == pytest.approx(S_ppi.dstar + S_ppi.cstar)
    # stationary distribution sits inside with probability >= 1 - eps
    rng = np.random.default_rng(4)
    s = np.zeros((20000, 2))
    for _ in range(60):
        s = s @ A_K.T + rng.multivariate_normal(mu, S, size=s.shape[0])
    assert S_ppi.polytope.contains(s).mean() >= 0.8


def test_ppi_certificate_detects_shrunk_facet():
    A_K = np.array([[0.8, 0.3], [-0.2, 0.6]])
    E = confidence_ellipsoid([0, 0], 0.01 * np.eye(2), 2, 0.2)
    S = build_ppi(direction_fan(16), A_K, [0, 0], 0.01 * np.eye(2), 2, 0.2)
    q = S.qstar.copy()
    q[3] *= 0.9
    cert = ppi_certificate(Polytope(S.polytope.directions, q), A_K, E)
    assert not cert.passed
    assert cert.slack[3] < 0


def test_reach_support_matches_sum():
    A_K = np.array([[0.5, 0.1], [0.0, 0.4]])
    mu, S = np.zeros(2), 0.01 * np.eye(2)
    E = confidence_ellipsoid(mu, S, 2, 0.2)
    y = np.array([1.0, -2.0])
    s0 = np.array([0.3, 0.1])
    assert reach_support(A_K, mu, S, s0, 2, 0.2, 0, y) == pytest.approx(y @ s0)
    expect = y @ np.linalg.matrix_power(A_K, 3) @ s0 + sum(
        ellipsoid_support(E, np.linalg.matrix_power(A_K, j).T @ y) for j in range(3))
    assert reach_support(A_K, mu, S, s0, 2, 0.2, 3, y) == pytest.approx(expect)


def test_reach_supports_grow_toward_ppi():
    A_K = np.array([[0.7, 0.2], [-0.1, 0.6]])
    mu, S = np.zeros(2), 0.01 * np.eye(2)
    S_ppi = build_ppi(direction_fan(32), A_K, mu, S, 2, 0.2)
    for p, q in zip(S_ppi.polytope.directions, S_ppi.qstar):
        vals = [reach_support(A_K, mu, S, [0, 0], 2, 0.2, k, p) for k in range(0, 60, 5)]
        assert np.all(np.diff(vals) >= -1e-12)
        assert vals[-1] <= q + 1e-8


def test_direction_fan():
    P = direction_fan(66)
    assert P.shape == (66, 2)
    assert np.linalg.norm(P, axis=1) == pytest.approx(np.ones(66), abs=1e-12)
    assert P[0] == pytest.approx([0, 1])
    assert direction_fan(2, 1).tolist() == [[1.0], [-1.0]]
    P3 = direction_fan(20, 3)
    assert P3.shape == (20, 3)
    assert np.linalg.norm(P3, axis=1) == pytest.approx(np.ones(20))
    with pytest.raises(InvalidArgumentError):
        direction_fan(2)
    with pytest.raises(InvalidArgumentError):
        direction_fan(5, 3)


def test_max_pi_set_scalar():
    # z+ = 0.5 z, |z| <= 1, |K z| <= 1 with K = 4: Omega is |z| <= 0.25
    Z = Polytope([[1.0], [-1.0]], [1.0, 1.0])
    V = Polytope([[1.0], [-1.0]], [1.0, 1.0])
    omega, k = max_pi_set([[0.5]], Z, V, [[4.0]], full_output=True)
    assert polytope_support(omega, [1.0]) == pytest.approx(0.25)
    assert k == 0


def test_max_pi_set_rotation_needs_several_steps():
    th = 0.4
    A = 0.95 * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    Z = Polytope([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 1, 0.5, 0.5])
    V = Polytope([[1.0], [-1.0]], [1.0, 1.0])
    omega, k = max_pi_set(A, Z, V, [[0.0, 0.0]], full_output=True)
    assert k >= 1
    # invariance and admissibility
    for p, q in zip(omega.directions, omega.offsets):
        assert polytope_support(omega, A.T @ p) <= q + 1e-9
    for p, q in zip(Z.directions, Z.offsets):
        assert polytope_support(omega, p) <= q + 1e-9
    # sampled points outside omega leave Z at some future step
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (4000, 2)) * [1, 0.5]
    inside = omega.contains(pts, tol=1e-9)
    for x in pts[~inside][:200]:
        traj = [np.linalg.matrix_power(A, j) @ x for j in range(200)]
        assert not all(Z.contains(t, tol=1e-9) for t in traj)


def test_max_pi_set_non_termination():
    th = 0.1
    A = 0.999 * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    Z = Polytope([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 1, 0.1, 0.1])
    V = Polytope([[1.0], [-1.0]], [1.0, 1.0])
    # a slow rotation needs many stacked steps
    with pytest.raises(NonTerminationError):
        max_pi_set(A, Z, V, [[0.0, 0.0]], max_iter=1)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-0.95, max_value=0.95), st.floats(min_value=0.01, max_value=1.0))
def test_scalar_ppi_fixed_point_property(a, sigma):
    S = build_ppi(np.array([[1.0], [-1.0]]), [[a]], [0.0], [[sigma**2]], 1, 0.5)
    d = np.sqrt(sigma**2 / 0.5)
    assert S.qstar == pytest.approx([d / (1 - abs(a))] * 2, rel=1e-8)


def test_ppi_sign_conditions(dcdc):
    S = dcdc.R_x
    assert np.all(S.dstar > 0)
    assert np.all(S.cstar >= -1e-12)
    assert np.array_equal(S.qstar, S.dstar + S.cstar)


def test_confidence_ellipsoid_below_reach_support(dcdc):
    m = dcdc.model
    rng = np.random.default_rng(0)
    s0 = np.array([0.01, -0.02])
    tr = propagate_moments(dcdc.A_K, m.mu_w, m.Sigma_w, s0, 25)
    for k in range(1, 26):
        E = confidence_ellipsoid(tr.means[k], tr.covariances[k], m.n, m.eps_x)
        for y in rng.normal(size=(100, 2)):
            assert E.support(y) <= reach_support(dcdc.A_K, m.mu_w, m.Sigma_w, s0, m.n, m.eps_x, k, y) + 1e-10


def test_finer_fan_is_tighter(dcdc):
    m = dcdc.model
    coarse = dcdc.R_x.polytope
    fine = build_ppi(direction_fan(132), dcdc.A_K, m.mu_w, m.Sigma_w, m.n, m.eps_x).polytope
    # the 132-fan contains the 66-fan as its even-indexed rows
    assert np.allclose(fine.directions[::2], coarse.directions, atol=1e-12)
    for p, q in zip(coarse.directions, coarse.offsets):
        assert polytope_support(fine, p) <= q + 1e-8


def test_case_study_confidence_radius():
    from ppimpc import casestudy
    E = confidence_ellipsoid(casestudy.MU_W, casestudy.SIGMA_W, 2, casestudy.EPS)
    assert E.radius_sq == pytest.approx(10.0, abs=1e-15)


def test_fan_values():
    assert direction_fan(4) == pytest.approx(np.array([[0, 1], [1, 0], [0, -1], [-1, 0]]), abs=1e-15)
    P = direction_fan(66)
    ang = np.unwrap(np.arctan2(P[:, 0], P[:, 1]))
    assert np.diff(ang) == pytest.approx(np.full(65, 2 * np.pi / 66), abs=1e-12)
