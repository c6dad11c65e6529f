from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gelwrinkle import constitutive as cm
from gelwrinkle.constitutive import MaterialParams
from helpers import random_state

# Reference values computed independently with mpmath at 40 digits
# (closed-form s0, mu0 evaluated in extended precision).
S0_GAMMA_EQ_EPS = 0.016589707576348945824
S0_MU0 = {
    0.1: (0.010065897075763489458, -84.353513718740294031),
    0.8: (0.010527176606107915666, -83.299265342965576006),
    1.0: (0.010658970757634894582, -83.006681016038004934),
}


def rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


class TestParams:
    def test_material_defaults(self):
        p = MaterialParams(gamma=0.8)
        assert (p.alpha, p.epsilon, p.M) == (24.2, 10.0, 1e-4)
        assert p.as_dict()["gamma"] == 0.8

    @pytest.mark.parametrize(
        "kw",
        [dict(gamma=0.0), dict(gamma=1, alpha=-1), dict(gamma=1, epsilon=-1.0),
         dict(gamma=1, M=0), dict(gamma=1, J0=0.99), dict(gamma=1, chi=1.0),
         dict(gamma=float("nan"))],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            MaterialParams(**kw)


class TestFreeEnergy:
    def test_pure_mixing_example(self):
        p = SimpleNamespace(gamma=0.0, alpha=24.2, epsilon=0.0, J0=1.0, chi=0.0)
        assert cm.free_energy(np.eye(2), 1.0, p) == pytest.approx(24.2 * np.log(0.5))

    def test_neo_hookean_example(self):
        # J0 = 1, isolated network term with a stretch diag(2, 1/2): F:F = 4 + 1/4 + 1
        p = SimpleNamespace(gamma=1.0, alpha=1e-300, epsilon=0.0, J0=1.0, chi=0.0)
        F = np.diag([2.0, 0.5])
        assert cm.free_energy(F, 1.0, p) == pytest.approx(0.5 * (5.25 - 3.0), rel=1e-12)

    def test_domain_errors(self):
        p = MaterialParams(gamma=0.1)
        with pytest.raises(cm.DomainError):
            cm.free_energy(np.diag([1.0, -1.0]), 0.1, p)
        with pytest.raises(cm.DomainError):
            cm.free_energy(np.eye(2), 0.0, p)
        with pytest.raises(cm.DomainError):
            cm.stress(np.eye(2), -1e-3, p)

    @settings(max_examples=30)
    @given(st.floats(0, 2 * np.pi), st.integers(0, 2**31 - 1))
    def test_rotation_invariance(self, theta, seed):
        rng = np.random.default_rng(seed)
        p = MaterialParams(gamma=0.8)
        F = np.eye(2) + 0.2 * rng.standard_normal((2, 2))
        if np.linalg.det(F) <= 0.1:
            F = np.eye(2)
        s = rng.uniform(0.05, 2.0)
        Q = rotation(theta)
        assert cm.free_energy(Q @ F, s, p) == pytest.approx(cm.free_energy(F, s, p), rel=1e-12)
        np.testing.assert_allclose(cm.stress(Q @ F, s, p), Q @ cm.stress(F, s, p), atol=1e-12)


class TestInitialState:
    def test_gamma_equals_epsilon(self):
        p = MaterialParams(gamma=10.0, epsilon=10.0, J0=1.01)
        s0, _ = cm.initial_state(p)
        assert s0 == pytest.approx(S0_GAMMA_EQ_EPS, rel=1e-13)

    @pytest.mark.parametrize("gamma", sorted(S0_MU0))
    def test_oracle_values(self, gamma):
        s0, mu0 = cm.initial_state(MaterialParams(gamma=gamma))
        assert s0 == pytest.approx(S0_MU0[gamma][0], rel=1e-12)
        assert mu0 == pytest.approx(S0_MU0[gamma][1], rel=1e-12)

    def test_reference_is_stress_free_and_consistent(self):
        p = MaterialParams(gamma=0.8, J0=1.05)
        s0, mu0 = cm.initial_state(p)
        np.testing.assert_allclose(cm.stress(np.eye(2), s0, p), 0.0, atol=1e-13)
        assert cm.chemical_potential(np.eye(2), s0, p) == pytest.approx(mu0, rel=1e-13)

    @pytest.mark.parametrize("J0", [1.001, 1.01, 1.05, 1.2, 1.5])
    @pytest.mark.parametrize("gamma", [0.01, 0.1, 1.0, 5.0])
    def test_mu0_negative(self, J0, gamma):
        _, mu0 = cm.initial_state(MaterialParams(gamma=gamma, J0=J0))
        assert mu0 < 0

    def test_dry_reference_rejected(self):
        with pytest.raises(cm.DomainError, match="J0"):
            cm.initial_state(MaterialParams(gamma=0.1, J0=1.0))


class TestDissipation:
    def test_example(self):
        p = MaterialParams(gamma=0.1, J0=1.0, M=0.5)
        # C_n = I, s_n = 1: phi = |H|^2 / (2 M)
        assert cm.dissipation(np.array([3.0, 4.0]), np.eye(2), 1.0, p) == pytest.approx(25.0)

    @given(st.floats(-10, 10), st.integers(0, 1000))
    def test_quadratic_homogeneity(self, lam, seed):
        rng = np.random.default_rng(seed)
        p = MaterialParams(gamma=0.1)
        H = rng.standard_normal(2)
        G = np.eye(2) + 0.3 * rng.standard_normal((2, 2))
        C = G.T @ G
        base = cm.dissipation(H, C, 0.3, p)
        assert cm.dissipation(lam * H, C, 0.3, p) == pytest.approx(lam**2 * base, rel=1e-12, abs=1e-300)
        assert base >= 0

    def test_history_floor(self):
        with pytest.raises(cm.DomainError, match="J0"):
            cm.dissipation(np.ones(2), np.eye(2), 0.0, MaterialParams(gamma=0.1))


def _fd_gradient(f, c, h=1e-6):
    g = np.empty_like(c)
    for i in range(c.size):
        e = np.zeros_like(c)
        e[i] = h
        g[i] = (f(c + e) - f(c - e)) / (2 * h)
    return g


@pytest.mark.parametrize("gamma", [0.1, 0.8])
@pytest.mark.parametrize("seed", range(4))
def test_driving_forces_match_fd(gamma, seed):
    rng = np.random.default_rng(seed)
    p = MaterialParams(gamma=gamma)
    c, s_n, F_n, C_n = random_state(rng, 1)
    c, s_n, F_n, C_n = c[0], s_n[0], F_n[0], C_n[0]
    tau = 0.05
    D = cm.driving_forces(c, s_n, C_n, tau, p)
    fd = _fd_gradient(lambda x: cm.incremental_density(x, s_n, F_n, C_n, tau, p), c)
    np.testing.assert_allclose(D, fd, rtol=1e-6, atol=1e-7 * np.abs(D).max())


@pytest.mark.parametrize("gamma", [0.1, 0.8])
@pytest.mark.parametrize("seed", range(4))
def test_tangent_matches_fd_and_is_symmetric(gamma, seed):
    rng = np.random.default_rng(100 + seed)
    p = MaterialParams(gamma=gamma)
    c, s_n, F_n, C_n = random_state(rng, 1)
    c, s_n, C_n = c[0], s_n[0], C_n[0]
    tau = 0.05
    C = cm.tangent_moduli(c, s_n, C_n, tau, p)
    np.testing.assert_array_equal(C, C.T)
    h = 1e-6
    fd = np.empty((7, 7))
    for j in range(7):
        e = np.zeros(7)
        e[j] = h
        fd[:, j] = (cm.driving_forces(c + e, s_n, C_n, tau, p) - cm.driving_forces(c - e, s_n, C_n, tau, p)) / (2 * h)
    np.testing.assert_allclose(C, fd, rtol=1e-5, atol=1e-7 * np.abs(C).max())
    # the F-H and DivH-H couplings vanish identically
    np.testing.assert_array_equal(C[0:5, 5:7], 0.0)


def test_vectorised_matches_pointwise(make_state):
    p = MaterialParams(gamma=0.8)
    c, s_n, F_n, C_n = make_state(6)
    D = cm.driving_forces(c, s_n, C_n, 0.1, p)
    C = cm.tangent_moduli(c, s_n, C_n, 0.1, p)
    for i in range(6):
        np.testing.assert_array_equal(D[i], cm.driving_forces(c[i], s_n[i], C_n[i], 0.1, p))
        np.testing.assert_allclose(C[i], cm.tangent_moduli(c[i], s_n[i], C_n[i], 0.1, p), rtol=1e-15)


def test_driving_forces_rejects_overdrained_state():
    p = MaterialParams(gamma=0.1)
    c = cm.state_array(np.eye(2), 10.0, np.zeros(2))
    with pytest.raises(cm.DomainError):
        cm.driving_forces(c, 0.5, np.eye(2), 0.1, p)


def test_state_array_layout():
    c = cm.state_array(np.array([[1.0, 2.0], [3.0, 4.0]]), 5.0, np.array([6.0, 7.0]))
    np.testing.assert_array_equal(c, np.arange(1.0, 8.0))
