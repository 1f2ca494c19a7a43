import numpy as np
import pytest

from escapepath.core.euler_lagrange import (assemble_v_form, assemble_w_form, conserved_c,
                                            hamiltonian_w, integrate_trajectory, to_v_coords,
                                            to_w_coords)

ESCAPE_RADIUS = 5.0


def _fd_jacobian(system, x, step=1e-6):
    cols = []
    for k in range(x.shape[0]):
        e = np.zeros_like(x)
        e[k] = step
        cols.append((system.rhs(x + e) - system.rhs(x - e)) / (2.0 * step))
    return np.column_stack(cols)


def test_w_form_values(double_well):
    system = assemble_w_form(double_well, 0.7)
    np.testing.assert_allclose(system.rhs(np.array([-1.0, 0.0, 0.0, 0.0])), np.zeros(4), atol=1e-15)
    system = assemble_w_form(double_well, 0.0)
    np.testing.assert_allclose(system.rhs(np.array([0.0, 0.0, 1.0, 0.0])), [1.0, 0.0, -1.0, 0.0])


def test_v_form_values(double_well):
    system = assemble_v_form(double_well, 0.0)
    np.testing.assert_allclose(system.rhs(np.array([0.5, 0.0, 0.0, 0.0])), [-0.375, 0.0, 0.0, 0.0])
    u = np.array([0.3, -1.2])
    np.testing.assert_allclose(system.rhs(np.concatenate([u, [0.0, 0.0]])),
                               np.concatenate([-double_well.f(u), [0.0, 0.0]]))


def test_v_form_perturbed_forcing(double_well):
    mu = 0.01
    u = np.array([-0.5, 0.2])
    rhs = assemble_v_form(double_well, mu).rhs(np.concatenate([u, [0.0, 0.0]]))
    G = double_well.g_jac(u)
    expected = 2.0 * mu * (G.T - G) @ (double_well.f(u) + mu * double_well.g(u))
    np.testing.assert_allclose(rhs[2:], expected, rtol=1e-14, atol=1e-16)


@pytest.mark.parametrize("form", [assemble_w_form, assemble_v_form])
@pytest.mark.parametrize("mu", [0.0, 0.05, 0.5])
def test_rhs_jacobian_matches_finite_differences(double_well, rng, form, mu):
    system = form(double_well, mu)
    for x in rng.uniform(-1.5, 1.5, size=(10, 4)):
        exact = system.rhs_jac(x)
        fd = _fd_jacobian(system, x)
        assert np.max(np.abs(exact - fd)) <= 1e-6 * max(1.0, np.max(np.abs(fd)))


def test_hamiltonian_values(double_well):
    assert hamiltonian_w(double_well, 0.0, np.array([0.4, 0.1]), np.zeros(2)) == 0.0
    assert hamiltonian_w(double_well, 0.0, np.zeros(2), np.ones(2)) == pytest.approx(1.0)
    u = np.array([-0.6, 0.3])
    assert hamiltonian_w(double_well, 0.0, u, -2.0 * double_well.f(u)) == pytest.approx(0.0, abs=1e-15)


def test_conserved_quantity_matches_hamiltonian(double_well, rng):
    for mu in (0.0, 0.3):
        for state in rng.uniform(-1.5, 1.5, size=(5, 4)):
            u, w = state[:2], state[2:]
            u_v, v = to_v_coords(double_well, mu, u, w)
            assert conserved_c(double_well, mu, u_v, v) == pytest.approx(
                hamiltonian_w(double_well, mu, u, w), abs=1e-13)
            u_back, w_back = to_w_coords(double_well, mu, u_v, v)
            np.testing.assert_allclose(u_back, u, rtol=0, atol=1e-15)
            np.testing.assert_allclose(w_back, w, rtol=0, atol=1e-14)
    assert conserved_c(double_well, 0.0, np.zeros(2), np.zeros(2)) == 0.0


@pytest.mark.parametrize("form", [assemble_w_form, assemble_v_form])
@pytest.mark.parametrize("mu", [0.0, 0.05, 0.5])
def test_conservation_along_trajectories(double_well, form, mu):
    system = form(double_well, mu)
    starts = np.random.default_rng(2024).uniform(-1.5, 1.5, size=(20, 4))
    for x0 in starts:
        trajectory = integrate_trajectory(system, x0, (0.0, 10.0), escape_radius=ESCAPE_RADIUS)
        values = np.array([system.conserved(x) for x in trajectory.states])
        scale = max(1.0, float(np.max(np.abs(trajectory.states))) ** 4)
        assert np.max(np.abs(values - values[0])) <= 1e-7 * scale


def test_zero_costate_is_invariant(double_well):
    system = assemble_w_form(double_well, 0.05)
    trajectory = integrate_trajectory(system, [-0.4, 0.6, 0.0, 0.0], (0.0, 10.0),
                                      t_eval=np.linspace(0.0, 10.0, 101))
    assert np.max(np.abs(trajectory.states[:, 2:])) <= 1e-9


def test_coordinate_change_maps_trajectories(double_well):
    mu = 0.05
    u0, w0 = np.array([-0.8, 0.2]), np.array([0.1, -0.05])
    times = np.linspace(0.0, 2.0, 21)
    w_path = integrate_trajectory(assemble_w_form(double_well, mu), np.concatenate([u0, w0]),
                                  (0.0, 2.0), t_eval=times)
    u_v, v0 = to_v_coords(double_well, mu, u0, w0)
    v_path = integrate_trajectory(assemble_v_form(double_well, mu), np.concatenate([u_v, v0]),
                                  (0.0, 2.0), t_eval=times)
    mapped = np.array([np.concatenate(to_v_coords(double_well, mu, x[:2], x[2:]))
                       for x in w_path.states])
    assert np.max(np.abs(mapped - v_path.states)) <= 1e-7


@pytest.mark.parametrize("form", [assemble_w_form, assemble_v_form])
def test_conserved_gradient_matches_finite_differences(double_well, rng, form):
    system = form(double_well, 0.0)
    step = 1e-6
    for x in rng.uniform(-1.5, 1.5, size=(5, 4)):
        fd = np.array([(system.conserved(x + e) - system.conserved(x - e)) / (2.0 * step)
                       for e in np.eye(4) * step])
        np.testing.assert_allclose(system.conserved_grad(x), fd, atol=1e-6)


def test_equilibria_lift_to_both_forms(double_well):
    for form in (assemble_w_form, assemble_v_form):
        system = form(double_well, 0.2)
        for e in ([-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]):
            assert np.max(np.abs(system.rhs(np.array(e + [0.0, 0.0])))) <= 1e-14
