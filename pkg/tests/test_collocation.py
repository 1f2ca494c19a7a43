import numpy as np
import pytest
from scipy.sparse import csc_matrix, diags

from escapepath.core.collocation import (CollocationState, GaussTableau, LinearField, PhaseCondition,
                                         ProjectionBC, condition_estimate, initial_state,
                                         solve_collocation)
from escapepath.core.model import Path
from escapepath.utils.errors import IllPosedProblemError


def _decay_problem(degree, intervals):
    """x' = -x on [0, 1] with x(0) = 1."""
    tableau = GaussTableau.of_degree(degree)
    times = np.linspace(0.0, 1.0, intervals + 1)
    guess = initial_state(times, tableau, Path([0.0], [[1.0]]))
    coefficients = -np.ones((intervals, degree, 1, 1))
    forcing = np.zeros((intervals, degree, 1))
    free = ProjectionBC.onto_subspace(np.zeros(1), np.eye(1))
    return LinearField(coefficients, forcing), guess, free


def test_single_stage_tableau_is_midpoint_rule():
    tableau = GaussTableau.of_degree(1)
    np.testing.assert_allclose(tableau.nodes, [0.5])
    np.testing.assert_allclose(tableau.a, [[0.5]])
    np.testing.assert_allclose(tableau.b, [1.0])


@pytest.mark.parametrize("degree", [2, 3, 4])
def test_tableau_consistency(degree):
    tableau = GaussTableau.of_degree(degree)
    np.testing.assert_allclose(tableau.a.sum(axis=1), tableau.nodes, atol=1e-14)
    assert tableau.b.sum() == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(tableau.b, tableau.b[::-1], atol=1e-14)
    # quadrature exact up to degree 2m - 1
    for k in range(2 * degree):
        assert tableau.b @ tableau.nodes ** k == pytest.approx(1.0 / (k + 1), abs=1e-13)


def test_two_stage_nodes():
    tableau = GaussTableau.of_degree(2)
    np.testing.assert_allclose(tableau.nodes, [0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6])


def test_non_positive_degree_rejected():
    with pytest.raises(IllPosedProblemError):
        GaussTableau.of_degree(0)


def test_projection_conditions():
    bc = ProjectionBC.onto_subspace(np.array([1.0, 0.0]), np.array([[0.0], [1.0]]))
    assert bc.count == 1
    assert abs(bc.residual(np.array([1.0, 3.0]))[0]) <= 1e-15
    assert abs(bc.residual(np.array([2.0, 0.0]))[0]) == pytest.approx(1.0)
    pinned = ProjectionBC.onto_subspace(np.zeros(2), np.zeros((2, 0)))
    assert pinned.count == 2
    free = ProjectionBC.onto_subspace(np.zeros(2), np.eye(2))
    assert free.count == 0


def test_linear_decay_matches_exponential():
    field, guess, free = _decay_problem(3, 20)
    result = solve_collocation(field, guess, free, free, PhaseCondition.anchor(0, 1.0, 0.0))
    np.testing.assert_allclose(result.state.mesh_states[:, 0], np.exp(-guess.times), atol=1e-10)
    assert result.iterations == 1
    assert result.residual_norm <= 1e-10
    values, derivs = result.state.evaluate(np.array([0.123, 0.77]))
    np.testing.assert_allclose(values[:, 0], np.exp(-np.array([0.123, 0.77])), atol=1e-7)
    np.testing.assert_allclose(derivs[:, 0], -np.exp(-np.array([0.123, 0.77])), atol=1e-5)


def test_evaluation_is_clamped_outside_the_mesh():
    field, guess, free = _decay_problem(2, 10)
    state = solve_collocation(field, guess, free, free, PhaseCondition.anchor(0, 1.0)).state
    values, derivs = state.evaluate(np.array([-1.0, 2.0]))
    np.testing.assert_allclose(values[0], state.mesh_states[0], atol=1e-13)
    np.testing.assert_allclose(values[1], state.mesh_states[-1], atol=1e-13)
    np.testing.assert_array_equal(derivs, np.zeros((2, 1)))


def test_convergence_order_of_midpoint_rule():
    errors = []
    for intervals in (10, 20, 40):
        field, guess, free = _decay_problem(1, intervals)
        state = solve_collocation(field, guess, free, free, PhaseCondition.anchor(0, 1.0)).state
        errors.append(abs(state.mesh_states[-1, 0] - np.exp(-1.0)))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(orders > 1.9)


def test_integral_phase_fixes_translation_family():
    field, guess, free = _decay_problem(3, 20)
    reference = solve_collocation(field, guess, free, free, PhaseCondition.anchor(0, 1.0)).state
    # every constant solves x' = 0
    N, m = reference.stage_states.shape[:2]
    zero = LinearField(np.zeros((N, m, 1, 1)), np.zeros((N, m, 1)))
    flat = CollocationState(reference.times, np.full((N + 1, 1), 0.5), np.full((N, m, 1), 0.5),
                            np.zeros((N, m, 1)), reference.tableau)
    result = solve_collocation(zero, flat, free, free, PhaseCondition.integral(reference))
    assert np.allclose(result.state.mesh_states, result.state.mesh_states[0], atol=1e-12)


def test_count_mismatch_is_ill_posed():
    field, guess, free = _decay_problem(2, 5)
    pinned = ProjectionBC.onto_subspace(np.ones(1), np.zeros((1, 0)))
    with pytest.raises(IllPosedProblemError):
        solve_collocation(field, guess, pinned, free, PhaseCondition.anchor(0, 1.0))


def test_integral_phase_needs_reference():
    field, guess, free = _decay_problem(2, 5)
    with pytest.raises(IllPosedProblemError):
        solve_collocation(field, guess, free, free, PhaseCondition(kind="integral"))


def test_condition_estimate_of_diagonal_matrix():
    matrix = csc_matrix(diags(np.arange(1.0, 11.0)))
    estimate = condition_estimate(matrix)
    assert 5.0 <= estimate <= 10.0 + 1e-9


def test_lifted_state_pads_with_zeros():
    field, guess, free = _decay_problem(2, 4)
    lifted = guess.lifted(2)
    assert lifted.dim == 3
    np.testing.assert_array_equal(lifted.mesh_states[:, 1:], 0.0)
    np.testing.assert_array_equal(lifted.mesh_states[:, :1], guess.mesh_states)
    np.testing.assert_array_equal(lifted.stage_derivs[..., 1:], 0.0)
    assert lifted.same_grid(guess.times, guess.tableau)
