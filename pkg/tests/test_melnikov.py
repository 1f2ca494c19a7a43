import numpy as np
import pytest

from escapepath.core.bvp import (DeterministicFlow, equilibrium_sensitivity, refine_equilibrium,
                                 solve_base_connections)
from escapepath.core.melnikov import (closed_form_oracles, compute_corrections, displacement,
                                      finite_difference_check, first_order_uv, first_order_y1,
                                      g1_forcing, solvability_pairings, solvability_residual)
from escapepath.core.model import Path
from escapepath.utils.errors import InvalidArgumentError

U12_AT_ZERO = np.sqrt(2.0) - 1.0 - np.arcsinh(1.0)


@pytest.fixture(scope="module")
def symmetric_corrections(symmetric_well):
    base = solve_base_connections(symmetric_well).reversed
    return compute_corrections(symmetric_well, base)


class TestForcing:
    def test_rotational_forcing_is_positive(self, double_well, bases):
        g1 = g1_forcing(double_well, bases.reversed.path)
        assert np.max(np.abs(g1.states[:, 0])) <= 1e-12
        interior = np.abs(bases.reversed.path.times) < 10.0
        assert np.all(g1.states[interior, 1] > 0.0)
        f1 = double_well.f(bases.reversed.path.states)[:, 0]
        np.testing.assert_allclose(g1.states[:, 1], -2.0 * f1, rtol=0, atol=1e-15)

    def test_symmetric_and_zero_perturbations_give_no_forcing(self, symmetric_well,
                                                              gradient_well, bases):
        for model in (symmetric_well, gradient_well):
            assert g1_forcing(model, bases.reversed.path).sup_norm() == 0.0

    def test_forcing_is_orthogonal_to_the_flow(self, double_well, bases):
        y0 = bases.reversed.path
        assert solvability_residual(double_well, y0, g1_forcing(double_well, y0)) <= 1e-12
        pointwise, pairing = solvability_pairings(double_well, y0, g1_forcing(double_well, y0))
        assert pointwise <= 1e-12 and abs(pairing) <= 1e-12

    def test_non_orthogonal_forcing_is_detected(self, double_well, bases):
        y0 = bases.reversed.path
        aligned = Path(y0.times, double_well.f(y0.states))
        assert solvability_residual(double_well, y0, aligned) == pytest.approx(4.0 / 27.0, rel=1e-2)

    def test_dimension_mismatch(self, double_well):
        with pytest.raises(InvalidArgumentError):
            g1_forcing(double_well, Path([0.0, 1.0], [[0.0], [1.0]]))


class TestCorrections:
    def test_heteroclinic_is_not_displaced(self, corrections):
        assert corrections.y1.sup_norm() <= 1e-12

    def test_escape_path_correction_matches_closed_form(self, corrections):
        expected = closed_form_oracles(corrections.u1.times)["u1"]
        assert np.max(np.abs(corrections.u1.states - expected)) <= 1e-5

    def test_correction_at_the_anchor(self, corrections):
        k = int(np.argmin(np.abs(corrections.u1.times)))
        assert abs(corrections.u1.times[k]) <= 1e-12
        assert corrections.u1.states[k, 1] == pytest.approx(U12_AT_ZERO, abs=1e-6)

    def test_displacement(self, corrections):
        expected = closed_form_oracles(corrections.u1.times)["u1"]
        assert corrections.delta1_sup_norm == pytest.approx(np.max(np.abs(expected)), abs=1e-5)
        assert corrections.delta1_sup_norm == pytest.approx(0.4938, abs=1e-3)
        np.testing.assert_array_equal(displacement(corrections.u1, corrections.y1).states,
                                      corrections.delta1.states)

    def test_diagnostics(self, corrections):
        assert corrections.solvability_residual <= 1e-12
        assert corrections.g1_sup_norm == pytest.approx(2.0 * 2.0 / (3.0 * np.sqrt(3.0)), rel=5e-3)
        assert abs(corrections.unfolding) <= 1e-8
        assert np.isfinite(corrections.condition)

    def test_standalone_solvers_agree_with_bundle(self, double_well, bases, corrections):
        u1, v1 = first_order_uv(double_well, bases.reversed)
        np.testing.assert_allclose(u1.states, corrections.u1.states, atol=1e-12)
        np.testing.assert_allclose(v1.states, corrections.v1.states, atol=1e-12)
        y1 = first_order_y1(double_well, bases.reversed)
        np.testing.assert_allclose(y1.states, corrections.y1.states, atol=1e-12)

    def test_symmetric_perturbation_has_no_displacement(self, symmetric_corrections):
        assert symmetric_corrections.g1_sup_norm == 0.0
        assert symmetric_corrections.v1.sup_norm() <= 1e-10
        assert symmetric_corrections.delta1_sup_norm <= 1e-10
        assert symmetric_corrections.y1.sup_norm() > 0.1

    def test_correction_tends_to_the_equilibrium_sensitivities(self, symmetric_well,
                                                               symmetric_corrections):
        flow = DeterministicFlow(symmetric_well, 0.0, reversed=True)
        y1 = symmetric_corrections.y1
        for guess, state in (([-1.0, 0.0], y1.start), ([0.0, 0.0], y1.end)):
            limit = equilibrium_sensitivity(flow, refine_equilibrium(flow, guess))
            np.testing.assert_allclose(state, limit, atol=1e-6)
        np.testing.assert_allclose(y1.start, [0.0, -1.0], atol=1e-6)

    def test_unperturbed_model_has_no_corrections(self, gradient_well, bases):
        # gradient_well shares f with the built-in model, hence the same base connection
        bundle = compute_corrections(gradient_well, bases.reversed)
        assert bundle.delta1_sup_norm == 0.0
        assert bundle.u1.sup_norm() == 0.0 and bundle.y1.sup_norm() == 0.0

    def test_finite_difference_quotients(self, bases, corrections):
        errors = finite_difference_check(bases, corrections, mu=1e-4)
        assert errors["uv"] <= 1e-3
        assert errors["y1"] <= 1e-3

    def test_finite_difference_step_must_be_non_zero(self, bases, corrections):
        with pytest.raises(InvalidArgumentError):
            finite_difference_check(bases, corrections, mu=0.0)


class TestOracles:
    def test_value_at_zero(self):
        values = closed_form_oracles(0.0)
        assert values["u1"].shape == (2,)
        assert values["u1"][1] == pytest.approx(U12_AT_ZERO, abs=1e-15)
        assert values["h"][0] == pytest.approx(-1.0 / np.sqrt(2.0), abs=1e-15)

    def test_tails_are_continuous(self):
        for t in (30.0, -30.0):
            below, above = closed_form_oracles(np.array([t - 1e-12, t + 1e-12]))["u1"][:, 1]
            assert above == pytest.approx(below, rel=1e-6, abs=1e-15)

    def test_correction_decays_at_both_ends(self):
        values = closed_form_oracles(np.array([-60.0, 60.0]))["u1"][:, 1]
        assert np.all(np.abs(values) < 1e-20)
        assert np.all(values < 0.0)
