"""
First-order corrections in mu
-----------------------------
Linear boundary-value problems along the unperturbed time-reversed connection
y0 for the corrections of the deterministic heteroclinic (y1) and of the
escape path (u1, v1), their displacement Delta1 = u1 - y1, the solvability
diagnostics of the forcing g1 = 2 (g_u^T - g_u) f, and closed forms for the
built-in double well.

All correction problems reuse the collocation mesh and stages of the base
connection, so they are exactly the mu-derivatives of the discrete nonlinear
problems solved by continuation.
"""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .bvp import (BaseConnections, DeterministicFlow, Equilibrium, HeteroclinicSolution,
                  continue_in_mu, equilibrium_sensitivity, refine_equilibrium)
from .collocation import (CollocationResult, CollocationState, LinearField, PhaseCondition,
                          ProjectionBC, solve_collocation)
from .euler_lagrange import ELSystem, assemble_v_form
from .model import Path, VectorFieldModel
from ..utils.config import BvpConfig
from ..utils.errors import (IllPosedProblemError, InvalidArgumentError,
                            NearNontransversalityError, SingularSystemError)
from ..utils.logger import setup_logger

# Get loggers
console_log, file_log = setup_logger()

SOLVABILITY_TOL = 1e-8
ORACLE_TAIL = 30.0


@dataclass(frozen=True)
class CorrectionBundle:
    """First-order corrections along the unperturbed connection"""
    y0: Path
    y1: Path
    v1: Path
    u1: Path
    delta1: Path
    solvability_residual: float
    g1_sup_norm: float
    unfolding: float = 0.0
    condition: float = float('nan')

    @property
    def delta1_sup_norm(self) -> float:
        return self.delta1.sup_norm()


def _g1_values(model: VectorFieldModel, states: np.ndarray) -> np.ndarray:
    G = model.g_jac(states)
    F = model.f(states)
    return 2.0 * (np.einsum('...ji,...j->...i', G, F) - np.einsum('...ij,...j->...i', G, F))


def g1_forcing(model: VectorFieldModel, y0: Path) -> Path:
    """g1(t) = 2 [g_u(y0)^T - g_u(y0)] f(y0) on the grid of y0."""
    if y0.d != model.n:
        raise InvalidArgumentError(f"path dimension {y0.d} does not match model dimension {model.n}")
    return Path(y0.times, _g1_values(model, y0.states))


def solvability_pairings(model: VectorFieldModel, y0: Path, g1: Path) -> Tuple[float, float]:
    """(max_t |<f(y0), g1>|, int <f(y0), g1> dt)."""
    if not np.array_equal(y0.times, g1.times):
        raise InvalidArgumentError("y0 and g1 live on different grids")
    pointwise = np.sum(model.f(y0.states) * g1.states, axis=1)
    return float(np.max(np.abs(pointwise))), float(trapezoid(pointwise, y0.times))


def solvability_residual(model: VectorFieldModel, y0: Path, g1: Path) -> float:
    """
    Orthogonality defect of the forcing against f(y0).

    Both the pointwise maximum and the L2 pairing are logged; the pointwise
    maximum is returned.
    """
    pointwise, pairing = solvability_pairings(model, y0, g1)
    file_log.debug("Solvability", extra={"solver_data": {
        "pointwise_max": pointwise, "l2_pairing": pairing}})
    return pointwise


def _limit_conditions(system, from_eq: Equilibrium,
                      to_eq: Equilibrium) -> Tuple[ProjectionBC, ProjectionBC]:
    """Projection conditions around the equilibrium sensitivities de/dmu at both ends."""
    left = ProjectionBC.onto_subspace(equilibrium_sensitivity(system, from_eq), from_eq.unstable_basis)
    right = ProjectionBC.onto_subspace(equilibrium_sensitivity(system, to_eq), to_eq.stable_basis)
    return left, right


def _lifted_equilibria(model: VectorFieldModel, base: HeteroclinicSolution,
                       hyperbolicity_tol: float) -> Tuple[ELSystem, Equilibrium, Equilibrium]:
    """(a, 0) and (b, 0) as equilibria of the unperturbed v-form system."""
    el = assemble_v_form(model, 0.0)
    zeros = np.zeros(model.n)
    ends = [refine_equilibrium(el, np.concatenate([eq.location, zeros]), hyperbolicity_tol)
            for eq in (base.from_eq, base.to_eq)]
    return el, ends[0], ends[1]


def _zero_state(base: CollocationState, dim: int) -> CollocationState:
    N, m = base.stage_states.shape[:2]
    return CollocationState(base.times, np.zeros((N + 1, dim)), np.zeros((N, m, dim)),
                            np.zeros((N, m, dim)), base.tableau)


def _phase_against(base: CollocationState, dim: int) -> PhaseCondition:
    """<(y0', 0), x>_{L2} = 0 on the base stages."""
    reference = _zero_state(base, dim)
    derivs = np.zeros_like(reference.stage_derivs)
    derivs[..., :base.dim] = base.stage_derivs
    return PhaseCondition.integral(CollocationState(
        reference.times, reference.mesh_states, reference.stage_states, derivs, base.tableau))


def _solve_y1(model: VectorFieldModel, base: HeteroclinicSolution,
              config: BvpConfig) -> CollocationResult:
    state = base.collocation
    X0 = state.stage_states
    left, right = _limit_conditions(DeterministicFlow(model, 0.0, reversed=True),
                                    base.from_eq, base.to_eq)
    result = solve_collocation(LinearField(-model.f_jac(X0), -model.g(X0)),
                               _zero_state(state, model.n), left, right,
                               _phase_against(state, model.n),
                               newton_tol=config.newton_tol, max_newton=config.max_newton,
                               label="y1 correction")
    if result.condition > config.cond_warn:
        raise SingularSystemError("the y1 correction problem is singular", result.condition)
    return result


def first_order_y1(model: VectorFieldModel, base: HeteroclinicSolution,
                   config: Optional[BvpConfig] = None) -> Path:
    """
    Bounded solution of  y' = -f_u(y0) y - g(y0)  orthogonal to y0'.

    Args:
        model: Vector field model
        base: Converged mu = 0 time-reversed connection y0
        config: Numerical settings

    Returns:
        y1 on the mesh of ``base``
    """
    config = config or BvpConfig()
    return _solve_y1(model, base, config).state.to_path()


def _el_coefficients(model: VectorFieldModel, states: np.ndarray) -> np.ndarray:
    n = model.n
    fJ = model.f_jac(states)
    A = np.zeros(states.shape[:-1] + (2 * n, 2 * n))
    A[..., :n, :n] = -fJ
    A[..., :n, n:] = np.eye(n)
    A[..., n:, n:] = np.swapaxes(fJ, -1, -2)
    return A


def _el_forcing(model: VectorFieldModel, states: np.ndarray) -> np.ndarray:
    return np.concatenate([-model.g(states), _g1_values(model, states)], axis=-1)


def _solve_uv(model: VectorFieldModel, base: HeteroclinicSolution,
              config: BvpConfig) -> CollocationResult:
    state = base.collocation
    y0 = base.path
    residual = solvability_residual(model, y0, g1_forcing(model, y0))
    if residual > SOLVABILITY_TOL:
        raise IllPosedProblemError(
            f"forcing is not orthogonal to f(y0): solvability residual {residual:.3e}")

    X0 = state.stage_states
    n = model.n
    left, right = _limit_conditions(*_lifted_equilibria(model, base, config.hyperbolicity_tol))
    # gradient of the conserved quantity at (y0, 0)
    direction = np.concatenate([np.zeros_like(X0), -model.f(X0)], axis=-1)
    try:
        result = solve_collocation(LinearField(_el_coefficients(model, X0), _el_forcing(model, X0)),
                                   _zero_state(state, 2 * n), left, right,
                                   _phase_against(state, 2 * n),
                                   unfolding=lambda stages: direction,
                                   newton_tol=config.newton_tol, max_newton=config.max_newton,
                                   label="(u1, v1) correction")
    except SingularSystemError as error:
        raise NearNontransversalityError(
            f"the (u1, v1) correction problem is singular: {error}") from error
    if result.condition > config.cond_warn:
        raise NearNontransversalityError(
            "the (u1, v1) correction problem is too ill-conditioned for a transverse connection",
            result.condition)
    return result


def first_order_uv(model: VectorFieldModel, base: HeteroclinicSolution,
                   config: Optional[BvpConfig] = None) -> Tuple[Path, Path]:
    """
    Bounded solution of the coupled correction problem

        u' = -f_u(y0) u + v - g(y0)
        v' =  f_u(y0)^T v + g1

    normalised by <(y0', 0), (u, v)> = 0.

    Returns:
        (u1, v1) on the mesh of ``base``
    """
    config = config or BvpConfig()
    path = _solve_uv(model, base, config).state.to_path()
    return path.component(slice(0, model.n)), path.component(slice(model.n, 2 * model.n))


def displacement(u1: Path, y1: Path) -> Path:
    """Delta1 = u1 - y1 on a common grid."""
    delta = u1 - y1
    file_log.debug(f"Displacement sup-norm {delta.sup_norm():.6e}")
    return delta


def closed_form_oracles(t) -> Dict[str, np.ndarray]:
    """
    Closed forms of the built-in double well in the time of y0.

    h:  y0(t) = h(-t) = (-1/sqrt(e^{2t} + 1), 0)
    u1: (0, -e^t + sqrt(e^{2t} + 1) - e^{-t} asinh(e^t))

    Returns arrays of shape (2,) for scalar t and (len(t), 2) otherwise.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    h1 = -np.exp(-0.5 * np.logaddexp(0.0, 2.0 * t_arr))
    u2 = np.empty_like(t_arr)
    high = t_arr > ORACLE_TAIL
    low = t_arr < -ORACLE_TAIL
    mid = ~(high | low)
    X = np.exp(t_arr[mid])
    # sqrt(X^2 + 1) - X rewritten to avoid cancellation
    u2[mid] = 1.0 / (np.sqrt(X * X + 1.0) + X) - np.arcsinh(X) / X
    th = t_arr[high]
    u2[high] = np.exp(-th) * (0.5 - th - np.log(2.0))
    Xl = np.exp(t_arr[low])
    u2[low] = -Xl + (2.0 / 3.0) * Xl * Xl
    h = np.stack([h1, np.zeros_like(h1)], axis=-1)
    u1 = np.stack([np.zeros_like(u2), u2], axis=-1)
    if np.ndim(t) == 0:
        return {"h": h[0], "u1": u1[0]}
    return {"h": h, "u1": u1}


def compute_corrections(model: VectorFieldModel, base: HeteroclinicSolution,
                        config: Optional[BvpConfig] = None) -> CorrectionBundle:
    """
    All first-order corrections along the mu = 0 time-reversed connection.

    Returns:
        CorrectionBundle with y1, u1, v1, Delta1 and the solvability diagnostics
    """
    config = config or BvpConfig()
    y0 = base.path
    g1 = g1_forcing(model, y0)
    residual = solvability_residual(model, y0, g1)
    y1 = _solve_y1(model, base, config).state.to_path()
    uv = _solve_uv(model, base, config)
    path = uv.state.to_path()
    u1 = path.component(slice(0, model.n))
    v1 = path.component(slice(model.n, 2 * model.n))
    bundle = CorrectionBundle(
        y0=y0,
        y1=y1,
        v1=v1,
        u1=u1,
        delta1=displacement(u1, y1),
        solvability_residual=residual,
        g1_sup_norm=g1.sup_norm(),
        unfolding=uv.state.unfolding,
        condition=uv.condition,
    )
    file_log.info(f"Corrections for '{model.name}': |Delta1| = {bundle.delta1_sup_norm:.6e}, "
                  f"|g1| = {bundle.g1_sup_norm:.6e}, solvability {residual:.3e}")
    return bundle


def finite_difference_check(bases: BaseConnections, bundle: CorrectionBundle,
                            mu: float = 1e-4, config: Optional[BvpConfig] = None) -> Dict[str, float]:
    """
    Compare difference quotients of continued connections with the corrections.

    Returns:
        {"uv": max |(x(mu) - x(0))/mu - (u1, v1)|, "y1": max |(y(mu) - y0)/mu - y1|}
    """
    config = config or BvpConfig()
    if mu == 0.0:
        raise InvalidArgumentError("finite-difference step mu must be non-zero")
    el_mu = continue_in_mu(bases.euler_lagrange, [mu], config)[-1]
    det_mu = continue_in_mu(bases.reversed, [mu], config)[-1]
    uv = np.hstack([bundle.u1.states, bundle.v1.states])
    quotient_uv = (el_mu.path - bases.euler_lagrange.path).states / mu
    quotient_y = (det_mu.path - bases.reversed.path).states / mu
    errors = {"uv": float(np.max(np.abs(quotient_uv - uv))),
              "y1": float(np.max(np.abs(quotient_y - bundle.y1.states)))}
    file_log.info(f"Finite-difference check at mu={mu:g}: {errors}")
    return errors
