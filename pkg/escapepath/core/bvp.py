"""
Connecting orbits
-----------------
Equilibria with their spectral splitting, heteroclinic boundary-value problems
on a truncated interval [-T, T] solved by Gauss collocation with projection
boundary conditions, natural-parameter continuation in mu, and the most
probable escape path pipeline built on top of them.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import schur
from scipy.optimize import minimize_scalar

from .collocation import (AutonomousField, CollocationState, GaussTableau, PhaseCondition,
                          ProjectionBC, initial_state, solve_collocation)
from .euler_lagrange import ELSystem, assemble_v_form
from .model import Path, VectorFieldModel, check_symmetry, default_sample_points
from ..utils.config import BvpConfig
from ..utils.errors import (ContinuationStuckError, IllPosedProblemError, InvalidArgumentError,
                            NoConnectionError, NoEquilibriumError, NonHyperbolicError,
                            SingularSystemError, UnsupportedModelError)
from ..utils.logger import setup_logger

# Get loggers
console_log, file_log = setup_logger()

EQUILIBRIUM_TOL = 1e-12
EQUILIBRIUM_MAX_ITER = 50
MIN_CONTINUATION_STEP = 1e-8
SHOOTING_CAPTURE_TOL = 1e-3


@dataclass(frozen=True)
class DeterministicFlow:
    """x' = F(x) or, reversed, x' = -F(x) with F = f + mu*g"""
    model: VectorFieldModel
    mu: float = 0.0
    reversed: bool = True

    @property
    def dim(self) -> int:
        return self.model.n

    @property
    def kind(self) -> str:
        return "reversed" if self.reversed else "forward"

    @property
    def sign(self) -> float:
        return -1.0 if self.reversed else 1.0

    def at_mu(self, mu: float) -> 'DeterministicFlow':
        return DeterministicFlow(self.model, float(mu), self.reversed)

    def rhs(self, x: np.ndarray) -> np.ndarray:
        return self.sign * self.model.field(np.asarray(x, dtype=float), self.mu)

    def rhs_jac(self, x: np.ndarray) -> np.ndarray:
        return self.sign * self.model.field_jacobian(np.asarray(x, dtype=float), self.mu)

    def rhs_mu(self, x: np.ndarray) -> np.ndarray:
        return self.sign * self.model.g(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Equilibrium:
    """Refined fixed point with orthonormal bases of its stable and unstable subspaces"""
    location: np.ndarray
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    stable_basis: np.ndarray
    unstable_basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.location.shape[0]

    @property
    def stable_dim(self) -> int:
        return self.stable_basis.shape[1]

    @property
    def unstable_dim(self) -> int:
        return self.unstable_basis.shape[1]

    def invariance_defect(self) -> float:
        """max ||(I - P) J P|| over both spectral projectors."""
        worst = 0.0
        eye = np.eye(self.dim)
        for basis in (self.stable_basis, self.unstable_basis):
            if basis.shape[1] == 0:
                continue
            P = basis @ basis.T
            worst = max(worst, float(np.linalg.norm((eye - P) @ self.jacobian @ P, 2)))
        return worst

    def describe(self) -> str:
        eig = ", ".join(f"{ev.real:.6g}{ev.imag:+.6g}j" if abs(ev.imag) > 0 else f"{ev.real:.6g}"
                        for ev in self.eigenvalues)
        loc = ", ".join(f"{x:.12g}" for x in self.location)
        return (f"({loc})  eigenvalues [{eig}]  stable_dim {self.stable_dim}  "
                f"unstable_dim {self.unstable_dim}")


def spectral_bases(jacobian: np.ndarray,
                   hyperbolicity_tol: float = 1e-8) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Eigenvalues and orthonormal stable / unstable bases from ordered real Schur forms.

    Raises:
        NonHyperbolicError: if an eigenvalue has |Re| < hyperbolicity_tol
    """
    jacobian = np.asarray(jacobian, dtype=float)
    eigenvalues = np.linalg.eigvals(jacobian)
    eigenvalues = eigenvalues[np.lexsort((eigenvalues.imag, eigenvalues.real))]
    if np.any(np.abs(eigenvalues.real) < hyperbolicity_tol):
        raise NonHyperbolicError(
            f"equilibrium is not hyperbolic: eigenvalues {np.round(eigenvalues, 12)}", eigenvalues)
    _, Zs, sdim = schur(jacobian, output='real', sort='lhp')
    _, Zu, udim = schur(jacobian, output='real', sort='rhp')
    return eigenvalues, Zs[:, :sdim], Zu[:, :udim]


def refine_equilibrium(system, guess: Sequence[float],
                       hyperbolicity_tol: float = 1e-8) -> Equilibrium:
    """
    Newton refinement of an equilibrium of ``system`` with spectral splitting.

    Args:
        system: Any system exposing rhs / rhs_jac (DeterministicFlow, ELSystem)
        guess: Starting point
        hyperbolicity_tol: Minimum |Re| of the eigenvalues

    Returns:
        Equilibrium with ||rhs(location)||_inf <= 1e-12
    """
    x = np.asarray(guess, dtype=float).copy()
    if x.shape != (system.dim,) or not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"invalid equilibrium guess {guess} for dimension {system.dim}")
    residual = np.inf
    for iteration in range(EQUILIBRIUM_MAX_ITER + 1):
        r = system.rhs(x)
        residual = float(np.max(np.abs(r)))
        if not np.isfinite(residual):
            break
        if residual <= EQUILIBRIUM_TOL:
            break
        if iteration == EQUILIBRIUM_MAX_ITER:
            break
        try:
            x = x - np.linalg.solve(system.rhs_jac(x), r)
        except np.linalg.LinAlgError as error:
            raise NoEquilibriumError(f"singular Jacobian while refining {guess}: {error}") from error
    if not (np.isfinite(residual) and residual <= EQUILIBRIUM_TOL):
        file_log.error(f"Equilibrium refinement from {list(guess)} failed, residual {residual:.3e}")
        raise NoEquilibriumError(
            f"Newton did not converge from {list(guess)} (residual {residual:.3e})")
    jacobian = system.rhs_jac(x)
    eigenvalues, stable, unstable = spectral_bases(jacobian, hyperbolicity_tol)
    eq = Equilibrium(x, jacobian, eigenvalues, stable, unstable)
    file_log.debug(f"Refined {getattr(system, 'kind', 'system')} equilibrium: {eq.describe()}")
    return eq


def equilibrium_sensitivity(system, equilibrium: Equilibrium) -> np.ndarray:
    """de/dmu = -J^{-1} d(rhs)/dmu at a hyperbolic equilibrium."""
    return -np.linalg.solve(equilibrium.jacobian, system.rhs_mu(equilibrium.location))


@dataclass(frozen=True)
class HeteroclinicSolution:
    """Converged connecting orbit on [-T, T]"""
    path: Path
    T: float
    from_eq: Equilibrium
    to_eq: Equilibrium
    mu: float
    residual_norm: float
    newton_iters: int
    mesh: np.ndarray
    phase_anchor: str
    system: object
    collocation: CollocationState
    condition: float
    unfolding: float = 0.0
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def mesh_size(self) -> int:
        return self.mesh.shape[0] - 1

    @property
    def endpoint_defects(self) -> Tuple[float, float]:
        return (float(np.linalg.norm(self.path.start - self.from_eq.location)),
                float(np.linalg.norm(self.path.end - self.to_eq.location)))

    def conserved_defect(self) -> float:
        """max |H| (or |C|) over the mesh; 0 for systems without a conserved quantity."""
        conserved = getattr(self.system, "conserved", None)
        if conserved is None:
            return 0.0
        return float(max(abs(conserved(x)) for x in self.path.states))


def _boundary_conditions(from_eq: Equilibrium, to_eq: Equilibrium) -> Tuple[ProjectionBC, ProjectionBC]:
    left = ProjectionBC.onto_subspace(from_eq.location, from_eq.unstable_basis)
    right = ProjectionBC.onto_subspace(to_eq.location, to_eq.stable_basis)
    return left, right


def solve_heteroclinic(system, from_eq: Equilibrium, to_eq: Equilibrium, T: float,
                       mesh_size: int, initial_guess: Path, phase: PhaseCondition,
                       config: Optional[BvpConfig] = None,
                       warm_start: Optional[CollocationState] = None) -> HeteroclinicSolution:
    """
    Solve for a connection from ``from_eq`` to ``to_eq`` on [-T, T].

    The left end is constrained to the unstable subspace of ``from_eq`` and the
    right end to the stable subspace of ``to_eq``. When those conditions plus
    the phase condition are one short of the unknowns and the system has a
    conserved quantity, an unfolding parameter along its gradient is added.
    Endpoints further than ``endpoint_tol`` from the equilibria double T (and
    the mesh) up to ``max_T``.

    Args:
        system: DeterministicFlow or ELSystem at the target mu
        from_eq, to_eq: Refined equilibria of ``system``
        T: Truncation half-length
        mesh_size: Number of collocation intervals
        initial_guess: Path used to seed Newton
        phase: Phase condition
        config: Numerical settings
        warm_start: Collocation state used instead of the guess path on an equal mesh

    Returns:
        HeteroclinicSolution
    """
    config = config or BvpConfig()
    if T <= 0 or mesh_size < 2:
        raise InvalidArgumentError(f"need T > 0 and at least 2 intervals, got T={T}, mesh={mesh_size}")
    if from_eq.unstable_dim < 1:
        raise IllPosedProblemError("the departure equilibrium has no unstable direction")

    d = system.dim
    n_bc = (d - from_eq.unstable_dim) + to_eq.unstable_dim
    unfolding = None
    if n_bc + 1 == d:
        pass
    elif n_bc == d and getattr(system, "conserved_grad", None) is not None:
        unfolding = system.conserved_grad
    else:
        raise IllPosedProblemError(
            f"{n_bc} boundary conditions and one phase condition cannot determine a "
            f"connection in dimension {d}")

    tableau = GaussTableau.of_degree(config.degree)
    left, right = _boundary_conditions(from_eq, to_eq)
    warnings: List[str] = []

    while True:
        times = np.linspace(-T, T, mesh_size + 1)
        if warm_start is not None and warm_start.same_grid(times, tableau):
            guess = warm_start
        else:
            guess = initial_state(times, tableau, initial_guess)
        result = solve_collocation(
            AutonomousField(system), guess, left, right, phase, unfolding=unfolding,
            newton_tol=config.newton_tol, max_newton=config.max_newton,
            label=f"{getattr(system, 'kind', 'system')} connection mu={system.mu:g}")
        state = result.state
        defect = max(float(np.linalg.norm(state.mesh_states[0] - from_eq.location)),
                     float(np.linalg.norm(state.mesh_states[-1] - to_eq.location)))
        if defect <= config.endpoint_tol:
            break
        if 2.0 * T > config.max_T:
            message = (f"endpoint defect {defect:.3e} exceeds {config.endpoint_tol:g} "
                       f"at the maximal T={T:g}")
            console_log.warning(f"⚠ {message}")
            warnings.append(message)
            break
        file_log.info(f"Endpoint defect {defect:.3e} at T={T:g}; doubling T")
        initial_guess = state.to_path()
        T, mesh_size = 2.0 * T, 2 * mesh_size

    if result.condition > config.cond_warn:
        message = (f"collocation Jacobian condition estimate {result.condition:.3e} "
                   f"suggests near tangency of the invariant manifolds")
        console_log.warning(f"⚠ {message}")
        warnings.append(message)

    solution = HeteroclinicSolution(
        path=state.to_path(),
        T=float(T),
        from_eq=from_eq,
        to_eq=to_eq,
        mu=float(system.mu),
        residual_norm=result.residual_norm,
        newton_iters=result.iterations,
        mesh=state.times,
        phase_anchor=phase.describe(),
        system=system,
        collocation=state,
        condition=result.condition,
        unfolding=state.unfolding,
        warnings=tuple(warnings),
    )
    if unfolding is not None:
        file_log.debug("Connection diagnostics", extra={"solver_data": {
            "mu": solution.mu, "unfolding": solution.unfolding,
            "conserved_defect": solution.conserved_defect()}})
    return solution


def _continuation_step(previous: HeteroclinicSolution, mu: float,
                       config: BvpConfig) -> HeteroclinicSolution:
    system = previous.system.at_mu(mu)
    from_eq = refine_equilibrium(system, previous.from_eq.location, config.hyperbolicity_tol)
    to_eq = refine_equilibrium(system, previous.to_eq.location, config.hyperbolicity_tol)
    return solve_heteroclinic(system, from_eq, to_eq, previous.T, previous.mesh_size,
                              previous.path, PhaseCondition.integral(previous.collocation),
                              config, warm_start=previous.collocation)


def continue_in_mu(base: HeteroclinicSolution, mu_targets: Sequence[float],
                   config: Optional[BvpConfig] = None,
                   min_step: float = MIN_CONTINUATION_STEP) -> List[HeteroclinicSolution]:
    """
    Natural-parameter continuation of a connection through a list of mu values.

    Each step re-refines the equilibria at the new mu, warm-starts from the
    previous solution and uses the integral phase condition against it. Failed
    steps are halved until they fall below ``min_step``.

    Returns:
        One converged solution per target, in the given order
    """
    config = config or BvpConfig()
    targets = [float(mu) for mu in mu_targets]
    if not all(np.isfinite(targets)):
        raise InvalidArgumentError(f"non-finite continuation target in {targets}")

    current = base
    solutions: List[HeteroclinicSolution] = []
    for target in targets:
        step = target - current.mu
        while current.mu != target:
            remaining = target - current.mu
            if abs(step) > abs(remaining):
                step = remaining
            trial = target if step == remaining else current.mu + step
            try:
                current = _continuation_step(current, trial, config)
                file_log.info(f"Continuation reached mu={trial:g}")
            except (NoConnectionError, NoEquilibriumError, SingularSystemError) as error:
                step *= 0.5
                file_log.warning(f"Continuation step to mu={trial:g} failed ({error}); "
                                 f"halving step to {step:.3e}")
                if abs(step) < min_step:
                    raise ContinuationStuckError(
                        f"continuation towards mu={target:g} stalled", current.mu) from error
        solutions.append(current)
    return solutions


def shoot_connection(model: VectorFieldModel, mu: float, attractor: Sequence[float],
                     saddle: Sequence[float], times: np.ndarray, offset: float = 1e-4,
                     max_time: float = 200.0) -> Path:
    """
    Seed for the time-reversed connection from the attractor to the saddle.

    Integrates the forward flow from ``saddle`` displaced by ``offset`` along its
    unstable eigenvector (both signs), keeps the branch that reaches the
    attractor, and reverses time so that t = 0 is the point equidistant from
    both equilibria. Callers pass ``BvpConfig.bc_offset``; this is the only
    place the offset enters, since the collocation problem is pinned by its
    phase condition.
    """
    a = np.asarray(attractor, dtype=float)
    b = np.asarray(saddle, dtype=float)
    _, _, unstable = spectral_bases(model.field_jacobian(b, mu))
    if unstable.shape[1] != 1:
        raise IllPosedProblemError(
            f"shooting needs a one-dimensional unstable manifold at the saddle, got {unstable.shape[1]}")
    direction = unstable[:, 0]

    def arrived(t, x):
        return np.linalg.norm(x - a) - 1e-8
    arrived.terminal = True

    best = None
    for sign in (1.0, -1.0):
        sol = solve_ivp(lambda t, x: model.field(x, mu), (0.0, max_time), b + sign * offset * direction,
                        method='RK45', rtol=1e-10, atol=1e-12, dense_output=True, events=[arrived])
        distance = float(np.linalg.norm(sol.y[:, -1] - a))
        if best is None or distance < best[0]:
            best = (distance, sol)
    distance, sol = best
    if distance > SHOOTING_CAPTURE_TOL:
        raise NoConnectionError("shooting from the saddle did not reach the attractor", distance)

    grid = np.linspace(0.0, sol.t[-1], 4001)
    states = sol.sol(grid).T
    balance = np.abs(np.linalg.norm(states - a, axis=1) - np.linalg.norm(states - b, axis=1))
    s_mid = grid[int(np.argmin(balance))]
    s = np.clip(s_mid - np.asarray(times, dtype=float), 0.0, sol.t[-1])
    file_log.info(f"Shooting seed: arrival distance {distance:.3e}, midpoint at s={s_mid:.4g}")
    return Path(times, sol.sol(s).T)


def _default_anchor(guess: Path) -> PhaseCondition:
    """Anchor the coordinate moving fastest at t = 0 to its guess value."""
    k = int(np.argmin(np.abs(guess.times)))
    k0, k1 = max(k - 1, 0), min(k + 1, len(guess) - 1)
    velocity = (guess.states[k1] - guess.states[k0]) / (guess.times[k1] - guess.times[k0])
    index = int(np.argmax(np.abs(velocity)))
    return PhaseCondition.anchor(index, guess.states[k, index], guess.times[k])


@dataclass(frozen=True)
class BaseConnections:
    """mu = 0 connections seeding every continuation"""
    reversed: HeteroclinicSolution
    euler_lagrange: HeteroclinicSolution


@dataclass(frozen=True)
class MpepResult:
    """Most probable escape path at one mu with its deterministic counterpart"""
    mu: float
    mpep: Path
    solution: HeteroclinicSolution
    reversed: HeteroclinicSolution

    def gap(self) -> Path:
        """Pointwise Euclidean distance between the MPEP and the reversed heteroclinic."""
        times = self.mpep.times
        if self.reversed.collocation.same_grid(times, self.reversed.collocation.tableau):
            other = self.reversed.path.states
        else:
            other, _ = self.reversed.collocation.evaluate(times)
        return Path(times, np.linalg.norm(self.mpep.states - other, axis=1))


def _require_h1(model: VectorFieldModel) -> None:
    report = check_symmetry(model, default_sample_points(model.n))
    if not report.passed:
        raise UnsupportedModelError(
            f"model '{model.name}' violates the symmetric base Jacobian hypothesis "
            f"(max asymmetry {report.max_asymmetry:.3e})")


def solve_base_connections(model: VectorFieldModel,
                           config: Optional[BvpConfig] = None) -> BaseConnections:
    """
    Time-reversed saddle-attractor connection at mu = 0 and its Euler-Lagrange lift.

    The deterministic connection a -> b of x' = -f(x) is solved from the
    model's closed-form guess (or a shooting seed) with an anchor phase
    condition; (y0, 0) then seeds the (a, 0) -> (b, 0) connection of the
    v-form system.
    """
    config = config or BvpConfig()
    _require_h1(model)
    if model.attractor is None or model.saddle is None:
        raise UnsupportedModelError(f"model '{model.name}' does not name an attractor and a saddle")

    flow = DeterministicFlow(model, 0.0, reversed=True)
    a_eq = refine_equilibrium(flow, model.attractor, config.hyperbolicity_tol)
    b_eq = refine_equilibrium(flow, model.saddle, config.hyperbolicity_tol)
    times = np.linspace(-config.T, config.T, config.mesh + 1)
    if model.heteroclinic_guess is not None:
        guess = Path(times, model.heteroclinic_guess(times))
    else:
        guess = shoot_connection(model, 0.0, a_eq.location, b_eq.location, times,
                                 offset=config.bc_offset)
    reversed_base = solve_heteroclinic(flow, a_eq, b_eq, config.T, config.mesh, guess,
                                       _default_anchor(guess), config)

    el = assemble_v_form(model, 0.0)
    zeros = np.zeros(model.n)
    A_eq = refine_equilibrium(el, np.concatenate([a_eq.location, zeros]), config.hyperbolicity_tol)
    B_eq = refine_equilibrium(el, np.concatenate([b_eq.location, zeros]), config.hyperbolicity_tol)
    lifted = reversed_base.collocation.lifted(model.n)
    el_base = solve_heteroclinic(el, A_eq, B_eq, reversed_base.T, reversed_base.mesh_size,
                                 lifted.to_path(), PhaseCondition.integral(lifted), config,
                                 warm_start=lifted)
    console_log.info(f"✓ Base connections for '{model.name}': T={el_base.T:g}, "
                     f"{el_base.mesh_size} intervals, unfolding {el_base.unfolding:.2e}")
    return BaseConnections(reversed_base, el_base)


def mpep(model: VectorFieldModel, mu: float, numerics: Optional[BvpConfig] = None,
         bases: Optional[BaseConnections] = None) -> MpepResult:
    """
    Most probable escape path at perturbation strength ``mu``.

    Both base connections are continued directly from mu = 0 to ``mu``, so
    repeated calls at the same mu give identical results.
    """
    numerics = numerics or BvpConfig()
    if not np.isfinite(mu):
        raise InvalidArgumentError(f"non-finite mu {mu}")
    bases = bases or solve_base_connections(model, numerics)
    el_solution = continue_in_mu(bases.euler_lagrange, [mu], numerics)[-1]
    reversed_solution = continue_in_mu(bases.reversed, [mu], numerics)[-1]
    path = el_solution.path.component(slice(0, model.n))
    return MpepResult(float(mu), path, el_solution, reversed_solution)


def align_time_shift(path: Path, reference: Callable[[np.ndarray], np.ndarray],
                     bounds: Tuple[float, float] = (-5.0, 5.0)) -> Tuple[float, float]:
    """
    Time shift s minimising the distance between path(t) and reference(t + s).

    Returns:
        (shift, sup-norm error at the optimal shift)
    """
    times, states = path.times, path.states

    def mismatch(shift: float) -> float:
        return float(np.sum((states - reference(times + shift)) ** 2))

    best = minimize_scalar(mismatch, bounds=bounds, method='bounded',
                           options={'xatol': 1e-12})
    shift = float(best.x)
    error = float(np.max(np.abs(states - reference(times + shift))))
    return shift, error
