"""
Gauss-Legendre collocation on uniform meshes
--------------------------------------------
Shared engine for the nonlinear connecting-orbit problems and the linear
first-order correction problems. Unknowns are the mesh states, the stage values
of every interval and, for Hamiltonian connection problems, one unfolding
parameter lambda multiplying the gradient of the conserved quantity.

Per interval [t_i, t_i + h] with stages X_ij and K_ij = F(X_ij) + lambda D(X_ij):

    X_ij    = x_i + h sum_l a_jl K_il
    x_{i+1} = x_i + h sum_j b_j  K_ij

closed by affine projection conditions at both ends and one phase condition.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicSpline
from scipy.linalg import null_space
from scipy.sparse import coo_matrix, csc_matrix
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from .model import Path
from ..utils.errors import IllPosedProblemError, NoConnectionError, SingularSystemError
from ..utils.logger import setup_logger

# Get loggers
console_log, file_log = setup_logger()


@dataclass(frozen=True)
class GaussTableau:
    """Butcher tableau of the m-stage Gauss collocation method"""
    degree: int
    nodes: np.ndarray
    a: np.ndarray
    b: np.ndarray
    basis: Tuple[Polynomial, ...]
    primitives: Tuple[Polynomial, ...]

    @classmethod
    def of_degree(cls, degree: int) -> 'GaussTableau':
        if degree < 1:
            raise IllPosedProblemError(f"collocation degree must be positive, got {degree}")
        roots, _ = leggauss(degree)
        nodes = 0.5 * (roots + 1.0)
        basis = []
        for l in range(degree):
            others = np.delete(nodes, l)
            poly = Polynomial.fromroots(others) if degree > 1 else Polynomial([1.0])
            basis.append(poly / poly(nodes[l]))
        primitives = [p.integ(lbnd=0.0) for p in basis]
        a = np.array([[primitives[l](nodes[j]) for l in range(degree)] for j in range(degree)])
        b = np.array([primitives[l](1.0) for l in range(degree)])
        return cls(degree, nodes, a, b, tuple(basis), tuple(primitives))

    def primitive_values(self, s: np.ndarray) -> np.ndarray:
        """Integrated Lagrange basis at local coordinates s, shape (len(s), m)."""
        return np.column_stack([p(s) for p in self.primitives])

    def basis_values(self, s: np.ndarray) -> np.ndarray:
        return np.column_stack([p(s) for p in self.basis])


@dataclass(frozen=True)
class CollocationState:
    """Mesh states, stage states and stage derivatives of a collocation solution"""
    times: np.ndarray
    mesh_states: np.ndarray
    stage_states: np.ndarray
    stage_derivs: np.ndarray
    tableau: GaussTableau
    unfolding: float = 0.0

    @property
    def intervals(self) -> int:
        return self.times.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.mesh_states.shape[1]

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    def stage_times(self) -> np.ndarray:
        return self.times[:-1, None] + self.step * self.tableau.nodes[None, :]

    def to_path(self) -> Path:
        return Path(self.times, self.mesh_states)

    def same_grid(self, times: np.ndarray, tableau: GaussTableau) -> bool:
        return (self.times.shape == times.shape and np.allclose(self.times, times, rtol=0, atol=1e-12)
                and self.tableau.degree == tableau.degree)

    def evaluate(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Collocation polynomial and its derivative at arbitrary times.

        Outside the mesh the endpoint value is held with zero derivative.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        h = self.step
        inside = (t >= self.times[0]) & (t <= self.times[-1])
        tc = np.clip(t, self.times[0], self.times[-1])
        idx = np.clip(np.searchsorted(self.times, tc, side='right') - 1, 0, self.intervals - 1)
        s = (tc - self.times[idx]) / h
        K = self.stage_derivs[idx]
        values = self.mesh_states[idx] + h * np.einsum('pl,pld->pd', self.tableau.primitive_values(s), K)
        derivs = np.einsum('pl,pld->pd', self.tableau.basis_values(s), K)
        derivs[~inside] = 0.0
        return values, derivs

    def lifted(self, extra_dim: int) -> 'CollocationState':
        """Append zero components (used to seed (y, 0) for the Euler-Lagrange problem)."""
        def pad(arr: np.ndarray) -> np.ndarray:
            return np.concatenate([arr, np.zeros(arr.shape[:-1] + (extra_dim,))], axis=-1)
        return CollocationState(self.times, pad(self.mesh_states), pad(self.stage_states),
                                pad(self.stage_derivs), self.tableau, 0.0)


class StageField(Protocol):
    """Vector field evaluated on all stages at once: (N, m, d) -> F, dF/dx"""
    dim: int

    def evaluate(self, stages: np.ndarray) -> Tuple[np.ndarray, np.ndarray]: ...


class AutonomousField:
    """Stage adapter for an autonomous system exposing rhs / rhs_jac"""

    def __init__(self, system):
        self.system = system
        self.dim = system.dim

    def evaluate(self, stages: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        flat = stages.reshape(-1, self.dim)
        F = np.asarray(self.system.rhs(flat)).reshape(stages.shape)
        J = np.array([self.system.rhs_jac(x) for x in flat]).reshape(stages.shape + (self.dim,))
        return F, J


class LinearField:
    """Stage adapter for x' = A(t) x + b(t) with coefficients given on the stages"""

    def __init__(self, coefficients: np.ndarray, forcing: np.ndarray):
        self.coefficients = coefficients
        self.forcing = forcing
        self.dim = forcing.shape[-1]

    def evaluate(self, stages: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        F = np.einsum('nmij,nmj->nmi', self.coefficients, stages) + self.forcing
        return F, self.coefficients


@dataclass(frozen=True)
class ProjectionBC:
    """Affine condition  normals^T (x - point) = 0  at one end of the interval"""
    point: np.ndarray
    normals: np.ndarray

    @classmethod
    def onto_subspace(cls, point: np.ndarray, basis: np.ndarray) -> 'ProjectionBC':
        """Require x - point to lie in span(basis)."""
        point = np.asarray(point, dtype=float)
        if basis.shape[1] == 0:
            return cls(point, np.eye(point.shape[0]))
        return cls(point, null_space(basis.T))

    @property
    def count(self) -> int:
        return self.normals.shape[1]

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.normals.T @ (x - self.point)


@dataclass(frozen=True)
class PhaseCondition:
    """Scalar condition removing the time-translation degeneracy"""
    kind: str
    index: int = 0
    value: float = 0.0
    time: float = 0.0
    reference: Optional[CollocationState] = None

    @classmethod
    def anchor(cls, index: int, value: float, time: float = 0.0) -> 'PhaseCondition':
        """Pin state coordinate ``index`` to ``value`` at the mesh point nearest ``time``."""
        return cls(kind="anchor", index=index, value=float(value), time=float(time))

    @classmethod
    def integral(cls, reference: CollocationState) -> 'PhaseCondition':
        """<x_ref', x - x_ref>_{L2} = 0 against a reference solution."""
        return cls(kind="integral", reference=reference)

    def describe(self) -> str:
        if self.kind == "anchor":
            return f"anchor x{self.index + 1}({self.time:g}) = {self.value:.17g}"
        return "integral <x_ref', x - x_ref> = 0"


@dataclass
class CollocationResult:
    state: CollocationState
    residual_norm: float
    iterations: int
    condition: float
    history: List[float] = field(default_factory=list)


def initial_state(times: np.ndarray, tableau: GaussTableau, guess: Path,
                  field_: Optional[StageField] = None) -> CollocationState:
    """Interpolate a guess path onto mesh and stages with a cubic spline."""
    h = float(times[1] - times[0])
    stage_times = times[:-1, None] + h * tableau.nodes[None, :]
    if len(guess) >= 2:
        spline = CubicSpline(guess.times, guess.states, axis=0)
        low, high = guess.times[0], guess.times[-1]
        mesh = spline(np.clip(times, low, high))
        stages = spline(np.clip(stage_times, low, high))
        derivs = spline(np.clip(stage_times, low, high), 1)
    else:
        mesh = np.repeat(guess.states, times.shape[0], axis=0)
        stages = np.repeat(mesh[:-1, None, :], tableau.degree, axis=1)
        derivs = np.zeros_like(stages)
    return CollocationState(times, mesh, stages, derivs, tableau)


def _reference_on_grid(reference: CollocationState, times: np.ndarray,
                       tableau: GaussTableau) -> Tuple[np.ndarray, np.ndarray]:
    if reference.same_grid(times, tableau):
        return reference.stage_states, reference.stage_derivs
    h = float(times[1] - times[0])
    stage_times = (times[:-1, None] + h * tableau.nodes[None, :]).ravel()
    values, derivs = reference.evaluate(stage_times)
    shape = (times.shape[0] - 1, tableau.degree, reference.dim)
    return values.reshape(shape), derivs.reshape(shape)


def _block_triplets(rows0: np.ndarray, cols0: np.ndarray,
                    blocks: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    p, q = blocks.shape[-2:]
    rows = np.broadcast_to(np.asarray(rows0)[..., None, None] + np.arange(p)[:, None], blocks.shape)
    cols = np.broadcast_to(np.asarray(cols0)[..., None, None] + np.arange(q)[None, :], blocks.shape)
    return rows.ravel(), cols.ravel(), blocks.ravel()


class _CollocationSystem:
    """Residual and sparse Jacobian of the discretised boundary-value problem"""

    def __init__(self, stage_field: StageField, times: np.ndarray, tableau: GaussTableau,
                 left: ProjectionBC, right: ProjectionBC, phase: PhaseCondition,
                 unfolding: Optional[Callable[[np.ndarray], np.ndarray]]):
        self.field = stage_field
        self.times = times
        self.tableau = tableau
        self.left = left
        self.right = right
        self.phase = phase
        self.unfolding = unfolding
        self.N = times.shape[0] - 1
        self.m = tableau.degree
        self.d = stage_field.dim
        self.h = float(times[1] - times[0])
        self.n_mesh = (self.N + 1) * self.d
        self.n_stage = self.N * self.m * self.d
        self.n_unknowns = self.n_mesh + self.n_stage + (1 if unfolding is not None else 0)
        self.n_equations = self.n_stage + self.N * self.d + left.count + right.count + 1
        if self.n_equations != self.n_unknowns:
            raise IllPosedProblemError(
                f"{left.count} + {right.count} boundary conditions plus one phase condition "
                f"do not close a problem with {self.n_unknowns - self.n_mesh - self.n_stage} "
                f"free parameter(s) in dimension {self.d}")
        self.anchor_index = int(np.argmin(np.abs(times - phase.time)))
        if phase.kind == "integral":
            if phase.reference is None:
                raise IllPosedProblemError("integral phase condition needs a reference solution")
            self.ref_stages, self.ref_derivs = _reference_on_grid(phase.reference, times, tableau)

    def pack(self, state: CollocationState) -> np.ndarray:
        parts = [state.mesh_states.ravel(), state.stage_states.ravel()]
        if self.unfolding is not None:
            parts.append(np.array([state.unfolding]))
        return np.concatenate(parts)

    def unpack(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        x = z[:self.n_mesh].reshape(self.N + 1, self.d)
        X = z[self.n_mesh:self.n_mesh + self.n_stage].reshape(self.N, self.m, self.d)
        lam = float(z[-1]) if self.unfolding is not None else 0.0
        return x, X, lam

    def _stage_values(self, X: np.ndarray, lam: float):
        F, J = self.field.evaluate(X)
        D = None
        if self.unfolding is not None:
            D = self.unfolding(X)
            F = F + lam * D
        return F, J, D

    def residual(self, z: np.ndarray, with_jacobian: bool = True):
        x, X, lam = self.unpack(z)
        F, J, D = self._stage_values(X, lam)
        a, b, h = self.tableau.a, self.tableau.b, self.h
        r_stage = X - x[:-1, None, :] - h * np.einsum('jl,ild->ijd', a, F)
        r_cont = x[1:] - x[:-1] - h * np.einsum('j,ijd->id', b, F)
        if self.phase.kind == "anchor":
            r_phase = x[self.anchor_index, self.phase.index] - self.phase.value
        else:
            r_phase = h * np.einsum('j,ijd,ijd->', b, self.ref_derivs, X - self.ref_stages)
        r = np.concatenate([r_stage.ravel(), r_cont.ravel(), self.left.residual(x[0]),
                            self.right.residual(x[-1]), [r_phase]])
        if not with_jacobian:
            return r, None, F
        return r, self._jacobian(J, D), F

    def _jacobian(self, J: np.ndarray, D: Optional[np.ndarray]) -> csc_matrix:
        N, m, d, h = self.N, self.m, self.d, self.h
        a, b = self.tableau.a, self.tableau.b
        I = np.arange(N)[:, None]
        jj = np.arange(m)[None, :]
        stage_row = (I * m + jj) * d
        stage_col = self.n_mesh + stage_row
        cont_row = self.n_stage + np.arange(N) * d
        eye = np.eye(d)
        triplets = []

        # stage equations w.r.t. stage values
        blocks = -h * a[None, :, :, None, None] * J[:, None, :, :, :]
        diag = np.arange(m)
        blocks[:, diag, diag] += eye
        triplets.append(_block_triplets(stage_row[:, :, None], stage_col[:, None, :], blocks))
        # stage equations w.r.t. the left mesh state
        triplets.append(_block_triplets(stage_row, np.broadcast_to(I * d, (N, m)),
                                        np.broadcast_to(-eye, (N, m, d, d))))
        # continuity
        triplets.append(_block_triplets(cont_row, (np.arange(N) + 1) * d,
                                        np.broadcast_to(eye, (N, d, d))))
        triplets.append(_block_triplets(cont_row, np.arange(N) * d,
                                        np.broadcast_to(-eye, (N, d, d))))
        triplets.append(_block_triplets(cont_row[:, None], stage_col,
                                        -h * b[None, :, None, None] * J))

        row = self.n_stage + N * d
        if self.left.count:
            triplets.append(_block_triplets(np.array(row), np.array(0), self.left.normals.T))
        row += self.left.count
        if self.right.count:
            triplets.append(_block_triplets(np.array(row), np.array(N * d), self.right.normals.T))
        row += self.right.count

        if self.phase.kind == "anchor":
            triplets.append((np.array([row]), np.array([self.anchor_index * d + self.phase.index]),
                             np.array([1.0])))
        else:
            weights = h * b[None, :, None] * self.ref_derivs
            triplets.append((np.full(self.n_stage, row),
                             self.n_mesh + np.arange(self.n_stage), weights.ravel()))

        if D is not None:
            # d/d lambda; the lambda * dD/dx term is dropped since lambda vanishes at a connection
            col = self.n_unknowns - 1
            stage_vals = -h * np.einsum('jl,ild->ijd', a, D).ravel()
            cont_vals = -h * np.einsum('j,ijd->id', b, D).ravel()
            triplets.append((np.arange(self.n_stage), np.full(self.n_stage, col), stage_vals))
            triplets.append((self.n_stage + np.arange(N * d), np.full(N * d, col), cont_vals))

        rows = np.concatenate([t[0] for t in triplets])
        cols = np.concatenate([t[1] for t in triplets])
        vals = np.concatenate([t[2] for t in triplets])
        shape = (self.n_equations, self.n_unknowns)
        return coo_matrix((vals, (rows, cols)), shape=shape).tocsc()


def _factorize(jacobian: csc_matrix):
    try:
        return splu(jacobian)
    except RuntimeError as error:
        raise SingularSystemError(f"collocation Jacobian is singular: {error}") from error


def condition_estimate(jacobian: csc_matrix, lu=None) -> float:
    """1-norm condition number estimate  ||J||_1 ||J^-1||_1."""
    lu = lu or _factorize(jacobian)
    n = jacobian.shape[0]
    inverse = LinearOperator((n, n), matvec=lu.solve,
                             rmatvec=lambda v: lu.solve(np.asarray(v), trans='T'),
                             dtype=float)
    norm = float(abs(jacobian).sum(axis=0).max())
    return norm * float(onenormest(inverse))


def solve_collocation(stage_field: StageField, guess: CollocationState,
                      left: ProjectionBC, right: ProjectionBC, phase: PhaseCondition,
                      unfolding: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                      newton_tol: float = 1e-10, max_newton: int = 25,
                      label: str = "collocation") -> CollocationResult:
    """
    Newton iteration with halving line search on the collocation equations.

    Args:
        stage_field: Vector field evaluated on the stages
        guess: Initial mesh/stage values; defines mesh and tableau
        left, right: Projection conditions at -T and T
        phase: Phase condition
        unfolding: Direction field D for the unfolding parameter (or None)
        newton_tol: Tolerance on the infinity norm of the residual
        max_newton: Maximum Newton iterations
        label: Name used in log records

    Returns:
        CollocationResult with the converged state and diagnostics
    """
    system = _CollocationSystem(stage_field, guess.times, guess.tableau, left, right, phase, unfolding)
    z = system.pack(guess)
    r, jac, F = system.residual(z)
    norm = float(np.max(np.abs(r)))
    history = [norm]
    iterations = 0
    while norm > newton_tol and iterations < max_newton:
        if not np.isfinite(norm):
            break
        lu = _factorize(jac)
        dz = lu.solve(-r)
        step = 1.0
        while True:
            z_try = z + step * dz
            r_try, _, _ = system.residual(z_try, with_jacobian=False)
            norm_try = float(np.max(np.abs(r_try)))
            if (np.isfinite(norm_try) and norm_try < norm) or step <= 1.0 / 64.0:
                break
            step *= 0.5
        z = z_try
        iterations += 1
        r, jac, F = system.residual(z)
        norm = float(np.max(np.abs(r)))
        history.append(norm)
        file_log.debug(f"{label}: Newton step", extra={"solver_data": {
            "iteration": iterations, "residual": norm, "damping": step}})

    if not (np.isfinite(norm) and norm <= newton_tol):
        file_log.error(f"{label}: Newton failed after {iterations} iterations, residual {norm:.3e}")
        raise NoConnectionError(f"{label}: Newton iteration did not converge", norm)

    lu = _factorize(jac)
    condition = condition_estimate(jac, lu)
    x, X, lam = system.unpack(z)
    state = CollocationState(guess.times, x.copy(), X.copy(), F.copy(), guess.tableau, lam)
    file_log.info(f"{label}: converged in {iterations} iteration(s), residual {norm:.3e}, "
                  f"condition {condition:.3e}")
    return CollocationResult(state, norm, iterations, condition, history)
