"""
Perturbed gradient vector fields
--------------------------------
Models of the form  x' = f(x) + mu*g(x)  with f = -grad V, the Path container
shared by every solver, the built-in double well and its registered variants,
and the symmetry / consistency diagnostics run at registration.
"""
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid

from ..utils.errors import InvalidArgumentError, UnsupportedModelError
from ..utils.logger import setup_logger

# Get loggers
console_log, file_log = setup_logger()

VectorMap = Callable[[np.ndarray], np.ndarray]
ArrayLike = Union[np.ndarray, Sequence[float]]

FD_HESSIAN_STEP = 1e-5
DEFAULT_SYMMETRY_TOL = 1e-8
DEFAULT_SAMPLE_BOX = (-2.0, 2.0)


@dataclass(frozen=True)
class Path:
    """Time grid with state vectors; the currency between solvers, quadrature and I/O."""
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        states = np.array(self.states, dtype=float)
        if states.ndim == 1:
            states = states.reshape(-1, 1)
        if states.ndim != 2 or states.shape[0] != times.shape[0]:
            raise InvalidArgumentError(
                f"states of shape {states.shape} do not match {times.shape[0]} grid times")
        if times.shape[0] < 1:
            raise InvalidArgumentError("a path needs at least one grid point")
        if np.any(np.diff(times) <= 0.0):
            raise InvalidArgumentError("path times must be strictly increasing")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(states))):
            raise InvalidArgumentError("path entries must be finite")
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'states', states)

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return self.times.shape[0]

    def component(self, indices: Union[int, Sequence[int], slice]) -> 'Path':
        """Sub-path restricted to the given state coordinates."""
        if isinstance(indices, int):
            indices = [indices]
        return Path(self.times, self.states[:, indices])

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.states)))

    def l2_norm(self) -> float:
        """L2 norm in time of the Euclidean state norm (trapezoid rule)."""
        if len(self) < 2:
            return 0.0
        return float(np.sqrt(trapezoid(np.sum(self.states ** 2, axis=1), self.times)))

    def __sub__(self, other: 'Path') -> 'Path':
        if self.times.shape != other.times.shape or not np.array_equal(self.times, other.times):
            raise InvalidArgumentError("paths live on different grids")
        return Path(self.times, self.states - other.states)


@dataclass(frozen=True)
class VectorFieldModel:
    """
    Perturbed gradient model  f + mu*g.

    The perturbation strength mu is not part of the model; every operation that
    needs it takes it as an argument. All maps accept a single state of shape
    (n,) and batches of shape (..., n).
    """
    n: int
    f: VectorMap
    f_jac: VectorMap
    g: VectorMap
    g_jac: VectorMap
    potential: Optional[Callable[[np.ndarray], float]] = None
    f_hess: Optional[VectorMap] = None
    g_hess: Optional[VectorMap] = None
    name: str = "custom"
    equilibrium_guesses: Tuple[Tuple[float, ...], ...] = ()
    attractor: Optional[Tuple[float, ...]] = None
    saddle: Optional[Tuple[float, ...]] = None
    heteroclinic_guess: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def field(self, x: np.ndarray, mu: float) -> np.ndarray:
        """Unchecked drift f(x) + mu*g(x) for internal batched use."""
        if mu == 0.0:
            return self.f(x)
        return self.f(x) + mu * self.g(x)

    def field_jacobian(self, x: np.ndarray, mu: float) -> np.ndarray:
        if mu == 0.0:
            return self.f_jac(x)
        return self.f_jac(x) + mu * self.g_jac(x)

    def hessians(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Second derivatives  hess[i, j, k] = d^2 f_i / dx_j dx_k  of f and g."""
        x = np.asarray(x, dtype=float)
        f_hess = self.f_hess(x) if self.f_hess is not None else _fd_hessian(self.f_jac, x)
        g_hess = self.g_hess(x) if self.g_hess is not None else _fd_hessian(self.g_jac, x)
        return f_hess, g_hess


def _fd_hessian(jac: VectorMap, x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    hess = np.empty(x.shape[:-1] + (n, n, n))
    for k in range(n):
        step = np.zeros(n)
        step[k] = FD_HESSIAN_STEP
        hess[..., k] = (jac(x + step) - jac(x - step)) / (2.0 * FD_HESSIAN_STEP)
    return hess


def _as_state(model: VectorFieldModel, x: ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise InvalidArgumentError(f"expected a state of shape ({model.n},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"non-finite state {x}")
    return x


def drift(model: VectorFieldModel, x: ArrayLike, mu: float) -> np.ndarray:
    """
    Evaluate the perturbed drift.

    Args:
        model: Vector field model
        x: State in R^n
        mu: Perturbation strength

    Returns:
        f(x) + mu*g(x)
    """
    x = _as_state(model, x)
    if not np.isfinite(mu):
        raise InvalidArgumentError(f"non-finite mu {mu}")
    return model.field(x, mu)


def drift_jacobian(model: VectorFieldModel, x: ArrayLike, mu: float) -> np.ndarray:
    """Jacobian f_jac(x) + mu*g_jac(x) of the perturbed drift."""
    x = _as_state(model, x)
    if not np.isfinite(mu):
        raise InvalidArgumentError(f"non-finite mu {mu}")
    return model.field_jacobian(x, mu)


@dataclass(frozen=True)
class SymmetryReport:
    """Largest asymmetry of a Jacobian over sample points"""
    max_asymmetry: float
    passed: bool
    tol: float
    field: str = "f"


def check_symmetry(model: VectorFieldModel, sample_points: Sequence[ArrayLike],
                   tol: float = DEFAULT_SYMMETRY_TOL, field: str = "f") -> SymmetryReport:
    """
    Check that a model Jacobian is symmetric.

    Args:
        model: Vector field model
        sample_points: Non-empty list of states
        tol: Pass threshold on the infinity norm of J - J^T
        field: "f" (base field) or "g" (perturbation)

    Returns:
        SymmetryReport with the maximum asymmetry over the points
    """
    if len(sample_points) == 0:
        raise InvalidArgumentError("check_symmetry needs at least one sample point")
    if field not in ("f", "g"):
        raise InvalidArgumentError(f"unknown field '{field}'")
    jac = model.f_jac if field == "f" else model.g_jac
    points = np.asarray(sample_points, dtype=float).reshape(-1, model.n)
    worst = 0.0
    for x in points:
        J = jac(x)
        worst = max(worst, float(np.max(np.sum(np.abs(J - J.T), axis=1))))
    return SymmetryReport(max_asymmetry=worst, passed=worst <= tol, tol=tol, field=field)


def check_jacobians(model: VectorFieldModel, sample_points: Sequence[ArrayLike],
                    step: float = 1e-5) -> Dict[str, float]:
    """Maximum relative error of f_jac, g_jac (and grad V) against central differences."""
    points = np.asarray(sample_points, dtype=float).reshape(-1, model.n)
    errors = {"f_jac": 0.0, "g_jac": 0.0}
    if model.potential is not None:
        errors["potential"] = 0.0
    eye = np.eye(model.n) * step
    for x in points:
        for name, fn, jac in (("f_jac", model.f, model.f_jac), ("g_jac", model.g, model.g_jac)):
            fd = np.column_stack([(fn(x + e) - fn(x - e)) / (2.0 * step) for e in eye])
            scale = max(1.0, float(np.max(np.abs(fd))))
            errors[name] = max(errors[name], float(np.max(np.abs(fd - jac(x)))) / scale)
        if model.potential is not None:
            grad = np.array([(model.potential(x + e) - model.potential(x - e)) / (2.0 * step)
                             for e in eye])
            fx = model.f(x)
            scale = max(1.0, float(np.max(np.abs(fx))))
            errors["potential"] = max(errors["potential"],
                                      float(np.max(np.abs(fx + grad))) / scale)
    return errors


def asymmetry_indicator(model: VectorFieldModel, path: Path) -> Path:
    """
    Pointwise size of the non-symmetric forcing along a path.

    The value is |2 [g_jac^T - g_jac] f| with the factor 2 of the first-order
    forcing g1; it is identically zero for perturbations with symmetric Jacobian.
    """
    if path.d != model.n:
        raise InvalidArgumentError(f"path dimension {path.d} does not match model dimension {model.n}")
    values = np.empty(len(path))
    for k, x in enumerate(path.states):
        G = model.g_jac(x)
        values[k] = 2.0 * np.linalg.norm((G.T - G) @ model.f(x))
    return Path(path.times, values)


def default_sample_points(n: int, box: Tuple[float, float] = DEFAULT_SAMPLE_BOX) -> np.ndarray:
    """10 x 10 grid for planar models, 10 points per axis in 1-D, 100 fixed draws otherwise."""
    low, high = box
    if n == 1:
        return np.linspace(low, high, 10).reshape(-1, 1)
    if n == 2:
        axis = np.linspace(low, high, 10)
        X1, X2 = np.meshgrid(axis, axis, indexing='ij')
        return np.column_stack([X1.ravel(), X2.ravel()])
    rng = np.random.default_rng(0)
    return rng.uniform(low, high, size=(100, n))


# ---------------------------------------------------------------------------
# Built-in double well:  V = x1^4/4 - x1^2/2 + x2^2/2
# ---------------------------------------------------------------------------

def _dw_f(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x1 - x1 * x1 * x1, -x2], axis=-1)


def _dw_f_jac(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    J = np.zeros(x.shape[:-1] + (2, 2))
    J[..., 0, 0] = 1.0 - 3.0 * x[..., 0] * x[..., 0]
    J[..., 1, 1] = -1.0
    return J


def _dw_f_hess(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    H = np.zeros(x.shape[:-1] + (2, 2, 2))
    H[..., 0, 0, 0] = -6.0 * x[..., 0]
    return H


def _dw_potential(x: np.ndarray) -> float:
    x1, x2 = float(x[0]), float(x[1])
    return x1 ** 4 / 4.0 - x1 ** 2 / 2.0 + x2 ** 2 / 2.0


def _linear_perturbation(matrix: np.ndarray) -> Tuple[VectorMap, VectorMap, VectorMap]:
    matrix = np.asarray(matrix, dtype=float)

    def g(x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ matrix.T

    def g_jac(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(matrix, x.shape[:-1] + matrix.shape).copy()

    def g_hess(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = matrix.shape[0]
        return np.zeros(x.shape[:-1] + (n, n, n))

    return g, g_jac, g_hess


def double_well_heteroclinic(t: np.ndarray) -> np.ndarray:
    """Time-reversed saddle-attractor connection  y0(t) = h(-t) = (-1/sqrt(e^{2t}+1), 0)."""
    t = np.asarray(t, dtype=float)
    y1 = -np.exp(-0.5 * np.logaddexp(0.0, 2.0 * t))
    return np.stack([y1, np.zeros_like(y1)], axis=-1)


def _double_well_variant(name: str, perturbation: np.ndarray) -> VectorFieldModel:
    g, g_jac, g_hess = _linear_perturbation(perturbation)
    return VectorFieldModel(
        n=2,
        f=_dw_f,
        f_jac=_dw_f_jac,
        g=g,
        g_jac=g_jac,
        potential=_dw_potential,
        f_hess=_dw_f_hess,
        g_hess=g_hess,
        name=name,
        equilibrium_guesses=((-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)),
        attractor=(-1.0, 0.0),
        saddle=(0.0, 0.0),
        heteroclinic_guess=double_well_heteroclinic,
    )


def builtin_double_well() -> VectorFieldModel:
    """Double well  f = (x1 - x1^3, -x2)  with rotational perturbation  g = (-x2, 0)."""
    return _double_well_variant("double_well", np.array([[0.0, -1.0], [0.0, 0.0]]))


def symmetric_double_well() -> VectorFieldModel:
    """Double well with the symmetric perturbation  g = (x2, x1)."""
    return _double_well_variant("double_well_symmetric", np.array([[0.0, 1.0], [1.0, 0.0]]))


def gradient_double_well() -> VectorFieldModel:
    """Double well without perturbation (g = 0)."""
    return _double_well_variant("double_well_gradient", np.zeros((2, 2)))


def mirrored_double_well() -> VectorFieldModel:
    """Double well with the mirrored perturbation  g = (x2, 0)."""
    return _double_well_variant("double_well_mirrored", np.array([[0.0, 1.0], [0.0, 0.0]]))


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_REGISTRY: Dict[str, VectorFieldModel] = {}


def register_model(name: str, model: VectorFieldModel,
                   box: Tuple[float, float] = DEFAULT_SAMPLE_BOX,
                   tol: float = DEFAULT_SYMMETRY_TOL) -> VectorFieldModel:
    """
    Register a model under a name after checking the base field is symmetric.

    Raises:
        UnsupportedModelError: if f_jac is not symmetric on the sample grid
    """
    report = check_symmetry(model, default_sample_points(model.n, box), tol=tol)
    if not report.passed:
        file_log.error(f"Rejected model '{name}': max asymmetry {report.max_asymmetry:.3e}")
        raise UnsupportedModelError(
            f"model '{name}' has a non-symmetric base Jacobian "
            f"(max asymmetry {report.max_asymmetry:.3e} > {tol:g})")
    _REGISTRY[name] = model
    file_log.debug(f"Registered model '{name}' (n={model.n})")
    return model


def get_model(name: str) -> VectorFieldModel:
    """Look up a registered model by name."""
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnsupportedModelError(
            f"unknown model '{name}'; available: {', '.join(available_models())}") from None


def available_models() -> List[str]:
    return sorted(_REGISTRY)


for _factory in (builtin_double_well, symmetric_double_well, gradient_double_well,
                 mirrored_double_well):
    _builtin = _factory()
    register_model(_builtin.name, _builtin)
