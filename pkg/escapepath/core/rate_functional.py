"""
Large-deviations action of discrete paths and the gradient-case lower bound.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson, trapezoid

from .model import Path, VectorFieldModel
from ..utils.errors import InvalidArgumentError, UnsupportedModelError
from ..utils.logger import setup_logger

# Get loggers
console_log, file_log = setup_logger()


class Quadrature(Enum):
    TRAPEZOID = "trapezoid"
    SIMPSON = "simpson"


@dataclass(frozen=True)
class ActionReport:
    value: float
    quadrature: Quadrature
    grid_size: int
    tail_bound: Optional[float] = None

    def lines(self):
        """key=value lines as printed by the command-line front end."""
        out = [f"value={self.value:.17g}",
               f"quadrature={self.quadrature.value}",
               f"grid_size={self.grid_size}"]
        if self.tail_bound is not None:
            out.append(f"tail_bound={self.tail_bound:.17g}")
        return out


def _is_uniform(times: np.ndarray) -> bool:
    steps = np.diff(times)
    return bool(np.allclose(steps, steps[0], rtol=1e-9, atol=0.0))


def _slowest_rate(model: VectorFieldModel, point: np.ndarray, mu: float) -> float:
    eigenvalues = np.linalg.eigvals(model.field_jacobian(np.asarray(point, dtype=float), mu))
    return float(np.min(np.abs(eigenvalues.real)))


def action(path: Path, model: VectorFieldModel, mu: float = 0.0,
           equilibria: Optional[Tuple[Sequence[float], Sequence[float]]] = None) -> ActionReport:
    """
    Freidlin-Wentzell action  1/2 int |u' - F(u)|^2 dt  of a discrete path.

    Velocities come from second-order differences (one-sided at the ends).
    Composite Simpson is used on uniform grids, the trapezoid rule otherwise.

    Args:
        path: Path in R^n with at least 3 grid points
        model: Vector field model
        mu: Perturbation strength
        equilibria: Optional (start, end) equilibria; the integrand decays like
            exp(-2 kappa |t|) beyond the grid, giving ``tail_bound``

    Returns:
        ActionReport
    """
    if len(path) < 3:
        raise InvalidArgumentError(f"action needs at least 3 grid points, got {len(path)}")
    if path.d != model.n:
        raise InvalidArgumentError(f"path dimension {path.d} does not match model dimension {model.n}")
    velocity = np.gradient(path.states, path.times, axis=0, edge_order=2)
    defect = velocity - model.field(path.states, mu)
    integrand = 0.5 * np.sum(defect * defect, axis=1)

    if _is_uniform(path.times):
        value = float(simpson(integrand, x=path.times))
        quadrature = Quadrature.SIMPSON
    else:
        value = float(trapezoid(integrand, path.times))
        quadrature = Quadrature.TRAPEZOID

    tail_bound = None
    if equilibria is not None:
        start, end = equilibria
        tail_bound = 0.0
        for value_at_end, point in ((integrand[0], start), (integrand[-1], end)):
            rate = _slowest_rate(model, point, mu)
            if rate > 0.0:
                tail_bound += float(value_at_end) / (2.0 * rate)
            else:
                tail_bound = float('inf')

    file_log.debug(f"Action {value:.12g} ({quadrature.value}, {len(path)} points, "
                   f"tail bound {tail_bound})")
    return ActionReport(value, quadrature, len(path), tail_bound)


def gradient_lower_bound(model: VectorFieldModel, a: Sequence[float], b: Sequence[float]) -> float:
    """2 (V(b) - V(a)): least action of any path from a to b in the gradient case."""
    if model.potential is None:
        raise UnsupportedModelError(f"model '{model.name}' has no potential")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return 2.0 * (float(model.potential(b)) - float(model.potential(a)))


def action_excess(path: Path, model: VectorFieldModel, mu: float = 0.0) -> float:
    """
    Action above the gradient lower bound between the path's endpoints.

    Equals 1/2 int |u' - grad V(u)|^2 up to quadrature error; only defined
    for the unperturbed gradient field.
    """
    if mu != 0.0:
        raise UnsupportedModelError("the action decomposition only holds for mu = 0")
    report = action(path, model, 0.0)
    return report.value - gradient_lower_bound(model, path.start, path.end)
