"""
Euler-Lagrange systems
----------------------
The 2n-dimensional Hamiltonian systems whose connecting orbits are most probable
escape paths, in (u, w) and (u, v) coordinates, with their conserved
quantities and the coordinate maps between the two forms.

With F = f + mu*g the w-form reads

    u' = F(u) + w,        w' = -F_u(u)^T w

and v = w + 2F(u) gives the v-form, implemented as printed for symmetric f:

    u' = -F(u) + v
    v' = f_u(u)^T v + mu [2(g_u^T - g_u)(f + mu g) + (2 g_u - g_u^T) v]
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .model import Path, VectorFieldModel
from ..utils.errors import InvalidArgumentError
from ..utils.logger import setup_logger

# Get loggers
console_log, file_log = setup_logger()

REFERENCE_RTOL = 1e-10
REFERENCE_ATOL = 1e-10


class Coords(Enum):
    W_FORM = "w"
    V_FORM = "v"


@dataclass(frozen=True)
class ELSystem:
    """Euler-Lagrange vector field of a model at a fixed perturbation strength"""
    model: VectorFieldModel
    mu: float
    coords: Coords

    @property
    def dim(self) -> int:
        return 2 * self.model.n

    @property
    def kind(self) -> str:
        return f"el_{self.coords.value}"

    def at_mu(self, mu: float) -> 'ELSystem':
        return ELSystem(self.model, mu, self.coords)

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n = self.model.n
        return x[..., :n], x[..., n:]

    def rhs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u, p = self.split(x)
        model, mu = self.model, self.mu
        F = model.field(u, mu)
        if self.coords is Coords.W_FORM:
            FJ = model.field_jacobian(u, mu)
            return np.concatenate([F + p, -np.einsum('...ij,...i->...j', FJ, p)], axis=-1)
        fJ = model.f_jac(u)
        v_dot = np.einsum('...ij,...i->...j', fJ, p)
        if mu != 0.0:
            gJ = model.g_jac(u)
            A = np.swapaxes(gJ, -1, -2) - gJ
            B = 2.0 * gJ - np.swapaxes(gJ, -1, -2)
            v_dot = v_dot + mu * (2.0 * np.einsum('...ij,...j->...i', A, F)
                                  + np.einsum('...ij,...j->...i', B, p))
        return np.concatenate([-F + p, v_dot], axis=-1)

    def rhs_jac(self, x: np.ndarray) -> np.ndarray:
        """Jacobian of rhs for a single state (d x d)."""
        x = np.asarray(x, dtype=float)
        n = self.model.n
        u, p = self.split(x)
        model, mu = self.model, self.mu
        FJ = model.field_jacobian(u, mu)
        f_hess, g_hess = model.hessians(u)
        F_hess = f_hess + mu * g_hess
        J = np.zeros((2 * n, 2 * n))
        if self.coords is Coords.W_FORM:
            J[:n, :n] = FJ
            J[:n, n:] = np.eye(n)
            J[n:, :n] = -np.einsum('ijk,i->jk', F_hess, p)
            J[n:, n:] = -FJ.T
            return J
        J[:n, :n] = -FJ
        J[:n, n:] = np.eye(n)
        fJ = model.f_jac(u)
        dv_du = np.einsum('ijk,i->jk', f_hess, p)
        dv_dv = fJ.T.copy()
        if mu != 0.0:
            gJ = model.g_jac(u)
            F = model.field(u, mu)
            A = gJ.T - gJ
            B = 2.0 * gJ - gJ.T
            dAF = (np.einsum('ijk,i->jk', g_hess, F) - np.einsum('jik,i->jk', g_hess, F)
                   + A @ FJ)
            dBv = 2.0 * np.einsum('jik,i->jk', g_hess, p) - np.einsum('ijk,i->jk', g_hess, p)
            dv_du = dv_du + mu * (2.0 * dAF + dBv)
            dv_dv = dv_dv + mu * B
        J[n:, :n] = dv_du
        J[n:, n:] = dv_dv
        return J

    def rhs_mu(self, x: np.ndarray) -> np.ndarray:
        """Derivative of rhs with respect to mu."""
        x = np.asarray(x, dtype=float)
        u, p = self.split(x)
        model, mu = self.model, self.mu
        g = model.g(u)
        if self.coords is Coords.W_FORM:
            gJ = model.g_jac(u)
            return np.concatenate([g, -np.einsum('...ij,...i->...j', gJ, p)], axis=-1)
        gJ = model.g_jac(u)
        A = np.swapaxes(gJ, -1, -2) - gJ
        B = 2.0 * gJ - np.swapaxes(gJ, -1, -2)
        F = model.field(u, mu)
        v_mu = (2.0 * np.einsum('...ij,...j->...i', A, F) + np.einsum('...ij,...j->...i', B, p)
                + 2.0 * mu * np.einsum('...ij,...j->...i', A, g))
        return np.concatenate([-g, v_mu], axis=-1)

    def conserved(self, x: np.ndarray) -> float:
        """H in the w-form, C in the v-form."""
        u, p = self.split(np.asarray(x, dtype=float))
        if self.coords is Coords.W_FORM:
            return hamiltonian_w(self.model, self.mu, u, p)
        return conserved_c(self.model, self.mu, u, p)

    def conserved_grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the conserved quantity; shape follows x (batched)."""
        x = np.asarray(x, dtype=float)
        u, p = self.split(x)
        F = self.model.field(u, self.mu)
        FJ = self.model.field_jacobian(u, self.mu)
        FJp = np.einsum('...ij,...i->...j', FJ, p)
        if self.coords is Coords.W_FORM:
            return np.concatenate([FJp, p + F], axis=-1)
        return np.concatenate([-FJp, p - F], axis=-1)


def assemble_w_form(model: VectorFieldModel, mu: float) -> ELSystem:
    """Euler-Lagrange system in (u, w) coordinates."""
    return ELSystem(model, float(mu), Coords.W_FORM)


def assemble_v_form(model: VectorFieldModel, mu: float) -> ELSystem:
    """Euler-Lagrange system in (u, v) coordinates."""
    return ELSystem(model, float(mu), Coords.V_FORM)


def hamiltonian_w(model: VectorFieldModel, mu: float, u: np.ndarray, w: np.ndarray) -> float:
    """H(u, w) = |w|^2/2 + <F(u), w>."""
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    return float(0.5 * w @ w + model.field(u, mu) @ w)


def conserved_c(model: VectorFieldModel, mu: float, u: np.ndarray, v: np.ndarray) -> float:
    """C(u, v) = |v|^2/2 - <F(u), v> with the full drift F = f + mu*g."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return float(0.5 * v @ v - model.field(u, mu) @ v)


def to_v_coords(model: VectorFieldModel, mu: float, u: np.ndarray,
                w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(u, w) -> (u, v) with v = w + 2F(u)."""
    u = np.asarray(u, dtype=float)
    return u.copy(), np.asarray(w, dtype=float) + 2.0 * model.field(u, mu)


def to_w_coords(model: VectorFieldModel, mu: float, u: np.ndarray,
                v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(u, v) -> (u, w) with w = v - 2F(u)."""
    u = np.asarray(u, dtype=float)
    return u.copy(), np.asarray(v, dtype=float) - 2.0 * model.field(u, mu)


def integrate_trajectory(system, x0: Sequence[float], t_span: Tuple[float, float],
                         t_eval: Optional[np.ndarray] = None,
                         escape_radius: Optional[float] = None) -> Path:
    """
    Reference trajectory by adaptive RK45 (rtol = atol = 1e-10).

    Used for invariant checks and diagnostics only; connecting orbits are
    boundary-value problems. Integration stops early when the state leaves the
    ball of radius ``escape_radius``.
    """
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise InvalidArgumentError(f"non-finite initial condition {x0}")
    events = None
    if escape_radius is not None:
        def leaves_ball(t, x):
            return escape_radius - np.linalg.norm(x)
        leaves_ball.terminal = True
        events = [leaves_ball]
    result = solve_ivp(lambda t, x: system.rhs(x), t_span, x0, method='RK45',
                       t_eval=t_eval, rtol=REFERENCE_RTOL, atol=REFERENCE_ATOL,
                       events=events)
    if result.status == -1:
        raise InvalidArgumentError(f"reference integration failed: {result.message}")
    file_log.debug(f"Reference trajectory: {result.t.shape[0]} points, status {result.status}")
    return Path(result.t, result.y.T)
