"""
Discrete solution operators S and their adjoints.

Three PDE families are supported, all discretized by the 5-point
finite-difference Laplacian on vertex grids:

- EllipticDirichlet:    -Δy = g on Ω, y = 0 on ∂Ω
- EllipticAnisoNeumann: -∇·(a∇y) + cy = g, ∂y/∂n = 0 (ghost-point closure)
- HeatDirichlet:        ∂y/∂t - Δy = g, y = 0 on the sides, y(0) = 0,
                        implicit Euler with m_T - 1 uniform steps

Elliptic solves are exact spectral solves (DST-I / DCT-I). The heat march
runs per sine mode. Adjoints are taken with respect to the trapezoid inner
product of the field module.
"""
import logging
from dataclasses import dataclass
from typing import List, Union

import numpy as np

from . import config
from .experiment_config import ExperimentConfig
from .field import Domain, GridField, weighted_norm
from .spectral import (
    cosine_eigenvalues,
    dct_array,
    dst_array,
    eigenvalue_grid,
    idct_array,
    idst_array,
    sine_eigenvalues,
)


@dataclass(frozen=True)
class EllipticDirichlet:
    """-Δy = g with homogeneous Dirichlet boundary."""


@dataclass(frozen=True)
class EllipticAnisoNeumann:
    """-∇·(a∇y) + cy = g with a = diag(a1, a2) and homogeneous Neumann boundary."""
    a1: float = 1.0
    a2: float = 100.0
    c: float = 1.0

    def __post_init__(self):
        if self.a1 <= 0 or self.a2 <= 0:
            raise ValueError(f"Diffusion coefficients must be positive, got {self.a1}, {self.a2}")
        if self.c <= 0:
            raise ValueError(f"Reaction coefficient must be positive, got {self.c}")


@dataclass(frozen=True)
class HeatDirichlet:
    """∂y/∂t - Δy = g with zero side boundary and zero initial state."""


PdeKind = Union[EllipticDirichlet, EllipticAnisoNeumann, HeatDirichlet]


class PdeOperator:
    """
    Solution operator of one PDE on one grid.

    Eigenvalue tables are built once in the constructor; apply and
    apply_adjoint only read them afterwards.
    """

    def __init__(self, kind: PdeKind, domain: Domain):
        self.kind = kind
        self.domain = domain

        if isinstance(kind, HeatDirichlet):
            if not domain.has_time:
                raise ValueError("HeatDirichlet needs a space-time domain")
            _, hx, hy = domain.spacing
            _, mx, my = domain.shape
            lam = eigenvalue_grid([sine_eigenvalues(mx, hx), sine_eigenvalues(my, hy)])
            self.dt = domain.spacing[0]
            self._step = 1.0 / (1.0 + self.dt * lam)
            omega = np.full(domain.shape[0], self.dt)
            omega[0] = omega[-1] = 0.5 * self.dt
            self._time_weights = omega
        else:
            if domain.has_time or domain.ndims != 2:
                raise ValueError(f"{type(kind).__name__} needs a 2-D spatial domain")
            (mx, my), (hx, hy) = domain.shape, domain.spacing
            if isinstance(kind, EllipticDirichlet):
                lam = eigenvalue_grid([sine_eigenvalues(mx, hx), sine_eigenvalues(my, hy)])
            else:
                lam = (kind.a1 * cosine_eigenvalues(mx, hx)[:, None]
                       + kind.a2 * cosine_eigenvalues(my, hy)[None, :]
                       + kind.c)
            self._inverse = 1.0 / lam
        logging.debug(f"Built {type(kind).__name__} operator on {domain.shape}")

    @property
    def is_elliptic(self) -> bool:
        return not isinstance(self.kind, HeatDirichlet)

    def _check(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.domain.shape:
            raise ValueError(f"Expected shape {self.domain.shape}, got {values.shape}")
        return values

    def _spectral_apply(self, values: np.ndarray, multiplier: np.ndarray,
                        keep_boundary: bool = False) -> np.ndarray:
        if isinstance(self.kind, EllipticDirichlet):
            out = idst_array(multiplier * dst_array(values))
            if keep_boundary:
                interior = (slice(1, -1),) * 2
                kept = np.array(values)
                kept[interior] = out[interior]
                return kept
            return out
        return idct_array(multiplier * dct_array(values))

    def apply(self, values: np.ndarray) -> np.ndarray:
        """y = S g on raw grid arrays."""
        values = self._check(values)
        if self.is_elliptic:
            return self._spectral_apply(values, self._inverse)

        g_hat = dst_array(values, axes=(1, 2))
        y_hat = np.zeros_like(g_hat)
        for n in range(1, values.shape[0]):
            y_hat[n] = self._step * (y_hat[n - 1] + self.dt * g_hat[n])
        return idst_array(y_hat, axes=(1, 2))

    def apply_adjoint(self, values: np.ndarray) -> np.ndarray:
        """S* w on raw grid arrays."""
        if self.is_elliptic:
            return self.apply(values)

        values = self._check(values)
        omega = self._time_weights
        w_hat = dst_array(values, axes=(1, 2))
        q = np.zeros_like(w_hat)
        last = values.shape[0] - 1
        q[last] = self._step * omega[last] * w_hat[last]
        for j in range(last - 1, 0, -1):
            q[j] = self._step * (omega[j] * w_hat[j] + q[j + 1])
        out = np.zeros_like(w_hat)
        out[1:] = self.dt * q[1:] / omega[1:, None, None]
        return idst_array(out, axes=(1, 2))

    def schur_inverse(self, values: np.ndarray, alpha: float) -> np.ndarray:
        """(I + S S*/α)⁻¹ w; boundary values of Dirichlet problems pass through."""
        if not self.is_elliptic:
            raise ValueError("The exact Schur preconditioner is only available for elliptic problems")
        values = self._check(values)
        return self._spectral_apply(values, 1.0 / (1.0 + self._inverse**2 / alpha),
                                    keep_boundary=True)


def apply_S(op: PdeOperator, g: GridField) -> GridField:
    if g.domain != op.domain:
        raise ValueError(f"Field on {g.domain.shape} does not match operator on {op.domain.shape}")
    return GridField(op.domain, op.apply(g.values))


def apply_S_adjoint(op: PdeOperator, w: GridField) -> GridField:
    if w.domain != op.domain:
        raise ValueError(f"Field on {w.domain.shape} does not match operator on {op.domain.shape}")
    return GridField(op.domain, op.apply_adjoint(w.values))


def power_iteration(op: PdeOperator, iters: int, seed: int = 0) -> List[float]:
    """Successive estimates ‖S x_k‖/‖x_k‖ with x_{k+1} = S*S x_k."""
    if iters < 10:
        raise ValueError(f"Power iteration needs at least 10 iterations, got {iters}")
    rng = np.random.Generator(np.random.Philox(seed))
    x = rng.standard_normal(op.domain.shape)
    x /= weighted_norm(op.domain, x)

    estimates = []
    for _ in range(iters):
        y = op.apply(x)
        estimates.append(weighted_norm(op.domain, y))
        x = op.apply_adjoint(y)
        x /= weighted_norm(op.domain, x)
    return estimates


def operator_norm_estimate(op: PdeOperator, iters: int = None, seed: int = 0) -> float:
    """Power-iteration estimate of the largest singular value of S."""
    iters = config.POWER_ITERS if iters is None else iters
    return power_iteration(op, iters, seed)[-1]


def dense_matrix(op: PdeOperator, adjoint: bool = False) -> np.ndarray:
    """Assemble S (or S*) column by column in flat row-major ordering."""
    size = op.domain.size
    apply = op.apply_adjoint if adjoint else op.apply
    matrix = np.empty((size, size))
    unit = np.zeros(size)
    for i in range(size):
        unit[i] = 1.0
        matrix[:, i] = apply(unit.reshape(op.domain.shape)).ravel()
        unit[i] = 0.0
    return matrix


def kind_for_experiment(experiment: str) -> PdeKind:
    if experiment == 'elliptic-iso':
        return EllipticDirichlet()
    if experiment == 'elliptic-aniso':
        get = ExperimentConfig.get_default
        return EllipticAnisoNeumann(get(experiment, 'a1'), get(experiment, 'a2'),
                                    get(experiment, 'c'))
    if experiment == 'parabolic':
        return HeatDirichlet()
    raise KeyError(f"Unknown experiment: {experiment}")


def domain_for_experiment(experiment: str, m: int, m_t: int = None) -> Domain:
    if experiment == 'parabolic':
        return Domain.space_time(m, m if m_t is None else m_t)
    return Domain.square(m)
