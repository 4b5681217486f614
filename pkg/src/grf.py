"""
Gaussian random fields with Matérn-type spectra.

Samples are Karhunen-Loève sums over the eigenvectors of the discrete
Laplacian: mode k gets an independent standard normal weight scaled by
amplitude·(λ_k + shift)^(-exponent). Dirichlet laws use the sine basis,
Neumann laws the cosine basis, and mixed laws average one independent draw
of each with weight 1/√2. Space-time domains use the same basis type along
the time axis.

Random streams come from Philox generators seeded through SeedSequence, so
a (seed, stream) pair gives the same numbers on every platform.
"""
from dataclasses import dataclass
from functools import reduce
from typing import Sequence, Tuple

import numpy as np

from .field import Domain, GridField
from .spectral import (
    cosine_eigenvalues,
    cosine_synthesis,
    eigenvalue_grid,
    sine_eigenvalues,
    sine_synthesis,
)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
MIXED = "mixed"


@dataclass(frozen=True)
class RngState:
    """Splittable counter-based generator state."""
    seed: int
    stream: Tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(sequence))

    def spawn(self, index: int) -> "RngState":
        return RngState(self.seed, self.stream + (int(index),))


@dataclass(frozen=True)
class GrfLaw:
    bc: str
    exponent: float
    shift: float = 9.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.bc not in (DIRICHLET, NEUMANN, MIXED):
            raise ValueError(f"Unknown boundary condition {self.bc!r}")
        if self.exponent <= 0 or self.shift <= 0:
            raise ValueError(f"exponent and shift must be positive, got {self.exponent}, {self.shift}")

    def with_amplitude(self, amplitude: float) -> "GrfLaw":
        return GrfLaw(self.bc, self.exponent, self.shift, amplitude)


def mode_scales(law: GrfLaw, domain: Domain, bc: str) -> np.ndarray:
    """Standard deviation of every basis coefficient for one basis type."""
    eig = sine_eigenvalues if bc == DIRICHLET else cosine_eigenvalues
    lam = eigenvalue_grid([eig(m, h) for m, h in zip(domain.shape, domain.spacing)])
    return law.amplitude * (lam + law.shift) ** (-law.exponent)


def _draw(law: GrfLaw, domain: Domain, bc: str, rng: np.random.Generator) -> np.ndarray:
    scales = mode_scales(law, domain, bc)
    coeffs = scales * rng.standard_normal(scales.shape)
    if bc == DIRICHLET:
        return sine_synthesis(coeffs)
    return cosine_synthesis(coeffs)


def sample_grf(law: GrfLaw, domain: Domain, rng: np.random.Generator) -> GridField:
    if law.bc == MIXED:
        values = (_draw(law, domain, DIRICHLET, rng) + _draw(law, domain, NEUMANN, rng)) / np.sqrt(2.0)
    else:
        values = _draw(law, domain, law.bc, rng)
    return GridField(domain, values)


def _basis_values(bc: str, m: int, index: int) -> np.ndarray:
    """All normalized basis functions of one axis evaluated at vertex `index`."""
    x = index / (m - 1)
    if bc == DIRICHLET:
        j = np.arange(1, m - 1)
        return np.sqrt(2.0) * np.sin(j * np.pi * x)
    j = np.arange(m)
    values = np.sqrt(2.0) * np.cos(j * np.pi * x)
    values[0] = 1.0
    values[-1] = np.cos((m - 1) * np.pi * x)
    return values


def grf_covariance(law: GrfLaw, domain: Domain,
                   i: Sequence[int], j: Sequence[int]) -> float:
    """Analytic covariance between grid points with multi-indices i and j."""
    def single(bc: str) -> float:
        per_axis = [_basis_values(bc, m, a) * _basis_values(bc, m, b)
                    for m, a, b in zip(domain.shape, i, j)]
        return float(np.sum(mode_scales(law, domain, bc) ** 2 * reduce(np.multiply.outer, per_axis)))

    if law.bc == MIXED:
        return 0.5 * (single(DIRICHLET) + single(NEUMANN))
    return single(law.bc)


BOUND_LAW = GrfLaw(MIXED, 2.0)


def sample_bounds(domain: Domain, rng: np.random.Generator,
                  amplitude: float = 1.0) -> Tuple[GridField, GridField]:
    """
    u_a = min(a + v, 0), u_b = max(b + w, 0) with a ~ U(-10, -1),
    b ~ U(1, 10) and v, w from the mixed exponent-2 law.
    """
    a = rng.uniform(-10.0, -1.0)
    b = rng.uniform(1.0, 10.0)
    law = BOUND_LAW.with_amplitude(amplitude)
    v = sample_grf(law, domain, rng)
    w = sample_grf(law, domain, rng)
    lower = np.minimum(a + v.values, 0.0)
    upper = np.maximum(b + w.values, 0.0)
    return GridField(domain, lower), GridField(domain, upper)
