"""
Pointwise resolvents u = (N + τI + ∂θ)⁻¹ v.

N is the multiplication operator by λ(x) and θ(u) = ∫ ψ(u(x)) dx with

- none:   ψ = 0
- box:    ψ = indicator of [u_a(x), u_b(x)]
- l1box:  ψ = β|r| + indicator of [u_a(x), u_b(x)]

so the resolvent is the pointwise argmin of ½(λ+τ)r² - v r + ψ(r).
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .field import Domain, GridField, weighted_inner, weighted_norm

NONE = "none"
BOX = "box"
L1BOX = "l1box"
VARIANTS = (NONE, BOX, L1BOX)


@dataclass(frozen=True, eq=False)
class RegularizerSpec:
    """Regularizer family with its pointwise data μ(x) = (u_a, u_b[, β])."""
    variant: str
    beta: float = 0.0
    lower: Optional[GridField] = None
    upper: Optional[GridField] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"Unknown regularizer {self.variant!r}, expected one of {VARIANTS}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.variant == NONE:
            return
        if self.lower is None or self.upper is None:
            raise ValueError(f"{self.variant} regularizer needs both bound fields")
        if self.lower.domain != self.upper.domain:
            raise ValueError("Bound fields live on different domains")
        if np.any(self.lower.values > self.upper.values):
            worst = float(np.max(self.lower.values - self.upper.values))
            raise ValueError(f"u_a > u_b at some grid points (max excess {worst:.3g})")

    @classmethod
    def none(cls) -> "RegularizerSpec":
        return cls(NONE)

    @classmethod
    def box(cls, lower: GridField, upper: GridField) -> "RegularizerSpec":
        return cls(BOX, 0.0, lower, upper)

    @classmethod
    def l1box(cls, lower: GridField, upper: GridField, beta: float) -> "RegularizerSpec":
        return cls(L1BOX, beta, lower, upper)

    @property
    def has_bounds(self) -> bool:
        return self.variant != NONE

    @property
    def domain(self) -> Optional[Domain]:
        return self.lower.domain if self.has_bounds else None

    def penalty(self, u: np.ndarray, domain: Domain) -> float:
        """θ(u); +inf outside the feasible box."""
        if self.variant == NONE:
            return 0.0
        if np.any(u < self.lower.values) or np.any(u > self.upper.values):
            return float("inf")
        if self.variant == L1BOX:
            return self.beta * float(np.sum(domain.weights * np.abs(u)))
        return 0.0


@dataclass(frozen=True, eq=False)
class MultiplierSpec:
    """N = λ(x)·I and the proximal shift τ."""
    lam: Union[float, GridField]
    tau: float = 0.0

    def values(self) -> Union[float, np.ndarray]:
        return self.lam.values if isinstance(self.lam, GridField) else float(self.lam)

    @property
    def c0(self) -> float:
        """Essential infimum of λ."""
        return float(np.min(self.values()))


def soft_threshold(v: np.ndarray, beta: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - beta, 0.0)


def resolvent_array(reg: RegularizerSpec, mult: MultiplierSpec, v: np.ndarray) -> np.ndarray:
    """Closed-form resolvent on raw arrays."""
    scale = mult.values() + mult.tau
    if np.any(np.asarray(scale) <= 0):
        raise ValueError(f"λ + τ must be positive, got min {float(np.min(scale))}")

    if reg.variant == NONE:
        return v / scale
    if reg.variant == BOX or reg.beta == 0.0:
        return np.clip(v / scale, reg.lower.values, reg.upper.values)
    return np.clip(soft_threshold(v, reg.beta) / scale, reg.lower.values, reg.upper.values)


def resolvent(reg: RegularizerSpec, mult: MultiplierSpec, v: GridField) -> GridField:
    if reg.has_bounds and reg.domain != v.domain:
        raise ValueError("Regularizer bounds and input live on different domains")
    if isinstance(mult.lam, GridField) and mult.lam.domain != v.domain:
        raise ValueError("Multiplier field and input live on different domains")
    return GridField(v.domain, resolvent_array(reg, mult, v.values))


@dataclass
class FirmNonexpansivenessReport:
    """Outcome of the randomized monotonicity/Lipschitz check."""
    trials: int
    violations: int
    worst_monotone_margin: float
    worst_lipschitz_margin: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def firm_nonexpansiveness_check(reg: RegularizerSpec, mult: MultiplierSpec,
                                trials: int, seed: int = 0,
                                domain: Optional[Domain] = None,
                                slack: float = 1e-10) -> FirmNonexpansivenessReport:
    """
    Check ⟨v₁-v₂, u₁-u₂⟩ ≥ (c₀+τ)‖u₁-u₂‖² and ‖u₁-u₂‖ ≤ ‖v₁-v₂‖/(c₀+τ)
    on random field pairs. Failures are counted, never raised.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    domain = reg.domain or domain
    if domain is None:
        raise ValueError("A domain is required when the regularizer has no bounds")

    coercivity = mult.c0 + mult.tau
    scale = coercivity
    if reg.has_bounds:
        scale *= 1.0 + max(np.max(np.abs(reg.lower.values)), np.max(np.abs(reg.upper.values)))
    rng = np.random.Generator(np.random.Philox(seed))

    violations = 0
    worst_mono = float("inf")
    worst_lip = float("inf")
    for _ in range(trials):
        v1 = scale * rng.standard_normal(domain.shape)
        v2 = scale * rng.standard_normal(domain.shape)
        du = resolvent_array(reg, mult, v1) - resolvent_array(reg, mult, v2)
        dv = v1 - v2
        mono = weighted_inner(domain, dv, du) - coercivity * weighted_norm(domain, du) ** 2
        lip = weighted_norm(domain, dv) / coercivity - weighted_norm(domain, du)
        worst_mono = min(worst_mono, mono)
        worst_lip = min(worst_lip, lip)
        if mono < -slack or lip < -slack:
            violations += 1

    if violations:
        logging.warning(f"⚠️ Resolvent failed firm nonexpansiveness in {violations}/{trials} trials")
    return FirmNonexpansivenessReport(trials, violations, worst_mono, worst_lip)


def brute_force_resolvent(v: float, lam_tau: float, lower: float, upper: float,
                          beta: float = 0.0, step: float = 1e-3,
                          psi: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> float:
    """
    Grid-search argmin of ½(λ+τ)r² - v r + ψ(r) over [lower-1, upper+1].

    ψ defaults to β|r| plus the indicator of [lower, upper]; any convex ψ
    given as a vectorized callable may be substituted.
    """
    r = np.arange(lower - 1.0, upper + 1.0 + 0.5 * step, step)
    if psi is None:
        penalty = np.where((r >= lower) & (r <= upper), beta * np.abs(r), np.inf)
    else:
        penalty = psi(r)
    objective = 0.5 * lam_tau * r**2 - v * r + penalty
    return float(r[np.argmin(objective)])
