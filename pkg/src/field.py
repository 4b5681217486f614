"""
Uniform-grid fields and their discrete L2 geometry.

Fields are sampled on vertex-centered grids over the unit square Ω = (0,1)²
or over the space-time box Ω × [0, T_f]. Arrays are row-major with the time
axis first (slowest) when present.

The inner product is the tensor trapezoid rule: interior vertices carry the
full cell volume, boundary vertices half of it per touching axis.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import config

MIN_RESOLUTION = 4


@dataclass(frozen=True)
class Domain:
    """Box geometry of a vertex-centered grid."""
    resolution: Tuple[int, ...]
    extent: Tuple[float, ...]
    has_time: bool = False

    def __post_init__(self):
        resolution = tuple(int(m) for m in self.resolution)
        extent = tuple(float(e) for e in self.extent)
        object.__setattr__(self, "resolution", resolution)
        object.__setattr__(self, "extent", extent)

        if len(resolution) != len(extent):
            raise ValueError(
                f"resolution {resolution} and extent {extent} differ in length"
            )
        if len(resolution) not in (2, 3):
            raise ValueError(f"Only 2-D and 3-D boxes are supported, got {len(resolution)} axes")
        if self.has_time and len(resolution) != 3:
            raise ValueError("A space-time domain needs exactly three axes")
        if any(m < MIN_RESOLUTION for m in resolution):
            raise ValueError(
                f"All resolutions must be >= {MIN_RESOLUTION}, got {resolution}"
            )
        if any(e <= 0.0 for e in extent):
            raise ValueError(f"Extents must be positive, got {extent}")

    @classmethod
    def square(cls, m: int, extent: float = 1.0) -> "Domain":
        return cls((m, m), (extent, extent))

    @classmethod
    def space_time(cls, m: int, m_t: int, final_time: float = 1.0) -> "Domain":
        return cls((m_t, m, m), (final_time, 1.0, 1.0), has_time=True)

    @property
    def ndims(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.resolution

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(e / (m - 1) for e, m in zip(self.extent, self.resolution))

    @property
    def spatial_axes(self) -> Tuple[int, ...]:
        return (1, 2) if self.has_time else tuple(range(self.ndims))

    def with_resolution(self, resolution: Sequence[int]) -> "Domain":
        return Domain(tuple(resolution), self.extent, self.has_time)

    def axis_coordinates(self, axis: int) -> np.ndarray:
        return np.linspace(0.0, self.extent[axis], self.resolution[axis])

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        axes = [self.axis_coordinates(i) for i in range(self.ndims)]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights of the trapezoid rule, shaped like the grid."""
        w = np.ones(())
        for m, h in zip(self.resolution, self.spacing):
            axis_w = np.full(m, h)
            axis_w[0] = axis_w[-1] = 0.5 * h
            w = np.multiply.outer(w, axis_w)
        w.setflags(write=False)
        return w


@dataclass(frozen=True, eq=False)
class GridField:
    """Real-valued function sampled on a Domain."""
    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != self.domain.shape:
            if values.size != self.domain.size:
                raise ValueError(
                    f"values of shape {values.shape} do not fit domain {self.domain.shape}"
                )
            values = values.reshape(self.domain.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("GridField values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, domain: Domain) -> "GridField":
        return cls(domain, np.zeros(domain.shape))

    @classmethod
    def constant(cls, domain: Domain, value: float) -> "GridField":
        return cls(domain, np.full(domain.shape, float(value)))

    @classmethod
    def from_function(cls, domain: Domain, fn: Callable[..., np.ndarray]) -> "GridField":
        """Sample fn(*coordinates) with coordinates ordered like the axes."""
        values = np.broadcast_to(fn(*domain.coordinates()), domain.shape)
        return cls(domain, values)

    def like(self, values: np.ndarray) -> "GridField":
        return GridField(self.domain, values)

    def __add__(self, other: "GridField") -> "GridField":
        _check_same_domain(self, other)
        return self.like(self.values + other.values)

    def __sub__(self, other: "GridField") -> "GridField":
        _check_same_domain(self, other)
        return self.like(self.values - other.values)

    def __neg__(self) -> "GridField":
        return self.like(-self.values)

    def __mul__(self, scalar: float) -> "GridField":
        return self.like(self.values * float(scalar))

    __rmul__ = __mul__


def _check_same_domain(a: GridField, b: GridField) -> None:
    if a.domain != b.domain:
        raise ValueError(f"Domain mismatch: {a.domain} vs {b.domain}")


def weighted_inner(domain: Domain, x: np.ndarray, y: np.ndarray) -> float:
    """Trapezoid inner product of two raw arrays on `domain`."""
    return float(np.sum(domain.weights * x * y))


def weighted_norm(domain: Domain, x: np.ndarray) -> float:
    return float(np.sqrt(max(weighted_inner(domain, x, x), 0.0)))


def inner_product(a: GridField, b: GridField) -> float:
    _check_same_domain(a, b)
    return weighted_inner(a.domain, a.values, b.values)


def norm_l2(a: GridField) -> float:
    return weighted_norm(a.domain, a.values)


def relative_error(u_hat: GridField, u_star: GridField,
                   eps_floor: Optional[float] = None) -> float:
    """‖u_hat − u_star‖ / max(‖u_star‖, eps_floor)."""
    _check_same_domain(u_hat, u_star)
    floor = config.EPS_FLOOR if eps_floor is None else eps_floor
    diff = weighted_norm(u_hat.domain, u_hat.values - u_star.values)
    return diff / max(norm_l2(u_star), floor)


def resample(a: GridField, target: Domain) -> GridField:
    """Multilinear interpolation of `a` onto the grid of `target`."""
    source = a.domain
    if source.ndims != target.ndims or source.has_time != target.has_time:
        raise ValueError(f"Cannot resample {source} onto {target}")
    if not np.allclose(source.extent, target.extent, rtol=0.0, atol=1e-12):
        raise ValueError(
            f"Extent mismatch: {source.extent} vs {target.extent}"
        )
    if source == target:
        return a

    axes = [source.axis_coordinates(i) for i in range(source.ndims)]
    interpolator = RegularGridInterpolator(
        axes, a.values, method="linear", bounds_error=False, fill_value=None
    )
    points = np.stack([c.ravel() for c in target.coordinates()], axis=-1)
    return GridField(target, interpolator(points).reshape(target.shape))
