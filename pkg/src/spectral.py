"""
Discrete sine, cosine and Fourier transforms on vertex grids.

Conventions used throughout the package:

* Forward transforms are unnormalized sums; inverses carry the 1/n factors
  (scipy.fft defaults).
* Sine transforms act on interior vertices only (boundary values are zero
  in the Dirichlet basis). Index 0 of a sine axis is mode 1.
* Cosine transforms act on all vertices (DCT-I), which diagonalizes the
  ghost-point Neumann Laplacian.
* Truncated periodic spectra are stored compactly in wrapped order: the
  retained modes of an axis of length n are [0..k_max, n-k_max..n-1].
  Half spectra (real input) keep only [0..k_max] on the last axis.

Complex coefficients are stored as complex128 arrays.
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sfft

from .field import Domain, GridField

SINE = "sine"
COSINE = "cosine"
PERIODIC_FULL = "periodic-full"
PERIODIC_TRUNCATED = "periodic-truncated"

AxesLike = Optional[Sequence[int]]
ResLike = Union[int, Sequence[int]]


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    """Transform coefficients with the grid shape they came from."""
    kind: str
    values: np.ndarray
    grid_shape: Tuple[int, ...]
    axes: Tuple[int, ...]
    k_max: Optional[int] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape


def _axes(x: np.ndarray, axes: AxesLike) -> Tuple[int, ...]:
    return tuple(range(x.ndim)) if axes is None else tuple(axes)


def _interior(x: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
    index = [slice(None)] * x.ndim
    for ax in axes:
        index[ax] = slice(1, -1)
    return x[tuple(index)]


def _embed_interior(c: np.ndarray, axes: Tuple[int, ...]) -> np.ndarray:
    pad = [(0, 0)] * c.ndim
    for ax in axes:
        pad[ax] = (1, 1)
    return np.pad(c, pad)


# --- eigenvalues of the 5-point Laplacian, per axis ---

def sine_eigenvalues(m: int, h: float) -> np.ndarray:
    """Dirichlet eigenvalues (4/h²)sin²(jπh/2), j = 1..m-2."""
    j = np.arange(1, m - 1)
    return (4.0 / h**2) * np.sin(0.5 * j * np.pi * h) ** 2


def cosine_eigenvalues(m: int, h: float) -> np.ndarray:
    """Neumann eigenvalues (4/h²)sin²(jπ/(2(m-1))), j = 0..m-1."""
    j = np.arange(m)
    return (4.0 / h**2) * np.sin(0.5 * j * np.pi / (m - 1)) ** 2


def eigenvalue_grid(per_axis: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of per-axis eigenvalues broadcast to the tensor mode grid."""
    total = np.zeros(())
    for lam in per_axis:
        total = np.add.outer(total, lam)
    return total


# --- raw array transforms ---

def dst_array(x: np.ndarray, axes: AxesLike = None) -> np.ndarray:
    axes = _axes(x, axes)
    return sfft.dstn(_interior(x, axes), type=1, axes=axes)


def idst_array(c: np.ndarray, axes: AxesLike = None) -> np.ndarray:
    axes = _axes(c, axes)
    return _embed_interior(sfft.idstn(c, type=1, axes=axes), axes)


def dct_array(x: np.ndarray, axes: AxesLike = None) -> np.ndarray:
    return sfft.dctn(x, type=1, axes=_axes(x, axes))


def idct_array(c: np.ndarray, axes: AxesLike = None) -> np.ndarray:
    return sfft.idctn(c, type=1, axes=_axes(c, axes))


def sine_synthesis(coeffs: np.ndarray, axes: AxesLike = None) -> np.ndarray:
    """
    Σ c_j ∏ √2 sin(j_i π x_i) on the full vertex grid.

    The basis is orthonormal under the trapezoid inner product of the unit
    box, so coefficient variances carry over to L² variances unchanged.
    """
    axes = _axes(coeffs, axes)
    scaled = np.array(coeffs, dtype=np.float64)
    for ax in axes:
        scaled = scaled * (np.sqrt(2.0) * (coeffs.shape[ax] + 1))
    return idst_array(scaled, axes)


def cosine_synthesis(coeffs: np.ndarray, axes: AxesLike = None) -> np.ndarray:
    """
    Σ a_j ∏ φ_j(x_i) with φ_0 = 1, φ_M = cos(πMx), φ_j = √2 cos(jπx) else.

    Orthonormal under the trapezoid inner product, M = m-1 per axis.
    """
    axes = _axes(coeffs, axes)
    scaled = np.array(coeffs, dtype=np.float64)
    for ax in axes:
        m = coeffs.shape[ax]
        factor = np.full(m, np.sqrt(2.0) * (m - 1))
        factor[0] = factor[-1] = 2.0 * (m - 1)
        shape = [1] * coeffs.ndim
        shape[ax] = m
        scaled = scaled * factor.reshape(shape)
    return idct_array(scaled, axes)


def mode_indices(n: int, k_max: int) -> np.ndarray:
    """Wrapped indices of the modes |k| ≤ k_max on an axis of length n."""
    if k_max >= n / 2:
        raise ValueError(f"k_max={k_max} needs a resolution above {2 * k_max}, got {n}")
    return np.r_[0:k_max + 1, n - k_max:n]


def rfft_modes(x: np.ndarray, k_max: int, ndim: int) -> np.ndarray:
    """
    Truncated half spectrum over the last `ndim` axes of a real array.

    Output extents: 2k_max+1 on the leading transformed axes, k_max+1 on the
    last one.
    """
    axes = tuple(range(x.ndim - ndim, x.ndim))
    mode_indices(x.shape[axes[-1]], k_max)  # validates the last axis
    spectrum = sfft.rfftn(x, axes=axes)
    for ax in axes[:-1]:
        spectrum = np.take(spectrum, mode_indices(x.shape[ax], k_max), axis=ax)
    return spectrum[..., :k_max + 1]


def irfft_modes(z: np.ndarray, k_max: int, grid_shape: Sequence[int]) -> np.ndarray:
    """Real inverse of a compact half spectrum onto `grid_shape`."""
    grid_shape = tuple(grid_shape)
    ndim = len(grid_shape)
    lead = z.shape[:z.ndim - ndim]
    full = np.zeros(lead + grid_shape[:-1] + (grid_shape[-1] // 2 + 1,), dtype=np.complex128)
    mode_indices(grid_shape[-1], k_max)  # validates the last axis
    index = ([np.arange(s) for s in lead]
             + [mode_indices(n, k_max) for n in grid_shape[:-1]]
             + [np.arange(k_max + 1)])
    full[np.ix_(*index)] = z
    axes = tuple(range(len(lead), len(lead) + ndim))
    return sfft.irfftn(full, s=grid_shape, axes=axes)


def half_mode_weights(k_max: int, ndim: int) -> np.ndarray:
    """Multiplicity of each half-spectrum mode in the full spectrum."""
    w = np.full(k_max + 1, 2.0)
    w[0] = 1.0
    return w.reshape((1,) * (ndim - 1) + (k_max + 1,))


def proportional_pad(n: int, pad_to: int, train_resolution: int) -> int:
    """
    Padded length of an axis with n vertices, keeping the periodic box of
    pad_to points at train_resolution vertices fixed in physical length.
    """
    if train_resolution < 2 or pad_to < train_resolution:
        raise ValueError(f"pad_to={pad_to} must be >= train_resolution={train_resolution} >= 2")
    return max(n, int(math.floor((n - 1) * pad_to / (train_resolution - 1) + 0.5)))


def pad_trailing(x: np.ndarray, target: Sequence[int]) -> np.ndarray:
    """Zero-pad the trailing axes on their high side up to `target`."""
    target = tuple(target)
    lead = x.ndim - len(target)
    pad = [(0, 0)] * lead
    for n, t in zip(x.shape[lead:], target):
        if t < n:
            raise ValueError(f"Cannot pad extent {n} down to {t}")
        pad.append((0, t - n))
    return np.pad(x, pad)


def crop_trailing(x: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    return x[(Ellipsis,) + tuple(slice(0, n) for n in shape)]


# --- GridField-level transforms ---

def dst(a: GridField, axes: AxesLike = None) -> SpectralCoeffs:
    axes = _axes(a.values, axes)
    return SpectralCoeffs(SINE, dst_array(a.values, axes).astype(np.complex128),
                          a.domain.shape, axes)


def idst(c: SpectralCoeffs, domain: Domain) -> GridField:
    _check_kind(c, SINE)
    return GridField(domain, idst_array(c.values.real, c.axes))


def dct(a: GridField, axes: AxesLike = None) -> SpectralCoeffs:
    axes = _axes(a.values, axes)
    return SpectralCoeffs(COSINE, dct_array(a.values, axes).astype(np.complex128),
                          a.domain.shape, axes)


def idct(c: SpectralCoeffs, domain: Domain) -> GridField:
    _check_kind(c, COSINE)
    return GridField(domain, idct_array(c.values.real, c.axes))


def fft_full(a: GridField) -> SpectralCoeffs:
    axes = tuple(range(a.domain.ndims))
    return SpectralCoeffs(PERIODIC_FULL, sfft.fftn(a.values, axes=axes), a.domain.shape, axes)


def fft_trunc(a: GridField, k_max: int) -> SpectralCoeffs:
    """Modes with every |k_i| ≤ k_max of the periodic extension of `a`."""
    values = sfft.fftn(a.values)
    for ax, n in enumerate(a.domain.shape):
        values = np.take(values, mode_indices(n, k_max), axis=ax)
    return SpectralCoeffs(PERIODIC_TRUNCATED, values, a.domain.shape,
                          tuple(range(a.domain.ndims)), k_max)


def _scatter(c: SpectralCoeffs, shape: Tuple[int, ...]) -> np.ndarray:
    if c.kind == PERIODIC_FULL:
        if c.values.shape != shape:
            raise ValueError(f"Full spectrum of shape {c.values.shape} cannot fill {shape}")
        return c.values
    _check_kind(c, PERIODIC_TRUNCATED)
    full = np.zeros(shape, dtype=np.complex128)
    full[np.ix_(*[mode_indices(n, c.k_max) for n in shape])] = c.values
    return full


def ifft_trunc(c: SpectralCoeffs, target: Domain) -> GridField:
    """Real part of the inverse transform of the retained modes on `target`."""
    return GridField(target, sfft.ifftn(_scatter(c, target.shape)).real)


def fft_trunc_adjoint(c: SpectralCoeffs, target: Domain) -> GridField:
    """Adjoint of fft_trunc for the plain Euclidean pairing of grid values."""
    full = _scatter(c, target.shape)
    return GridField(target, full.size * sfft.ifftn(full).real)


def hermitian_defect(c: SpectralCoeffs) -> float:
    """max |c(k) - conj(c(-k))| of a full periodic spectrum."""
    _check_kind(c, PERIODIC_FULL)
    mirrored = np.conj(c.values)
    for ax in range(mirrored.ndim):
        mirrored = np.roll(np.flip(mirrored, axis=ax), 1, axis=ax)
    return float(np.max(np.abs(c.values - mirrored)))


def _normalize_res(res: ResLike, ndims: int) -> Tuple[int, ...]:
    if isinstance(res, (int, np.integer)):
        return (int(res),) * ndims
    res = tuple(int(r) for r in res)
    if len(res) != ndims:
        raise ValueError(f"Expected {ndims} resolutions, got {res}")
    return res


def pad_extend(a: GridField, target_res: ResLike) -> GridField:
    """
    Zero-extend `a` on the high side of every axis to `target_res` points.

    The padded box keeps the grid spacing, so its extent grows.
    """
    src = a.domain
    target = _normalize_res(target_res, src.ndims)
    if any(t < m for t, m in zip(target, src.shape)):
        raise ValueError(f"Target resolution {target} is smaller than {src.shape}")
    extent = tuple(h * (t - 1) for h, t in zip(src.spacing, target))
    return GridField(Domain(target, extent, src.has_time), pad_trailing(a.values, target))


def crop(a: GridField, orig: Domain) -> GridField:
    if any(m > n for m, n in zip(orig.shape, a.domain.shape)):
        raise ValueError(f"Cannot crop {a.domain.shape} to {orig.shape}")
    return GridField(orig, crop_trailing(a.values, orig.shape))


def _check_kind(c: SpectralCoeffs, kind: str) -> None:
    if c.kind != kind:
        raise ValueError(f"Expected {kind} coefficients, got {c.kind}")
