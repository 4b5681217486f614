"""
Define-by-run reverse-mode differentiation over numpy arrays.

Every primitive computes its forward value with numpy and, when the tape
records, appends a node holding its parents and a vector-Jacobian closure.
`backward` walks the nodes once in reverse order.

Fields are stored channel-first: a tensor of shape [C, *grid]. Spectral
weights are complex per retained half-spectrum mode and are held as two
real tensors (real and imaginary part); gradients follow the convention
∂L/∂Re + i·∂L/∂Im.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import erf

from .spectral import crop_trailing, half_mode_weights, irfft_modes, pad_trailing, rfft_modes

VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


@dataclass
class _Node:
    op: str
    parents: Tuple[int, ...]
    vjp: Optional[VJP]


@dataclass(eq=False)
class Tensor:
    data: np.ndarray
    tape: "Tape"
    index: int
    name: Optional[str] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape


class Tape:
    """
    Append-only list of nodes. Parents always precede their children.

    A tape created with record=False computes forward values only.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: List[_Node] = []
        self.params: Dict[str, Tensor] = {}

    def _push(self, op: str, data: np.ndarray, parents: Sequence[Tensor] = (),
              vjp: Optional[VJP] = None, name: Optional[str] = None) -> Tensor:
        for parent in parents:
            if parent.tape is not self:
                raise ValueError(f"{op}: operand recorded on another tape")
        if not self.record:
            return Tensor(data, self, -1, name)
        self.nodes.append(_Node(op, tuple(p.index for p in parents), vjp))
        return Tensor(data, self, len(self.nodes) - 1, name)

    def param(self, name: str, array: np.ndarray) -> Tensor:
        """Leaf tensor for a named parameter, created once per tape."""
        if name not in self.params:
            self.params[name] = self._push("param", np.asarray(array, dtype=np.float64), name=name)
        return self.params[name]

    def constant(self, array: np.ndarray) -> Tensor:
        return self._push("const", np.asarray(array, dtype=np.float64))


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# --- elementwise ---

def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)
    return a.tape._push("add", a.data + b.data, (a, b),
                        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a, b)
    return a.tape._push("sub", a.data - b.data, (a, b),
                        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return a.tape._push("scale", c * a.data, (a,), lambda g: (c * g,))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("hadamard", a, b)
    return a.tape._push(
        "hadamard", a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def divide(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("divide", a, b)
    out = a.data / b.data
    return a.tape._push(
        "divide", out, (a, b),
        lambda g: (_unbroadcast(g / b.data, a.shape),
                   _unbroadcast(-g * out / b.data, b.shape)),
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return x.tape._push("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def gelu(x: Tensor) -> Tensor:
    """x·Φ(x) with the exact Gaussian CDF."""
    cdf = 0.5 * (1.0 + erf(x.data / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data**2) / np.sqrt(2.0 * np.pi)
    return x.tape._push("gelu", x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),))


def abs(x: Tensor) -> Tensor:  # noqa: A001
    sign = np.sign(x.data)
    return x.tape._push("abs", np.abs(x.data), (x,), lambda g: (g * sign,))


def max_scalar(x: Tensor, c: float) -> Tensor:
    """max(x, c) elementwise; the gradient passes only where x > c."""
    mask = x.data > c
    return x.tape._push("max_scalar", np.where(mask, x.data, c), (x,), lambda g: (g * mask,))


# --- reductions ---

def sum(x: Tensor) -> Tensor:  # noqa: A001
    return x.tape._push("sum", np.array(x.data.sum()), (x,),
                        lambda g: (np.broadcast_to(g, x.shape).copy(),))


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return x.tape._push("mean", np.array(x.data.mean()), (x,),
                        lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


# --- channel algebra ---

def channel_matmul(w: Tensor, x: Tensor, transpose: bool = False) -> Tensor:
    """Pointwise channel mixing y = W x (or Wᵀ x) for x of shape [in, *grid]."""
    if w.data.ndim != 2:
        raise ValueError(f"channel_matmul: weights must be 2-D, got {w.shape}")
    n_in = w.shape[0] if transpose else w.shape[1]
    if x.shape[0] != n_in:
        raise ValueError(f"channel_matmul: weights {w.shape} cannot act on {x.shape[0]} channels")

    if transpose:
        out = np.einsum('io,i...->o...', w.data, x.data)
        vjp = lambda g: (np.einsum('o...,i...->io', g, x.data),
                         np.einsum('io,o...->i...', w.data, g))
    else:
        out = np.einsum('oi,i...->o...', w.data, x.data)
        vjp = lambda g: (np.einsum('o...,i...->oi', g, x.data),
                         np.einsum('oi,o...->i...', w.data, g))
    return x.tape._push("channel_matmul", out, (w, x), vjp)


def bias_broadcast(x: Tensor, b: Tensor) -> Tensor:
    if b.data.ndim != 1 or b.shape[0] != x.shape[0]:
        raise ValueError(f"bias_broadcast: bias {b.shape} does not match {x.shape[0]} channels")
    expand = (slice(None),) + (None,) * (x.data.ndim - 1)
    grid_axes = tuple(range(1, x.data.ndim))
    return x.tape._push("bias", x.data + b.data[expand], (x, b),
                        lambda g: (g, g.sum(axis=grid_axes)))


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    grids = {p.shape[1:] for p in parts}
    if len(grids) != 1:
        raise ValueError(f"concat_channels: grid shapes differ: {sorted(grids)}")
    splits = np.cumsum([p.shape[0] for p in parts])[:-1]
    return parts[0].tape._push("concat", np.concatenate([p.data for p in parts], axis=0),
                               tuple(parts), lambda g: tuple(np.split(g, splits, axis=0)))


def pad(x: Tensor, grid: Sequence[int]) -> Tensor:
    """Zero-pad the grid axes of x on their high side."""
    original = x.shape[1:]
    return x.tape._push("pad", pad_trailing(x.data, grid), (x,),
                        lambda g: (crop_trailing(g, original).copy(),))


def crop(x: Tensor, grid: Sequence[int]) -> Tensor:
    padded = x.shape[1:]
    return x.tape._push("crop", crop_trailing(x.data, grid).copy(), (x,),
                        lambda g: (pad_trailing(g, padded),))


# --- spectral ---

def _check_modes(op: str, w: Tensor, x: Tensor, k_max: int, ndim: int) -> None:
    expected = (2 * k_max + 1,) * (ndim - 1) + (k_max + 1,)
    if w.shape[:ndim] != expected:
        raise ValueError(f"{op}: weights of shape {w.shape} do not hold modes {expected}")


def spectral_linear(x: Tensor, w_re: Tensor, w_im: Tensor, k_max: int) -> Tensor:
    """
    F⁻¹(R · F_kmax x): truncated real FFT, per-mode complex matrix
    [*modes, out, in], real inverse FFT.
    """
    grid = x.shape[1:]
    ndim = len(grid)
    _check_modes("spectral_linear", w_re, x, k_max, ndim)
    if w_re.shape != w_im.shape or w_re.shape[-1] != x.shape[0]:
        raise ValueError(f"spectral_linear: weights {w_re.shape} cannot act on {x.shape}")

    r = w_re.data + 1j * w_im.data
    x_hat = rfft_modes(x.data, k_max, ndim)
    z = np.einsum('...oi,i...->o...', r, x_hat)
    out = irfft_modes(z, k_max, grid)

    def vjp(g):
        n = int(np.prod(grid))
        cw = half_mode_weights(k_max, ndim)
        z_bar = (cw / n) * rfft_modes(g, k_max, ndim)
        r_bar = np.einsum('o...,i...->...oi', z_bar, np.conj(x_hat))
        x_hat_bar = np.einsum('...oi,o...->i...', np.conj(r), z_bar)
        x_bar = n * irfft_modes(x_hat_bar / cw, k_max, grid)
        return x_bar, r_bar.real.copy(), r_bar.imag.copy()

    return x.tape._push("spectral_linear", out, (x, w_re, w_im), vjp)


def spectral_gram(x: Tensor, phi_re: Tensor, phi_im: Tensor, k_max: int) -> Tensor:
    """F⁻¹(ΦᴴΦ · F_kmax x): Hermitian positive semidefinite per mode."""
    grid = x.shape[1:]
    ndim = len(grid)
    _check_modes("spectral_gram", phi_re, x, k_max, ndim)
    if phi_re.shape != phi_im.shape or phi_re.shape[-1] != x.shape[0]:
        raise ValueError(f"spectral_gram: weights {phi_re.shape} cannot act on {x.shape}")

    phi = phi_re.data + 1j * phi_im.data
    x_hat = rfft_modes(x.data, k_max, ndim)
    y_hat = np.einsum('...oi,i...->o...', phi, x_hat)
    z = np.einsum('...oi,o...->i...', np.conj(phi), y_hat)
    out = irfft_modes(z, k_max, grid)

    def vjp(g):
        n = int(np.prod(grid))
        cw = half_mode_weights(k_max, ndim)
        z_bar = (cw / n) * rfft_modes(g, k_max, ndim)
        y_bar = np.einsum('...oi,i...->o...', phi, z_bar)
        phi_bar = (np.einsum('o...,i...->...oi', y_hat, np.conj(z_bar))
                   + np.einsum('o...,i...->...oi', y_bar, np.conj(x_hat)))
        x_hat_bar = np.einsum('...oi,o...->i...', np.conj(phi), y_bar)
        x_bar = n * irfft_modes(x_hat_bar / cw, k_max, grid)
        return x_bar, phi_bar.real.copy(), phi_bar.imag.copy()

    return x.tape._push("spectral_gram", out, (x, phi_re, phi_im), vjp)


# --- reverse pass ---

def backward(tape: Tape, loss: Tensor) -> Dict[str, np.ndarray]:
    """
    Gradients of a scalar loss with respect to every parameter of the tape.

    Parameters the loss does not depend on receive zeros.
    """
    if not tape.record:
        raise ValueError("backward needs a recording tape")
    if loss.tape is not tape:
        raise ValueError("loss was recorded on another tape")
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {loss.index: np.ones_like(loss.data)}
    for index in range(loss.index, -1, -1):
        g = grads.get(index)
        node = tape.nodes[index]
        if g is None or node.vjp is None:
            continue
        for parent, contribution in zip(node.parents, node.vjp(g)):
            if contribution is None:
                continue
            if parent in grads:
                grads[parent] = grads[parent] + contribution
            else:
                grads[parent] = contribution

    return {
        name: grads.get(t.index, np.zeros_like(t.data)).reshape(t.shape)
        for name, t in tape.params.items()
    }
