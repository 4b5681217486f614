"""
Learnable modules of the unrolled network and the layer stack.

Each layer k runs

    u^{k+1} = Q_A^k(τ u^k - A^k p^k)
    p^{k+1} = p^k + Q_S^k(S^k(u^{k+1} + f) - p^k - y_d)

from (u^0, p^0) = (0, 0), where S^k and A^k are Fourier neural operators,
Q_S^k is a self-adjoint coercive spectral preconditioner and Q_A^k a
pointwise ReLU network fed with the bound fields. With weight tying all
layers read one parameter set.

Parameters are plain numpy arrays owned by small dataclasses; every array
has a dotted name (`layer0.S.fourier1.R_re`, `shared.QA.W0`, ...) under
which it is registered on the tape, stored in checkpoints and updated by
the optimizer.
"""
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from . import config
from .autodiff import Tape, Tensor
from .classic import ProblemSpec, SaddleState
from .experiment_config import ExperimentConfig
from .field import Domain, GridField
from .grf import RngState
from .prox import L1BOX, NONE, MultiplierSpec, resolvent_array
from .spectral import mode_indices, proportional_pad


@dataclass
class NetConfig:
    """Architecture and problem constants of one network."""
    experiment: str = "elliptic-iso"
    model: str = "iuzawa"           # iuzawa | fno
    tying: str = "shared"           # free | shared
    layers: int = 6
    width: int = 8
    k_max: int = 8
    fourier_layers: int = 4
    pad_to: int = 72
    train_resolution: int = 64
    qa_width: int = 64
    qa_depth: int = 4
    gamma: float = config.GAMMA
    tau: float = config.TAU
    alpha: float = 0.01
    regularizer: str = "box"
    beta: float = 0.0
    ndim: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.model not in ("iuzawa", "fno"):
            raise ValueError(f"Unknown model {self.model!r}")
        if self.tying not in ("free", "shared"):
            raise ValueError(f"Unknown tying {self.tying!r}")
        if self.layers < 0:
            raise ValueError(f"layers must be >= 0, got {self.layers}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.qa_depth < 2:
            raise ValueError(f"qa_depth must be >= 2, got {self.qa_depth}")
        if self.pad_to < self.train_resolution:
            raise ValueError(f"pad_to={self.pad_to} is below the training resolution {self.train_resolution}")
        mode_indices(self.pad_to, self.k_max)

    @property
    def bound_channels(self) -> int:
        if self.regularizer == NONE:
            return 0
        return 3 if self.regularizer == L1BOX else 2

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict) -> "NetConfig":
        known = {k: v for k, v in values.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def padded_grid(grid: Sequence[int], pad_to: int, train_resolution: int, k_max: int) -> Tuple[int, ...]:
    """
    Periodic box for a grid: every axis keeps the physical box length of
    pad_to points at the training resolution.

    Raises ValueError when the padded box cannot hold k_max modes.
    """
    padded = tuple(proportional_pad(n, pad_to, train_resolution) for n in grid)
    for p in padded:
        mode_indices(p, k_max)
    return padded


def half_modes(k_max: int, ndim: int) -> Tuple[int, ...]:
    return (2 * k_max + 1,) * (ndim - 1) + (k_max + 1,)


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class FourierLayer:
    r_re: np.ndarray
    r_im: np.ndarray
    w: np.ndarray
    b: np.ndarray


@dataclass
class FnoParams:
    """Lift P, Fourier layers (R_ℓ, W_ℓ, b_ℓ) and projection Q of one FNO."""
    prefix: str
    lift: np.ndarray
    fourier: List[FourierLayer]
    proj: np.ndarray
    k_max: int
    pad_to: int
    train_resolution: int

    @classmethod
    def init(cls, prefix: str, rng: np.random.Generator, in_channels: int, width: int,
             k_max: int, fourier_layers: int, ndim: int,
             pad_to: int, train_resolution: int) -> "FnoParams":
        modes = half_modes(k_max, ndim)
        spectral_scale = 1.0 / (width * int(np.prod(modes)))
        layers = []
        for _ in range(fourier_layers):
            shape = modes + (width, width)
            layers.append(FourierLayer(
                r_re=spectral_scale * rng.uniform(0.0, 1.0, size=shape),
                r_im=spectral_scale * rng.uniform(0.0, 1.0, size=shape),
                w=_uniform(rng, (width, width), 1.0 / math.sqrt(width)),
                b=_uniform(rng, (width,), 1.0 / math.sqrt(width)),
            ))
        return cls(
            prefix=prefix,
            lift=_uniform(rng, (width, in_channels), 1.0 / math.sqrt(in_channels)),
            fourier=layers,
            proj=_uniform(rng, (1, width), 1.0 / math.sqrt(width)),
            k_max=k_max, pad_to=pad_to, train_resolution=train_resolution,
        )

    def named_tensors(self) -> Dict[str, np.ndarray]:
        out = {f"{self.prefix}.lift": self.lift, f"{self.prefix}.proj": self.proj}
        for i, layer in enumerate(self.fourier):
            head = f"{self.prefix}.fourier{i}"
            out.update({f"{head}.R_re": layer.r_re, f"{head}.R_im": layer.r_im,
                        f"{head}.W": layer.w, f"{head}.b": layer.b})
        return out


@dataclass
class QsParams:
    """γI + PᵀVᵀVP + spectral ΦᴴΦ term, self-adjoint and γ-coercive."""
    prefix: str
    lift: np.ndarray      # P, [m_p × 1]
    v: np.ndarray         # V, [m_p × m_p]
    phi_re: np.ndarray    # Φ, [*half modes, m_p, m_p]
    phi_im: np.ndarray
    gamma: float
    k_max: int
    pad_to: int
    train_resolution: int

    @classmethod
    def init(cls, prefix: str, rng: np.random.Generator, width: int, k_max: int, ndim: int,
             gamma: float, pad_to: int, train_resolution: int) -> "QsParams":
        """
        Untrained Q_S is close to γI: V starts at zero and Φ at √γ times the
        usual spectral scale, so the Φ term adds at most 2γ·width/modes² to
        the Rayleigh quotient.
        """
        modes = half_modes(k_max, ndim)
        spectral_scale = math.sqrt(gamma) / (width * int(np.prod(modes)))
        return cls(
            prefix=prefix,
            lift=_uniform(rng, (width, 1), 1.0),
            v=np.zeros((width, width)),
            phi_re=spectral_scale * rng.uniform(0.0, 1.0, size=modes + (width, width)),
            phi_im=spectral_scale * rng.uniform(0.0, 1.0, size=modes + (width, width)),
            gamma=gamma, k_max=k_max, pad_to=pad_to, train_resolution=train_resolution,
        )

    def named_tensors(self) -> Dict[str, np.ndarray]:
        return {f"{self.prefix}.P": self.lift, f"{self.prefix}.V": self.v,
                f"{self.prefix}.Phi_re": self.phi_re, f"{self.prefix}.Phi_im": self.phi_im}


@dataclass
class QaParams:
    """
    Skip-connected pointwise ReLU net:
        v0 = W0 (r, z),  v_l = relu(W_l (v_{l-1}, z) + b_l),  out = W_L (v_{L-1}, z) + b_L
    with z = (r, bound channels).
    """
    prefix: str
    weights: List[np.ndarray]   # W_0 .. W_L
    biases: List[np.ndarray]    # b_1 .. b_L

    @property
    def arity(self) -> int:
        return self.weights[0].shape[1] - 1

    @classmethod
    def init(cls, prefix: str, rng: np.random.Generator, arity: int, width: int, depth: int) -> "QaParams":
        fan0 = arity + 1
        weights = [_uniform(rng, (width, fan0), 1.0 / math.sqrt(fan0))]
        biases = []
        fan = width + arity
        for _ in range(depth - 2):
            weights.append(_uniform(rng, (width, fan), 1.0 / math.sqrt(fan)))
            biases.append(_uniform(rng, (width,), 1.0 / math.sqrt(fan)))
        weights.append(_uniform(rng, (1, fan), 1.0 / math.sqrt(fan)))
        biases.append(_uniform(rng, (1,), 1.0 / math.sqrt(fan)))
        return cls(prefix, weights, biases)

    def named_tensors(self) -> Dict[str, np.ndarray]:
        out = {f"{self.prefix}.W{i}": w for i, w in enumerate(self.weights)}
        out.update({f"{self.prefix}.b{i + 1}": b for i, b in enumerate(self.biases)})
        return out


@dataclass
class LayerParams:
    S: FnoParams
    A: FnoParams
    QS: QsParams
    QA: QaParams

    def named_tensors(self) -> Dict[str, np.ndarray]:
        out = {}
        for module in (self.S, self.A, self.QS, self.QA):
            out.update(module.named_tensors())
        return out


@dataclass
class NetParams:
    """
    All learnable arrays of one model. For tying='shared' every entry of
    `layers` is the same LayerParams object.
    """
    config: NetConfig
    layers: List[LayerParams] = field(default_factory=list)
    baseline: Optional[FnoParams] = None

    def named_tensors(self) -> Dict[str, np.ndarray]:
        if self.baseline is not None:
            return self.baseline.named_tensors()
        out = {}
        seen = set()
        for layer in self.layers:
            if id(layer) in seen:
                continue
            seen.add(id(layer))
            out.update(layer.named_tensors())
        return dict(sorted(out.items()))

    def parameter_count(self) -> int:
        return int(sum(a.size for a in self.named_tensors().values()))

    def load_tensors(self, tensors: Dict[str, np.ndarray]) -> None:
        """Overwrite every array in place from a name -> array mapping."""
        own = self.named_tensors()
        missing = sorted(set(own) - set(tensors))
        extra = sorted(set(tensors) - set(own))
        if missing or extra:
            raise ValueError(f"Tensor names differ (missing {missing[:3]}, unexpected {extra[:3]})")
        for name, array in own.items():
            if tensors[name].shape != array.shape:
                raise ValueError(f"{name}: stored shape {tensors[name].shape}, expected {array.shape}")
            array[...] = tensors[name]


def init_net(cfg: NetConfig) -> NetParams:
    """Draw initial parameters from the seeded generator in a fixed order."""
    rng = RngState(cfg.seed).generator()
    if cfg.model == "fno":
        in_channels = 2 if cfg.experiment == "parabolic" or cfg.regularizer == NONE else 4
        baseline = FnoParams.init("fno", rng, in_channels, cfg.width, cfg.k_max,
                                  cfg.fourier_layers, cfg.ndim, cfg.pad_to, cfg.train_resolution)
        logging.info(f"🧠 FNO baseline with {in_channels} input channels")
        return NetParams(cfg, [], baseline)

    def make_layer(prefix: str) -> LayerParams:
        fno = lambda name: FnoParams.init(f"{prefix}.{name}", rng, 1, cfg.width, cfg.k_max,
                                          cfg.fourier_layers, cfg.ndim, cfg.pad_to,
                                          cfg.train_resolution)
        return LayerParams(
            S=fno("S"),
            A=fno("A"),
            QS=QsParams.init(f"{prefix}.QS", rng, cfg.width, cfg.k_max, cfg.ndim,
                             cfg.gamma, cfg.pad_to, cfg.train_resolution),
            QA=QaParams.init(f"{prefix}.QA", rng, 1 + cfg.bound_channels,
                             cfg.qa_width, cfg.qa_depth),
        )

    if cfg.tying == "shared":
        shared = make_layer("shared")
        layers = [shared] * cfg.layers
    else:
        layers = [make_layer(f"layer{k}") for k in range(cfg.layers)]
    net = NetParams(cfg, layers)
    logging.info(f"🧠 Initialized {cfg.tying} network: {cfg.layers} layers, "
                 f"{net.parameter_count()} parameters")
    return net


# --- tensor-level module applications ---

def _fno_apply(params: FnoParams, x: Tensor) -> Tensor:
    tape = x.tape
    grid = x.shape[1:]
    pad_grid = padded_grid(grid, params.pad_to, params.train_resolution, params.k_max)
    v = ad.channel_matmul(tape.param(f"{params.prefix}.lift", params.lift), ad.pad(x, pad_grid))
    for i, layer in enumerate(params.fourier):
        head = f"{params.prefix}.fourier{i}"
        spectral = ad.spectral_linear(v, tape.param(f"{head}.R_re", layer.r_re),
                                      tape.param(f"{head}.R_im", layer.r_im), params.k_max)
        local = ad.bias_broadcast(ad.channel_matmul(tape.param(f"{head}.W", layer.w), v),
                                  tape.param(f"{head}.b", layer.b))
        v = ad.gelu(ad.add(spectral, local))
    out = ad.channel_matmul(tape.param(f"{params.prefix}.proj", params.proj), v)
    return ad.crop(out, grid)


def relative_weights(domain: Domain) -> np.ndarray:
    """Trapezoid weights divided by the cell volume (1 inside, 1/2 per boundary axis)."""
    return domain.weights / float(np.prod(domain.spacing))


def _qs_apply(params: QsParams, x: Tensor, domain: Domain) -> Tensor:
    tape = x.tape
    grid = x.shape[1:]
    pad_grid = padded_grid(grid, params.pad_to, params.train_resolution, params.k_max)
    lift = tape.param(f"{params.prefix}.P", params.lift)
    v = tape.param(f"{params.prefix}.V", params.v)

    pointwise = ad.channel_matmul(
        lift, ad.channel_matmul(v, ad.channel_matmul(v, ad.channel_matmul(lift, x)), transpose=True),
        transpose=True,
    )

    omega = relative_weights(domain)[None]
    root = tape.constant(np.sqrt(omega))
    inv_root = tape.constant(1.0 / np.sqrt(omega))
    lifted = ad.pad(ad.channel_matmul(lift, ad.hadamard(x, root)), pad_grid)
    gram = ad.spectral_gram(lifted, tape.param(f"{params.prefix}.Phi_re", params.phi_re),
                            tape.param(f"{params.prefix}.Phi_im", params.phi_im), params.k_max)
    spectral = ad.hadamard(ad.channel_matmul(lift, ad.crop(gram, grid), transpose=True), inv_root)

    return ad.add(ad.add(ad.scale(x, params.gamma), pointwise), spectral)


def _qa_apply(params: QaParams, r: Tensor, channels: Sequence[Tensor]) -> Tensor:
    tape = r.tape
    if len(channels) + 1 != params.arity:
        raise ValueError(f"Q_A expects {params.arity - 1} bound channels, got {len(channels)}")
    z = [r] + list(channels)
    v = ad.channel_matmul(tape.param(f"{params.prefix}.W0", params.weights[0]),
                          ad.concat_channels([r] + z))
    depth = len(params.weights) - 1
    for l in range(1, depth + 1):
        pre = ad.bias_broadcast(
            ad.channel_matmul(tape.param(f"{params.prefix}.W{l}", params.weights[l]),
                              ad.concat_channels([v] + z)),
            tape.param(f"{params.prefix}.b{l}", params.biases[l - 1]),
        )
        v = ad.relu(pre) if l < depth else pre
    return v


# --- GridField-level forwards ---

def _field_input(tape: Tape, a: GridField) -> Tensor:
    return tape.constant(a.values[None])


def _output_field(domain: Domain, t: Tensor) -> GridField:
    return GridField(domain, t.data[0])


def fno_forward(params: FnoParams, a: GridField, tape: Optional[Tape] = None) -> GridField:
    tape = tape or Tape(record=False)
    return _output_field(a.domain, _fno_apply(params, _field_input(tape, a)))


def qs_forward(params: QsParams, a: GridField, tape: Optional[Tape] = None) -> GridField:
    tape = tape or Tape(record=False)
    return _output_field(a.domain, _qs_apply(params, _field_input(tape, a), a.domain))


def bound_channels(cfg: NetConfig, bounds: Optional[Tuple[GridField, GridField]],
                   domain: Domain) -> List[np.ndarray]:
    if cfg.regularizer == NONE:
        return []
    u_a, u_b = bounds
    out = [u_a.values[None], u_b.values[None]]
    if cfg.regularizer == L1BOX:
        out.append(np.full((1,) + domain.shape, cfg.beta))
    return out


def qa_forward(params: QaParams, u: GridField, bounds: Sequence[GridField],
               lam: Optional[GridField] = None, tape: Optional[Tape] = None) -> GridField:
    """Pointwise net on (u, μ(x)[, λ(x)]) at every grid node."""
    tape = tape or Tape(record=False)
    channels = [_field_input(tape, b) for b in bounds]
    if lam is not None:
        channels.append(_field_input(tape, lam))
    return _output_field(u.domain, _qa_apply(params, _field_input(tape, u), channels))


class LearnedOperators:
    """The four learned modules of one layer."""

    def __init__(self, layer: LayerParams, domain: Domain):
        self.layer = layer
        self.domain = domain

    def S(self, x: Tensor) -> Tensor:
        return _fno_apply(self.layer.S, x)

    def A(self, x: Tensor) -> Tensor:
        return _fno_apply(self.layer.A, x)

    def QS(self, x: Tensor) -> Tensor:
        return _qs_apply(self.layer.QS, x, self.domain)

    def QA(self, r: Tensor, channels: Sequence[Tensor]) -> Tensor:
        return _qa_apply(self.layer.QA, r, channels)


class ExactOperators:
    """
    Substitutes S, S*, the closed-form resolvent and σ⁻¹I for the learned
    modules; the layer stack then reproduces inexact Uzawa with Q_S = σI.
    """

    def __init__(self, spec: ProblemSpec, sigma: float, tau: float):
        self.spec = spec
        self.sigma = sigma
        self.tau = tau

    def S(self, x: Tensor) -> Tensor:
        return x.tape.constant(self.spec.operator.apply(x.data[0])[None])

    def A(self, x: Tensor) -> Tensor:
        return x.tape.constant(self.spec.operator.apply_adjoint(x.data[0])[None])

    def QS(self, x: Tensor) -> Tensor:
        return ad.scale(x, 1.0 / self.sigma)

    def QA(self, r: Tensor, channels: Sequence[Tensor]) -> Tensor:
        mult = MultiplierSpec(self.spec.alpha, self.tau)
        return r.tape.constant(resolvent_array(self.spec.regularizer, mult, r.data[0])[None])


def iuzawa_forward(params: NetParams, y_d: GridField, f: GridField,
                   bounds: Optional[Tuple[GridField, GridField]], tape: Tape,
                   capture_states: bool = False,
                   operators: Optional[ExactOperators] = None,
                   ) -> Tuple[Tensor, Optional[List[SaddleState]]]:
    """
    Run the layer stack from (0, 0).

    Returns u^L as a [1, *grid] tensor and, with capture_states, every
    (u^k, p^k) including the initial state.
    """
    cfg = params.config
    domain = y_d.domain
    if f.domain != domain:
        raise ValueError("y_d and f must share a domain")
    tau = cfg.tau if operators is None else operators.tau

    y = _field_input(tape, y_d)
    source = _field_input(tape, f)
    channels = [tape.constant(c) for c in bound_channels(cfg, bounds, domain)]
    u = tape.constant(np.zeros((1,) + domain.shape))
    p = tape.constant(np.zeros((1,) + domain.shape))
    states = [SaddleState.zeros(domain)] if capture_states else None

    for k in range(cfg.layers):
        ops = operators or LearnedOperators(params.layers[k], domain)
        u = ops.QA(ad.sub(ad.scale(u, tau), ops.A(p)), channels)
        residual = ad.sub(ad.sub(ops.S(ad.add(u, source)), p), y)
        p = ad.add(p, ops.QS(residual))
        if capture_states:
            states.append(SaddleState(_output_field(domain, u), _output_field(domain, p)))
    return u, states


def baseline_forward(params: NetParams, y_d: GridField, f: GridField,
                     bounds: Optional[Tuple[GridField, GridField]], tape: Tape) -> Tensor:
    """FNO baseline mapping (y_d, f[, u_a, u_b]) directly to the control."""
    inputs = [_field_input(tape, y_d), _field_input(tape, f)]
    if params.config.experiment != "parabolic" and bounds is not None:
        inputs += [_field_input(tape, b) for b in bounds]
    return _fno_apply(params.baseline, ad.concat_channels(inputs))


def predict(params: NetParams, y_d: GridField, f: GridField,
            bounds: Optional[Tuple[GridField, GridField]], tape: Optional[Tape] = None) -> Tensor:
    """Model output for one instance as a [1, *grid] tensor."""
    tape = tape or Tape(record=False)
    if params.baseline is not None:
        return baseline_forward(params, y_d, f, bounds, tape)
    u, _ = iuzawa_forward(params, y_d, f, bounds, tape)
    return u


def net_config_for(experiment: str, **overrides) -> NetConfig:
    """NetConfig from the experiment preset, with keyword overrides."""
    preset = ExperimentConfig.get_preset(experiment)
    model = overrides.get("model", "iuzawa")
    tying = overrides.get("tying", "shared")
    prefix = "fno_" if model == "fno" else ""
    values = dict(
        experiment=experiment,
        model=model,
        tying=tying,
        layers=preset["layers_free" if tying == "free" else "layers_shared"],
        width=preset[prefix + "width"],
        k_max=preset[prefix + "k_max"],
        fourier_layers=preset[prefix + "fourier_layers"],
        pad_to=preset["pad_to"],
        train_resolution=preset["train_resolution"],
        qa_width=preset["qa_width"],
        qa_depth=preset["qa_depth"],
        alpha=preset["alpha"],
        regularizer=preset["regularizer"],
        beta=preset["beta"],
        ndim=3 if experiment == "parabolic" else 2,
    )
    values.update(overrides)
    return NetConfig(**values)
