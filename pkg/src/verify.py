"""
Property suite behind `python -m src.main verify`.

Each section checks one family of invariants on small seeded problems and
reports pass/fail with its wall time. A section that raises counts as a
failure. Sizes are chosen so the whole suite runs in well under a minute.
"""
import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from . import autodiff as ad
from .autodiff import Tape
from .classic import (
    ProblemInstance,
    ScalarSigma,
    admissible_sigma,
    pd_solve,
    solution_map,
    ssn_solve,
    tracking_check,
    uzawa_solve,
)
from .dataset import random_instance
from .experiment_config import ExperimentConfig
from .field import Domain, GridField, inner_product, norm_l2, relative_error, resample
from .grf import RngState
from .net import ExactOperators, NetConfig, QsParams, init_net, iuzawa_forward, qs_forward
from .pde import (EllipticAnisoNeumann, EllipticDirichlet, HeatDirichlet, PdeOperator, dense_matrix,
                  kind_for_experiment, operator_norm_estimate)
from .prox import MultiplierSpec, RegularizerSpec, brute_force_resolvent, firm_nonexpansiveness_check, resolvent_array
from .spectral import dct_array, dst_array, fft_trunc, fft_trunc_adjoint, idct_array, idst_array, irfft_modes, rfft_modes
from .train import loss

Check = Tuple[bool, str]


@dataclass
class SectionResult:
    section: str
    passed: bool
    seconds: float
    detail: str


def _rng(seed: int, stream: int) -> np.random.Generator:
    return RngState(seed).spawn(stream).generator()


def check_field(seed: int) -> Check:
    domain = Domain.square(17)
    total = float(np.sum(domain.weights))
    a = GridField.from_function(domain, lambda x, y: np.sin(np.pi * x) * y)
    same = relative_error(a, a)
    fine = resample(resample(a, Domain.square(33)), domain)
    back = relative_error(fine, a)
    ok = abs(total - 1.0) < 1e-12 and same == 0.0 and back < 1e-12
    return ok, f"area {total:.15f}, self error {same:.1e}, resample round trip {back:.1e}"


def check_spectral(seed: int) -> Check:
    rng = _rng(seed, 1)
    x = rng.standard_normal((12, 9))
    dst_err = np.max(np.abs(idst_array(dst_array(x)) - x)[1:-1, 1:-1])
    dct_err = np.max(np.abs(idct_array(dct_array(x)) - x))
    y = rng.standard_normal((9, 9))
    band_err = np.max(np.abs(irfft_modes(rfft_modes(y, 4, 2), 4, y.shape) - y))

    domain = Domain.square(16)
    a = GridField(domain, rng.standard_normal(domain.shape))
    c = fft_trunc(GridField(domain, rng.standard_normal(domain.shape)), 3)
    lhs = np.real(np.vdot(c.values, fft_trunc(a, 3).values))
    rhs = float(np.sum(a.values * fft_trunc_adjoint(c, domain).values))
    adj_err = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    ok = max(dst_err, dct_err, band_err) < 1e-12 and adj_err < 1e-10
    return ok, (f"sine {dst_err:.1e}, cosine {dct_err:.1e}, half-spectrum {band_err:.1e}, "
                f"adjoint {adj_err:.1e}")


def check_pde_adjoint(seed: int) -> Check:
    rng = _rng(seed, 2)
    cases = [
        (EllipticDirichlet(), Domain.square(17)),
        (EllipticAnisoNeumann(), Domain.square(17)),
        (HeatDirichlet(), Domain.space_time(8, 8)),
    ]
    worst = 0.0
    for kind, domain in cases:
        op = PdeOperator(kind, domain)
        g = GridField(domain, rng.standard_normal(domain.shape))
        w = GridField(domain, rng.standard_normal(domain.shape))
        lhs = inner_product(GridField(domain, op.apply(g.values)), w)
        rhs = inner_product(g, GridField(domain, op.apply_adjoint(w.values)))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))

    heat = PdeOperator(HeatDirichlet(), Domain.space_time(8, 8))
    weights = heat.domain.weights.ravel()
    forward = dense_matrix(heat)
    adjoint = dense_matrix(heat, adjoint=True)
    # S* is the transpose with respect to the weighted pairing: W S* = Sᵀ W
    dense_err = np.max(np.abs(weights[:, None] * adjoint - forward.T * weights[None, :]))
    dense_err /= max(np.max(np.abs(forward)), 1e-300)
    ok = worst < 1e-10 and dense_err < 1e-10
    return ok, f"worst relative pairing gap {worst:.1e}, heat dense transpose {dense_err:.1e}"


def check_prox(seed: int) -> Check:
    rng = _rng(seed, 3)
    worst = 0.0
    for _ in range(200):
        lower = -rng.uniform(0.0, 5.0)
        upper = rng.uniform(0.0, 5.0)
        beta = rng.uniform(0.0, 1.0)
        lam_tau = rng.uniform(0.1, 2.0)
        v = rng.uniform(-8.0, 8.0)
        domain = Domain.square(4)
        reg = RegularizerSpec.l1box(GridField.constant(domain, lower),
                                    GridField.constant(domain, upper), beta)
        closed = resolvent_array(reg, MultiplierSpec(lam_tau), np.full(domain.shape, v))[0, 0]
        oracle = brute_force_resolvent(v, lam_tau, lower, upper, beta)
        worst = max(worst, abs(closed - oracle))

    domain = Domain.square(9)
    reg = RegularizerSpec.box(GridField.constant(domain, -1.0), GridField.constant(domain, 2.0))
    report = firm_nonexpansiveness_check(reg, MultiplierSpec(0.5, 1e-4), 100, seed=seed, domain=domain)
    ok = worst <= 2e-3 and report.passed
    return ok, f"oracle gap {worst:.1e}, firm nonexpansiveness violations {report.violations}"


def check_qs_structure(seed: int, draws: int = 10, pairs: int = 5) -> Check:
    domain = Domain.square(16)
    gamma = 1e-6
    worst_sym = 0.0
    worst_margin = float("inf")
    for draw in range(draws):
        rng = _rng(seed, 100 + draw)
        params = QsParams.init("qs", rng, width=4, k_max=3, ndim=2, gamma=gamma,
                               pad_to=18, train_resolution=16)
        params.v[...] = rng.uniform(-1.0, 1.0, params.v.shape) * rng.uniform(0.0, 3.0)
        params.phi_re[...] = rng.uniform(-0.1, 0.1, params.phi_re.shape)
        params.phi_im[...] = rng.uniform(-0.1, 0.1, params.phi_im.shape)
        for _ in range(pairs):
            v = GridField(domain, rng.standard_normal(domain.shape))
            w = GridField(domain, rng.standard_normal(domain.shape))
            qv = qs_forward(params, v)
            qw = qs_forward(params, w)
            gap = abs(inner_product(qv, w) - inner_product(v, qw))
            worst_sym = max(worst_sym, gap / max(norm_l2(qv) * norm_l2(w), 1e-300))
            worst_margin = min(worst_margin, inner_product(qv, v) / norm_l2(v) ** 2)
    ok = worst_sym <= 1e-10 and worst_margin >= gamma - 1e-10
    return ok, f"symmetry gap {worst_sym:.1e}, smallest Rayleigh quotient {worst_margin:.3e}"


def _tiny_net(seed: int):
    cfg = NetConfig(experiment="elliptic-iso", tying="free", layers=2, width=3, k_max=2,
                    fourier_layers=1, pad_to=10, train_resolution=8, qa_width=6,
                    alpha=0.01, seed=seed)
    return init_net(cfg)


def check_gradients(seed: int, samples: int = 25) -> Check:
    net = _tiny_net(seed)
    weight_rng = _rng(seed, 7)
    for name, array in net.named_tensors().items():
        if name.endswith(".QS.V"):
            array[...] = weight_rng.uniform(-1.0, 1.0, array.shape)
    operator = PdeOperator(kind_for_experiment("elliptic-iso"), Domain.square(8))
    instance = random_instance("elliptic-iso", operator, _rng(seed, 4), amplitude=1.0)
    bounds = (instance.spec.regularizer.lower, instance.spec.regularizer.upper)
    # |u - target| >= 0.5 everywhere keeps the L1 loss away from its kinks
    start, _ = iuzawa_forward(net, instance.y_d, instance.f, bounds, Tape(record=False))
    offset_rng = _rng(seed, 5)
    shape = operator.domain.shape
    offset = offset_rng.choice([-1.0, 1.0], size=shape) * offset_rng.uniform(0.5, 1.5, size=shape)
    target = GridField(operator.domain, start.data[0] + offset)

    def value(tape: Tape):
        u, _ = iuzawa_forward(net, instance.y_d, instance.f, bounds, tape)
        return loss(u, target)

    tape = Tape()
    grads = ad.backward(tape, value(tape))
    tensors = net.named_tensors()
    names = sorted(tensors)
    rng = _rng(seed, 6)
    worst = 0.0
    h = 1e-6
    for _ in range(samples):
        name = names[rng.integers(len(names))]
        array = tensors[name]
        index = tuple(int(rng.integers(n)) for n in array.shape)
        saved = array[index]
        array[index] = saved + h
        plus = float(value(Tape(record=False)).data)
        array[index] = saved - h
        minus = float(value(Tape(record=False)).data)
        array[index] = saved
        fd = (plus - minus) / (2 * h)
        g = grads[name][index]
        worst = max(worst, abs(fd - g) / max(abs(fd), abs(g), 1e-4))
    return worst <= 1e-5, f"worst relative gradient error {worst:.1e} over {samples} entries"


def _elliptic_instances(seed: int, count: int, m: int) -> List[ProblemInstance]:
    operator = PdeOperator(kind_for_experiment("elliptic-iso"), Domain.square(m))
    return [random_instance("elliptic-iso", operator, _rng(seed, 200 + i)) for i in range(count)]


def check_tracking(seed: int, count: int = 3) -> Check:
    cfg = NetConfig(experiment="elliptic-iso", layers=6, width=2, k_max=2, fourier_layers=1,
                    pad_to=18, train_resolution=17, qa_width=4, seed=seed)
    net = init_net(cfg)
    worst = 0.0
    for instance in _elliptic_instances(seed, count, 17):
        sigma = admissible_sigma(instance.spec)
        exact = ExactOperators(instance.spec, sigma, instance.spec.tau)
        reg = instance.spec.regularizer
        _, states = iuzawa_forward(net, instance.y_d, instance.f, (reg.lower, reg.upper),
                                   Tape(record=False), capture_states=True, operators=exact)
        worst = max(worst, tracking_check(instance, states, ScalarSigma(sigma)))
    return worst <= 1e-8, f"largest tracking δ {worst:.1e} over {count} instances"


def check_solvers(seed: int, count: int = 3, m: int = 17) -> Check:
    worst = 0.0
    ratios: List[float] = []
    for instance in _elliptic_instances(seed, count, m):
        ref, _ = ssn_solve(instance)
        sigma = ScalarSigma(admissible_sigma(instance.spec))
        uz, report = uzawa_solve(instance, sigma, tol=1e-8, reference=ref.u)
        pd_state, _ = pd_solve(instance,
                               ExperimentConfig.get_default("elliptic-iso", "pd_step_primal"),
                               ExperimentConfig.get_default("elliptic-iso", "pd_step_dual"),
                               tol=1e-8)
        worst = max(worst, relative_error(uz.u, ref.u), relative_error(pd_state.u, ref.u),
                    relative_error(pd_state.u, uz.u))
        ratios.extend(report.contraction_estimates[1:])
    max_ratio = max(ratios) if ratios else 0.0
    median = float(np.median(ratios)) if ratios else 0.0
    ok = worst <= 1e-5 and max_ratio < 1.0 and median < 0.95
    return ok, f"pairwise disagreement {worst:.1e}, contraction max {max_ratio:.3f} median {median:.3f}"


def check_solution_map(seed: int) -> Check:
    instance = _elliptic_instances(seed, 1, 17)[0]
    state, _ = ssn_solve(instance)
    z = GridField(instance.domain, instance.state_shift)
    mapped = solution_map(instance.spec, z)
    gap = relative_error(mapped, state.u)
    return gap <= 1e-8, f"(y_d, f) vs z = Sf - y_d gap {gap:.1e}"


def check_lipschitz(seed: int, m: int = 17) -> Check:
    """
    ‖T(z₁) − T(z₂)‖ ≤ ‖S‖/α · ‖z₁ − z₂‖ for the solution map at fixed bounds,
    on far-apart pairs from independent instances and on near pairs.
    """
    instances = _elliptic_instances(seed, 3, m)
    spec = instances[0].spec
    lipschitz = operator_norm_estimate(spec.operator) / spec.alpha
    shifts = [GridField(spec.domain, inst.state_shift) for inst in instances]
    rng = _rng(seed, 9)
    nudged = shifts[0] + GridField(spec.domain, 0.01 * np.abs(shifts[0].values).max()
                                   * rng.standard_normal(spec.domain.shape))
    pairs = [(shifts[0], shifts[1]), (shifts[1], shifts[2]), (shifts[0], nudged)]
    worst = 0.0
    for z1, z2 in pairs:
        gap = norm_l2(solution_map(spec, z1) - solution_map(spec, z2))
        allowed = lipschitz * norm_l2(z1 - z2) + 1e-8
        worst = max(worst, gap / allowed)
    return worst <= 1.0, f"largest ‖ΔT‖ over its bound {worst:.3f} (‖S‖/α = {lipschitz:.3e})"


SECTIONS: Dict[str, Callable[[int], Check]] = {
    "field geometry": check_field,
    "spectral transforms": check_spectral,
    "pde adjoint identities": check_pde_adjoint,
    "prox oracle and firm nonexpansiveness": check_prox,
    "Q_S structure": check_qs_structure,
    "autodiff gradients": check_gradients,
    "algorithm tracking": check_tracking,
    "cross-solver agreement and contraction": check_solvers,
    "solution map dependence": check_solution_map,
    "solution map Lipschitz bound": check_lipschitz,
}


def run_suite(seed: int = 0, sections: Optional[List[str]] = None) -> pd.DataFrame:
    """Run the selected sections (all by default); one row per section."""
    names = list(SECTIONS) if sections is None else sections
    results = []
    for name in names:
        if name not in SECTIONS:
            raise KeyError(f"Unknown verify section {name!r}")
        start = time.perf_counter()
        try:
            passed, detail = SECTIONS[name](seed)
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        seconds = time.perf_counter() - start
        marker = "✅" if passed else "❌"
        logging.info(f"{marker} {name}: {detail} ({seconds:.2f}s)")
        results.append(SectionResult(name, bool(passed), seconds, detail))
    return pd.DataFrame([vars(r) for r in results], columns=["section", "passed", "seconds", "detail"])
