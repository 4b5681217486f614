"""
Classical solvers for the control problem

    min_u ½‖S(u+f) - y_d‖² + ½α‖u‖² + θ(u)

and its saddle-point form with the dual variable p = S(u+f) - y_d.

- uzawa_solve: inexact Uzawa with Q_A = αI + τI and a dual preconditioner Q_S
- pd_solve:    first-order primal-dual iteration with extrapolation 1
- ssn_solve:   semismooth Newton in primal-dual active-set form, used as the
               reference solver for datasets

All norms are the trapezoid L² norms of the field module.
"""
import logging
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import config
from .field import Domain, GridField, relative_error, weighted_inner, weighted_norm
from .pde import PdeOperator, operator_norm_estimate
from .prox import L1BOX, NONE, MultiplierSpec, RegularizerSpec, resolvent_array, soft_threshold


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Fixed data of a control problem: PDE, regularizer, α and τ."""
    operator: PdeOperator
    regularizer: RegularizerSpec
    alpha: float
    tau: float = config.TAU

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        reg_domain = self.regularizer.domain
        if reg_domain is not None and reg_domain != self.operator.domain:
            raise ValueError("Regularizer bounds do not live on the operator domain")

    @property
    def domain(self) -> Domain:
        return self.operator.domain

    def multiplier(self, tau: Optional[float] = None) -> MultiplierSpec:
        return MultiplierSpec(self.alpha, self.tau if tau is None else tau)

    @cached_property
    def norm_estimate(self) -> float:
        return operator_norm_estimate(self.operator)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A ProblemSpec together with the parameters (y_d, f)."""
    spec: ProblemSpec
    y_d: GridField
    f: GridField

    def __post_init__(self):
        if self.y_d.domain != self.spec.domain or self.f.domain != self.spec.domain:
            raise ValueError("y_d and f must live on the operator domain")

    @property
    def domain(self) -> Domain:
        return self.spec.domain

    @cached_property
    def state_shift(self) -> np.ndarray:
        """S f - y_d, the only way (y_d, f) enter the solution."""
        return self.spec.operator.apply(self.f.values) - self.y_d.values


@dataclass(frozen=True, eq=False)
class SaddleState:
    u: GridField
    p: GridField

    def __post_init__(self):
        if self.u.domain != self.p.domain:
            raise ValueError("u and p must share a domain")

    @classmethod
    def zeros(cls, domain: Domain) -> "SaddleState":
        return cls(GridField.zeros(domain), GridField.zeros(domain))


@dataclass
class SolveReport:
    """
    Iteration record of one solve.

    residual_history holds KKT residuals starting at the initial state;
    rel_error_history is filled when a reference control is supplied.
    """
    method: str
    iterations: int = 0
    residual_history: List[float] = field(default_factory=list)
    rel_error_history: List[float] = field(default_factory=list)
    contraction_estimates: List[float] = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    trajectory: Optional[List[SaddleState]] = None


@dataclass(frozen=True)
class ScalarSigma:
    """Q_S = σI."""
    sigma: float


@dataclass(frozen=True)
class ExactSchur:
    """Q_S = I + S N⁻¹ S*, inverted spectrally (elliptic problems only)."""


PreconditionerChoice = Union[ScalarSigma, ExactSchur]


def admissible_sigma(spec: ProblemSpec, margin: float = 1.05) -> float:
    """σ = margin·(1 + ‖S‖²/α) from the power-iteration norm estimate."""
    return margin * (1.0 + spec.norm_estimate**2 / spec.alpha)


def _check_preconditioner(spec: ProblemSpec, qs: PreconditionerChoice) -> None:
    if isinstance(qs, ScalarSigma):
        needed = 1.0 + spec.norm_estimate**2 / spec.alpha
        if qs.sigma < needed:
            raise ValueError(
                f"sigma={qs.sigma:.6g} is not admissible, need >= {needed:.6g}"
            )
    elif not spec.operator.is_elliptic:
        raise ValueError("ExactSchur is only available for elliptic problems")


def qs_apply(spec: ProblemSpec, qs: PreconditionerChoice, p: np.ndarray) -> np.ndarray:
    if isinstance(qs, ScalarSigma):
        return qs.sigma * p
    op = spec.operator
    return p + op.apply(op.apply_adjoint(p)) / spec.alpha


def qs_inverse(spec: ProblemSpec, qs: PreconditionerChoice, p: np.ndarray) -> np.ndarray:
    if isinstance(qs, ScalarSigma):
        return p / qs.sigma
    return spec.operator.schur_inverse(p, spec.alpha)


def q_seminorm(spec: ProblemSpec, qs: PreconditionerChoice, tau: float,
               du: np.ndarray, dp: np.ndarray) -> float:
    """‖(u,p)‖_Q with Q = diag(τI, Q_S)."""
    dom = spec.domain
    value = tau * weighted_norm(dom, du) ** 2 + weighted_inner(dom, qs_apply(spec, qs, dp), dp)
    return float(np.sqrt(max(value, 0.0)))


def _kkt(prob: ProblemInstance, u: np.ndarray, p: np.ndarray) -> float:
    spec = prob.spec
    op = spec.operator
    dom = spec.domain
    fixed_point = resolvent_array(spec.regularizer, spec.multiplier(0.0), -op.apply_adjoint(p))
    primal = weighted_norm(dom, u - fixed_point)
    dual = weighted_norm(dom, op.apply(u) + prob.state_shift - p)
    return primal + dual


def kkt_residual(prob: ProblemInstance, s: SaddleState) -> float:
    """Natural residual of both lines of the optimality system; zero iff optimal."""
    return _kkt(prob, s.u.values, s.p.values)


def dual_from_control(prob: ProblemInstance, u: np.ndarray) -> np.ndarray:
    """p = S(u+f) - y_d."""
    return prob.spec.operator.apply(u) + prob.state_shift


def uzawa_step(prob: ProblemInstance, qs: PreconditionerChoice, tau: float,
               u: np.ndarray, p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """One exact inexact-Uzawa update (u, p) -> (u⁺, p⁺)."""
    spec = prob.spec
    op = spec.operator
    u_next = resolvent_array(spec.regularizer, spec.multiplier(tau), tau * u - op.apply_adjoint(p))
    p_next = p + qs_inverse(spec, qs, op.apply(u_next) + prob.state_shift - p)
    return u_next, p_next


class _Monitor:
    """Shared stopping and bookkeeping logic of the iterative solvers."""

    def __init__(self, prob: ProblemInstance, method: str, tol: float,
                 reference: Optional[GridField], rtol: Optional[float],
                 seminorm=None, record_trajectory: bool = False):
        self.prob = prob
        self.tol = tol
        self.rtol = rtol
        self.reference = reference
        self.seminorm = seminorm
        self.report = SolveReport(method, trajectory=[] if record_trajectory else None)
        self.best = None
        self.best_kkt = float("inf")
        self._start = time.perf_counter()
        self._errors: List[float] = []
        if reference is not None:
            self._u_ref = reference.values
            self._p_ref = dual_from_control(prob, reference.values)

    def check(self, u: np.ndarray, p: np.ndarray) -> bool:
        """Record (u, p); True when a stopping criterion is met."""
        report = self.report
        kkt = _kkt(self.prob, u, p)
        report.residual_history.append(kkt)
        if report.trajectory is not None:
            dom = self.prob.domain
            report.trajectory.append(SaddleState(GridField(dom, u), GridField(dom, p)))
        if kkt < self.best_kkt:
            self.best_kkt = kkt
            self.best = (u, p)

        stop = kkt <= self.tol
        if self.reference is not None:
            dom = self.prob.domain
            rel = relative_error(GridField(dom, u), self.reference)
            report.rel_error_history.append(rel)
            if self.rtol is not None and rel <= self.rtol:
                self.best = (u, p)
                stop = True
            if self.seminorm is not None:
                err = self.seminorm(u - self._u_ref, p - self._p_ref)
                if self._errors and self._errors[-1] > 1e-8 * self._errors[0]:
                    report.contraction_estimates.append(err / self._errors[-1])
                self._errors.append(err)
        if stop:
            self.best = (u, p)
        return stop

    def finish(self, iterations: int, converged: bool) -> Tuple[SaddleState, SolveReport]:
        report = self.report
        report.iterations = iterations
        report.converged = converged
        report.wall_time = time.perf_counter() - self._start
        u, p = self.best
        dom = self.prob.domain
        if converged:
            logging.info(
                "🎯 %s converged in %d iterations (kkt %.3e, %.3fs)",
                report.method, iterations, report.residual_history[-1], report.wall_time,
            )
        else:
            logging.warning(
                "⚠️ %s stopped after %d iterations without converging (best kkt %.3e)",
                report.method, iterations, self.best_kkt,
            )
        return SaddleState(GridField(dom, u), GridField(dom, p)), report


def uzawa_solve(prob: ProblemInstance, qs: PreconditionerChoice,
                tau: Optional[float] = None, tol: float = 1e-8, max_iter: int = 1000,
                reference: Optional[GridField] = None, rtol: Optional[float] = None,
                record_trajectory: bool = False) -> Tuple[SaddleState, SolveReport]:
    """
    Inexact Uzawa iteration from (0, 0).

    Stops when the KKT residual drops to `tol`, or, with a reference control
    and `rtol`, when the relative error drops to `rtol`. With a reference,
    ratios of successive Q-seminorm errors are reported as contraction
    estimates.
    """
    spec = prob.spec
    tau = spec.tau if tau is None else tau
    _check_preconditioner(spec, qs)

    monitor = _Monitor(
        prob, "uzawa", tol, reference, rtol,
        seminorm=lambda du, dp: q_seminorm(spec, qs, tau, du, dp),
        record_trajectory=record_trajectory,
    )
    u = np.zeros(prob.domain.shape)
    p = np.zeros(prob.domain.shape)
    if monitor.check(u, p):
        return monitor.finish(0, True)

    for k in range(1, max_iter + 1):
        u, p = uzawa_step(prob, qs, tau, u, p)
        if monitor.check(u, p):
            return monitor.finish(k, True)
        logging.debug("uzawa %d: kkt %.3e", k, monitor.report.residual_history[-1])
    return monitor.finish(max_iter, False)


def pd_solve(prob: ProblemInstance, step_primal: float, step_dual: float,
             tol: float = 1e-8, max_iter: int = 5000,
             reference: Optional[GridField] = None,
             rtol: Optional[float] = None) -> Tuple[SaddleState, SolveReport]:
    """
    Primal-dual iteration with extrapolation parameter 1.

    Convergence is guaranteed for step_primal·step_dual·‖S‖² ≤ 1; larger
    products only trigger a warning.
    """
    spec = prob.spec
    op = spec.operator
    product = step_primal * step_dual * spec.norm_estimate**2
    if product > 1.0:
        logging.warning(
            f"⚠️ Primal-dual steps ({step_primal}, {step_dual}) give "
            f"step product·‖S‖² = {product:.3f} > 1; convergence is not guaranteed"
        )

    primal_mult = spec.multiplier(1.0 / step_primal)
    monitor = _Monitor(prob, "pd", tol, reference, rtol)
    u = np.zeros(prob.domain.shape)
    p = np.zeros(prob.domain.shape)
    if monitor.check(u, p):
        return monitor.finish(0, True)

    for k in range(1, max_iter + 1):
        v = (u - step_primal * op.apply_adjoint(p)) / step_primal
        u_next = resolvent_array(spec.regularizer, primal_mult, v)
        u_bar = 2.0 * u_next - u
        p = (p + step_dual * (op.apply(u_bar) + prob.state_shift)) / (1.0 + step_dual)
        u = u_next
        if monitor.check(u, p):
            return monitor.finish(k, True)
        logging.debug("pd %d: kkt %.3e", k, monitor.report.residual_history[-1])
    return monitor.finish(max_iter, False)


# Partition labels of the active-set method
_INACTIVE_POS, _INACTIVE_NEG, _ZERO, _UPPER, _LOWER = range(5)


def _partition(spec: ProblemSpec, z: np.ndarray) -> np.ndarray:
    reg = spec.regularizer
    beta = reg.beta if reg.variant == L1BOX else 0.0
    # The sign of an inactive point only matters through the L1 term.
    if beta > 0:
        labels = np.where(z >= 0, _INACTIVE_POS, _INACTIVE_NEG).astype(np.int8)
        labels[np.abs(z) <= beta] = _ZERO
    else:
        labels = np.full(z.shape, _INACTIVE_POS, dtype=np.int8)
    if reg.variant == NONE:
        return labels
    v = soft_threshold(z, beta) / spec.alpha
    labels[v <= reg.lower.values] = _LOWER
    labels[v >= reg.upper.values] = _UPPER
    return labels


def _newton_update(prob: ProblemInstance, labels: np.ndarray, u0: np.ndarray,
                   rhs_base: np.ndarray) -> np.ndarray:
    """Solve the reduced linear system of one frozen partition."""
    spec = prob.spec
    op = spec.operator
    reg = spec.regularizer

    u = np.zeros_like(u0)
    if reg.variant != NONE:
        u[labels == _UPPER] = reg.upper.values[labels == _UPPER]
        u[labels == _LOWER] = reg.lower.values[labels == _LOWER]

    inactive = (labels == _INACTIVE_POS) | (labels == _INACTIVE_NEG)
    n = int(np.count_nonzero(inactive))
    if n == 0:
        return u

    beta = reg.beta if reg.variant == L1BOX else 0.0
    sign = np.where(labels == _INACTIVE_POS, 1.0, -1.0)
    weights = spec.domain.weights[inactive]
    normal = lambda x: op.apply_adjoint(op.apply(x))

    rhs = (rhs_base - normal(u))[inactive] - beta * sign[inactive]

    def matvec(x):
        full = np.zeros_like(u0)
        full[inactive] = np.ravel(x)
        return weights * (spec.alpha * np.ravel(x) + normal(full)[inactive])

    system = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    x, info = cg(system, weights * rhs, x0=u0[inactive], rtol=1e-13, atol=0.0, maxiter=1000)
    if info > 0:
        logging.debug("ssn: inner CG stopped after %d iterations", info)
    u[inactive] = x
    return u


def ssn_solve(prob: ProblemInstance, tol: Optional[float] = None,
              max_iter: Optional[int] = None) -> Tuple[SaddleState, SolveReport]:
    """
    Primal-dual active-set method on the fixed point
    u = clip(soft_β(-S*p)/α, u_a, u_b), p = S(u+f) - y_d.

    Each outer step freezes the partition into upper/lower active points,
    the zero set of the L1 term and the inactive set, and solves the reduced
    normal equations on the inactive set by conjugate gradients. It stops
    when the partition repeats; a partition revisited after other ones
    indicates cycling and the step is damped.
    """
    tol = config.SSN_TOL if tol is None else tol
    max_iter = config.SSN_MAX_ITER if max_iter is None else max_iter
    spec = prob.spec
    op = spec.operator

    monitor = _Monitor(prob, "ssn", tol, None, None)
    rhs_base = -op.apply_adjoint(prob.state_shift)
    u = np.zeros(prob.domain.shape)
    monitor.check(u, dual_from_control(prob, u))

    seen = set()
    previous = None
    iterations = 0
    for k in range(1, max_iter + 1):
        z = rhs_base - op.apply_adjoint(op.apply(u))
        labels = _partition(spec, z)
        if previous is not None and np.array_equal(labels, previous):
            break
        key = labels.tobytes()
        u_new = _newton_update(prob, labels, u, rhs_base)
        if key in seen:
            logging.debug("ssn %d: partition revisited, damping the step", k)
            u_new = 0.5 * (u + u_new)
        seen.add(key)
        previous = labels
        u = u_new
        iterations = k
        monitor.check(u, dual_from_control(prob, u))
        logging.debug("ssn %d: kkt %.3e, %d inactive", k,
                      monitor.report.residual_history[-1],
                      int(np.count_nonzero(labels <= _INACTIVE_NEG)))

    # The partition has settled; report the final iterate itself.
    p = dual_from_control(prob, u)
    final_kkt = _kkt(prob, u, p)
    monitor.best = (u, p)
    monitor.best_kkt = final_kkt
    return monitor.finish(iterations, final_kkt <= tol)


def objective(prob: ProblemInstance, u: GridField) -> float:
    """½‖S(u+f) - y_d‖² + ½α‖u‖² + θ(u); +inf for infeasible u."""
    spec = prob.spec
    dom = spec.domain
    penalty = spec.regularizer.penalty(u.values, dom)
    if not np.isfinite(penalty):
        return float("inf")
    misfit = spec.operator.apply(u.values) + prob.state_shift
    return (0.5 * weighted_norm(dom, misfit) ** 2
            + 0.5 * spec.alpha * weighted_norm(dom, u.values) ** 2
            + penalty)


def tracking_check(prob: ProblemInstance, states: Sequence[SaddleState],
                   qs: PreconditionerChoice, tau: Optional[float] = None) -> float:
    """
    Smallest δ such that every consecutive pair of `states` lies within δ of
    the exact one-step update from the earlier state (max of both norms).
    """
    tau = prob.spec.tau if tau is None else tau
    dom = prob.domain
    delta = 0.0
    for current, following in zip(states[:-1], states[1:]):
        u_bar, p_bar = uzawa_step(prob, qs, tau, current.u.values, current.p.values)
        delta = max(delta,
                    weighted_norm(dom, following.u.values - u_bar),
                    weighted_norm(dom, following.p.values - p_bar))
    return delta


def solution_map(spec: ProblemSpec, z: GridField, tol: Optional[float] = None) -> GridField:
    """The optimal control as a function of z = S f - y_d alone."""
    instance = ProblemInstance(spec, -z, GridField.zeros(spec.domain))
    state, _ = ssn_solve(instance, tol=tol)
    return state.u
