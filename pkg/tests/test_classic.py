"""
Tests for the classical solvers: Uzawa, primal-dual and semismooth Newton.
"""
import logging

import numpy as np
import pytest

from src.classic import (
    ExactSchur,
    ProblemInstance,
    ProblemSpec,
    SaddleState,
    ScalarSigma,
    admissible_sigma,
    dual_from_control,
    kkt_residual,
    objective,
    pd_solve,
    solution_map,
    ssn_solve,
    tracking_check,
    uzawa_solve,
)
from src.field import Domain, GridField, relative_error
from src.pde import EllipticDirichlet, HeatDirichlet, PdeOperator, dense_matrix
from src.prox import RegularizerSpec


def _box(domain, lower=-1.0, upper=1.0):
    return RegularizerSpec.box(GridField.constant(domain, lower), GridField.constant(domain, upper))


def _target(domain, amplitude=30.0):
    return GridField.from_function(
        domain, lambda x, y: amplitude * np.sin(np.pi * x) * np.sin(2 * np.pi * y) + amplitude * x * y
    )


@pytest.fixture
def iso_box():
    domain = Domain.square(17)
    spec = ProblemSpec(PdeOperator(EllipticDirichlet(), domain), _box(domain), alpha=0.01)
    return ProblemInstance(spec, _target(domain), GridField.constant(domain, 2.0))


class TestProblemSpec:
    def test_rejects_nonpositive_alpha(self):
        domain = Domain.square(8)
        with pytest.raises(ValueError):
            ProblemSpec(PdeOperator(EllipticDirichlet(), domain), RegularizerSpec.none(), alpha=0.0)

    def test_rejects_negative_tau(self):
        domain = Domain.square(8)
        with pytest.raises(ValueError):
            ProblemSpec(PdeOperator(EllipticDirichlet(), domain), RegularizerSpec.none(), 0.01, tau=-1.0)

    def test_rejects_bounds_on_other_domain(self):
        with pytest.raises(ValueError):
            ProblemSpec(PdeOperator(EllipticDirichlet(), Domain.square(8)), _box(Domain.square(9)), 0.01)

    def test_instance_rejects_other_domain(self, iso_box):
        with pytest.raises(ValueError):
            ProblemInstance(iso_box.spec, GridField.zeros(Domain.square(9)), iso_box.f)


class TestUnconstrained:
    def test_ssn_matches_dense_normal_equations(self):
        domain = Domain.square(9)
        op = PdeOperator(EllipticDirichlet(), domain)
        spec = ProblemSpec(op, RegularizerSpec.none(), alpha=0.01)
        prob = ProblemInstance(spec, _target(domain), GridField.zeros(domain))

        a = dense_matrix(op)
        a_star = dense_matrix(op, adjoint=True)
        z = prob.state_shift.ravel()
        expected = np.linalg.solve(0.01 * np.eye(a.shape[0]) + a_star @ a, -a_star @ z)

        state, report = ssn_solve(prob)
        assert report.converged
        np.testing.assert_allclose(state.u.values.ravel(), expected, atol=1e-8)

    def test_uzawa_reaches_ssn_solution(self):
        domain = Domain.square(9)
        spec = ProblemSpec(PdeOperator(EllipticDirichlet(), domain), RegularizerSpec.none(), alpha=0.01)
        prob = ProblemInstance(spec, _target(domain), GridField.zeros(domain))
        reference, _ = ssn_solve(prob)
        state, report = uzawa_solve(prob, ExactSchur(), tol=1e-10)
        assert report.converged
        assert relative_error(state.u, reference.u) < 1e-6


class TestBoxConstrained:
    def test_ssn_solution_is_optimal(self, iso_box):
        state, report = ssn_solve(iso_box)
        assert kkt_residual(iso_box, state) < 1e-8
        assert np.all(state.u.values <= 1.0 + 1e-12)
        assert np.all(state.u.values >= -1.0 - 1e-12)
        # Some bounds must be active for the instance to be interesting
        assert np.any(np.isclose(np.abs(state.u.values), 1.0))
        np.testing.assert_allclose(state.p.values, dual_from_control(iso_box, state.u.values))

    def test_ssn_minimizes_objective(self, iso_box, rng):
        state, _ = ssn_solve(iso_box)
        best = objective(iso_box, state.u)
        for _ in range(5):
            trial = np.clip(state.u.values + 0.05 * rng.standard_normal(state.u.values.shape), -1.0, 1.0)
            assert objective(iso_box, state.u.like(trial)) >= best - 1e-12

    def test_objective_is_infinite_outside_box(self, iso_box):
        assert objective(iso_box, GridField.constant(iso_box.domain, 3.0)) == float("inf")

    def test_uzawa_with_exact_schur(self, iso_box):
        reference, _ = ssn_solve(iso_box)
        state, report = uzawa_solve(iso_box, ExactSchur(), reference=reference.u, rtol=1e-6)
        assert report.converged
        assert report.rel_error_history[-1] <= 1e-6
        assert report.residual_history[0] > report.residual_history[-1]

    def test_uzawa_contracts_in_q_seminorm(self, iso_box):
        reference, _ = ssn_solve(iso_box)
        _, report = uzawa_solve(iso_box, ExactSchur(), reference=reference.u, rtol=1e-8)
        assert report.contraction_estimates
        assert max(report.contraction_estimates) <= 1.0 + 1e-6

    def test_uzawa_with_scalar_sigma(self, iso_box):
        reference, _ = ssn_solve(iso_box)
        sigma = admissible_sigma(iso_box.spec)
        state, report = uzawa_solve(iso_box, ScalarSigma(sigma), reference=reference.u, rtol=1e-3)
        assert report.converged
        assert relative_error(state.u, reference.u) <= 1e-3

    def test_inadmissible_sigma(self, iso_box):
        with pytest.raises(ValueError):
            uzawa_solve(iso_box, ScalarSigma(1.0))

    def test_pd_converges(self, iso_box):
        reference, _ = ssn_solve(iso_box)
        state, report = pd_solve(iso_box, 350.0, 1.0, reference=reference.u, rtol=2e-3)
        assert report.converged
        assert relative_error(state.u, reference.u) <= 2e-3

    def test_pd_warns_on_large_steps(self, iso_box, caplog):
        with caplog.at_level(logging.WARNING):
            pd_solve(iso_box, 1e4, 1e4, max_iter=2)
        assert "convergence is not guaranteed" in caplog.text

    def test_non_convergence_is_reported(self, iso_box):
        _, report = uzawa_solve(iso_box, ExactSchur(), tol=0.0, max_iter=3)
        assert not report.converged
        assert report.iterations == 3
        assert len(report.residual_history) == 4


class TestTracking:
    def test_exact_trajectory_tracks(self, iso_box):
        _, report = uzawa_solve(iso_box, ExactSchur(), max_iter=5, tol=0.0, record_trajectory=True)
        assert len(report.trajectory) == 6
        assert tracking_check(iso_box, report.trajectory, ExactSchur()) < 1e-12

    def test_perturbed_trajectory_is_measured(self, iso_box):
        _, report = uzawa_solve(iso_box, ExactSchur(), max_iter=3, tol=0.0, record_trajectory=True)
        states = list(report.trajectory)
        last = states[-1]
        states[-1] = SaddleState(last.u + GridField.constant(iso_box.domain, 0.01), last.p)
        assert tracking_check(iso_box, states, ExactSchur()) == pytest.approx(0.01, rel=1e-8)


def test_solution_map_depends_on_state_shift_only(iso_box):
    domain = iso_box.domain
    spec = iso_box.spec
    z = GridField(domain, iso_box.state_shift)
    shifted_f = iso_box.f + GridField.constant(domain, 1.5)
    other = ProblemInstance(spec, iso_box.y_d + GridField(domain, spec.operator.apply(np.full(domain.shape, 1.5))),
                            shifted_f)
    np.testing.assert_allclose(other.state_shift, iso_box.state_shift, atol=1e-12)
    u_map = solution_map(spec, z)
    u_direct, _ = ssn_solve(other)
    assert relative_error(u_direct.u, u_map) < 1e-8


class TestParabolic:
    @pytest.fixture
    def heat_l1(self):
        domain = Domain.space_time(m=9, m_t=5)
        reg = RegularizerSpec.l1box(GridField.constant(domain, -6.0), GridField.constant(domain, 6.0), beta=0.01)
        spec = ProblemSpec(PdeOperator(HeatDirichlet(), domain), reg, alpha=0.01)
        y_d = GridField.from_function(domain, lambda t, x, y: 5 * t * np.sin(np.pi * x) * np.sin(np.pi * y))
        return ProblemInstance(spec, y_d, GridField.zeros(domain))

    def test_ssn_is_optimal(self, heat_l1):
        state, _ = ssn_solve(heat_l1)
        assert kkt_residual(heat_l1, state) < 1e-8

    def test_sparsity(self, heat_l1):
        state, _ = ssn_solve(heat_l1)
        # the control at t = 0 never reaches the state
        np.testing.assert_array_equal(state.u.values[0], 0.0)

    def test_exact_schur_is_rejected(self, heat_l1):
        with pytest.raises(ValueError):
            uzawa_solve(heat_l1, ExactSchur())

    def test_uzawa_with_scalar_sigma(self, heat_l1):
        reference, _ = ssn_solve(heat_l1)
        state, report = uzawa_solve(heat_l1, ScalarSigma(admissible_sigma(heat_l1.spec)),
                                    reference=reference.u, rtol=1e-3, max_iter=5000)
        assert report.converged
