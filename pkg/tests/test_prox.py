"""
Tests for the pointwise resolvents of the control regularizers.
"""
import numpy as np
import pytest

from src.field import Domain, GridField
from src.prox import (
    MultiplierSpec,
    RegularizerSpec,
    brute_force_resolvent,
    firm_nonexpansiveness_check,
    resolvent,
    resolvent_array,
    soft_threshold,
)


def _bounds(domain: Domain, lower: float, upper: float):
    return GridField.constant(domain, lower), GridField.constant(domain, upper)


@pytest.fixture
def domain():
    return Domain.square(8)


class TestRegularizerSpec:
    def test_rejects_unknown_variant(self):
        with pytest.raises(ValueError):
            RegularizerSpec("elastic")

    def test_rejects_negative_beta(self, domain):
        with pytest.raises(ValueError):
            RegularizerSpec.l1box(*_bounds(domain, -1, 1), beta=-0.1)

    def test_box_needs_bounds(self):
        with pytest.raises(ValueError):
            RegularizerSpec("box")

    def test_rejects_crossed_bounds(self, domain):
        with pytest.raises(ValueError):
            RegularizerSpec.box(*_bounds(domain, 1.0, -1.0))

    def test_penalty(self, domain):
        reg = RegularizerSpec.l1box(*_bounds(domain, -2, 2), beta=0.5)
        assert reg.penalty(np.ones(domain.shape), domain) == pytest.approx(0.5)
        assert reg.penalty(np.full(domain.shape, 3.0), domain) == float("inf")
        assert RegularizerSpec.none().penalty(np.full(domain.shape, 1e6), domain) == 0.0


class TestResolvent:
    def test_unconstrained_is_scaling(self, rng):
        v = rng.standard_normal((8, 8))
        u = resolvent_array(RegularizerSpec.none(), MultiplierSpec(0.5, tau=0.5), v)
        np.testing.assert_allclose(u, v)

    def test_box_clips(self, domain):
        reg = RegularizerSpec.box(*_bounds(domain, -1.0, 2.0))
        v = np.linspace(-5, 5, 64).reshape(8, 8)
        u = resolvent_array(reg, MultiplierSpec(0.5), v)
        np.testing.assert_allclose(u, np.clip(2 * v, -1.0, 2.0))

    def test_l1box_thresholds_then_clips(self, domain):
        reg = RegularizerSpec.l1box(*_bounds(domain, -6, 6), beta=0.01)
        v = np.full(domain.shape, 0.005)
        v[0, 0] = 0.03
        v[0, 1] = -1.0
        u = resolvent_array(reg, MultiplierSpec(0.01), v)
        assert u[1, 1] == 0.0
        assert u[0, 0] == pytest.approx(2.0)
        assert u[0, 1] == pytest.approx(-6.0)

    def test_l1box_with_zero_beta_is_box(self, domain, rng):
        lower, upper = _bounds(domain, -0.3, 0.4)
        v = rng.standard_normal(domain.shape)
        mult = MultiplierSpec(1.0, tau=1e-4)
        np.testing.assert_array_equal(
            resolvent_array(RegularizerSpec.l1box(lower, upper, 0.0), mult, v),
            resolvent_array(RegularizerSpec.box(lower, upper), mult, v),
        )

    def test_field_valued_multiplier(self, domain):
        lam = GridField.from_function(domain, lambda x, y: 1.0 + x)
        u = resolvent(RegularizerSpec.none(), MultiplierSpec(lam), GridField.constant(domain, 2.0))
        np.testing.assert_allclose(u.values, 2.0 / lam.values)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            resolvent_array(RegularizerSpec.none(), MultiplierSpec(0.0), np.ones((4, 4)))

    def test_rejects_domain_mismatch(self, domain):
        reg = RegularizerSpec.box(*_bounds(domain, -1, 1))
        with pytest.raises(ValueError):
            resolvent(reg, MultiplierSpec(1.0), GridField.zeros(Domain.square(9)))


@pytest.mark.parametrize("v", [-3.0, -0.02, -0.004, 0.0, 0.007, 0.3, 2.5])
@pytest.mark.parametrize("beta", [0.0, 0.01])
def test_matches_brute_force_minimizer(v, beta):
    domain = Domain.square(4)
    lower, upper = _bounds(domain, -1.5, 1.0)
    reg = RegularizerSpec.l1box(lower, upper, beta)
    mult = MultiplierSpec(0.01, tau=1e-4)
    closed = resolvent_array(reg, mult, np.full(domain.shape, v))[0, 0]
    brute = brute_force_resolvent(v, 0.0101, -1.5, 1.0, beta=beta)
    assert closed == pytest.approx(brute, abs=1.1e-3)


def test_brute_force_accepts_custom_penalty():
    # ψ = r² doubles the quadratic term
    r = brute_force_resolvent(1.0, 1.0, -3.0, 3.0, psi=lambda r: r**2)
    assert r == pytest.approx(1.0 / 3.0, abs=1e-3)


def test_soft_threshold():
    np.testing.assert_allclose(soft_threshold(np.array([-2.0, -0.5, 0.5, 2.0]), 1.0),
                               [-1.0, 0.0, 0.0, 1.0])


class TestFirmNonexpansiveness:
    @pytest.mark.parametrize("variant", ["none", "box", "l1box"])
    def test_passes(self, domain, variant):
        lower, upper = _bounds(domain, -1.0, 1.0)
        reg = {
            "none": RegularizerSpec.none(),
            "box": RegularizerSpec.box(lower, upper),
            "l1box": RegularizerSpec.l1box(lower, upper, 0.1),
        }[variant]
        report = firm_nonexpansiveness_check(reg, MultiplierSpec(0.01, tau=1e-4), trials=50,
                                             seed=3, domain=domain)
        assert report.passed
        assert report.trials == 50

    def test_none_needs_domain(self):
        with pytest.raises(ValueError):
            firm_nonexpansiveness_check(RegularizerSpec.none(), MultiplierSpec(1.0), trials=5)

    def test_needs_trials(self, domain):
        with pytest.raises(ValueError):
            firm_nonexpansiveness_check(RegularizerSpec.none(), MultiplierSpec(1.0), trials=0,
                                        domain=domain)
