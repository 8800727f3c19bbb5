"""Activation registry: f, Fourier transforms, Gaussian functionals.

Closed-form values frozen here: for f(x) = x e^{-x^2} the transform is
-i (sqrt(pi)/2) t e^{-t^2/4} and E[f(sZ)^2] = s^2/(1+4s^2)^{3/2}; for
f(x) = sin(x) e^{-x^2} the transform is a difference of shifted
Gaussians. scipy.integrate.quad serves as the independent oracle for the
numeric-transform path.
"""

import math

import numpy as np
import pytest
from scipy import integrate

from ckspectrum.activations import Activation, builtin, fourier, gauss_expect, theta1, theta2

SQRT_PI = math.sqrt(math.pi)


def quad_fourier(f, t, upper=60.0):
    """Oracle: -2i * integral_0^inf f(x) sin(tx) dx for odd f."""
    val, err = integrate.quad(lambda x: f(x) * math.sin(t * x), 0.0, upper, limit=400)
    return -2j * val, 2 * err


class TestBuiltins:
    def test_unknown_name(self):
        with pytest.raises(ValueError):
            builtin("not_an_activation")

    def test_gauss_odd_closed_form_transform(self):
        a = builtin("gauss_odd")
        assert a.f_hat_kind == "closed-form"
        for t in (0.5, 1.0, 2.0):
            want, err = quad_fourier(a.f, t)
            got = fourier(a, t)
            assert abs(got - want) <= max(1e-8 * abs(want), 10 * err + 1e-12)

    def test_gauss_odd_at_two(self):
        assert fourier(builtin("gauss_odd"), 2.0) == pytest.approx(
            -1j * SQRT_PI * math.exp(-1.0), rel=1e-12
        )

    def test_sin_gauss_transform(self):
        a = builtin("sin_gauss")
        for t in (0.0, 0.7, 1.0, 3.0):
            want = -1j * (SQRT_PI / 2) * (
                math.exp(-((t - 1) ** 2) / 4) - math.exp(-((t + 1) ** 2) / 4)
            )
            assert fourier(a, t) == pytest.approx(want, abs=1e-12)
            oracle, err = quad_fourier(a.f, t)
            assert abs(fourier(a, t) - oracle) <= 10 * err + 1e-10

    def test_transform_vanishes_at_zero(self):
        for name in ("gauss_odd", "sin_gauss", "arctan", "tanh"):
            assert abs(fourier(builtin(name), 0.0)) < 1e-12

    def test_sup_norms(self):
        assert builtin("arctan").sup_norm == pytest.approx(math.pi / 2)
        assert builtin("tanh").sup_norm == pytest.approx(1.0)
        assert builtin("gauss_odd").sup_norm == pytest.approx(
            math.exp(-0.5) / math.sqrt(2)
        )
        assert math.isinf(builtin("identity").sup_norm)

    def test_oddness_on_grid(self):
        xs = np.linspace(-6, 6, 101)
        for name in ("gauss_odd", "sin_gauss", "arctan", "tanh", "identity"):
            a = builtin(name)
            assert np.allclose(a.f(-xs), -a.f(xs), atol=1e-12)

    def test_identity_has_no_transform(self):
        with pytest.raises(ValueError):
            fourier(builtin("identity"), 1.0)


class TestNumericTransform:
    def test_matches_closed_form_for_gauss_odd(self):
        a = builtin("gauss_odd")
        for t in np.linspace(-10, 10, 21):
            closed = -1j * (SQRT_PI / 2) * t * math.exp(-t * t / 4)
            got = fourier(a, float(t), method="numeric")
            assert abs(got - closed) < 1e-8

    def test_arctan_transform_against_quad(self):
        a = builtin("arctan")
        cut = 8.0
        for t in (0.5, 1.0, 2.0):
            oracle, err = integrate.quad(
                lambda x: math.atan(x) * math.exp(-((x / cut) ** 2)) * math.sin(t * x),
                0.0, 60.0, limit=800,
            )
            assert fourier(a, t) == pytest.approx(-2j * oracle, abs=100 * err + 1e-9)

    def test_custom_cutoff_changes_transform(self):
        wide = builtin("arctan", cutoff=8.0)
        narrow = builtin("arctan", cutoff=2.0)
        assert abs(fourier(wide, 0.5) - fourier(narrow, 0.5)) > 1e-3

    def test_purely_imaginary_and_conjugate_symmetric(self):
        for name in ("gauss_odd", "sin_gauss", "arctan", "tanh"):
            a = builtin(name)
            for t in (0.3, 1.7, 5.0):
                z = fourier(a, t)
                assert abs(z.real) < 1e-9
                assert fourier(a, -t) == pytest.approx(z.conjugate(), abs=1e-10)

    def test_decay_audit(self):
        # fourth-power-weighted tail stays bounded for the smooth builtins
        for name in ("gauss_odd", "sin_gauss", "arctan", "tanh"):
            a = builtin(name)
            worst = max(
                abs(fourier(a, t)) * (1 + abs(t)) ** 4 for t in (8.0, 10.0, 12.0, 16.0)
            )
            assert worst < 1e3


class TestThetas:
    def test_identity(self):
        a = builtin("identity")
        assert theta1(a, 1.0) == pytest.approx(1.0, rel=1e-10)
        assert theta2(a, 1.0) == pytest.approx(1.0, rel=1e-10)
        assert theta1(a, 0.5) == pytest.approx(0.25, rel=1e-10)
        assert theta2(a, 2.0) == pytest.approx(1.0, rel=1e-10)

    def test_gauss_odd_closed_forms(self):
        a = builtin("gauss_odd")
        assert theta1(a, 1.0) == pytest.approx(5 ** -1.5, rel=1e-10)
        assert theta2(a, 1.0) == pytest.approx(1 / 27, rel=1e-10)
        for s in (0.25, 0.7, 1.0, 2.0, 4.0):
            assert theta1(a, s) == pytest.approx(
                s * s / (1 + 4 * s * s) ** 1.5, rel=1e-9
            )
            assert theta2(a, s) == pytest.approx((1 + 2 * s * s) ** -3, rel=1e-9)

    def test_sin_gauss_values(self):
        a = builtin("sin_gauss")
        assert theta1(a, 1.0) == pytest.approx(
            (1 - math.exp(-0.4)) / (2 * math.sqrt(5)), rel=1e-10
        )
        assert theta2(a, 1.0) == pytest.approx(math.exp(-1 / 3) / 27, rel=1e-10)

    def test_odd_f_has_zero_gaussian_mean(self):
        for name in ("gauss_odd", "sin_gauss", "arctan", "tanh"):
            a = builtin(name)
            assert abs(gauss_expect(a.f, 1.3)) < 1e-12

    def test_node_doubling_stability(self):
        for name in ("gauss_odd", "sin_gauss", "arctan", "tanh"):
            a = builtin(name)
            for s in (0.25, 1.0, 4.0):
                v200 = theta1(a, s)
                v400 = theta1(a, s, nodes=400)
                assert abs(v400 - v200) < 1e-9 * max(1.0, abs(v200))
                w200 = theta2(a, s)
                w400 = theta2(a, s, nodes=400)
                assert abs(w400 - w200) < 1e-9 * max(1.0, abs(w200))

    def test_invalid_scale(self):
        with pytest.raises(ValueError):
            theta1(builtin("gauss_odd"), 0.0)


class TestScaledVariants:
    def test_parse_and_evaluate(self):
        a = builtin("scaled:gauss_odd:2.0:1.5")
        assert a.f(1.5) == pytest.approx(2 * math.exp(-1.0), rel=1e-12)
        assert a.sup_norm == pytest.approx(2 * math.exp(-0.5) / math.sqrt(2))

    def test_transform_rescales(self):
        a = builtin("scaled:gauss_odd:2.0:1.5")
        base = builtin("gauss_odd")
        for t in (0.5, 1.0, 2.0):
            want = 2.0 * 1.5 * fourier(base, 1.5 * t)
            assert fourier(a, t) == pytest.approx(want, rel=1e-10)
            oracle, err = quad_fourier(a.f, t)
            assert abs(fourier(a, t) - oracle) <= 10 * err + 1e-9

    def test_theta_rescales(self):
        a = builtin("scaled:gauss_odd:2.0:1.5")
        base = builtin("gauss_odd")
        assert theta1(a, 1.0) == pytest.approx(4 * theta1(base, 1 / 1.5), rel=1e-9)

    def test_bad_grammar(self):
        with pytest.raises(ValueError):
            builtin("scaled:gauss_odd:2.0")
        with pytest.raises(ValueError):
            builtin("scaled:nope:1.0:1.0")
