import numpy as np
import pytest

from unbounded_ie.core import Domain, SampledFunction, sup_norm
from unbounded_ie.kernels import (
    LinearKernel,
    affine_F,
    check_car4,
    default_plan,
    exp_separable,
    exponential_family,
    identity_F,
    l1_difference,
    rational_urysohn,
    separable_urysohn,
    tanh_F,
    zero_F,
    zero_urysohn,
)
from unbounded_ie.operators import (
    OperatorSpec,
    TruncationError,
    apply_fredholm,
    apply_hammerstein,
    apply_nemytskii,
    apply_urysohn,
    apply_volterra,
    set_workers,
    strip_integrals,
    volterra_approx_error,
)
from unbounded_ie.quadrature import build_plan, integrate
from unbounded_ie.sampling import unit_ball_profiles

EXP = exponential_family("identity")
ONE = lambda ys: np.ones((len(ys), 1))  # noqa: E731
ZERO = lambda ys: np.zeros((len(ys), 1))  # noqa: E731
AXES = np.linspace(-5, 5, 21)


def fredholm(kernel=EXP, axes=AXES, **kw):
    return OperatorSpec("fredholm", kernel, axes, **kw)


class TestFredholm:
    def test_constant_input(self):
        out = apply_fredholm(fredholm(eps_tail=1e-10), ONE)
        np.testing.assert_allclose(out.values, 2.0, atol=1e-8)
        assert out.meta["car4"] == pytest.approx(2.0, abs=1e-8)
        assert {"car4", "sup_out", "tail_eps"} <= set(out.meta)

    def test_zero_input(self):
        assert sup_norm(apply_fredholm(fredholm(), ZERO)) == 0.0

    def test_separable(self):
        xs = np.linspace(0, 5, 11)
        out = apply_fredholm(fredholm(exp_separable(), xs, eps_tail=1e-12),
                             lambda ys: np.exp(-ys[:, :1]))
        np.testing.assert_allclose(out.values[:, 0], np.exp(-xs) / 2, atol=1e-8)

    def test_sampled_input(self):
        f = SampledFunction.constant(Domain.real_line(), np.linspace(-100, 100, 11), [1.0])
        out = apply_fredholm(fredholm(), f)
        np.testing.assert_allclose(out.values, 2.0, atol=1e-7)

    def test_insufficient_truncation_names_radius(self):
        spec = fredholm(plan=build_plan(Domain.real_line(), 10.0, 20), eps_tail=1e-8)
        with pytest.raises(TruncationError) as info:
            apply_fredholm(spec, ONE)
        assert info.value.required_T > 10.0

    def test_auto_without_tail_metadata(self):
        k = LinearKernel(lambda x, ys: np.exp(-np.abs(ys[:, 0])), Domain.real_line())
        with pytest.raises(TruncationError):
            apply_fredholm(fredholm(k), ONE)

    def test_2d(self):
        k = exponential_family("identity", n=2)
        ax = np.linspace(-1, 1, 3)
        spec = OperatorSpec("fredholm", k, (ax, ax), eps_tail=1e-6, panel_width=0.5, radial_probes=False)
        out = apply_fredholm(spec, ONE)
        np.testing.assert_allclose(out.values, 2 * np.pi, rtol=1e-4)

    def test_threads_do_not_change_bits(self):
        fs = unit_ball_profiles(3, seed=1)
        a = apply_fredholm(fredholm(), fs)
        set_workers(4)
        try:
            b = apply_fredholm(fredholm(), fs)
        finally:
            set_workers(1)
        for u, v in zip(a, b):
            np.testing.assert_array_equal(u.values, v.values)

    def test_linearity(self):
        f, g = unit_ball_profiles(2, seed=3)
        spec = fredholm()
        a, b = 0.7, -1.9
        lhs = apply_fredholm(spec, lambda ys: a * f(ys) + b * g(ys)).values
        Tf, Tg = apply_fredholm(spec, [f, g])
        np.testing.assert_allclose(lhs, a * Tf.values + b * Tg.values, rtol=1e-10, atol=1e-13)

    def test_boundedness_over_random_unit_ball(self):
        k = exponential_family("saturating")
        spec = fredholm(k)
        car4 = check_car4(k, spec.output_points, default_plan(k, T=60.0))
        for Tf in apply_fredholm(spec, unit_ball_profiles(100, seed=11)):
            assert Tf.meta["sup_out"] <= car4 * 1.0 + 1e-8

    def test_equicontinuity_transfer(self):
        k = exponential_family("saturating")
        spec = fredholm(k, eps_tail=1e-10)
        plan = spec.resolve_plan()
        pts = spec.output_points
        diffs = [l1_difference(k, plan, a, b) + 2 * k.tail_bound(plan.T, 5.0) for a, b in zip(pts, pts[1:])]
        for Tf in apply_fredholm(spec, unit_ball_profiles(20, seed=5)):
            jumps = np.abs(np.diff(Tf.values[:, 0]))
            assert np.all(jumps <= np.array(diffs) + 1e-10)

    def test_radial_probe_recorded(self):
        out = apply_fredholm(fredholm(), ONE)
        assert out.meta["probe_sup"] == pytest.approx(2.0, abs=1e-7)


class TestNemytskii:
    grid = np.linspace(0, 1, 5)

    def f(self, value):
        return SampledFunction.constant(Domain.half_line(), self.grid, [value])

    def test_identity(self):
        f = SampledFunction.from_callable(Domain.half_line(), self.grid, lambda p: p**2)
        np.testing.assert_array_equal(apply_nemytskii(identity_F(), f).values, f.values)

    def test_zero(self):
        assert sup_norm(apply_nemytskii(zero_F(), self.f(3.0))) == 0.0

    def test_tanh(self):
        out = apply_nemytskii(tanh_F(), self.f(3.0))
        np.testing.assert_allclose(out.values, np.tanh(3.0))
        assert sup_norm(out) <= min(3.0, 1.0)

    def test_non_finite(self):
        from unbounded_ie.kernels import Nonlinearity

        F = Nonlinearity(lambda ys, zs: zs / 0.0, lambda t: np.inf)
        with np.errstate(divide="ignore", invalid="ignore"), pytest.raises(ArithmeticError):
            apply_nemytskii(F, self.f(0.0))


class TestHammerstein:
    def test_identity_matches_fredholm_bitwise(self):
        f = SampledFunction.from_callable(Domain.real_line(), np.linspace(-30, 30, 61),
                                          lambda p: np.cos(p))
        h = apply_hammerstein(OperatorSpec("hammerstein", EXP, AXES, nonlinearity=identity_F()), f)
        t = apply_fredholm(fredholm(), f)
        np.testing.assert_array_equal(h.values, t.values)

    def test_zero(self):
        spec = OperatorSpec("hammerstein", EXP, AXES, nonlinearity=zero_F())
        assert sup_norm(apply_hammerstein(spec, ZERO)) == 0.0

    def test_fixed_point_value(self):
        k = exponential_family("identity", scale=0.25)
        spec = OperatorSpec("hammerstein", k, AXES, eps_tail=1e-12, nonlinearity=affine_F(1.0, 0.5))
        f = SampledFunction.constant(Domain.real_line(), AXES, [2 / 3])
        np.testing.assert_allclose(apply_hammerstein(spec, f).values, 2 / 3, atol=1e-8)

    def test_matches_monolithic_integration(self):
        F = tanh_F()
        spec = OperatorSpec("hammerstein", EXP, AXES, eps_tail=1e-10, nonlinearity=F)
        plan = spec.resolve_plan()
        for f in unit_ball_profiles(10, seed=9):
            got = apply_hammerstein(spec, f).values[:, 0]
            want = [integrate(plan.split([x]), lambda ys: EXP.func(np.array([x]), ys)
                              * np.tanh(f(ys)[:, 0])) for x in AXES]
            np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)

    def test_spec_consistency(self):
        with pytest.raises(ValueError):
            OperatorSpec("hammerstein", EXP, AXES)
        with pytest.raises(ValueError):
            OperatorSpec("fredholm", EXP, AXES, nonlinearity=tanh_F())
        with pytest.raises(TypeError):
            OperatorSpec("urysohn", EXP, AXES)


class TestUrysohn:
    xs = np.linspace(0, 6, 13)

    def spec(self, k):
        return OperatorSpec("urysohn", k, self.xs, eps_tail=1e-12, panel_width=0.5)

    def test_u_independent(self):
        f = SampledFunction.constant(Domain.half_line(), self.xs, [0.3])
        out = apply_urysohn(self.spec(separable_urysohn()), f)
        np.testing.assert_allclose(out.values[:, 0], np.exp(-self.xs), atol=1e-8)

    def test_rational_at_one(self):
        f = SampledFunction.constant(Domain.half_line(), self.xs, [1.0])
        out = apply_urysohn(self.spec(rational_urysohn()), f)
        np.testing.assert_allclose(out.values[:, 0], 1.5 * np.exp(-self.xs), atol=1e-8)

    def test_zero(self):
        f = SampledFunction.constant(Domain.half_line(), self.xs, [1.0])
        assert sup_norm(apply_urysohn(self.spec(zero_urysohn()), f)) == 0.0

    def test_equicontinuity_probe(self):
        k = rational_urysohn()
        spec = self.spec(k)
        eta = 1e-3
        delta = k.uniform_modulus_x(eta)
        for p in unit_ball_profiles(10, seed=2):
            f = SampledFunction.from_callable(Domain.half_line(), self.xs, p)
            out = apply_urysohn(spec, f)
            spec2 = OperatorSpec("urysohn", k, self.xs + delta / 2, eps_tail=1e-12, panel_width=0.5)
            out2 = apply_urysohn(spec2, f)
            assert np.max(np.abs(out.values - out2.values)) < 3 * eta


class TestVolterra:
    def volterra(self, k=EXP, axes=AXES, **kw):
        return OperatorSpec("volterra", k, axes, **kw)

    def test_exponential_growth_kernel(self):
        k = LinearKernel(lambda x, ys: np.exp(ys[:, 0]), Domain.real_line(),
                         tail=lambda T, R: np.exp(-T), name="exp(y)")
        xs = np.linspace(-3, 3, 7)
        out = apply_volterra(self.volterra(k, xs, eps_tail=1e-12, radial_probes=False), ONE)
        np.testing.assert_allclose(out.values[:, 0], np.exp(xs), rtol=1e-8, atol=1e-8)

    def test_zero(self):
        assert sup_norm(apply_volterra(self.volterra(), ZERO)) == 0.0

    def test_two_sided_kernel(self):
        out = apply_volterra(self.volterra(eps_tail=1e-10), ONE)
        np.testing.assert_allclose(out.values, 1.0, atol=1e-8)

    def test_linearity(self):
        f, g = unit_ball_profiles(2, seed=4)
        spec = self.volterra(radial_probes=False)
        lhs = apply_volterra(spec, lambda ys: 2 * f(ys) - g(ys)).values
        Vf, Vg = apply_volterra(spec, [f, g])
        np.testing.assert_allclose(lhs, 2 * Vf.values - Vg.values, rtol=1e-10, atol=1e-13)

    def test_approximation_error_below_strip_bound(self):
        spec = self.volterra(axes=np.linspace(-2, 2, 9), eps_tail=1e-10, radial_probes=False)
        fs = unit_ball_profiles(3, seed=7)
        errs = []
        for m in (1, 4, 16):
            r = volterra_approx_error(spec, fs, m)
            assert r.error <= r.strip_bound + 1e-8
            assert r.error <= r.weighted_bound + 1e-8
            errs.append(r.error)
        assert errs[0] > errs[1] > errs[2]

    def test_zero_kernel_error(self):
        k = exponential_family("identity", scale=0.0)
        spec = self.volterra(k, radial_probes=False)
        assert volterra_approx_error(spec, unit_ball_profiles(1, seed=0), 8).error == 0.0

    def test_strip_integral_closed_form(self):
        m = 4
        full, _ = strip_integrals(EXP, [0.0], m)
        assert full == pytest.approx(1 - np.exp(-1 / m), abs=1e-13)

    def test_needs_unit_ball(self):
        spec = self.volterra(radial_probes=False)
        with pytest.raises(ValueError):
            volterra_approx_error(spec, lambda ys: 3 * np.ones((len(ys), 1)), 2)
