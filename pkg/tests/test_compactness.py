import numpy as np
import pytest

from unbounded_ie.compactness import (
    AACertificate,
    FunctionFamily,
    certify,
    estimate_bound,
    estimate_modulus,
    find_extension_witness,
    translate_bump_family,
    verify_certificate,
)
from unbounded_ie.core import Domain, DomainError, SampledFunction
from unbounded_ie.kernels import exponential_family, l1_difference, ray_cauchy_tail
from unbounded_ie.operators import OperatorSpec, apply_fredholm, fredholm_modulus_hint
from unbounded_ie.sampling import unit_ball_profiles

LINE = Domain.real_line()
HALF = Domain.half_line()


def constants(values, grid=np.linspace(-3, 3, 7), domain=LINE):
    return FunctionFamily([SampledFunction.constant(domain, grid, [v]) for v in values])


@pytest.fixture(scope="module")
def images():
    k = exponential_family("saturating")
    spec = OperatorSpec("fredholm", k, np.linspace(-60, 60, 241), radial_probes=False)
    outs = apply_fredholm(spec, unit_ball_profiles(60, seed=42))
    return spec, FunctionFamily(outs[:40], "Fredholm image"), FunctionFamily(outs[40:], "holdout")


class TestBound:
    def test_constants(self):
        assert estimate_bound(constants([0.0, 0.5, 1.0])) == 1.0

    def test_exponentials(self):
        xs = np.linspace(0, 5, 11)
        fam = FunctionFamily([SampledFunction.from_callable(HALF, xs, lambda p, c=c: c * np.exp(-p))
                              for c in (1.0, 2.0)])
        assert estimate_bound(fam) == 2.0

    def test_fredholm_images(self, images):
        _, fam, _ = images
        assert estimate_bound(fam) <= 2.0 + 1e-8


class TestModulus:
    def test_constants(self):
        table = estimate_modulus(constants([1.0, 2.0]), [[0.0]], [0.5, 1.0])
        assert [w for _, _, w in table] == [0.0, 0.0]

    def test_sines(self):
        xs = np.linspace(-1, 1, 20001)
        fam = FunctionFamily([SampledFunction.from_callable(LINE, xs, lambda p, k=k: np.sin(k * p))
                              for k in range(1, 11)])
        (_, _, w), = estimate_modulus(fam, [[0.0]], [0.01])
        assert w == pytest.approx(np.sin(0.1), abs=1e-6)

    def test_fredholm_images_below_kernel_difference(self, images):
        spec, fam, _ = images
        plan = spec.resolve_plan()
        hint = fredholm_modulus_hint(spec)
        for x in (0.0, 1.5):
            table = estimate_modulus(fam, [[x]], [0.5, 1.0])
            for _, d, w in table:
                bound = max(l1_difference(spec.kernel, plan, [x], [p]) for p in (x - d, x + d))
                assert w <= bound + 1e-8
                assert w <= hint(x, d) + 1e-12

    def test_nondecreasing_in_delta(self, images):
        _, fam, _ = images
        omegas = [w for _, _, w in estimate_modulus(fam, [[0.3]], [0.5, 1.0, 2.0, 4.0])]
        assert omegas == sorted(omegas)

    def test_off_domain_probe(self):
        with pytest.raises(DomainError):
            estimate_modulus(constants([1.0], np.linspace(0, 1, 3), HALF), [[-1.0]], [0.1])

    def test_bad_delta_grid(self):
        with pytest.raises(ValueError):
            estimate_modulus(constants([1.0]), [[0.0]], [0.2, 0.1])


class TestWitness:
    def test_identical_members(self):
        w = find_extension_witness(constants([0.7, 0.7, 0.7]), 0.1)
        assert (w.T, w.delta) == (1.0, 0.1)

    def test_too_few_members(self):
        with pytest.raises(ValueError):
            find_extension_witness(constants([1.0]), 0.1)

    def test_kernel_derived(self, images):
        spec, fam, _ = images
        hint = ray_cauchy_tail(spec.kernel)
        Ts = []
        for eps in (0.1, 0.01):
            w = find_extension_witness(fam, eps, hint)
            assert w.source == "kernel" and w.delta == eps / 4
            Ts.append(w.T)
        assert Ts[1] >= Ts[0]

    def test_empirical_search_is_sound(self, images):
        _, fam, _ = images
        vals, grid = fam.values, fam.grid
        w = find_extension_witness(fam, 0.05)
        assert w is not None and w.source == "empirical"
        inner = np.linalg.norm(grid, axis=1) <= w.T
        for i in range(len(fam)):
            for j in range(i + 1, len(fam)):
                d = np.linalg.norm(vals[i] - vals[j], axis=1)
                assert not (d[inner].max() <= w.delta and d.max() > 0.05)

    def test_translate_bumps(self):
        dom = Domain.real_line([1, 2, 4, 8, 16, 32, 64])
        bumps = translate_bump_family(dom, np.linspace(0, 100, 401), range(10, 91, 10))
        assert find_extension_witness(bumps, 0.5) is None
        assert estimate_bound(bumps) == 1.0


class TestCertificate:
    def test_json_round_trip(self, images):
        spec, fam, _ = images
        cert = certify(fam, [0.1], tail_hint=ray_cauchy_tail(spec.kernel))
        data = cert.to_json()
        assert set(data) == {"M", "modulus", "extension", "sample_size"}
        again = AACertificate.from_json(data)
        assert again.to_json() == data

    def test_subset_holdout_passes(self, images):
        _, fam, _ = images
        cert = certify(fam, [0.1, 0.05])
        assert verify_certificate(fam.subset(range(10)), cert).passed

    def test_fresh_images_pass(self, images):
        spec, fam, hold = images
        cert = certify(fam, [0.1, 0.01], tail_hint=ray_cauchy_tail(spec.kernel), bound_hint=2.0,
                       modulus_hint=fredholm_modulus_hint(spec))
        rep = verify_certificate(hold, cert)
        assert rep.passed, rep.violations[:3]

    def test_bumps_in_holdout_fail(self):
        dom = Domain.real_line([1, 2, 4, 8, 16, 32, 64])
        grid = np.linspace(0, 100, 401)
        calm = FunctionFamily([SampledFunction.constant(dom, grid, [c]) for c in (0.0, 0.001)])
        cert = certify(calm, [0.5])
        rep = verify_certificate(translate_bump_family(dom, grid, range(10, 91, 10)), cert)
        assert not rep.passed
        ext = [v for v in rep.violations if v["kind"] == "extension"]
        assert ext and len(ext[0]["pair"]) == 2

    def test_extension_T_monotone(self, images):
        spec, fam, _ = images
        cert = certify(fam, [0.01, 0.1, 0.05], tail_hint=ray_cauchy_tail(spec.kernel))
        rows = sorted(cert.extension, key=lambda r: -r[0])
        Ts = [T for _, T, _ in rows]
        assert Ts == sorted(Ts)
