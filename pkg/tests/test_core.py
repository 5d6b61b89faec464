import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unbounded_ie.core import (
    Domain,
    DomainError,
    GridSupWarning,
    SampledFunction,
    read_csv,
    sup_distance,
    sup_norm,
    write_csv,
    zero_like,
)


def line(values, grid=None, domain=None):
    domain = domain or Domain.real_line()
    grid = np.arange(len(values), dtype=float) if grid is None else np.asarray(grid, float)
    return SampledFunction(domain, (grid,), np.asarray(values, float))


class TestDomain:
    def test_kinds_and_dimensions(self):
        assert Domain.half_line().dimension == 1
        assert Domain.rn(3).dimension == 3
        with pytest.raises(ValueError):
            Domain("half_line", 2)
        with pytest.raises(ValueError):
            Domain("box_rn", 4)
        with pytest.raises(ValueError):
            Domain("torus", 1)

    def test_radii_strictly_increasing(self):
        with pytest.raises(ValueError):
            Domain.real_line([1.0, 1.0])
        with pytest.raises(ValueError):
            Domain.real_line([0.0, 1.0])

    def test_exhaustion_covers_bounded_sets(self):
        dom = Domain.rn(2)
        assert dom.exhaustion_radii[dom.exhaustion_index(3.0)] >= 3.0
        assert dom.exhaustion_index(0.5) == 0
        with pytest.raises(ValueError):
            dom.exhaustion_index(2.0**30)

    def test_half_line_membership(self):
        dom = Domain.half_line()
        assert dom.contains([0.0, 1.0]).all()
        assert not dom.contains([-1e-9]).any()
        with pytest.raises(DomainError):
            dom.check([-1.0])


class TestSupNorm:
    def test_zero_function(self):
        assert sup_norm(line(np.zeros(5))) == 0.0

    def test_unit_circle_values(self):
        xs = np.array([0.0, np.pi / 2, np.pi])
        f = SampledFunction.from_callable(Domain.real_line(), (xs,),
                                          lambda p: np.stack([np.sin(p[:, 0]), np.cos(p[:, 0])], 1))
        assert sup_norm(f) == pytest.approx(1.0, abs=1e-15)

    def test_attained_at_origin(self):
        xs = np.arange(11.0)
        f = line(np.exp(-xs), xs, Domain.half_line())
        assert sup_norm(f) == 1.0


class TestSupDistance:
    def test_identical(self):
        f = line([1.0, 2.0, 3.0])
        assert sup_distance(f, f, 1.5) == 0.0
        assert sup_distance(f, f) == 0.0

    def test_constant_offset(self):
        f = line(np.zeros(4))
        g = line(np.full(4, 2.5))
        assert sup_distance(f, g) == 2.5

    def test_restricted_radius(self):
        xs = np.arange(11.0)
        f = line(np.exp(-xs), xs, Domain.half_line())
        g = zero_like(f)
        assert sup_distance(f, g, 2) == 1.0
        assert sup_distance(f, g, "all") == 1.0

    def test_empty_ball_warns(self):
        f = line([1.0, 2.0], [5.0, 6.0])
        with pytest.warns(GridSupWarning):
            assert sup_distance(f, f.with_values([0.0, 0.0]), 1.0) == 0.0

    def test_mismatched_grids(self):
        with pytest.raises(ValueError):
            sup_distance(line([1.0, 2.0]), line([1.0, 2.0, 3.0]))


class TestEval:
    def test_linear_midpoint_and_extension(self):
        f = line([0.0, 2.0], [0.0, 1.0], Domain.half_line())
        assert f.eval(0.5)[0] == 1.0
        assert f.eval(5.0)[0] == 2.0
        assert f.eval(1.0)[0] == 2.0

    def test_off_domain(self):
        f = line([0.0, 2.0], [0.0, 1.0], Domain.half_line())
        with pytest.raises(DomainError):
            f.eval(-0.1)

    def test_2d_grid_points_exact_and_facets(self):
        ax = np.linspace(-1, 1, 5)
        f = SampledFunction.from_callable(Domain.rn(2), (ax, ax),
                                          lambda p: np.sin(3 * p[:, :1]) * p[:, 1:] ** 2)
        np.testing.assert_array_equal(f(f.grid), f.values)
        # point on the shared facet x1 = 0 between two cells, approached from both sides
        left = f([[-1e-300, 0.3]])
        right = f([[0.0, 0.3]])
        np.testing.assert_allclose(left, right, rtol=0, atol=1e-15)

    def test_values_read_only(self):
        f = line([1.0, 2.0])
        with pytest.raises(ValueError):
            f.values[0, 0] = 5.0


def test_csv_round_trip(tmp_path):
    ax = np.linspace(0, 2, 3)
    f = SampledFunction.from_callable(Domain.rn(2), (ax, ax), lambda p: np.stack([p[:, 0], p.sum(1) / 3], 1))
    text = write_csv(f, tmp_path / "f.csv")
    assert text.splitlines()[0] == "x1,x2,v1,v2"
    g = read_csv(tmp_path / "f.csv", Domain.rn(2))
    assert g.same_grid(f)
    np.testing.assert_array_equal(g.values, f.values)


vals = st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=6, max_size=6)


@settings(max_examples=50, deadline=None)
@given(vals, vals, vals)
def test_triangle_inequality(a, b, c):
    f, g, h = line(a), line(b), line(c)
    assert sup_distance(f, g) <= sup_distance(f, h) + sup_distance(h, g) + 1e-9 * (1 + max(map(abs, a + b + c)))


@settings(max_examples=50, deadline=None)
@given(vals, vals, st.floats(0.5, 3), st.floats(0.5, 3))
def test_monotone_in_radius(a, b, r1, r2):
    r1, r2 = sorted((r1, r2))
    f, g = line(a), line(b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GridSupWarning)
        assert sup_distance(f, g, r1) <= sup_distance(f, g, r2)


@settings(max_examples=50, deadline=None)
@given(vals)
def test_sup_norm_is_distance_to_zero(a):
    f = line(a)
    assert sup_norm(f) == sup_distance(f, zero_like(f))
