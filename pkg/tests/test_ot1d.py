import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfbary import _pykernels
from cfbary.ot1d import (
    BRUTEFORCE_MAX,
    ContractError,
    EmpiricalDist,
    QuantileTable,
    barycenter_quantiles,
    cdf_eval,
    ks_distance,
    merged_rank_grid,
    quantile_eval,
    transport_to_barycenter,
    w2_squared,
    w2_squared_bruteforce,
)

try:
    from cfbary import _ckernels
except ImportError:
    _ckernels = None

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
samples = st.lists(finite, min_size=1, max_size=30)
small = st.lists(finite, min_size=1, max_size=BRUTEFORCE_MAX)


def D(*xs):
    return EmpiricalDist(np.array(xs, dtype=float))


class TestEmpiricalDist:
    def test_sorted_and_readonly(self):
        d = D(3, 1, 2)
        assert d.values.tolist() == [1, 2, 3]
        with pytest.raises(ValueError):
            d.values[0] = 9

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ContractError):
            EmpiricalDist(np.array([]))
        with pytest.raises(ContractError):
            D(1.0, np.nan)
        with pytest.raises(ContractError):
            D(np.inf)

    def test_input_not_aliased(self):
        x = np.array([2.0, 1.0])
        d = EmpiricalDist(x)
        x[0] = 50
        assert d.values.tolist() == [1, 2]


class TestCdfQuantile:
    d = D(1, 2, 3, 4)

    @pytest.mark.parametrize("t, want", [(2.5, 0.5), (0, 0.0), (4, 1.0), (1, 0.25), (100, 1.0)])
    def test_cdf_examples(self, t, want):
        assert cdf_eval(self.d, t) == want

    @pytest.mark.parametrize("u, want", [(0.5, 2), (1.0, 4), (0.0, 1), (0.26, 2), (0.25, 1)])
    def test_quantile_examples(self, u, want):
        assert quantile_eval(self.d, u) == want

    def test_singleton(self):
        d = D(7)
        assert np.all(quantile_eval(d, np.linspace(0, 1, 11)) == 7)

    def test_quantile_level_checked(self):
        with pytest.raises(ContractError):
            quantile_eval(self.d, 1.5)

    def test_vectorized(self):
        assert cdf_eval(self.d, np.array([0, 2, 5])).tolist() == [0, 0.5, 1]

    @given(st.lists(finite, min_size=1, max_size=30, unique=True))
    def test_galois_pair_on_sample_points(self, xs):
        d = EmpiricalDist(np.array(xs))
        for z in d.values:
            assert quantile_eval(d, cdf_eval(d, z)) == z

    @given(samples, st.floats(0, 1))
    def test_quantile_is_generalized_inverse(self, xs, u):
        d = EmpiricalDist(np.array(xs))
        q = quantile_eval(d, u)
        assert cdf_eval(d, q) >= u
        below = d.values[d.values < q]
        if below.size:
            assert cdf_eval(d, below[-1]) < u


class TestQuantileTable:
    def test_reproduces_grid_values(self):
        t = QuantileTable([0.25, 0.5, 1.0], [1, 2, 5])
        assert t([0.25, 0.5, 1.0]).tolist() == [1, 2, 5]
        assert t(0.3) == 2 and t(0.0) == 1

    @pytest.mark.parametrize("grid, q", [([0.5, 0.5], [1, 2]), ([0, 1], [1, 2]), ([0.5, 1], [2, 1]), ([1.0], [])])
    def test_validation(self, grid, q):
        with pytest.raises(ContractError):
            QuantileTable(grid, q)

    def test_interpolated_read(self):
        t = QuantileTable([0.5, 1.0], [0.0, 2.0])
        assert t(0.5, interpolate=True) == pytest.approx(1.0)
        assert t(0.1, interpolate=True) == 0.0 and t(1.0, interpolate=True) == 2.0


class TestW2:
    def test_examples(self):
        assert w2_squared(D(0, 1), D(2, 3)) == 4.0
        assert w2_squared(D(0), D(1)) == 1.0
        a = D(0.3, -2, 7)
        assert w2_squared(a, a) == 0.0

    def test_unequal_counts(self):
        assert w2_squared(D(0, 10), D(1)) == 41.0
        # thirds vs halves: pieces (0,1/3],(1/3,1/2],(1/2,2/3],(2/3,1]
        want = (1 / 3) * 0 + (1 / 6) * 1 + (1 / 6) * 1 + (1 / 3) * 0
        assert w2_squared(D(0, 1, 2), D(0, 2)) == pytest.approx(want, abs=1e-15)

    def test_accepts_tables(self):
        a, b = D(0, 1), D(2, 3)
        assert w2_squared(a.as_table(), b) == 4.0

    def test_partial_table_rejected(self):
        with pytest.raises(ContractError):
            w2_squared(QuantileTable([0.5], [1.0]), D(1))

    @given(samples, samples)
    def test_symmetry(self, xs, ys):
        a, b = EmpiricalDist(np.array(xs)), EmpiricalDist(np.array(ys))
        assert w2_squared(a, b) == pytest.approx(w2_squared(b, a), rel=1e-12, abs=1e-12)

    @given(samples, samples, samples)
    def test_triangle(self, xs, ys, zs):
        a, b, c = (EmpiricalDist(np.array(x)) for x in (xs, ys, zs))
        ab, bc, ac = (math.sqrt(w2_squared(p, q)) for p, q in ((a, b), (b, c), (a, c)))
        assert ac <= ab + bc + 1e-9

    @given(samples, finite)
    def test_shift(self, xs, c):
        a = EmpiricalDist(np.array(xs))
        b = EmpiricalDist(np.array(xs) + c)
        assert w2_squared(a, b) == pytest.approx(c * c, rel=1e-9, abs=1e-9)

    @settings(max_examples=200)
    @given(small, small)
    def test_matches_bruteforce(self, xs, ys):
        a, b = EmpiricalDist(np.array(xs)), EmpiricalDist(np.array(ys))
        assert abs(w2_squared(a, b) - w2_squared_bruteforce(a, b)) <= 1e-9

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=20), st.lists(st.floats(-3, 3), min_size=1, max_size=20))
    def test_ks_bound(self, xs, ys):
        a, b = EmpiricalDist(np.array(xs)), EmpiricalDist(np.array(ys))
        assert w2_squared(a, b) <= 4 * 9 * ks_distance(a, b) + 1e-9


class TestBruteforce:
    def test_examples(self):
        assert w2_squared_bruteforce(D(0, 1), D(2, 3)) == 4.0
        assert w2_squared_bruteforce(D(5), D(5)) == 0.0
        assert w2_squared_bruteforce(D(0, 10), D(1)) == 41.0

    def test_size_guard(self):
        with pytest.raises(ContractError):
            w2_squared_bruteforce(D(*range(BRUTEFORCE_MAX + 1)), D(0))


class TestBarycenter:
    def test_example(self):
        t = barycenter_quantiles([D(0, 2), D(0, 4)], [0.5, 0.5], grid=[0.5, 1.0])
        assert t.q.tolist() == [0, 3]

    def test_single_dist_identity(self):
        d = D(4, 1, 3)
        t = barycenter_quantiles([d], [1.0])
        assert t.q.tolist() == d.values.tolist()
        assert t.grid.tolist() == d.grid.tolist()

    def test_identical_dists(self):
        d = D(1, 5, 2, 2)
        t = barycenter_quantiles([d, d], [0.3, 0.7])
        assert np.allclose(t.q, d.values, atol=1e-15)

    def test_merged_grid(self):
        assert merged_rank_grid([2, 3]).tolist() == pytest.approx([1 / 3, 0.5, 2 / 3, 1.0])

    @pytest.mark.parametrize("w", [[0.5, 0.6], [1.2, -0.2], [1.0]])
    def test_bad_weights(self, w):
        with pytest.raises(ContractError):
            barycenter_quantiles([D(0), D(1)], w)

    def test_bad_grid(self):
        with pytest.raises(ContractError):
            barycenter_quantiles([D(0)], [1.0], grid=[0.5, 0.4])

    @settings(max_examples=100)
    @given(st.lists(small, min_size=2, max_size=4), st.data())
    def test_optimal_among_candidates(self, groups, data):
        dists = [EmpiricalDist(np.array(g)) for g in groups]
        raw = np.array(data.draw(st.lists(st.floats(0.05, 1), min_size=len(dists), max_size=len(dists))))
        w = raw / raw.sum()
        bary = barycenter_quantiles(dists, w)
        obj = lambda c: sum(ws * w2_squared(d, c) for d, ws in zip(dists, w))  # noqa: E731
        best = obj(bary)
        for d in dists:
            assert best <= obj(d) + 1e-9
        rng = np.random.default_rng(len(groups))
        for _ in range(10):
            q = np.sort(bary.q + rng.normal(0, 1, bary.q.size))
            assert best <= obj(QuantileTable(bary.grid, q)) + 1e-9

    def test_two_group_midpoint(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a, b = D(*rng.normal(size=rng.integers(1, 9))), D(*rng.normal(2, size=rng.integers(1, 9)))
            bary = barycenter_quantiles([a, b], [0.5, 0.5])
            lhs = 0.5 * w2_squared(a, bary) + 0.5 * w2_squared(b, bary)
            assert lhs == pytest.approx(0.25 * w2_squared(a, b), abs=1e-9)


class TestTransport:
    A, B = D(0, 1), D(10, 11)
    bary = barycenter_quantiles([A, B], [0.5, 0.5])

    def test_examples(self):
        assert self.bary.q.tolist() == [5, 6]
        assert transport_to_barycenter(self.A, self.bary, 0) == 5
        assert transport_to_barycenter(self.A, self.bary, 1) == 6
        assert transport_to_barycenter(self.B, self.bary, 11) == 6

    def test_below_support_maps_to_first_entry(self):
        assert transport_to_barycenter(self.A, self.bary, -100) == 5
        assert transport_to_barycenter(self.A, self.bary, 100) == 6

    def test_single_group_identity(self):
        d = D(0.3, -1, 2.5, 8)
        t = barycenter_quantiles([d], [1.0])
        assert transport_to_barycenter(d, t, d.values).tolist() == d.values.tolist()

    @given(samples, samples, st.lists(finite, min_size=2, max_size=40))
    def test_monotone_and_bounded(self, xs, ys, zs):
        a, b = EmpiricalDist(np.array(xs)), EmpiricalDist(np.array(ys))
        bary = barycenter_quantiles([a, b], [0.4, 0.6])
        z = np.sort(np.array(zs))
        for interp in (False, True):
            out = transport_to_barycenter(a, bary, z, interpolate=interp)
            assert np.all(np.diff(out) >= 0)
            assert out.min() >= bary.q[0] and out.max() <= bary.q[-1]

    def test_step_rule_between_grid_points(self):
        # F_src(z) = 1/3 falls between grid points 1/4 and 1/2 -> value at 1/2
        src = D(0, 1, 2)
        t = QuantileTable([0.25, 0.5, 0.75, 1.0], [10, 20, 30, 40])
        assert transport_to_barycenter(src, t, 0) == 20


@pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")
class TestBackendEquivalence:
    @given(samples, samples)
    def test_w2(self, xs, ys):
        a, b = EmpiricalDist(np.array(xs)), EmpiricalDist(np.array(ys))
        args = (a.grid, a.values, b.grid, b.values)
        assert _ckernels.w2_steps(*args) == pytest.approx(_pykernels.w2_steps(*args), rel=1e-12, abs=1e-12)

    @given(samples, samples, st.lists(finite, min_size=1, max_size=30))
    def test_transport(self, xs, ys, zs):
        a, b = EmpiricalDist(np.array(xs)), EmpiricalDist(np.array(ys))
        bary = barycenter_quantiles([a, b], [0.5, 0.5])
        z = np.array(zs)
        c = _ckernels.transport(a.values, bary.grid, bary.q, z)
        p = _pykernels.transport(a.values, bary.grid, bary.q, z)
        assert np.array_equal(c, p)
