import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bgfd.core import Tensor, finite_difference_check
from bgfd.core import sum as tsum
from bgfd.errors import ParameterError, ShapeError
from bgfd.fdf import (GamParams, HistogramMI, entropy, gam, histogram, joint_histogram, mi_loss,
                      mutual_information, soft_mutual_information)

from oracles import entropy_from_counts, mi_from_pairs

TWO = HistogramMI(bins=2, range=(0.0, 1.0))


def bsc_pairs(flip_rate, n=100_000):
    """Uniform binary source through a binary symmetric channel with an exact
    number of flips."""
    a = np.tile([0.0, 1.0], n // 2)
    b = a.copy()
    k = int(round(flip_rate * n / 2))
    b[: 2 * k] = 1.0 - b[: 2 * k]
    return a, b


class TestEntropy:
    def test_uniform_four_bins(self):
        assert entropy(np.array([0.0, 1.0, 2.0, 3.0]), HistogramMI(bins=4)) == 2.0

    def test_constant(self):
        assert entropy(np.full(10, 3.0), HistogramMI(bins=8)) == 0.0

    def test_hand_mass(self):
        x = np.array([0.1, 0.2, 1.5, 2.5])  # (0.5, 0.25, 0.25)
        assert entropy(x, HistogramMI(bins=3, range=(0.0, 3.0))) == pytest.approx(1.5, abs=1e-12)

    def test_out_of_range_clamped(self):
        h = histogram(np.array([-5.0, 0.25, 0.75, 9.0]), HistogramMI(bins=2, range=(0.0, 1.0)))
        np.testing.assert_array_equal(h, [0.5, 0.5])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 7), min_size=1, max_size=200))
    def test_matches_counts_oracle_and_bound(self, labels):
        x = np.asarray(labels, float) + 0.5
        cfg = HistogramMI(bins=8, range=(0.0, 8.0))
        h = entropy(x, cfg)
        assert h == pytest.approx(entropy_from_counts(np.bincount(labels, minlength=8)), abs=1e-12)
        assert h <= 3.0 + 1e-12

    def test_empty(self):
        with pytest.raises(ShapeError):
            entropy(np.array([]))


class TestMutualInformation:
    def test_self_information(self, rng):
        x = rng.standard_normal(4096)
        assert abs(mutual_information(x, x) - entropy(x)) < 1e-9

    def test_independent_pairing(self):
        a, b = np.array([0.0, 0, 1, 1]), np.array([0.0, 1, 0, 1])
        assert abs(mutual_information(a, b, TWO)) < 1e-9

    def test_symmetry(self, rng):
        a = rng.standard_normal(2000)
        b = a + rng.standard_normal(2000)
        assert mutual_information(a, b) == mutual_information(b, a)

    def test_matches_pair_oracle(self, rng):
        a = rng.integers(0, 5, 3000)
        b = (a + rng.integers(0, 2, 3000)) % 5
        cfg = HistogramMI(bins=5, range=(0.0, 5.0))
        got = mutual_information(a + 0.5, b + 0.5, cfg)
        assert got == pytest.approx(mi_from_pairs(a.tolist(), b.tolist()), abs=1e-9)

    def test_joint_sums_to_one(self, rng):
        assert joint_histogram(rng.random(500), rng.random(500)).sum() == pytest.approx(1.0, abs=1e-12)

    def test_size_mismatch(self):
        with pytest.raises(ShapeError):
            mutual_information(np.zeros(3), np.zeros(4))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.0, 0.95))
    def test_nonnegative(self, seed, rho):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(300)
        b = rho * a + math.sqrt(1 - rho * rho) * rng.standard_normal(300)
        assert mutual_information(a, b) >= -1e-9

    def test_monotone_rescaling(self, rng):
        a, b = rng.random(3000), rng.random(3000) * 0.5 + 0.25
        cfg = HistogramMI(bins=16, range=(0.0, 1.0))
        g = lambda x: 3.0 * x - 7.0  # noqa: E731  bin edges map onto bin edges
        affine = HistogramMI(bins=16, range=(g(0.0), g(1.0)))
        assert mutual_information(g(a), g(b), affine) == pytest.approx(mutual_information(a, b, cfg), abs=1e-12)


class TestMiLoss:
    def test_unchanged_features(self, rng):
        a, b = rng.standard_normal(512), rng.standard_normal(512)
        assert mi_loss(a, b, a, b) == 0.0

    def test_branch_arithmetic(self):
        a, _ = bsc_pairs(0.0)
        na, nb = bsc_pairs(0.146)
        i_former = mutual_information(a, a, TWO)
        i_latter = mutual_information(na, nb, TWO)
        assert i_former == 1.0
        assert i_latter == pytest.approx(0.4, abs=2e-3)
        assert mi_loss(a, a, na, nb, TWO) == pytest.approx(1.0 - i_latter, abs=1e-12)

    def test_else_branch_exact_zero(self):
        na, nb = bsc_pairs(0.0)
        a, b = bsc_pairs(0.2)
        assert mi_loss(a, b, na, nb, TWO) == 0.0
        out = mi_loss(Tensor(a), Tensor(b), Tensor(na), Tensor(nb), TWO, training=True)
        assert isinstance(out, Tensor) and out.item() == 0.0

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            mi_loss(np.zeros(4), np.zeros(4), np.zeros(4), np.zeros(5))

    @pytest.mark.parametrize("rho", [0.0, 0.3, 0.6, 0.9])
    def test_soft_tracks_hard(self, rho):
        rng = np.random.default_rng(int(rho * 10))
        a = rng.standard_normal(8192)
        b = rho * a + math.sqrt(1 - rho * rho) * rng.standard_normal(8192)
        soft = soft_mutual_information(Tensor(a), Tensor(b), HistogramMI(bins=32)).item()
        assert abs(soft - mutual_information(a, b, HistogramMI(bins=32))) < 0.1

    def test_soft_gradient(self, rng):
        a = rng.standard_normal(64)
        b = 0.5 * a + rng.standard_normal(64)
        cfg = HistogramMI(bins=8, range=(-4.0, 4.0))
        err = finite_difference_check(lambda t: soft_mutual_information(t, Tensor(b), cfg), Tensor(a), step=1e-6)
        assert err < 1e-4


class TestGam:
    def test_half_gates(self, rng):
        p = GamParams.init(4, rng, r=2)
        p.fc2_w.data = np.zeros_like(p.fc2_w.data)
        p.conv2_w.data = np.zeros_like(p.conv2_w.data)
        F = rng.standard_normal((2, 4, 5, 5))
        out = gam(Tensor(F), p, training=True).data
        w3 = p.conv3_w.data[:, :, 0, 0]
        np.testing.assert_allclose(out, np.einsum("oc,nchw->nohw", w3, 0.25 * F), atol=1e-12)

    def test_shape(self, rng):
        assert gam(Tensor(rng.standard_normal((2, 8, 5, 5))), GamParams.init(8, rng)).shape == (2, 8, 5, 5)

    def test_bad_ratio(self, rng):
        with pytest.raises(ParameterError):
            GamParams.init(6, rng, r=4)

    @pytest.mark.parametrize("raw", [False, True])
    def test_gradient(self, raw):
        rng = np.random.default_rng(3)
        p = GamParams.init(4, rng, r=2, kernel=3, raw_gates=raw)
        err = finite_difference_check(lambda t: tsum(gam(t, p, training=True)), Tensor(rng.standard_normal((1, 4, 3, 3))))
        assert err < 1e-4
