import numpy as np
import pytest

from bgfd.core import Tensor, finite_difference_check
from bgfd.core import sum as tsum
from bgfd.dfc import DfcParams, cross_attention_weights, cross_index, dem, dfc, gem, gem_single
from bgfd.errors import ShapeError

from oracles import gem_single_loop


def params(c, seed=0, bias=False):
    p = DfcParams.init(c, np.random.default_rng(seed))
    if bias:
        rng = np.random.default_rng(seed + 100)
        p = p.replace(**{n: rng.standard_normal(getattr(p, n).shape) * 0.3
                         for n in ("gem_bq", "gem_bk", "gem_bv", "dem_bq", "dem_bdw", "dem_bpw")})
    return p


def loop_oracle(F, p):
    args = [getattr(p, n).data for n in ("gem_wq", "gem_wk", "gem_wv", "gem_bq", "gem_bk", "gem_bv")]
    return np.stack([gem_single_loop(img, *args) for img in F])


class TestDem:
    def test_shape(self, rng):
        assert dem(Tensor(rng.standard_normal((1, 4, 6, 6))), params(4)).shape == (1, 4, 6, 6)

    def test_zero_projections(self, rng):
        p = params(3)
        z = np.zeros((3, 3, 1, 1))
        out = dem(Tensor(rng.standard_normal((2, 3, 5, 5))), p.replace(dem_wq=z, dem_wk=z, dem_wv=z))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            dem(Tensor(rng.standard_normal((1, 3, 4, 4))), params(4))


class TestGem:
    def test_cross_index(self):
        np.testing.assert_array_equal(cross_index(3), [[1, 2], [0, 2], [0, 1]])
        assert cross_index(1).shape == (1, 0)

    def test_weights_normalised(self, rng):
        q, k = Tensor(rng.standard_normal((2, 3, 4, 5))), Tensor(rng.standard_normal((2, 3, 4, 5)))
        att = cross_attention_weights(q, k).data
        assert att.shape == (2, 4, 5, 5 + 4 - 1)
        np.testing.assert_allclose(att.sum(-1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("h,w", [(1, 1), (1, 4), (4, 1), (3, 4), (5, 5)])
    def test_matches_loop(self, h, w):
        rng = np.random.default_rng(h * 10 + w)
        p = params(3, seed=h + w, bias=True)
        F = rng.standard_normal((2, 3, h, w))
        np.testing.assert_allclose(gem_single(Tensor(F), p).data, loop_oracle(F, p), rtol=0, atol=1e-9)

    def test_zero_keys_give_cross_mean(self, rng):
        h, w = 3, 4
        p = params(2).replace(gem_wk=np.zeros((2, 2, 1, 1)))
        F = rng.standard_normal((1, 2, h, w))
        v = np.einsum("oc,nchw->nohw", p.gem_wv.data[:, :, 0, 0], F)
        expect = np.empty_like(F)
        for y in range(h):
            for x in range(w):
                total = v[0, :, y, :].sum(-1) + v[0, :, :, x].sum(-1) - v[0, :, y, x]
                expect[0, :, y, x] = F[0, :, y, x] + total / (w + h - 1)
        np.testing.assert_allclose(gem_single(Tensor(F), p).data, expect, atol=1e-12)

    def test_zero_values_identity(self, rng):
        F = rng.standard_normal((2, 3, 4, 4))
        p = params(3).replace(gem_wv=np.zeros((3, 3, 1, 1)))
        np.testing.assert_array_equal(gem(Tensor(F), p).data, F)

    def test_composition(self, rng):
        F, p = Tensor(rng.standard_normal((1, 2, 3, 5))), params(2)
        np.testing.assert_array_equal(gem(F, p).data, gem_single(gem_single(F, p), p).data)

    def test_two_passes_reach_everywhere(self):
        p = params(1, seed=4)
        base = np.zeros((1, 1, 3, 3))
        ref1, ref2 = gem_single(Tensor(base), p).data, gem(Tensor(base), p).data
        delta = base.copy()
        delta[0, 0, 0, 0] = 1.0
        one = np.abs(gem_single(Tensor(delta), p).data - ref1)[0, 0] > 0
        two = np.abs(gem(Tensor(delta), p).data - ref2)[0, 0] > 0
        cross = np.zeros((3, 3), bool)
        cross[0, :] = cross[:, 0] = True
        np.testing.assert_array_equal(one, cross)
        assert two.all()


class TestDfc:
    def test_shape(self, rng):
        assert dfc(Tensor(rng.standard_normal((2, 8, 4, 4))), params(8)).shape == (2, 8, 4, 4)

    def test_unit_global_branch(self, rng, monkeypatch):
        import bgfd.dfc as mod
        F, p = Tensor(rng.standard_normal((1, 2, 3, 3))), params(2)
        monkeypatch.setattr(mod, "gem", lambda x, q: Tensor(np.ones(x.shape)))
        np.testing.assert_array_equal(mod.dfc(F, p).data, dem(F, p).data)

    def test_all_zero_kernels(self, rng):
        p = params(2)
        z = {n: np.zeros(getattr(p, n).shape) for n in
             ("dem_wq", "dem_wk", "dem_wv", "dem_dw", "dem_pw", "gem_wq", "gem_wk", "gem_wv")}
        F = rng.standard_normal((1, 2, 3, 3))
        pz = p.replace(**z)
        np.testing.assert_array_equal(gem(Tensor(F), pz).data, F)
        np.testing.assert_array_equal(dem(Tensor(F), pz).data, 0.0)
        np.testing.assert_array_equal(dfc(Tensor(F), pz).data, 0.0)


@pytest.mark.parametrize("op,shape", [(dem, (1, 2, 3, 3)), (gem_single, (1, 2, 3, 4)), (gem, (1, 2, 3, 3)),
                                      (dfc, (1, 2, 3, 3))])
def test_gradient_input(op, shape):
    rng = np.random.default_rng(1)
    p = params(shape[1], bias=True)
    err = finite_difference_check(lambda t: tsum(op(t, p)), Tensor(rng.standard_normal(shape)))
    assert err < 1e-4


@pytest.mark.parametrize("name", ["dem_dw", "dem_pw", "gem_wq", "gem_wk", "gem_wv", "gem_bk"])
def test_gradient_params(name):
    rng = np.random.default_rng(2)
    p, F = params(2, bias=True), Tensor(rng.standard_normal((1, 2, 3, 3)))
    x0 = getattr(p, name).data
    err = finite_difference_check(lambda t: tsum(dfc(F, p.replace(**{name: t}))), Tensor(x0))
    assert err < 1e-4
