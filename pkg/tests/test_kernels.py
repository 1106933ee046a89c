"""Backend-agnostic semantics of the hot kernels, and backend agreement."""

import numpy as np
import pytest

from rawvsr import kernels

BACKENDS = kernels.available_backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return kernels.load_backend(request.param)


def _contig(a):
    return np.ascontiguousarray(a, dtype=np.float64)


class TestIm2col:
    def test_matches_naive_patch_extraction(self, backend, rng):
        x = rng.standard_normal((2, 3, 6, 5))
        kh = kw = 3
        stride, pad = 2, 1
        cols = backend.im2col(_contig(x), kh, kw, stride, pad)
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        ho = (6 + 2 * pad - kh) // stride + 1
        wo = (5 + 2 * pad - kw) // stride + 1
        for n in range(2):
            for c in range(3):
                for i in range(kh):
                    for j in range(kw):
                        row = (c * kh + i) * kw + j
                        for oy in range(ho):
                            for ox in range(wo):
                                assert cols[n, row, oy * wo + ox] == xp[
                                    n, c, oy * stride + i, ox * stride + j
                                ]

    def test_col2im_is_adjoint(self, backend, rng):
        x = rng.standard_normal((2, 4, 7, 6))
        for stride, pad in ((1, 0), (1, 1), (2, 1)):
            cols = backend.im2col(_contig(x), 3, 3, stride, pad)
            probe = rng.standard_normal(cols.shape)
            back = backend.col2im(_contig(probe), 7, 6, 3, 3, stride, pad)
            lhs = float(np.sum(cols * probe))
            rhs = float(np.sum(x * back))
            assert abs(lhs - rhs) < 1e-10


class TestBilinear:
    def test_on_grid_points_exact(self, backend, rng):
        feat = rng.standard_normal((1, 2, 5, 6))
        ys = _contig([[2.0, 0.0, 4.0]])
        xs = _contig([[3.0, 0.0, 5.0]])
        out = backend.bilinear_gather(_contig(feat), ys, xs)
        for k, (y, x) in enumerate(zip([2, 0, 4], [3, 0, 5])):
            assert np.array_equal(out[0, :, k], feat[0, :, y, x])

    def test_outside_region_is_zero(self, backend, rng):
        feat = rng.standard_normal((1, 3, 4, 4))
        ys = _contig([[-5.0, 9.5, 2.0]])
        xs = _contig([[1.0, 1.0, -7.2]])
        out = backend.bilinear_gather(_contig(feat), ys, xs)
        assert np.all(out == 0.0)

    def test_scatter_is_adjoint_of_gather(self, backend, rng):
        feat = rng.standard_normal((2, 3, 6, 6))
        ys = _contig(rng.uniform(-1.5, 6.5, (2, 17)))
        xs = _contig(rng.uniform(-1.5, 6.5, (2, 17)))
        gout = rng.standard_normal((2, 3, 17))
        vals = backend.bilinear_gather(_contig(feat), ys, xs)
        gfeat, _, _ = backend.bilinear_scatter(_contig(feat), ys, xs, _contig(gout))
        lhs = float(np.sum(vals * gout))
        # <gather(feat), gout> == <feat, scatter_feat(gout)>
        rhs = float(np.sum(feat * gfeat))
        assert abs(lhs - rhs) < 1e-10


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
class TestBackendAgreement:
    def test_all_kernels_agree(self, rng):
        nat = kernels.load_backend("native")
        pyb = kernels.load_backend("python")
        x = _contig(rng.standard_normal((3, 5, 8, 7)))
        for stride, pad in ((1, 1), (2, 0), (2, 1)):
            a = nat.im2col(x, 3, 3, stride, pad)
            b = pyb.im2col(x, 3, 3, stride, pad)
            assert np.array_equal(a, b)
            probe = _contig(rng.standard_normal(a.shape))
            assert np.array_equal(
                nat.col2im(probe, 8, 7, 3, 3, stride, pad),
                pyb.col2im(probe, 8, 7, 3, 3, stride, pad),
            )
        ys = _contig(rng.uniform(-2, 9, (3, 23)))
        xs = _contig(rng.uniform(-2, 9, (3, 23)))
        ga = nat.bilinear_gather(x, ys, xs)
        gb = pyb.bilinear_gather(x, ys, xs)
        assert np.allclose(ga, gb, atol=1e-14, rtol=0)
        gout = _contig(rng.standard_normal(ga.shape))
        for a, b in zip(nat.bilinear_scatter(x, ys, xs, gout),
                        pyb.bilinear_scatter(x, ys, xs, gout)):
            assert np.allclose(a, b, atol=1e-12, rtol=0)
