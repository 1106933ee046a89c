"""Tensor substrate: convolution vs a naive loop oracle, sub-pixel
rearrangement, fractional sampling, Adam, the schedule, and tensor files."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rawvsr.core import func, grad_check, optim, tensorio
from rawvsr.errors import ContractViolation, GradCheckError, NumericalAbort


def naive_conv2d(x, w, b, stride, pad):
    """Direct six-nested-loop cross-correlation with zero padding."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for ni in range(n):
        for oi in range(o):
            for oy in range(ho):
                for ox in range(wo):
                    acc = b[oi]
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                iy = oy * stride - pad + i
                                ix = ox * stride - pad + j
                                if 0 <= iy < h and 0 <= ix < wd:
                                    acc += x[ni, ci, iy, ix] * w[oi, ci, i, j]
                    out[ni, oi, oy, ox] = acc
    return out


class TestConv2d:
    def test_scalar_scaling(self):
        x = np.ones((1, 1, 3, 3))
        y = func.conv2d(x, np.full((1, 1, 1, 1), 2.0), np.zeros(1))
        assert np.array_equal(y, np.full((1, 1, 3, 3), 2.0))

    def test_identity_kernel(self, rng):
        x = rng.standard_normal((1, 2, 5, 5))
        w = np.zeros((2, 2, 3, 3))
        w[0, 0, 1, 1] = 1.0
        w[1, 1, 1, 1] = 1.0
        y = func.conv2d(x, w, np.zeros(2), padding=1)
        assert np.allclose(y, x, atol=0)

    def test_matches_naive_loop(self, rng):
        x = rng.standard_normal((1, 2, 5, 5))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)
        for stride, pad in ((1, 0), (1, 1), (2, 1)):
            got = func.conv2d(x, w, b, stride, pad)
            want = naive_conv2d(x, w, b, stride, pad)
            assert np.abs(got - want).max() <= 1e-12

    def test_matches_naive_loop_larger(self, rng):
        x = rng.standard_normal((2, 3, 8, 8))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        got = func.conv2d(x, w, b, 1, 1)
        assert np.abs(got - naive_conv2d(x, w, b, 1, 1)).max() <= 1e-12

    def test_channel_mismatch_names_dimensions(self, rng):
        x = rng.standard_normal((1, 2, 5, 5))
        w = rng.standard_normal((3, 4, 3, 3))
        with pytest.raises(ContractViolation, match="input has 2, weight expects 4"):
            func.conv2d(x, w, np.zeros(3))

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ContractViolation, match="odd"):
            func.conv2d(rng.standard_normal((1, 1, 4, 4)),
                        rng.standard_normal((1, 1, 2, 2)), np.zeros(1))

    def test_gradients(self, rng):
        x = rng.standard_normal((1, 2, 6, 6))
        w = rng.standard_normal((3, 2, 3, 3))
        b = rng.standard_normal(3)

        def op(xv, wv, bv):
            y, c = func.conv2d_fwd(xv, wv, bv, 1, 1)
            return y, lambda gy: func.conv2d_bwd(c, gy)

        assert grad_check(op, [x, w, b], rng=rng) <= 1e-4


class TestPixelShuffle:
    def test_r1_identity(self, rng):
        x = rng.standard_normal((1, 3, 4, 4))
        assert np.array_equal(func.pixel_shuffle(x, 1), x)
        assert np.array_equal(func.pixel_unshuffle(x, 1), x)

    def test_quad_layout(self):
        x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1, 1)
        y = func.pixel_shuffle(x, 2)
        assert np.array_equal(y[0, 0], [[1.0, 2.0], [3.0, 4.0]])
        back = func.pixel_unshuffle(y, 2)
        assert np.array_equal(back, x)

    def test_index_formula(self, rng):
        # out[c, r*h + i, r*w + j] == in[c*r*r + i*r + j, h, w]
        x = rng.standard_normal((1, 8, 3, 2))
        y = func.pixel_shuffle(x, 2)
        for c in range(2):
            for i in range(2):
                for j in range(2):
                    for h in range(3):
                        for w in range(2):
                            assert y[0, c, 2 * h + i, 2 * w + j] == x[
                                0, c * 4 + i * 2 + j, h, w
                            ]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([1, 2, 4]))
    def test_inverse_pair_bitwise(self, seed, r):
        x = np.random.default_rng(seed).standard_normal((2, 4 * r * r, 3, 5))
        assert np.array_equal(func.pixel_unshuffle(func.pixel_shuffle(x, r), r), x)
        x2 = np.random.default_rng(seed + 1).standard_normal((1, 3, 4 * r, 2 * r))
        assert np.array_equal(func.pixel_shuffle(func.pixel_unshuffle(x2, r), r), x2)

    def test_contract_violations(self, rng):
        with pytest.raises(ContractViolation, match="not divisible"):
            func.pixel_shuffle(rng.standard_normal((1, 3, 2, 2)), 2)
        with pytest.raises(ContractViolation, match="not divisible"):
            func.pixel_unshuffle(rng.standard_normal((1, 3, 5, 4)), 2)


class TestBilinearSample:
    def test_on_grid(self, rng):
        feat = rng.standard_normal((3, 5, 6))
        out = func.bilinear_sample(feat, [(2.0, 3.0)])
        assert np.array_equal(out[:, 0], feat[:, 2, 3])

    def test_center_average(self):
        feat = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        out = func.bilinear_sample(feat, [(0.5, 0.5)])
        assert out[0, 0] == pytest.approx(2.5, abs=1e-15)

    def test_coordinate_gradient(self, rng):
        feat = rng.standard_normal((2, 6, 6))
        pts = np.array([[1.3, 2.6], [0.4, 4.3], [3.7, 0.6]])

        def op(f, p):
            y, c = func.bilinear_sample_fwd(f, p)
            return y, lambda gy: func.bilinear_sample_bwd(c, gy)

        assert grad_check(op, [feat, pts], rng=rng) <= 1e-5


class TestGradCheck:
    def test_linear_map_is_exact(self, rng):
        def op(x):
            return 3.0 * x, lambda gy: (3.0 * gy,)

        assert grad_check(op, [rng.standard_normal((4, 4))], rng=rng) <= 1e-10

    def test_nonfinite_gradient_reported(self, rng):
        def op(x):
            return x.copy(), lambda gy: (np.full_like(gy, np.nan),)

        with pytest.raises(GradCheckError, match="non-finite analytic gradient"):
            grad_check(op, [rng.standard_normal(3)], rng=rng)

    def test_eps_range_enforced(self, rng):
        def op(x):
            return x.copy(), lambda gy: (gy,)

        with pytest.raises(ContractViolation):
            grad_check(op, [np.ones(2)], eps=1e-2, rng=rng)


class TestAdam:
    def test_zero_gradient_is_noop(self):
        p = optim.Param(np.array([1.0, -2.0]))
        s = optim.AdamState(p.shape)
        optim.adam_step([p], [s], lr=1e-3)
        assert np.array_equal(p.value, [1.0, -2.0])
        assert s.step == 1

    def test_first_step_magnitude(self):
        # bias-corrected m/sqrt(v) == 1 for a constant unit gradient
        p = optim.Param(np.array([0.0]))
        p.grad[...] = 1.0
        s = optim.AdamState(p.shape)
        optim.adam_step([p], [s], lr=2e-4)
        assert p.value[0] == pytest.approx(-2e-4, rel=1e-6)

    def test_quadratic_descent(self):
        # Exact simulation shows |x| does not shrink monotonically: Adam
        # overshoots through 0 near step 11 and rings. What does decrease
        # monotonically is the envelope (peak |x| between sign changes).
        p = optim.Param(np.array([1.0]))
        s = optim.AdamState(p.shape)
        traj = []
        for _ in range(100):
            p.grad[...] = 2.0 * p.value
            optim.adam_step([p], [s], lr=0.1)
            traj.append(float(p.value[0]))
        magnitudes = np.abs(traj)
        peaks = [1.0]
        for k in range(1, 99):
            if magnitudes[k] >= magnitudes[k - 1] and magnitudes[k] >= magnitudes[k + 1]:
                peaks.append(magnitudes[k])
        assert all(b < a for a, b in zip(peaks, peaks[1:]))
        assert magnitudes[-1] < 0.01

    def test_nan_gradient_names_parameter(self):
        p = optim.Param(np.zeros(3), name="blocks.0.weight")
        p.grad[1] = np.nan
        with pytest.raises(NumericalAbort, match="blocks.0.weight"):
            optim.adam_step([p], [optim.AdamState(p.shape)], lr=1e-3)


class TestLrSchedule:
    @pytest.mark.parametrize("epoch,expected", [
        (0, 2e-4), (19, 2e-4), (20, 1e-4), (39, 1e-4), (40, 5e-5), (59, 5e-5),
        (99, 1.25e-5), (100, 6.25e-6), (150, 6.25e-6),
    ])
    def test_halving_with_clamp(self, epoch, expected):
        assert optim.lr_schedule(epoch, 2e-4) == pytest.approx(expected, rel=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ContractViolation):
            optim.lr_schedule(-1, 2e-4)
        with pytest.raises(ContractViolation):
            optim.lr_schedule(0, 0.0)


class TestTensorFiles:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_roundtrip(self, tmp_path_factory, seed):
        rng = np.random.default_rng(seed)
        rank = int(rng.integers(0, 4))
        shape = tuple(int(d) for d in rng.integers(1, 5, size=rank))
        arr = rng.standard_normal(shape)
        path = tmp_path_factory.mktemp("rvt") / "t.rvt"
        tensorio.save_tensor(path, arr)
        back = tensorio.load_tensor(path)
        assert back.shape == arr.shape
        assert np.array_equal(back, arr)

    def test_exact_byte_layout(self, tmp_path):
        path = tmp_path / "g.rvt"
        tensorio.save_tensor(path, np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
        raw = path.read_bytes()
        assert raw[:4] == b"RVT1"
        assert raw[4:8] == (2).to_bytes(4, "little")
        assert raw[8:12] == (3).to_bytes(4, "little")
        assert raw[12:16] == (2).to_bytes(4, "little")
        assert raw[16:] == np.arange(1.0, 7.0).astype("<f8").tobytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.rvt"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError, match="bad magic"):
            tensorio.load_tensor(path)

    def test_checkpoint_roundtrip(self, tmp_path, rng):
        named = {"a.weight": rng.standard_normal((2, 3)), "b.bias": rng.standard_normal(4)}
        tensorio.save_checkpoint(tmp_path / "ck", named, extra_text={"config.txt": "x = 1"})
        back = tensorio.load_checkpoint(tmp_path / "ck")
        assert set(back) == set(named)
        for k in named:
            assert np.array_equal(back[k], named[k])
        assert (tmp_path / "ck" / "config.txt").read_text() == "x = 1"
