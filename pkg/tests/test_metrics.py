import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from dyan.metrics import PSNR_CAP, gaussian_window, mse, psnr, psnr_from_mse, score_frames, ssim
from oracles import naive_mse, scalar_ssim

C1, C2 = 0.01 ** 2, 0.03 ** 2


def test_mse_examples(rng):
    a = rng.random((6, 7))
    assert mse(a, a) == 0.0
    assert mse(np.zeros((4, 4)), np.full((4, 4), 0.1)) == pytest.approx(0.01, rel=1e-14)
    for _ in range(10):
        a, b = rng.random((9, 5)), rng.random((9, 5))
        assert mse(a, b) == pytest.approx(naive_mse(a.tolist(), b.tolist()), rel=1e-12, abs=1e-12)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ssim(np.zeros((12, 12)), np.zeros((12, 13)))


def test_psnr_examples(rng):
    assert psnr_from_mse(0.01) == 20.0
    assert psnr_from_mse(1.0) == 0.0
    a = rng.random((8, 8))
    assert psnr(a, a) == PSNR_CAP
    assert psnr_from_mse(9e-11) == PSNR_CAP
    assert psnr(np.zeros((3, 3)), np.full((3, 3), 0.1)) == pytest.approx(20.0, abs=1e-12)
    assert psnr_from_mse(0.04, peak=2.0) == pytest.approx(20.0, abs=1e-12)


def test_gaussian_window():
    w = gaussian_window()
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert w[5, 5] == w.max()
    np.testing.assert_allclose(w, w.T, atol=0)


def test_ssim_identity(rng):
    a = rng.random((16, 16))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-15)


def test_ssim_uniform_closed_form():
    a = np.full((12, 12), 0.2)
    b = np.full((12, 12), 0.8)
    expected = (2 * 0.16 + C1) / (0.04 + 0.64 + C1)
    assert ssim(a, b) == pytest.approx(expected, rel=1e-12)
    assert ssim(a[:5, :5], b[:5, :5]) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("shape", [(11, 11), (16, 16), (14, 19)])
def test_ssim_vs_scalar_reimplementation(shape, rng):
    a = rng.random(shape)
    b = np.clip(a + 0.2 * rng.standard_normal(shape), 0, 1)
    assert abs(ssim(a, b) - scalar_ssim(a.tolist(), b.tolist())) <= 1e-9


def test_ssim_vs_skimage(rng):
    skm = pytest.importorskip("skimage.metrics")
    a = rng.random((32, 40))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    ref = skm.structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-9)


def test_small_frame_global_fallback(rng):
    a = rng.random((4, 6))
    b = rng.random((4, 6))
    ma, mb = a.mean(), b.mean()
    va, vb = a.var(), b.var()
    cov = np.mean((a - ma) * (b - mb))
    expected = (2 * ma * mb + C1) * (2 * cov + C2) / ((ma ** 2 + mb ** 2 + C1) * (va + vb + C2))
    assert ssim(a, b) == pytest.approx(expected, rel=1e-12)


def test_score_report_consistent(rng):
    pred = rng.random((3, 12, 12))
    truth = rng.random((3, 12, 12))
    rep = score_frames(pred, truth)
    assert len(rep.per_frame) == 3
    for k, row in enumerate(rep.per_frame):
        assert row["mse"] == mse(pred[k], truth[k])
        assert row["psnr"] == psnr(pred[k], truth[k])
        assert row["ssim"] == ssim(pred[k], truth[k])
    assert rep.mse == pytest.approx(np.mean([r["mse"] for r in rep.per_frame]))
    same = score_frames(truth, truth)
    assert same.mse == 0 and same.psnr == PSNR_CAP and same.ssim == pytest.approx(1.0, abs=1e-15)


frames = arrays(np.float64, (12, 13), elements=st.floats(0, 1))


@settings(max_examples=40, deadline=None)
@given(frames, frames)
def test_symmetry_and_range(a, b):
    assert mse(a, b) == mse(b, a)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1 - 1e-12 <= ssim(a, b) <= 1 + 1e-12
    if mse(a, b) == 0:
        assert psnr(a, b) == PSNR_CAP
