"""Frame quality scores: MSE, PSNR and SSIM."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["ScoreReport", "mse", "psnr", "psnr_from_mse", "ssim", "gaussian_window", "score_frames",
           "PSNR_CAP"]

PSNR_CAP = 100.0
_MSE_FLOOR = 1e-10
K1, K2 = 0.01, 0.03
WIN, SIGMA = 11, 1.5


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr_from_mse(m: float, peak: float = 1.0) -> float:
    if m < _MSE_FLOOR:
        return PSNR_CAP
    return 10.0 * math.log10(peak * peak / m)


def psnr(a, b, peak: float = 1.0) -> float:
    return psnr_from_mse(mse(a, b), peak)


def gaussian_window(size: int = WIN, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_from_stats(mu_a, mu_b, var_a, var_b, cov, data_range):
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean SSIM over all fully-inside 11x11 Gaussian windows (sigma 1.5).

    Frames smaller than the window fall back to whole-frame statistics.
    """
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise ValueError("ssim expects 2-D frames")
    if a.shape[0] < WIN or a.shape[1] < WIN:
        mu_a, mu_b = a.mean(), b.mean()
        var_a = np.mean((a - mu_a) ** 2)
        var_b = np.mean((b - mu_b) ** 2)
        cov = np.mean((a - mu_a) * (b - mu_b))
        return float(_ssim_from_stats(mu_a, mu_b, var_a, var_b, cov, data_range))
    w = gaussian_window()

    def filt(x):
        return np.tensordot(sliding_window_view(x, (WIN, WIN)), w, axes=([2, 3], [0, 1]))

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    return float(np.mean(_ssim_from_stats(mu_a, mu_b, var_a, var_b, cov, data_range)))


@dataclass
class ScoreReport:
    mse: float
    psnr: float
    ssim: float
    per_frame: List[dict] = field(default_factory=list)


def score_frames(pred, truth, peak: float = 1.0) -> ScoreReport:
    """Scores for each frame of two ``F x H x W`` stacks, plus their means."""
    pred, truth = _pair(pred, truth)
    if pred.ndim == 2:
        pred, truth = pred[None], truth[None]
    rows = []
    for k in range(pred.shape[0]):
        m = mse(pred[k], truth[k])
        rows.append(dict(frame=k, mse=m, psnr=psnr_from_mse(m, peak), ssim=ssim(pred[k], truth[k], peak)))
    return ScoreReport(
        mse=float(np.mean([r["mse"] for r in rows])),
        psnr=float(np.mean([r["psnr"] for r in rows])),
        ssim=float(np.mean([r["ssim"] for r in rows])),
        per_frame=rows,
    )
