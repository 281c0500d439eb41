"""Video-prediction quality metrics: SSIM and PSNR on the appearance channels,
RMSE on the depth channel.

SSIM uses the standard 11-tap Gaussian window (sigma 1.5), k1=0.01, k2=0.03,
peak 1.0. Local moments are computed with zero-padded correlation divided by
the in-image window mass, i.e. the window is clipped at the borders, which
keeps it well defined on 16x16 grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate2d

from ..nn import ContractViolation

K1 = 0.01
K2 = 0.03
PEAK = 1.0
WINDOW = 11
SIGMA = 1.5


def _gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    half = (size - 1) / 2
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


_WIN = _gaussian_window()


def _local_mean(img: np.ndarray) -> np.ndarray:
    num = correlate2d(img, _WIN, mode="same", boundary="fill")
    den = correlate2d(np.ones_like(img), _WIN, mode="same", boundary="fill")
    return num / den


def ssim_single(a: np.ndarray, b: np.ndarray) -> float:
    """SSIM between two 2-D arrays in [0,1]."""
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    mu_a = _local_mean(a)
    mu_b = _local_mean(b)
    var_a = _local_mean(a * a) - mu_a**2
    var_b = _local_mean(b * b) - mu_b**2
    cov = _local_mean(a * b) - mu_a * mu_b
    c1 = (K1 * PEAK) ** 2
    c2 = (K2 * PEAK) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak 1.0; +inf for identical inputs (flagged upstream)."""
    if a.shape != b.shape:
        raise ContractViolation(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK**2 / mse)


@dataclass
class VideoMetrics:
    ssim: float
    psnr: float
    rmse_depth: float
    identical: bool = False

    def row(self) -> dict:
        return {
            "ssim": round(self.ssim, 6),
            "psnr": "inf" if math.isinf(self.psnr) else round(self.psnr, 4),
            "rmse_depth": round(self.rmse_depth, 6),
            "identical": self.identical,
        }


def video_metrics(plan_frames: np.ndarray, true_frames: np.ndarray) -> VideoMetrics:
    """Frame sequences (K, 4, H, W): SSIM/PSNR over the 3 appearance channels,
    RMSE over the depth channel."""
    if plan_frames.shape != true_frames.shape:
        raise ContractViolation(
            f"plan shape {plan_frames.shape} != ground truth {true_frames.shape}"
        )
    app_a = plan_frames[:, :3]
    app_b = true_frames[:, :3]
    ssims = [
        ssim_single(app_a[k, c], app_b[k, c])
        for k in range(plan_frames.shape[0])
        for c in range(3)
    ]
    p = psnr(app_a, app_b)
    rmse = float(np.sqrt(np.mean((plan_frames[:, 3:] - true_frames[:, 3:]) ** 2)))
    return VideoMetrics(
        ssim=float(np.mean(ssims)),
        psnr=p,
        rmse_depth=rmse,
        identical=math.isinf(p),
    )


def aggregate_metrics(items: list[VideoMetrics]) -> VideoMetrics:
    finite = [m.psnr for m in items if not math.isinf(m.psnr)]
    return VideoMetrics(
        ssim=float(np.mean([m.ssim for m in items])),
        psnr=float(np.mean(finite)) if finite else math.inf,
        rmse_depth=float(np.mean([m.rmse_depth for m in items])),
        identical=all(m.identical for m in items),
    )
