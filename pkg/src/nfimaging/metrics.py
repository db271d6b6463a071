"""Image-quality metrics for magnitude images: IMMSE, PSNR, SSIM, PCC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError, ParameterError

PSNR_CAP_DB = 100.0


@dataclass(frozen=True)
class MetricReport:
    immse: float
    psnr_db: float
    ssim: float
    pcc: float

    def as_tuple(self) -> tuple:
        return (self.immse, self.psnr_db, self.ssim, self.pcc)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def normalize_pair(truth, estimate) -> tuple[np.ndarray, np.ndarray]:
    """Scale both by max(truth); clip the estimate to [0, 1]."""
    truth, estimate = _pair(truth, estimate)
    top = truth.max()
    if not top > 0:
        raise ParameterError("truth image is all zero; normalization undefined")
    return truth / top, np.clip(estimate / top, 0.0, 1.0)


def immse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    err = immse(a, b)
    if err == 0:
        return PSNR_CAP_DB
    return float(min(PSNR_CAP_DB, 10.0 * np.log10(peak**2 / err)))


def pcc(a, b) -> float:
    """Pearson correlation; NaN when either image is constant."""
    a, b = _pair(a, b)
    da = a.ravel() - a.mean()
    db = b.ravel() - b.mean()
    den = np.sqrt(np.dot(da, da) * np.dot(db, db))
    if den == 0:
        return float("nan")
    return float(np.clip(np.dot(da, db) / den, -1.0, 1.0))


def gaussian_window(sigma: float = 1.5, size: int = 11) -> np.ndarray:
    """1-D normalized Gaussian taps."""
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def _local_mean(img: np.ndarray, taps: np.ndarray, norm: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, taps, axis=0, mode="constant", cval=0.0)
    out = ndimage.correlate1d(out, taps, axis=1, mode="constant", cval=0.0)
    return out / norm


def ssim(
    a,
    b,
    sigma: float = 1.5,
    window: int = 11,
    k1: float = 0.01,
    k2: float = 0.03,
    peak: float = 1.0,
) -> float:
    """Mean local SSIM with a Gaussian window truncated and renormalized at borders."""
    a, b = _pair(a, b)
    if a.ndim != 2 or a.size == 0:
        raise DimensionError("SSIM needs a non-empty 2-D image")
    taps = gaussian_window(sigma, window)
    norm = ndimage.correlate1d(np.ones_like(a), taps, axis=0, mode="constant")
    norm = ndimage.correlate1d(norm, taps, axis=1, mode="constant")
    mu_a = _local_mean(a, taps, norm)
    mu_b = _local_mean(b, taps, norm)
    var_a = _local_mean(a * a, taps, norm) - mu_a**2
    var_b = _local_mean(b * b, taps, norm) - mu_b**2
    cov = _local_mean(a * b, taps, norm) - mu_a * mu_b
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def evaluate(truth, estimate, **ssim_params) -> MetricReport:
    """All four metrics on a normalized (truth, estimate) pair."""
    t, e = normalize_pair(truth, estimate)
    return MetricReport(immse(t, e), psnr(t, e), ssim(t, e, **ssim_params), pcc(t, e))
