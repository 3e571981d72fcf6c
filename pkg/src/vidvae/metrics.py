"""Reconstruction metrics: PSNR and windowed SSIM."""

import math

import numpy as np

from .errors import ShapeError

SSIM_WINDOW = 8


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 2.0) -> float:
    """10*log10(peak^2 / MSE); +inf when the inputs are identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ShapeError("peak must be > 0")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _window_means(x: np.ndarray, win: int) -> np.ndarray:
    """Sliding uniform win x win means via an integral image."""
    csum = np.cumsum(np.cumsum(x, axis=0), axis=1)
    csum = np.pad(csum, ((1, 0), (1, 0)))
    total = (csum[win:, win:] - csum[:-win, win:] - csum[win:, :-win] + csum[:-win, :-win])
    return total / (win * win)


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 2.0, win: int = SSIM_WINDOW) -> float:
    """Windowed SSIM with sliding uniform windows, averaged over windows.

    Inputs are (H, W) or (H, W, C); colour images are converted to grayscale by
    channel mean. Stabilizers C1=(0.01*peak)^2, C2=(0.03*peak)^2.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 3:
        a = a.mean(axis=-1)
        b = b.mean(axis=-1)
    if a.ndim != 2 or a.shape[0] < win or a.shape[1] < win:
        raise ShapeError(f"ssim needs images at least {win}x{win}, got {a.shape}")
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a = _window_means(a, win)
    mu_b = _window_means(b, win)
    var_a = _window_means(a * a, win) - mu_a ** 2
    var_b = _window_means(b * b, win) - mu_b ** 2
    cov = _window_means(a * b, win) - mu_a * mu_b
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(score.mean())


def video_psnr(a: np.ndarray, b: np.ndarray, peak: float = 2.0) -> float:
    return psnr(a, b, peak)


def video_ssim(a: np.ndarray, b: np.ndarray, peak: float = 2.0) -> float:
    """Mean frame SSIM over a (T, H, W, C) pair."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 4:
        raise ShapeError(f"video_ssim expects matching (T,H,W,C), got {a.shape} vs {b.shape}")
    return float(np.mean([ssim(a[t], b[t], peak) for t in range(a.shape[0])]))
