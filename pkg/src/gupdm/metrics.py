"""Full-reference (MSE, PSNR, SSIM) and no-reference (UCIQE, UIQM) image quality metrics.

All functions take ``(H, W, 3)`` float images in [0, 1]. MSE and PSNR are
reported on the 0-255 scale.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage, signal
from skimage import color

PSNR_CAP = 99.0
SSIM_K1, SSIM_K2 = 0.01, 0.03
SSIM_WINDOW, SSIM_SIGMA = 11, 1.5
UCIQE_COEFFS = (0.4680, 0.2745, 0.2576)
UIQM_COEFFS = (0.0282, 0.2953, 3.5753)
PLIP_GAMMA = 1026.0


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((255.0 * a - 255.0 * b) ** 2))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB; identical images give ``PSNR_CAP``."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0**2 / err))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_window_size(height: int, width: int, size: int = SSIM_WINDOW) -> int:
    """Largest odd window not exceeding ``size`` or the image extent."""
    size = min(size, height, width)
    return size if size % 2 else size - 1


def ssim(a, b, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    """Mean local SSIM over 'valid' Gaussian windows, averaged over channels."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    w = gaussian_window(ssim_window_size(a.shape[0], a.shape[1], window), sigma)
    c1 = (SSIM_K1 * 255.0) ** 2
    c2 = (SSIM_K2 * 255.0) ** 2
    vals = []
    for ch in range(a.shape[2]):
        x = 255.0 * a[:, :, ch]
        y = 255.0 * b[:, :, ch]
        mx = signal.convolve2d(x, w, mode="valid")
        my = signal.convolve2d(y, w, mode="valid")
        sxx = signal.convolve2d(x * x, w, mode="valid") - mx * mx
        syy = signal.convolve2d(y * y, w, mode="valid") - my * my
        sxy = signal.convolve2d(x * y, w, mode="valid") - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def uciqe(img) -> float:
    """c1 * chroma std + c2 * luminance contrast + c3 * mean saturation in CIELab."""
    img = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    lab = color.rgb2lab(img)
    lum = lab[:, :, 0]
    chroma = np.hypot(lab[:, :, 1], lab[:, :, 2])
    # rgb2lab leaves ~1e-5 residual chroma on neutral pixels
    chroma[np.ptp(img, axis=2) == 0] = 0.0
    sigma_c = float(np.std(chroma))
    sl = np.sort(lum, axis=None)
    top = max(1, int(round(0.01 * sl.size)))
    con_l = float(sl[-top:].mean() - sl[:top].mean())
    with np.errstate(divide="ignore", invalid="ignore"):
        sat = np.where((chroma > 0) & (lum > 0), chroma / lum, 0.0)
    mu_s = float(sat.mean())
    c1, c2, c3 = UCIQE_COEFFS
    return c1 * sigma_c + c2 * con_l + c3 * mu_s


def _trimmed_stats(x: np.ndarray, alpha: float) -> tuple[float, float]:
    s = np.sort(x, axis=None)
    cut = int(alpha * s.size)
    kept = s[cut : s.size - cut] if s.size - 2 * cut > 0 else s
    mu = float(kept.mean())
    return mu, float(np.mean((kept - mu) ** 2))


def uicm(img, alpha: float = 0.1) -> float:
    rgb = 255.0 * np.asarray(img, dtype=np.float64)
    rg = rgb[:, :, 0] - rgb[:, :, 1]
    yb = 0.5 * (rgb[:, :, 0] + rgb[:, :, 1]) - rgb[:, :, 2]
    mu_rg, var_rg = _trimmed_stats(rg, alpha)
    mu_yb, var_yb = _trimmed_stats(yb, alpha)
    return -0.0268 * math.sqrt(mu_rg**2 + mu_yb**2) + 0.1586 * math.sqrt(var_rg + var_yb)


def _blocks(ch: np.ndarray, size: int):
    h, w = ch.shape
    for i in range(0, h, size):
        for j in range(0, w, size):
            yield ch[i : i + size, j : j + size]


def eme(ch: np.ndarray, block: int = 8) -> float:
    blocks = list(_blocks(ch, block))
    total = 0.0
    for b in blocks:
        lo, hi = float(b.min()), float(b.max())
        lo = lo if lo != 0 else 1.0
        hi = hi if hi != 0 else 1.0
        total += math.log(hi / lo)
    return 2.0 * total / len(blocks)


def _sobel_magnitude(ch: np.ndarray) -> np.ndarray:
    gx = ndimage.sobel(ch, axis=1, mode="reflect")
    gy = ndimage.sobel(ch, axis=0, mode="reflect")
    # normalised so a unit step gives magnitude ~1
    return np.hypot(gx, gy) / (4.0 * math.sqrt(2.0))


def uism(img, block: int = 8) -> float:
    img = np.asarray(img, dtype=np.float64)
    weights = (0.299, 0.587, 0.114)
    total = 0.0
    for c, lam in enumerate(weights):
        edges = np.round(255.0 * img[:, :, c] * _sobel_magnitude(img[:, :, c]))
        total += lam * eme(edges, block)
    return total


def _plip_add(a, b):
    return a + b - a * b / PLIP_GAMMA


def _plip_sub(a, b):
    return PLIP_GAMMA * (a - b) / (PLIP_GAMMA - b)


def _plip_scalar_mul(c, a):
    return PLIP_GAMMA - PLIP_GAMMA * (1.0 - a / PLIP_GAMMA) ** c


def uiconm(img, block: int = 8) -> float:
    """PLIP log-AMEE contrast of the grey-level image."""
    gray = 255.0 * color.rgb2gray(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0))
    blocks = list(_blocks(gray, block))
    s = 0.0
    for b in blocks:
        lo, hi = float(b.min()), float(b.max())
        bottom = _plip_add(hi, lo)
        m = 0.0 if bottom == 0.0 else _plip_sub(hi, lo) / bottom
        if m > 0.0:
            s += m * math.log(m)
    return _plip_scalar_mul(1.0 / len(blocks), s)


def uiqm(img, block: int = 8, alpha: float = 0.1) -> float:
    c1, c2, c3 = UIQM_COEFFS
    return c1 * uicm(img, alpha) + c2 * uism(img, block) + c3 * uiconm(img, block)


REFERENCE_METRICS = {"psnr": psnr, "ssim": ssim, "mse": mse}
NO_REFERENCE_METRICS = {"uciqe": uciqe, "uiqm": uiqm}


def evaluate(image, reference=None, names=("psnr", "ssim", "mse", "uciqe", "uiqm")) -> dict[str, float]:
    """Compute the requested metrics; reference metrics are skipped without a reference."""
    out = {}
    for name in names:
        if name in REFERENCE_METRICS:
            if reference is not None:
                out[name] = REFERENCE_METRICS[name](image, reference)
        elif name in NO_REFERENCE_METRICS:
            out[name] = NO_REFERENCE_METRICS[name](image)
        else:
            raise ValueError(f"unknown metric {name!r}; choose from {sorted({**REFERENCE_METRICS, **NO_REFERENCE_METRICS})}")
    return out
