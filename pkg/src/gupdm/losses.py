"""Training objective: l1 + w_ssim * (1 - SSIM) + w_per * perceptual.

Every loss takes NCHW tensors (or arrays) in [0, 1] and returns a scalar
tensor on the active tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, DimensionError
from .metrics import SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW, gaussian_window, ssim_window_size
from .module import Module, uniform_init
from .tensor import Tensor


@dataclass
class LossWeights:
    ssim: float = 0.04
    perceptual: float = 0.02
    huber_delta: float | None = None

    def __post_init__(self):
        if self.ssim < 0 or self.perceptual < 0:
            raise ConfigError(f"loss weights must be >= 0, got ssim={self.ssim}, perceptual={self.perceptual}")
        if self.huber_delta is not None and self.huber_delta <= 0:
            raise ConfigError("huber_delta must be positive")


def _pair(a, b) -> tuple[Tensor, Tensor]:
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def l1_loss(J, gt, huber_delta: float | None = None) -> Tensor:
    """Mean absolute error; with ``huber_delta`` the smooth-L1 variant."""
    J, gt = _pair(J, gt)
    d = J - gt
    if huber_delta is None:
        return T.mean(T.abs_(d))
    return T.mean(T.smooth_l1(d, huber_delta))


def _as_nchw(x: Tensor) -> Tensor:
    if x.ndim == 2:
        return T.reshape(x, (1, 1) + x.shape)
    if x.ndim == 3:
        return T.reshape(x, (1,) + x.shape)
    if x.ndim != 4:
        raise DimensionError(f"expected an image tensor, got shape {x.shape}")
    return x


def ssim_index(J, gt, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> Tensor:
    """Differentiable mean SSIM over 'valid' Gaussian windows; channels are independent."""
    J, gt = _pair(J, gt)
    J, gt = _as_nchw(J), _as_nchw(gt)
    n, c, h, w = J.shape
    k = ssim_window_size(h, w, window)
    if k < 1:
        raise DimensionError(f"image {h}x{w} is too small for SSIM")
    kernel = Tensor(gaussian_window(k, sigma)[None, None])
    x = T.reshape(J, (n * c, 1, h, w))
    y = T.reshape(gt, (n * c, 1, h, w))

    def blur(v):
        return T.conv2d(v, kernel)

    mx, my = blur(x), blur(y)
    sxx = blur(x * x) - mx * mx
    syy = blur(y * y) - my * my
    sxy = blur(x * y) - mx * my
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    num = (2.0 * mx * my + c1) * (2.0 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return T.mean(num / den)


def ssim_loss(J, gt) -> Tensor:
    return 1.0 - ssim_index(J, gt)


class RandomConvExtractor(Module):
    """Frozen three-stage conv pyramid (8/16/32 channels) standing in for VGG taps.

    Weights are drawn once from ``seed`` and never receive gradients. Custom
    weights (e.g. exported VGG layers) can be supplied through ``weights``,
    a mapping of ``stage{i}.weight`` / ``stage{i}.bias`` to arrays.
    """

    widths = (8, 16, 32)
    strides = (1, 2, 2)
    n_taps = 3

    def __init__(self, seed: int = 0, in_ch: int = 3, weights: dict | None = None):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.seed = seed
        prev = in_ch
        self.stages = []
        for i, width in enumerate(self.widths):
            fan_in = prev * 9
            # sqrt(6) bound keeps activations roughly unit scale through relu
            wt = self.param(f"stage{i}.weight", uniform_init(rng, (width, prev, 3, 3), fan_in, np.sqrt(6.0)))
            b = self.param(f"stage{i}.bias", np.zeros(width))
            self.stages.append((wt, b, self.strides[i]))
            prev = width
        if weights is not None:
            self.load_state_dict(weights)
        self.requires_grad_(False)

    def __call__(self, x: Tensor) -> list[Tensor]:
        taps = []
        for wt, b, stride in self.stages:
            x = T.relu(T.conv2d(x, wt, b, stride, 1))
            taps.append(x)
        return taps


class IdentityExtractor:
    """Taps are the image itself at full, half and quarter resolution."""

    n_taps = 3

    def __call__(self, x: Tensor) -> list[Tensor]:
        half = T.downsample2x(x)
        return [x, half, T.downsample2x(half)]


def perceptual_loss(J, gt, extractor) -> Tensor:
    """Mean over the extractor's three taps of the feature-map MSE."""
    J, gt = _pair(J, gt)
    J, gt = _as_nchw(J), _as_nchw(gt)
    fj = extractor(J)
    with T.no_grad():
        fg = extractor(gt)
    if len(fj) != 3 or len(fg) != 3:
        raise ConfigError(f"perceptual extractor must expose exactly 3 taps, got {len(fj)}")
    total = None
    for a, b in zip(fj, fg):
        d = a - b
        term = T.mean(d * d)
        total = term if total is None else total + term
    return total / 3.0


def total_loss(J, gt, weights: LossWeights | None = None, extractor=None) -> tuple[Tensor, dict[str, float]]:
    """Weighted objective and its three separately reported components."""
    weights = weights or LossWeights()
    if extractor is None:
        extractor = default_extractor()
    l1 = l1_loss(J, gt, weights.huber_delta)
    total = l1
    parts = {"l1": l1.item()}
    if weights.ssim > 0:
        s = ssim_loss(J, gt)
        total = total + weights.ssim * s
        parts["ssim"] = s.item()
    if weights.perceptual > 0:
        p = perceptual_loss(J, gt, extractor)
        total = total + weights.perceptual * p
        parts["perceptual"] = p.item()
    parts["total"] = total.item()
    return total, parts


_DEFAULT_EXTRACTOR: RandomConvExtractor | None = None


def default_extractor() -> RandomConvExtractor:
    global _DEFAULT_EXTRACTOR
    if _DEFAULT_EXTRACTOR is None:
        _DEFAULT_EXTRACTOR = RandomConvExtractor(seed=0)
    return _DEFAULT_EXTRACTOR
