"""Underwater image formation, its inversion, prior estimation and re-degradation.

Images are ``(H, W, 3)`` float arrays in [0, 1]; atmosphere light is a length-3
array; transmission maps are ``(H, W, 3)`` arrays in (0, 1].

    I_c(x) = J_c(x) T_c(x) + (1 - T_c(x)) A_c
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import minimum_filter

from .exceptions import DimensionError, DomainError, EstimationError

T_FLOOR = 0.05
LAMBDA_RANGE = (0.3, 0.6)
GAMMA_RANGE = (0.5, 1.1)


def default_patch(height: int, width: int) -> int:
    """UDCP window: 7 for fixtures up to 64 px, 15 otherwise."""
    return 7 if max(height, width) <= 64 else 15


def _check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DimensionError(f"{name} must have shape (H, W, 3), got {img.shape}")
    return img


def _check_atmosphere(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64).reshape(-1)
    if A.shape != (3,):
        raise DimensionError(f"atmosphere light must have 3 components, got {A.shape}")
    return A


def _check_transmission(T: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.ndim == 2:
        T = np.repeat(T[:, :, None], 3, axis=2)
    if T.shape != shape:
        raise DimensionError(f"transmission shape {T.shape} does not match image {shape}")
    if np.any(T <= 0) or not np.all(np.isfinite(T)):
        raise DomainError("transmission must lie in (0, 1]")
    return T


def synthesize(clean: np.ndarray, A, T: np.ndarray) -> np.ndarray:
    """Degrade a clean image with atmosphere light ``A`` and transmission ``T``."""
    clean = _check_image(clean, "clean")
    A = _check_atmosphere(A)
    T = _check_transmission(T, clean.shape)
    return np.clip(clean * T + (1.0 - T) * A, 0.0, 1.0)


def invert(observed: np.ndarray, A, T: np.ndarray, t_floor: float = T_FLOOR) -> np.ndarray:
    """Analytic inverse of :func:`synthesize` with the transmission floored at ``t_floor``."""
    if t_floor <= 0:
        raise DomainError("t_floor must be positive")
    observed = _check_image(observed, "observed")
    A = _check_atmosphere(A)
    T = np.asarray(T, dtype=np.float64)
    if T.ndim == 2:
        T = np.repeat(T[:, :, None], 3, axis=2)
    if T.shape != observed.shape:
        raise DimensionError(f"transmission shape {T.shape} does not match image {observed.shape}")
    J = (observed - (1.0 - T) * A) / np.maximum(T, t_floor)
    return np.clip(J, 0.0, 1.0)


def _open_uniform(rng, low: float, high: float, size) -> np.ndarray:
    # nextafter keeps the lower bound out of the support
    return np.asarray(rng.uniform(np.nextafter(low, high), high, size=size), dtype=np.float64)


def vary_atmosphere(A, m_count: int, rng, lambda_range=LAMBDA_RANGE) -> list[tuple[np.ndarray, np.ndarray]]:
    """Scale each channel of ``A`` by an independent level drawn from ``lambda_range``.

    Returns ``m_count`` pairs ``(A_m, lambda_m)``.
    """
    if m_count < 1:
        raise DomainError("m_count must be >= 1")
    A = _check_atmosphere(A)
    out = []
    for _ in range(m_count):
        lam = _open_uniform(rng, lambda_range[0], lambda_range[1], 3)
        out.append((np.clip(lam * A, 0.0, 1.0), lam))
    return out


def vary_transmission(T: np.ndarray, n_count: int, rng, gamma_range=GAMMA_RANGE) -> list[tuple[np.ndarray, np.ndarray]]:
    """Scale each channel of ``T`` by a coefficient drawn from ``gamma_range``, clipped to (0, 1]."""
    if n_count < 1:
        raise DomainError("n_count must be >= 1")
    T = np.asarray(T, dtype=np.float64)
    out = []
    for _ in range(n_count):
        gamma = _open_uniform(rng, gamma_range[0], gamma_range[1], 3)
        out.append((np.minimum(T * gamma, 1.0), gamma))
    return out


def _gb_dark_channel(observed: np.ndarray, patch: int, scale=(1.0, 1.0)) -> np.ndarray:
    gb = np.minimum(observed[:, :, 1] / scale[0], observed[:, :, 2] / scale[1])
    return minimum_filter(gb, size=patch, mode="nearest")


def estimate_transmission_udcp(observed: np.ndarray, A, patch: int | None = None, t_floor: float = T_FLOOR) -> np.ndarray:
    """Green/blue dark-channel transmission estimate, replicated to three channels.

    The red channel is ignored entirely.
    """
    observed = _check_image(observed, "observed")
    A = _check_atmosphere(A)
    if patch is None:
        patch = default_patch(*observed.shape[:2])
    if patch < 1 or patch % 2 == 0:
        raise DomainError(f"patch must be odd and >= 1, got {patch}")
    if A[1] <= 0 or A[2] <= 0:
        raise EstimationError("green and blue atmosphere components must be positive")
    dark = _gb_dark_channel(observed, patch, (A[1], A[2]))
    t = np.clip(1.0 - dark, t_floor, 1.0)
    return np.repeat(t[:, :, None], 3, axis=2)


def estimate_atmosphere(observed: np.ndarray, fraction: float = 0.001, patch: int | None = None) -> np.ndarray:
    """Mean colour of the pixels whose green/blue dark channel is brightest."""
    observed = _check_image(observed, "observed")
    if not 0 < fraction <= 1:
        raise DomainError(f"fraction must lie in (0, 1], got {fraction}")
    h, w = observed.shape[:2]
    if patch is None:
        patch = default_patch(h, w)
    dark = _gb_dark_channel(observed, patch).reshape(-1)
    count = max(1, int(np.ceil(fraction * h * w)))
    order = np.argsort(-dark, kind="stable")[:count]
    return observed.reshape(-1, 3)[order].mean(axis=0)


@dataclass
class Priors:
    """Estimated physical priors of one observed image."""

    atmosphere: np.ndarray
    transmission: np.ndarray
    radiance: np.ndarray

    def render(self, A=None, T=None) -> np.ndarray:
        """Re-synthesize the estimated radiance under (possibly varied) priors."""
        A = self.atmosphere if A is None else A
        T = self.transmission if T is None else T
        return synthesize(self.radiance, A, T)


def estimate_priors(observed: np.ndarray, patch: int | None = None, t_floor: float = T_FLOOR) -> Priors:
    observed = _check_image(observed, "observed")
    A = estimate_atmosphere(observed, patch=patch)
    # a black background leaves nothing to normalise by
    A = np.maximum(A, 1e-3)
    T = estimate_transmission_udcp(observed, A, patch, t_floor)
    J = invert(observed, A, T, t_floor)
    return Priors(A, T, J)


@dataclass
class DegradationSample:
    """An image plus its atmosphere/transmission re-degradations."""

    base: np.ndarray
    priors: Priors
    atmospheres: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    transmissions: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    atmosphere_images: list[np.ndarray] = field(default_factory=list)
    transmission_images: list[list[np.ndarray]] = field(default_factory=list)

    @property
    def lambdas(self) -> list[np.ndarray]:
        return [lam for _, lam in self.atmospheres]

    @property
    def gammas(self) -> list[np.ndarray]:
        return [g for _, g in self.transmissions]


def make_degradation_sample(
    image: np.ndarray,
    m_count: int,
    n_count: int,
    rng,
    lambda_range=LAMBDA_RANGE,
    gamma_range=GAMMA_RANGE,
    patch: int | None = None,
) -> DegradationSample:
    """Build I^m for every atmosphere variant and I^{m,n} for every (m, n) pair."""
    priors = estimate_priors(image, patch)
    atm = vary_atmosphere(priors.atmosphere, m_count, rng, lambda_range)
    trans = vary_transmission(priors.transmission, n_count, rng, gamma_range)
    sample = DegradationSample(np.asarray(image, dtype=np.float64), priors, atm, trans)
    for A_m, _ in atm:
        sample.atmosphere_images.append(priors.render(A=A_m))
        sample.transmission_images.append([priors.render(A=A_m, T=T_n) for T_n, _ in trans])
    return sample


def replay_degradation_sample(image: np.ndarray, lambdas, gammas, patch: int | None = None) -> DegradationSample:
    """Rebuild a :class:`DegradationSample` from recorded levels instead of an rng."""
    priors = estimate_priors(image, patch)
    atm = [(np.clip(np.asarray(lam, dtype=np.float64) * priors.atmosphere, 0.0, 1.0), np.asarray(lam, dtype=np.float64)) for lam in lambdas]
    trans = [(np.minimum(priors.transmission * np.asarray(g, dtype=np.float64), 1.0), np.asarray(g, dtype=np.float64)) for g in gammas]
    sample = DegradationSample(np.asarray(image, dtype=np.float64), priors, atm, trans)
    for A_m, _ in atm:
        sample.atmosphere_images.append(priors.render(A=A_m))
        sample.transmission_images.append([priors.render(A=A_m, T=T_n) for T_n, _ in trans])
    return sample
