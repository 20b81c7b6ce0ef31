"""Tiny synthetic paired datasets built from the formation model."""

from __future__ import annotations

import numpy as np

from .physics import synthesize


def clean_texture(size: int, rng: np.random.Generator) -> np.ndarray:
    """A colourful scene: smooth colour field modulated by fine stripes.

    The stripes put near-black pixels in every 7x7 window, which is what the
    dark-channel prior assumes of haze-free scenes.
    """
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    field = np.zeros((size, size, 3))
    for _ in range(4):
        cy, cx = rng.uniform(0, 1, 2)
        width = rng.uniform(0.15, 0.5)
        colour = rng.uniform(0.2, 1.0, 3)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2))
        field += blob[:, :, None] * colour
    field = 0.25 + 0.7 * field / field.max()
    angle = rng.uniform(0, np.pi)
    period = rng.uniform(3.0, 5.0)
    phase = rng.uniform(0, 2 * np.pi)
    u = (np.cos(angle) * xx + np.sin(angle) * yy) * (size - 1)
    stripes = 0.5 + 0.5 * np.sin(2 * np.pi * u / period + phase)
    return np.clip(field * (0.08 + 0.92 * stripes[:, :, None]), 0.0, 1.0)


def smooth_transmission(size: int, rng: np.random.Generator, per_channel: bool = True) -> np.ndarray:
    """T = exp(-beta d) for a random smooth depth ramp; red attenuates fastest when per_channel."""
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    a, b = rng.uniform(-1, 1, 2)
    cy, cx = rng.uniform(0, 1, 2)
    depth = 1.0 + a * xx + b * yy + 0.8 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 0.08)
    depth = (depth - depth.min()) / (np.ptp(depth) + 1e-12)
    depth = 0.2 + 2.0 * depth
    if per_channel:
        beta = np.array([rng.uniform(0.6, 0.9), rng.uniform(0.25, 0.45), rng.uniform(0.2, 0.4)])
    else:
        beta = np.full(3, rng.uniform(0.3, 0.6))
    return np.clip(np.exp(-depth[:, :, None] * beta), 0.05, 1.0)


def water_atmosphere(rng: np.random.Generator) -> np.ndarray:
    """Blue-green background light."""
    return np.array([rng.uniform(0.05, 0.3), rng.uniform(0.5, 0.9), rng.uniform(0.55, 0.95)])


def make_pairs(n: int, size: int, seed: int = 0, per_channel: bool = True):
    """Return (degraded, clean, atmospheres, transmissions) stacked along axis 0."""
    rng = np.random.default_rng(seed)
    degraded, clean, atms, trans = [], [], [], []
    for _ in range(n):
        J = clean_texture(size, rng)
        T = smooth_transmission(size, rng, per_channel)
        A = water_atmosphere(rng)
        degraded.append(synthesize(J, A, T))
        clean.append(J)
        atms.append(A)
        trans.append(T)
    return np.stack(degraded), np.stack(clean), np.stack(atms), np.stack(trans)


def fixture_corpus(seed: int = 0) -> dict[str, np.ndarray]:
    """Small named images covering textures, degradations and edge cases."""
    rng = np.random.default_rng(seed)
    degraded, clean, _, _ = make_pairs(4, 32, seed)
    corpus = {}
    for i in range(4):
        corpus[f"clean{i}"] = clean[i]
        corpus[f"degraded{i}"] = degraded[i]
    corpus["black"] = np.zeros((16, 16, 3))
    corpus["white"] = np.ones((16, 16, 3))
    corpus["gray"] = np.full((16, 16, 3), 0.5)
    corpus["noise"] = rng.random((24, 24, 3))
    ramp = np.linspace(0.0, 1.0, 20)
    corpus["ramp"] = np.stack(np.broadcast_arrays(ramp[None, :], ramp[:, None], 0.5 + 0 * ramp[None, :]), axis=2)
    corpus["odd"] = clean_texture(13, rng)[:, :11]
    corpus["tiny"] = rng.random((3, 3, 3))
    return corpus
