"""Input validation helpers shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionError, DomainError


def check_image(img, name: str = "image") -> np.ndarray:
    """An (H, W, 3) float64 image with finite values in [0, 1]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or Inf")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise DomainError(f"{name} values must lie in [0, 1]")
    return arr


def check_images(X, name: str = "X") -> list[np.ndarray]:
    """A nonempty sequence of images, or an (N, H, W, 3) stack, as a list."""
    if isinstance(X, np.ndarray) and X.ndim == 4:
        X = list(X)
    elif isinstance(X, np.ndarray) and X.ndim == 3:
        X = [X]
    X = list(X)
    if not X:
        raise DimensionError(f"{name} holds no images")
    return [check_image(x, f"{name}[{i}]") for i, x in enumerate(X)]


def check_pairs(X, y) -> tuple[list[np.ndarray], list[np.ndarray]]:
    X = check_images(X, "X")
    y = check_images(y, "y")
    if len(X) != len(y):
        raise DimensionError(f"X has {len(X)} images but y has {len(y)}")
    for i, (a, b) in enumerate(zip(X, y)):
        if a.shape != b.shape:
            raise DimensionError(f"pair {i}: shapes {a.shape} and {b.shape} differ")
    return X, y

