"""Central finite-difference gradient oracle."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, no_grad


def numerical_gradient(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    index: int,
    eps: float = 1e-5,
    projection: np.ndarray | float = 1.0,
) -> np.ndarray:
    """d sum(fn * projection) / d inputs[index] by central differences, without a tape."""
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    target = arrays[index]
    grad = np.zeros_like(target)
    flat = target.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = (fn(*[Tensor(a) for a in arrays]).data * projection).sum()
            flat[i] = orig - eps
            lo = (fn(*[Tensor(a) for a in arrays]).data * projection).sum()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
    return grad


def analytic_gradients(
    fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], projection: np.ndarray | float = 1.0
) -> list[np.ndarray]:
    tensors = [Tensor(a, requires_grad=True) for a in inputs]
    with Tape():
        out = (fn(*tensors) * projection).sum()
        out.backward()
    return [np.zeros_like(t.data) if t.grad is None else t.grad for t in tensors]


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||); zero when both vanish."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    eps: float = 1e-5,
    rtol: float = 1e-4,
    seed: int = 0,
) -> list[float]:
    """Compare autodiff against central differences.

    The output of ``fn`` is contracted with a fixed random projection so that
    ops with constant sums (softmax) still get a nontrivial check. Returns the
    relative error per input and raises AssertionError if any exceeds ``rtol``.
    """
    with no_grad():
        shape = fn(*[Tensor(a) for a in inputs]).shape
    projection = np.random.default_rng(seed).standard_normal(shape)
    analytic = analytic_gradients(fn, inputs, projection)
    errors = []
    for i in range(len(inputs)):
        numeric = numerical_gradient(fn, inputs, i, eps, projection)
        errors.append(relative_error(analytic[i], numeric))
    worst = max(errors)
    if worst > rtol:
        raise AssertionError(f"gradient mismatch: relative errors {errors} exceed {rtol}")
    return errors


def check_directional(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    rng: np.random.Generator,
    eps: float = 1e-5,
    rtol: float = 1e-4,
    n_directions: int = 2,
) -> float:
    """Central differences along random joint directions of all inputs.

    Each direction costs two forward passes regardless of input size, which
    makes many-seed sweeps cheap. Returns the worst relative error.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in inputs]
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape():
        out = fn(*tensors)
        projection = rng.standard_normal(out.shape)
        (out * projection).sum().backward()
    analytic = [np.zeros_like(a) if t.grad is None else t.grad for a, t in zip(arrays, tensors)]
    worst = 0.0
    for _ in range(n_directions):
        dirs = [rng.standard_normal(a.shape) for a in arrays]
        exact = sum(float((g * d).sum()) for g, d in zip(analytic, dirs))
        with no_grad():
            hi = (fn(*[Tensor(a + eps * d) for a, d in zip(arrays, dirs)]).data * projection).sum()
            lo = (fn(*[Tensor(a - eps * d) for a, d in zip(arrays, dirs)]).data * projection).sum()
        numeric = (hi - lo) / (2 * eps)
        denom = max(abs(exact), abs(numeric))
        err = 0.0 if denom == 0.0 else abs(exact - numeric) / denom
        worst = max(worst, err)
    if worst > rtol:
        raise AssertionError(f"directional gradient mismatch: relative error {worst} > {rtol}")
    return worst
