"""Network building blocks: dynamic convolution, hyper residual block,
multi-scale feature extraction and the transmission connection."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .exceptions import ConfigError, DimensionError
from .module import Module, uniform_init
from .tensor import Tensor

NEG_SLOPE = 0.2


def act(x: Tensor) -> Tensor:
    return T.leaky_relu(x, NEG_SLOPE)


class Conv(Module):
    """Plain convolution with 'same' padding."""

    def __init__(self, in_ch: int, out_ch: int, k: int, rng: np.random.Generator, stride: int = 1, scale: float = 1.0):
        super().__init__()
        fan_in = in_ch * k * k
        self.weight = self.param("weight", uniform_init(rng, (out_ch, in_ch, k, k), fan_in, scale))
        self.bias = self.param("bias", uniform_init(rng, (out_ch,), fan_in, scale))
        self.stride = stride
        self.padding = k // 2

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class DynamicConv(Module):
    """Attention-weighted mixture of ``n_kernels`` parallel kernels.

    The attention branch is GAP -> fc -> relu -> fc -> softmax over kernels,
    computed per sample; the mixed kernel and bias are then applied with a
    single per-sample convolution.
    """

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        k: int,
        rng: np.random.Generator,
        n_kernels: int = 4,
        stride: int = 1,
        reduction: int = 4,
    ):
        super().__init__()
        if n_kernels < 2:
            raise ConfigError(f"dynamic convolution needs at least 2 kernels, got {n_kernels}")
        hidden = max(4, in_ch // reduction)
        fan_in = in_ch * k * k
        self.n_kernels = n_kernels
        self.out_ch, self.in_ch, self.k = out_ch, in_ch, k
        self.stride = stride
        self.weight = self.param("weight", uniform_init(rng, (n_kernels, out_ch, in_ch, k, k), fan_in))
        self.bias = self.param("bias", uniform_init(rng, (n_kernels, out_ch), fan_in))
        self.att_w1 = self.param("att_w1", uniform_init(rng, (in_ch, hidden), in_ch))
        self.att_b1 = self.param("att_b1", np.zeros(hidden))
        self.att_w2 = self.param("att_w2", uniform_init(rng, (hidden, n_kernels), hidden))
        self.att_b2 = self.param("att_b2", np.zeros(n_kernels))

    def attention(self, x: Tensor) -> Tensor:
        """Kernel attention, shape (N, n_kernels); rows lie on the simplex."""
        h = act(T.fc(T.global_avg_pool(x), self.att_w1, self.att_b1))
        return T.softmax(T.fc(h, self.att_w2, self.att_b2), axis=-1)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise DimensionError(f"DynamicConv expects [N,{self.in_ch},H,W], got {x.shape}")
        n = x.shape[0]
        pi = self.attention(x)
        w = T.reshape(pi @ T.reshape(self.weight, (self.n_kernels, -1)), (n, self.out_ch, self.in_ch, self.k, self.k))
        b = pi @ self.bias
        return T.conv2d(x, w, b, self.stride, self.k // 2)


class HyperResidualBlock(Module):
    """Residual block whose two convolutions are generated from a conditioning vector.

    Each generated tensor (W1, b1, W2, b2) has its own fc head on the shared
    conditioning vector. The fc biases carry a conventional initial kernel and
    the fc weights are small, so the conditioning modulates rather than
    replaces the kernels.
    """

    def __init__(self, channels: int, cond_dim: int, rng: np.random.Generator, k: int = 3, cond_scale: float = 0.1):
        super().__init__()
        self.channels, self.cond_dim, self.k = channels, cond_dim, k
        fan_in = channels * k * k
        n_w = channels * channels * k * k
        self.shapes = {
            "w1": (channels, channels, k, k),
            "b1": (channels,),
            "w2": (channels, channels, k, k),
            "b2": (channels,),
        }
        residual_scale = {"w1": 1.0, "b1": 1.0, "w2": 0.5, "b2": 0.5}
        self.heads: dict[str, tuple[Tensor, Tensor]] = {}
        for name, shape in self.shapes.items():
            size = int(np.prod(shape))
            base = uniform_init(rng, size, fan_in, residual_scale[name])
            spread = uniform_init(rng, (cond_dim, size), fan_in * cond_dim, cond_scale * residual_scale[name])
            self.heads[name] = (self.param(f"{name}_fc_weight", spread), self.param(f"{name}_fc_bias", base))
        assert sum(w.shape[1] for w, _ in self.heads.values()) == 2 * (n_w + channels)

    @property
    def n_generated(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes.values())

    def generate(self, cond: Tensor) -> dict[str, Tensor]:
        """Per-sample kernels and biases from ``cond`` of shape (N, cond_dim)."""
        if cond.ndim != 2 or cond.shape[1] != self.cond_dim:
            raise DimensionError(f"conditioning must be (N, {self.cond_dim}), got {cond.shape}")
        n = cond.shape[0]
        out = {}
        for name, (w, b) in self.heads.items():
            out[name] = T.reshape(T.fc(cond, w, b), (n,) + self.shapes[name])
        return out

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise DimensionError(f"HRB expects [N,{self.channels},H,W], got {x.shape}")
        if cond.ndim == 1:
            cond = T.reshape(cond, (1, -1))
        if cond.shape[0] != x.shape[0]:
            if cond.shape[0] != 1:
                raise DimensionError(f"conditioning batch {cond.shape[0]} vs input batch {x.shape[0]}")
            cond = T.concat([cond] * x.shape[0], axis=0)
        g = self.generate(cond)
        pad = self.k // 2
        h = act(T.conv2d(x, g["w1"], g["b1"], 1, pad))
        return x + T.conv2d(h, g["w2"], g["b2"], 1, pad)


class MultiScaleFeatureExtraction(Module):
    """1x1, 3x3 and 5x5 branches fused by max/avg-pooled channel attention."""

    kernel_sizes = (1, 3, 5)

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.channels = channels
        self.branches = [self.child(f"branch{k}", Conv(channels, channels, k, rng)) for k in self.kernel_sizes]
        self.att_w1 = self.param("att_w1", uniform_init(rng, (2 * channels, hidden), 2 * channels))
        self.att_b1 = self.param("att_b1", np.zeros(hidden))
        self.att_w2 = self.param("att_w2", uniform_init(rng, (hidden, channels), hidden))
        self.att_b2 = self.param("att_b2", np.zeros(channels))
        self.fusion = self.child("fusion", Conv(channels, channels, 1, rng))

    def branch_outputs(self, x: Tensor) -> list[Tensor]:
        return [act(b(x)) for b in self.branches]

    def channel_attention(self, f: Tensor) -> Tensor:
        """(N, C) weights in (0, 1) from concatenated max- and average-pooled statistics."""
        stats = T.concat([T.global_max_pool(f), T.global_avg_pool(f)], axis=1)
        h = act(T.fc(stats, self.att_w1, self.att_b1))
        return T.sigmoid(T.fc(h, self.att_w2, self.att_b2))

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise DimensionError(f"MFE expects [N,{self.channels},H,W], got {x.shape}")
        if x.shape[2] < 5 or x.shape[3] < 5:
            raise DimensionError(f"MFE needs spatial size >= 5, got {x.shape[2]}x{x.shape[3]}")
        n, c = x.shape[:2]
        fused = None
        for f in self.branch_outputs(x):
            a = T.reshape(self.channel_attention(f), (n, c, 1, 1))
            fused = a * f if fused is None else fused + a * f
        return self.fusion(fused)


def tc_forward(x: Tensor, f_m: Tensor) -> Tensor:
    """Transmission connection: ``x * f_m + x`` with f_m broadcast over channels."""
    if f_m.ndim != 4 or f_m.shape[1] != 1 or f_m.shape[0] != x.shape[0] or f_m.shape[2:] != x.shape[2:]:
        raise DimensionError(f"transmission feature {f_m.shape} does not match features {x.shape}")
    return x * f_m + x
