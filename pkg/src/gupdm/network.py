"""ADS / TDS hyper-structures, the PMS base network and the full model."""

from __future__ import annotations

import contextlib

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import physics
from . import tensor as T
from .blocks import act, Conv, DynamicConv, HyperResidualBlock, MultiScaleFeatureExtraction, tc_forward
from .exceptions import ConfigError, DimensionError
from .module import Module, uniform_init
from .tensor import Tensor

PARAMETER_SETS = ("theta", "phi", "omega")


@dataclass
class ModelConfig:
    channels: int = 16
    code_dim: int = 64
    n_kernels: int = 4
    hyper_blocks: int = 2
    hyper_channels: int = 16
    reduction: int = 4
    cond_scale: float = 1.0
    use_ads: bool = True
    use_tds: bool = True
    use_tgfe: bool = True
    wide_modules: tuple[str, str] = ("hmh", "hmh")
    narrow_modules: tuple[str, str] = ("3h", "3h")
    seed: int = 0

    def __post_init__(self):
        self.wide_modules = tuple(self.wide_modules)
        self.narrow_modules = tuple(self.narrow_modules)
        for kind in self.wide_modules + self.narrow_modules:
            if kind not in ("hmh", "3h"):
                raise ConfigError(f"unknown PMS module kind {kind!r}")
        if self.channels < 1 or self.code_dim < 1 or self.hyper_blocks < 1:
            raise ConfigError("channels, code_dim and hyper_blocks must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["wide_modules"] = list(self.wide_modules)
        d["narrow_modules"] = list(self.narrow_modules)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def _maybe_no_grad(flag: bool):
    return T.no_grad() if flag else contextlib.nullcontext()


def to_nchw(images: np.ndarray) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    return images.transpose(0, 3, 1, 2)


def to_nhwc(x) -> np.ndarray:
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    return data.transpose(0, 2, 3, 1)


class HyperStructure(Module):
    """Stacked blocks of two dynamic convolutions; each block's GAP feeds the code head."""

    def __init__(self, in_ch: int, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        c = cfg.hyper_channels
        self.in_ch = in_ch
        self.blocks = []
        prev = in_ch
        for i in range(cfg.hyper_blocks):
            first = self.child(f"block{i}.dc0", DynamicConv(prev, c, 3, rng, cfg.n_kernels, 1, cfg.reduction))
            second = self.child(f"block{i}.dc1", DynamicConv(c, c, 3, rng, cfg.n_kernels, 2, cfg.reduction))
            self.blocks.append((first, second))
            prev = c
        width = c * cfg.hyper_blocks
        self.head_w = self.param("head_weight", uniform_init(rng, (width, cfg.code_dim), width))
        self.head_b = self.param("head_bias", uniform_init(rng, (cfg.code_dim,), width))

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise DimensionError(f"expected [N,{self.in_ch},H,W], got {x.shape}")
        pooled = []
        for first, second in self.blocks:
            x = act(second(act(first(x))))
            pooled.append(T.global_avg_pool(x))
        return T.fc(T.concat(pooled, axis=1), self.head_w, self.head_b)


class ADS(HyperStructure):
    """Atmosphere-based dynamic structure: re-degraded image -> f_ADS."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__(3, cfg, rng)


class TDS(HyperStructure):
    """Transmission-based dynamic structure: [image, transmission] -> (f_TDS, f_m)."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__(6, cfg, rng)
        self.enc0 = self.child("tmap.conv0", Conv(3, 8, 3, rng))
        self.enc1 = self.child("tmap.conv1", Conv(8, 1, 3, rng))

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        code = super().__call__(x)
        tmap = T.downsample2x(x[:, 3:6])
        f_m = T.tanh(self.enc1(act(self.enc0(tmap))))
        return code, f_m


class HMH(Module):
    def __init__(self, c, d, rng, reduction, cs=0.1):
        super().__init__()
        self.h0 = self.child("hrb0", HyperResidualBlock(c, d, rng, cond_scale=cs))
        self.mfe = self.child("mfe", MultiScaleFeatureExtraction(c, rng, reduction))
        self.h1 = self.child("hrb1", HyperResidualBlock(c, d, rng, cond_scale=cs))

    def hrbs(self):
        return [self.h0, self.h1]

    def __call__(self, x, cond):
        return self.h1(self.mfe(self.h0(x, cond)), cond)


class ThreeH(Module):
    def __init__(self, c, d, rng, cs=0.1):
        super().__init__()
        self.hs = [self.child(f"hrb{i}", HyperResidualBlock(c, d, rng, cond_scale=cs)) for i in range(3)]

    def hrbs(self):
        return list(self.hs)

    def __call__(self, x, cond):
        for h in self.hs:
            x = h(x, cond)
        return x


class TGFE(Module):
    """HRB -> TC -> MFE -> HRB, conditioned on f_TDS and modulated by f_m."""

    def __init__(self, c, d, rng, reduction, cs=0.1):
        super().__init__()
        self.h0 = self.child("hrb0", HyperResidualBlock(c, d, rng, cond_scale=cs))
        self.mfe = self.child("mfe", MultiScaleFeatureExtraction(c, rng, reduction))
        self.h1 = self.child("hrb1", HyperResidualBlock(c, d, rng, cond_scale=cs))

    def hrbs(self):
        return [self.h0, self.h1]

    def __call__(self, x, cond, f_m):
        x = self.h0(x, cond)
        if f_m is not None:
            x = tc_forward(x, f_m)
        return self.h1(self.mfe(x), cond)


def _make_stage(kind, c, d, rng, reduction, cs):
    return HMH(c, d, rng, reduction, cs) if kind == "hmh" else ThreeH(c, d, rng, cs)


class PMS(Module):
    """Base enhancement network: HMH -> down -> 3H -> TGFE -> 3H -> up -> HMH.

    The output is the input image plus a predicted residual, clipped to [0, 1].
    """

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        c, d = cfg.channels, cfg.code_dim
        self.cfg = cfg
        self.inp = self.child("in_conv", Conv(3, c, 3, rng))
        self.wide0 = self.child("wide0", _make_stage(cfg.wide_modules[0], c, d, rng, cfg.reduction, cfg.cond_scale))
        self.down = self.child("down", Conv(c, c, 3, rng, stride=2))
        self.narrow0 = self.child("narrow0", _make_stage(cfg.narrow_modules[0], c, d, rng, cfg.reduction, cfg.cond_scale))
        self.tgfe = self.child("tgfe", TGFE(c, d, rng, cfg.reduction, cfg.cond_scale)) if cfg.use_tgfe else None
        self.narrow1 = self.child("narrow1", _make_stage(cfg.narrow_modules[1], c, d, rng, cfg.reduction, cfg.cond_scale))
        self.up = self.child("up", Conv(c, c, 3, rng))
        self.wide1 = self.child("wide1", _make_stage(cfg.wide_modules[1], c, d, rng, cfg.reduction, cfg.cond_scale))
        self.out = self.child("out_conv", Conv(c, 3, 3, rng, scale=0.1))

    def hrbs(self) -> list[HyperResidualBlock]:
        stages = [self.wide0, self.narrow0, self.narrow1, self.wide1]
        out = [h for s in stages for h in s.hrbs()]
        if self.tgfe is not None:
            out += self.tgfe.hrbs()
        return out

    def __call__(self, image: Tensor, f_ads: Tensor, f_tds: Tensor, f_m: Tensor | None) -> Tensor:
        d = self.cfg.code_dim
        if f_ads.shape[-1] != d or f_tds.shape[-1] != d:
            raise DimensionError(f"conditioning vectors must have length {d}")
        if image.shape[2] % 2 or image.shape[3] % 2:
            raise DimensionError(f"PMS needs even spatial size, got {image.shape[2:]}")
        x = act(self.inp(image))
        skip = self.wide0(x, f_ads)
        x = act(self.down(skip))
        x = self.narrow0(x, f_ads)
        if self.tgfe is not None:
            x = self.tgfe(x, f_tds, f_m)
        x = self.narrow1(x, f_ads)
        x = act(self.up(T.upsample2x(x))) + skip
        x = self.wide1(x, f_ads)
        return T.clip(image + self.out(x), 0.0, 1.0)


@dataclass
class Variant:
    """Conditioning regime for one forward pass.

    ``base`` feeds the estimated (A, T); ``atm`` feeds (A^m, T); ``atm_trans``
    feeds (A^m, T^n). Per-image levels may be given explicitly (shape (N, 3));
    otherwise they are drawn from the generators.
    """

    kind: str = "base"
    lambdas: np.ndarray | None = None
    gammas: np.ndarray | None = None
    lambda_range: tuple[float, float] = physics.LAMBDA_RANGE
    gamma_range: tuple[float, float] = physics.GAMMA_RANGE

    def __post_init__(self):
        if self.kind not in ("base", "atm", "atm_trans"):
            raise ConfigError(f"unknown variant {self.kind!r}")


@dataclass
class ConditioningInputs:
    ads_input: np.ndarray  # (N, 3, H, W)
    tds_input: np.ndarray  # (N, 6, H, W)
    lambdas: list = field(default_factory=list)
    gammas: list = field(default_factory=list)


def conditioning_inputs(priors: list[physics.Priors], variant: Variant, rng=None) -> ConditioningInputs:
    """Render the ADS and TDS inputs of every image under ``variant``.

    ADS sees the image re-rendered with the (varied) atmosphere and the
    estimated transmission; TDS sees the image rendered with both varied priors,
    stacked with the varied transmission map.
    """
    ads, tds, lambdas, gammas = [], [], [], []
    for i, p in enumerate(priors):
        A, Tm = p.atmosphere, p.transmission
        if variant.kind in ("atm", "atm_trans"):
            if variant.lambdas is not None:
                lam = np.asarray(variant.lambdas, dtype=np.float64)
                lam = lam[i] if lam.ndim == 2 else lam
                A = np.clip(lam * A, 0.0, 1.0)
            else:
                A, lam = physics.vary_atmosphere(A, 1, rng, variant.lambda_range)[0]
            lambdas.append(lam)
        if variant.kind == "atm_trans":
            if variant.gammas is not None:
                gam = np.asarray(variant.gammas, dtype=np.float64)
                gam = gam[i] if gam.ndim == 2 else gam
                Tm = np.minimum(gam * Tm, 1.0)
            else:
                Tm, gam = physics.vary_transmission(Tm, 1, rng, variant.gamma_range)[0]
            gammas.append(gam)
        ads.append(p.render(A=A))
        tds.append(np.concatenate([p.render(A=A, T=Tm), Tm], axis=2))
    return ConditioningInputs(to_nchw(np.stack(ads)), to_nchw(np.stack(tds)), lambdas, gammas)


class GupdmModel:
    """The three disjoint parameter sets: theta (ADS), phi (TDS) and omega (PMS)."""

    def __init__(self, config: ModelConfig | None = None):
        self.config = config or ModelConfig()
        rng = np.random.default_rng(self.config.seed)
        self.ads = ADS(self.config, rng)
        self.tds = TDS(self.config, rng)
        self.pms = PMS(self.config, rng)

    def modules(self) -> dict[str, Module]:
        return {"theta": self.ads, "phi": self.tds, "omega": self.pms}

    def parameter_set(self, name: str) -> list[Tensor]:
        return self.modules()[name].parameters()

    def named_parameters(self):
        for set_name, mod in self.modules().items():
            yield from mod.named_parameters(f"{set_name}.")

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        for name, mod in self.modules().items():
            prefix = f"{name}."
            mod.load_state_dict({k[len(prefix):]: v for k, v in state.items() if k.startswith(prefix)})

    def zero_grad(self) -> None:
        for mod in self.modules().values():
            mod.zero_grad()

    @property
    def tds_live(self) -> bool:
        """TDS codes only reach the output through the TGFE bottleneck."""
        return self.config.use_tds and self.config.use_tgfe

    def ads_forward(self, x: Tensor) -> Tensor:
        if not self.config.use_ads:
            return Tensor(np.zeros((x.shape[0], self.config.code_dim)))
        return self.ads(x)

    def tds_forward(self, x: Tensor) -> tuple[Tensor, Tensor | None]:
        if not self.config.use_tds:
            return Tensor(np.zeros((x.shape[0], self.config.code_dim))), None
        return self.tds(x)

    def forward(self, image: Tensor, cond: ConditioningInputs, detach: tuple[str, ...] = ()) -> Tensor:
        """Enhance ``image`` (N,3,H,W); sets listed in ``detach`` contribute constants."""
        with _maybe_no_grad("theta" in detach):
            f_ads = self.ads_forward(Tensor(cond.ads_input))
        with _maybe_no_grad("phi" in detach):
            f_tds, f_m = self.tds_forward(Tensor(cond.tds_input))
        return self.pms(image, f_ads, f_tds, f_m)

    def full_forward(self, images: np.ndarray, variant: Variant | str = "base", rng=None, priors=None) -> Tensor:
        """Enhance (N,H,W,3) images under one of the three conditioning regimes."""
        if isinstance(variant, str):
            variant = Variant(variant)
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        if priors is None:
            priors = [physics.estimate_priors(im) for im in images]
        cond = conditioning_inputs(priors, variant, rng)
        return self.forward(Tensor(to_nchw(images)), cond)



def enhance_image(model: GupdmModel, image: np.ndarray) -> np.ndarray:
    """Enhance one (H, W, 3) image of any size.

    Sides are edge-padded to an even length of at least 10 px (the bottleneck
    runs at half resolution) and the result is cropped back.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    ph = max(10, h + h % 2) - h
    pw = max(10, w + w % 2) - w
    padded = np.pad(image, ((0, ph), (0, pw), (0, 0)), mode="edge")
    with T.no_grad():
        out = model.full_forward(padded[None], "base")
    return to_nhwc(out)[0, :h, :w]
