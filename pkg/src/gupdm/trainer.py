"""Alternating optimisation of PMS (omega), ADS (theta) and TDS (phi).

omega is stepped on the base-conditioned loss every step. Every ``t0`` steps
theta is stepped on the loss summed over M atmosphere re-degradations; every
``t1`` steps phi is stepped on the loss summed over N atmosphere+transmission
re-degradations. Each parameter set has its own Adam state and the sets not
being updated contribute constants.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import physics
from . import tensor as T
from .exceptions import ConfigError, NumericError
from .losses import LossWeights, default_extractor, total_loss
from .network import PARAMETER_SETS, ConditioningInputs, GupdmModel, Variant, conditioning_inputs, to_nchw
from .optim import AdamState, adam_step
from .tensor import Tensor

STRATEGIES = ("a", "b", "c", "d")


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 8
    image_size: int = 256
    rho0: float = 1e-4
    rho1: float = 1e-4
    rho2: float = 1e-6
    t0: int = 10
    t1: int = 11
    m_variants: int = 4
    n_variants: int = 4
    seed: int = 0
    lambda1: float = 0.04
    lambda2: float = 0.02
    huber_delta: float | None = None
    lambda_range: tuple[float, float] = physics.LAMBDA_RANGE
    gamma_range: tuple[float, float] = physics.GAMMA_RANGE
    strategy: str = "d"
    # ablations: the levels are still drawn so the random stream is unchanged
    force_lambda_one: bool = False
    force_gamma_one: bool = False
    early_stop_window: int = 20
    early_stop_tol: float = 1e-5
    max_steps: int | None = None

    def __post_init__(self):
        self.lambda_range = tuple(self.lambda_range)
        self.gamma_range = tuple(self.gamma_range)
        if self.t0 < 1 or self.t1 < 1:
            raise ConfigError("t0 and t1 must be >= 1")
        if self.m_variants < 1 or self.n_variants < 1:
            raise ConfigError("m_variants and n_variants must be >= 1")
        if min(self.rho0, self.rho1, self.rho2) <= 0:
            raise ConfigError("learning rates must be positive")
        if self.epochs < 0 or self.batch_size < 1 or self.image_size < 2:
            raise ConfigError("epochs >= 0, batch_size >= 1 and image_size >= 2 required")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2, self.huber_delta)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_range"] = list(self.lambda_range)
        d["gamma_range"] = list(self.gamma_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class StepReport:
    t: int
    updated: tuple[str, ...]
    loss: float
    loss_atm: float | None = None
    loss_trans: float | None = None
    components: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def record(self) -> dict:
        """Loss-history row; wall time is left out so histories are reproducible."""
        return {
            "t": self.t,
            "updated": list(self.updated),
            "loss": self.loss,
            "loss_atm": self.loss_atm,
            "loss_trans": self.loss_trans,
            "components": self.components,
        }


@dataclass
class TrainerState:
    step: int = 0
    adam: dict[str, AdamState] = field(default_factory=dict)
    rng: np.random.Generator | None = None

    def adam_for(self, name: str) -> AdamState:
        return self.adam.setdefault(name, AdamState())


def _group_params(model: GupdmModel, group: str):
    # strategy (a) uses one optimiser over everything; (b) shares one over theta+phi
    if group == "all":
        return [p for s in PARAMETER_SETS for p in model.parameter_set(s)]
    if group == "hyper":
        return model.parameter_set("theta") + model.parameter_set("phi")
    return model.parameter_set(group)


def _snapshot(model: GupdmModel, state: TrainerState):
    params = {n: p.data.copy() for n, p in model.named_parameters()}
    adam = {k: AdamState(v.step, [m.copy() for m in v.m], [x.copy() for x in v.v]) for k, v in state.adam.items()}
    return params, adam


def _restore(model: GupdmModel, state: TrainerState, snap) -> None:
    params, adam = snap
    for n, p in model.named_parameters():
        p.data = params[n]
    state.adam = adam
    model.zero_grad()


class _Frozen:
    """Temporarily stop the listed parameter sets from requiring gradients."""

    def __init__(self, model: GupdmModel, names):
        self.mods = [model.modules()[n] for n in names]

    def __enter__(self):
        for m in self.mods:
            m.requires_grad_(False)

    def __exit__(self, *exc):
        for m in self.mods:
            m.requires_grad_(True)
        return False


def _apply(model: GupdmModel, state: TrainerState, group: str, lr: float) -> None:
    params = _group_params(model, group)
    new, _ = adam_step([p.data for p in params], [p.grad for p in params], state.adam_for(group), lr)
    for p, arr in zip(params, new):
        p.data = arr


def _check_finite(value: float, what: str, t: int) -> None:
    if not np.isfinite(value):
        raise NumericError(f"non-finite {what} loss at step {t}; parameters rolled back")


def _stack_conditioning(conds: list[ConditioningInputs]) -> ConditioningInputs:
    return ConditioningInputs(
        np.concatenate([c.ads_input for c in conds]),
        np.concatenate([c.tds_input for c in conds]),
        [x for c in conds for x in c.lambdas],
        [x for c in conds for x in c.gammas],
    )


def _variant_conditioning(priors, kind: str, count: int, config: TrainConfig, rng) -> ConditioningInputs:
    """``count`` re-degradations of the whole batch, stacked along the batch axis."""
    conds = []
    for _ in range(count):
        variant = Variant(kind, lambda_range=config.lambda_range, gamma_range=config.gamma_range)
        cond = conditioning_inputs(priors, variant, rng)
        if config.force_lambda_one or (kind == "atm_trans" and config.force_gamma_one):
            lambdas = np.ones((len(priors), 3)) if config.force_lambda_one else np.stack(cond.lambdas)
            gammas = None
            if kind == "atm_trans":
                gammas = np.ones((len(priors), 3)) if config.force_gamma_one else np.stack(cond.gammas)
            forced = Variant(kind, lambdas=lambdas, gammas=gammas)
            cond = conditioning_inputs(priors, forced, rng)
        conds.append(cond)
    return _stack_conditioning(conds)


def _variant_loss(model, images, gt, cond, count, config, extractor, detach):
    """Sum over ``count`` stacked variants of the per-variant loss.

    Every loss term is a mean over equally sized per-variant blocks, so the
    sum equals ``count`` times the loss of the stacked batch.
    """
    x = Tensor(np.concatenate([images] * count))
    y = Tensor(np.concatenate([gt] * count))
    J = model.forward(x, cond, detach=detach)
    loss, parts = total_loss(J, y, config.weights, extractor)
    return loss * float(count), parts


def train_step(batch, model: GupdmModel, config: TrainConfig, state: TrainerState, t: int, extractor=None) -> StepReport:
    """One step of the alternating schedule on a batch of (degraded, clean) NHWC arrays."""
    start = time.perf_counter()
    extractor = extractor or default_extractor()
    degraded, clean = (np.asarray(b, dtype=np.float64) for b in batch)
    if degraded.shape != clean.shape or degraded.ndim != 4:
        raise ConfigError(f"batch must hold matching (N,H,W,3) stacks, got {degraded.shape} and {clean.shape}")
    if state.rng is None:
        state.rng = np.random.default_rng(config.seed)
    rng = state.rng
    priors = [physics.estimate_priors(im) for im in degraded]
    images, gt = to_nchw(degraded), to_nchw(clean)
    base = conditioning_inputs(priors, Variant("base"))
    do_atm = t % config.t0 == 0
    do_trans = t % config.t1 == 0
    updated: list[str] = []
    report = StepReport(t, (), float("nan"))
    snap = _snapshot(model, state)
    try:
        if config.strategy == "a":
            model.zero_grad()
            J = model.forward(Tensor(images), base)
            loss, parts = total_loss(J, Tensor(gt), config.weights, extractor)
            _check_finite(loss.item(), "total", t)
            loss.backward()
            _apply(model, state, "all", config.rho0)
            report.loss, report.components = loss.item(), parts
            updated = list(PARAMETER_SETS)
        elif config.strategy == "c":
            model.zero_grad()
            J = model.forward(Tensor(images), base)
            loss, parts = total_loss(J, Tensor(gt), config.weights, extractor)
            cond_a = _variant_conditioning(priors, "atm", config.m_variants, config, rng)
            la, _ = _variant_loss(model, images, gt, cond_a, config.m_variants, config, extractor, ())
            cond_t = _variant_conditioning(priors, "atm_trans", config.n_variants, config, rng)
            lt, _ = _variant_loss(model, images, gt, cond_t, config.n_variants, config, extractor, ())
            joint = loss + la + lt
            _check_finite(joint.item(), "joint", t)
            joint.backward()
            _apply(model, state, "omega", config.rho0)
            _apply(model, state, "theta", config.rho1)
            _apply(model, state, "phi", config.rho2)
            report.loss, report.components = loss.item(), parts
            report.loss_atm, report.loss_trans = la.item(), lt.item()
            updated = list(PARAMETER_SETS)
        else:
            # omega: conditioning vectors are constants
            model.zero_grad()
            J = model.forward(Tensor(images), base, detach=("theta", "phi"))
            loss, parts = total_loss(J, Tensor(gt), config.weights, extractor)
            _check_finite(loss.item(), "total", t)
            loss.backward()
            _apply(model, state, "omega", config.rho0)
            report.loss, report.components = loss.item(), parts
            updated.append("omega")
            if config.strategy == "b":
                if do_atm:
                    model.zero_grad()
                    cond = _variant_conditioning(priors, "atm_trans", config.m_variants, config, rng)
                if do_atm and (model.config.use_ads or model.tds_live):
                    with _Frozen(model, ("omega",)):
                        lh, _ = _variant_loss(model, images, gt, cond, config.m_variants, config, extractor, ())
                        _check_finite(lh.item(), "hyper", t)
                        lh.backward()
                    _apply(model, state, "hyper", config.rho1)
                    report.loss_atm = lh.item()
                    updated += ["theta", "phi"]
            else:
                cfg = model.config
                if do_atm:
                    model.zero_grad()
                    cond = _variant_conditioning(priors, "atm", config.m_variants, config, rng)
                if do_atm and cfg.use_ads:
                    with _Frozen(model, ("omega", "phi")):
                        la, _ = _variant_loss(model, images, gt, cond, config.m_variants, config, extractor, ("phi",))
                        _check_finite(la.item(), "atmosphere", t)
                        la.backward()
                    _apply(model, state, "theta", config.rho1)
                    report.loss_atm = la.item()
                    updated.append("theta")
                if do_trans:
                    model.zero_grad()
                    cond = _variant_conditioning(priors, "atm_trans", config.n_variants, config, rng)
                if do_trans and model.tds_live:
                    with _Frozen(model, ("omega", "theta")):
                        lt, _ = _variant_loss(model, images, gt, cond, config.n_variants, config, extractor, ("theta",))
                        _check_finite(lt.item(), "transmission", t)
                        lt.backward()
                    _apply(model, state, "phi", config.rho2)
                    report.loss_trans = lt.item()
                    updated.append("phi")
    except NumericError:
        _restore(model, state, snap)
        tape = T.active_tape()
        if tape is not None:
            tape.reset()
        raise
    model.zero_grad()
    state.step = t
    report.updated = tuple(s for s in PARAMETER_SETS if s in updated)
    report.wall_time = time.perf_counter() - start
    return report


def _crop_batch(degraded: np.ndarray, clean: np.ndarray, size: int, rng: np.random.Generator):
    """Random aligned crops to a common even edge of at most ``size``.

    Images smaller than ``size`` are not upscaled; the batch is cropped to its
    smallest extent instead.
    """
    h = min(size, min(d.shape[0] for d in degraded))
    w = min(size, min(d.shape[1] for d in degraded))
    h, w = h - h % 2, w - w % 2
    out_d, out_c = [], []
    for d, c in zip(degraded, clean):
        i = int(rng.integers(0, d.shape[0] - h + 1))
        j = int(rng.integers(0, d.shape[1] - w + 1))
        out_d.append(d[i : i + h, j : j + w])
        out_c.append(c[i : i + h, j : j + w])
    return np.stack(out_d), np.stack(out_c)


@dataclass
class TrainResult:
    model: GupdmModel
    state: TrainerState
    history: list[dict]
    stopped_early: bool = False


def train(dataset, model: GupdmModel, config: TrainConfig, state: TrainerState | None = None, on_epoch=None, extractor=None) -> TrainResult:
    """Run ``config.epochs`` epochs of :func:`train_step` over ``dataset``.

    ``dataset`` is a pair of sequences (degraded, clean) of (H, W, 3) arrays.
    ``on_epoch(epoch, model, state)`` is called after every epoch, e.g. to
    write a checkpoint.
    """
    degraded, clean = dataset
    if len(degraded) == 0 or len(degraded) != len(clean):
        raise ConfigError("dataset must hold a nonempty list of (degraded, clean) pairs")
    state = state or TrainerState()
    if state.rng is None:
        state.rng = np.random.default_rng(config.seed)
    data_rng = np.random.default_rng([config.seed, 1])
    history: list[dict] = []
    epoch_losses: list[float] = []
    n = len(degraded)
    t = state.step
    for epoch in range(config.epochs):
        order = data_rng.permutation(n)
        losses = []
        for s in range(0, n, config.batch_size):
            if config.max_steps is not None and t >= config.max_steps:
                break
            idx = order[s : s + config.batch_size]
            batch = _crop_batch([degraded[i] for i in idx], [clean[i] for i in idx], config.image_size, data_rng)
            t += 1
            report = train_step(batch, model, config, state, t, extractor)
            history.append(report.record())
            losses.append(report.loss)
        if on_epoch is not None:
            on_epoch(epoch, model, state)
        if not losses:
            break
        epoch_losses.append(float(np.mean(losses)))
        if _converged(epoch_losses, config.early_stop_window, config.early_stop_tol):
            return TrainResult(model, state, history, stopped_early=True)
    return TrainResult(model, state, history)


def _converged(losses: list[float], window: int, tol: float) -> bool:
    """True once the ``window``-epoch moving average improves by less than ``tol``."""
    if window < 1 or len(losses) < 2 * window:
        return False
    prev = np.mean(losses[-2 * window : -window])
    last = np.mean(losses[-window:])
    return prev - last < tol


def write_history(history: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in history:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_history(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def moving_average(values, window: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        return np.array([values.mean()]) if len(values) else values
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")
