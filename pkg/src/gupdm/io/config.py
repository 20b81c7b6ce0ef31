"""Sectioned ``key = value`` configuration files.

::

    [train]
    epochs = 200
    batch = 8
    size = 256

    [model]
    channels = 16

Every key has a default; an empty file yields the defaults.
"""

from __future__ import annotations

import configparser
import io

from ..exceptions import ConfigError
from ..network import ModelConfig
from ..trainer import TrainConfig

# file key -> (section, target, attribute, type)
KEYS = {
    "epochs": ("train", "train", "epochs", int),
    "batch": ("train", "train", "batch_size", int),
    "size": ("train", "train", "image_size", int),
    "rho0": ("train", "train", "rho0", float),
    "rho1": ("train", "train", "rho1", float),
    "rho2": ("train", "train", "rho2", float),
    "t0": ("train", "train", "t0", int),
    "t1": ("train", "train", "t1", int),
    "M": ("train", "train", "m_variants", int),
    "N": ("train", "train", "n_variants", int),
    "seed": ("train", "train", "seed", int),
    "strategy": ("train", "train", "strategy", str),
    "max_steps": ("train", "train", "max_steps", int),
    "lambda1": ("loss", "train", "lambda1", float),
    "lambda2": ("loss", "train", "lambda2", float),
    "huber_delta": ("loss", "train", "huber_delta", float),
    "K": ("model", "model", "n_kernels", int),
    "channels": ("model", "model", "channels", int),
    "code_dim": ("model", "model", "code_dim", int),
    "hyper_blocks": ("model", "model", "hyper_blocks", int),
    "hyper_channels": ("model", "model", "hyper_channels", int),
}
SECTIONS = ("train", "loss", "model")


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None)
    p.optionxform = str  # keys are case sensitive (K, M, N)
    return p


def parse(text: str) -> tuple[ModelConfig, TrainConfig]:
    p = _parser()
    try:
        p.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    model, train = {}, {}
    for section in p.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]; valid sections: {', '.join(SECTIONS)}")
        for key, raw in p.items(section):
            entry = KEYS.get(key)
            if entry is None or entry[0] != section:
                valid = sorted(k for k, v in KEYS.items() if v[0] == section)
                raise ConfigError(f"unknown key {key!r} in [{section}]; valid keys: {', '.join(valid)}")
            _, target, attr, typ = entry
            try:
                value = typ(raw)
            except ValueError as exc:
                raise ConfigError(f"{key} = {raw!r} is not a valid {typ.__name__}") from exc
            (model if target == "model" else train)[attr] = value
    try:
        return ModelConfig(**model), TrainConfig(**train)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load(path) -> tuple[ModelConfig, TrainConfig]:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def dump(model: ModelConfig, train: TrainConfig) -> str:
    p = _parser()
    for s in SECTIONS:
        p.add_section(s)
    for key, (section, target, attr, _) in KEYS.items():
        value = getattr(model if target == "model" else train, attr)
        if value is not None:
            p.set(section, key, str(value))
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()
