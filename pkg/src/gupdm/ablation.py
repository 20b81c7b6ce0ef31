"""Named ablation switches mapped onto model and training configurations."""

from __future__ import annotations

from dataclasses import replace

from .exceptions import ConfigError
from .network import ModelConfig
from .trainer import TrainConfig

SWITCHES = (
    "full",
    "no-ads",
    "no-tds",
    "no-ga",
    "no-gt",
    "no-tgfe",
    "no-3h",
    "no-hmh",
    "strategy-a",
    "strategy-b",
    "strategy-c",
)


def apply_switch(switch: str, model_cfg: ModelConfig | None = None, train_cfg: TrainConfig | None = None):
    """Return (model_cfg, train_cfg) copies with ``switch`` applied.

    ``no-3h`` / ``no-hmh`` replace all four stage modules (both 3H slots become
    HMH, or both HMH slots become 3H).
    """
    m = replace(model_cfg or ModelConfig())
    t = replace(train_cfg or TrainConfig())
    if switch == "full":
        pass
    elif switch == "no-ads":
        m.use_ads = False
    elif switch == "no-tds":
        m.use_tds = False
    elif switch == "no-ga":
        t.force_lambda_one = True
    elif switch == "no-gt":
        t.force_gamma_one = True
    elif switch == "no-tgfe":
        m.use_tgfe = False
    elif switch == "no-3h":
        m.wide_modules, m.narrow_modules = ("hmh", "hmh"), ("hmh", "hmh")
    elif switch == "no-hmh":
        m.wide_modules, m.narrow_modules = ("3h", "3h"), ("3h", "3h")
    elif switch.startswith("strategy-") and switch[-1] in "abc":
        t.strategy = switch[-1]
    else:
        raise ConfigError(f"unknown ablation switch {switch!r}; choose from {', '.join(SWITCHES)}")
    return m, t
