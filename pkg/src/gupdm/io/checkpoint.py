"""Binary checkpoint format.

Layout (all integers little-endian)::

    4 bytes   magic b"GUPD"
    u32       format version
    u32       header length L
    L bytes   UTF-8 JSON header, keys sorted
    u32       record count R
    R records, each:
        u16       name length K
        K bytes   UTF-8 name
        u8        ndim D
        D x u32   dimensions
        f32 * prod(dims)  data, C order

Records hold model parameters (``theta.*``, ``phi.*``, ``omega.*``) and Adam
moments (``adam.<group>.m.<index>`` / ``adam.<group>.v.<index>``).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DecodeError
from ..network import GupdmModel, ModelConfig
from ..optim import AdamState

MAGIC = b"GUPD"
VERSION = 1


@dataclass
class Checkpoint:
    model_config: dict
    tensors: dict[str, np.ndarray]
    step: int = 0
    seed: int = 0
    adam_steps: dict[str, int] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def header(self) -> dict:
        return {
            "model_config": self.model_config,
            "step": self.step,
            "seed": self.seed,
            "adam_steps": self.adam_steps,
            "extra": self.extra,
        }


def encode(ckpt: Checkpoint) -> bytes:
    header = json.dumps(ckpt.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(header)), header, struct.pack("<I", len(ckpt.tensors))]
    for name, arr in ckpt.tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise DecodeError("not a checkpoint file (bad magic)")
    version, hlen = r.unpack("<II")
    if version != VERSION:
        raise DecodeError(f"checkpoint format version {version} is not supported (expected {VERSION})")
    try:
        header = json.loads(r.take(hlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DecodeError(f"corrupt checkpoint header: {exc}") from exc
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (klen,) = r.unpack("<H")
        name = r.take(klen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        n = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).copy()
    if r.pos != len(data):
        raise DecodeError("trailing bytes after checkpoint records")
    return Checkpoint(
        header["model_config"], tensors, header.get("step", 0), header.get("seed", 0),
        header.get("adam_steps", {}), header.get("extra", {}),
    )


def save(path, ckpt: Checkpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(ckpt))


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode(fh.read())


def from_model(model: GupdmModel, step: int = 0, adam: dict[str, AdamState] | None = None, extra: dict | None = None) -> Checkpoint:
    tensors = dict(model.state_dict())
    steps = {}
    for group, st in sorted((adam or {}).items()):
        steps[group] = st.step
        for i, (m, v) in enumerate(zip(st.m, st.v)):
            tensors[f"adam.{group}.m.{i}"] = m
            tensors[f"adam.{group}.v.{i}"] = v
    return Checkpoint(model.config.to_dict(), tensors, step, model.config.seed, steps, extra or {})


def to_model(ckpt: Checkpoint) -> GupdmModel:
    model = GupdmModel(ModelConfig.from_dict(ckpt.model_config))
    params = {k: v.astype(np.float64) for k, v in ckpt.tensors.items() if not k.startswith("adam.")}
    missing = {n for n, _ in model.named_parameters()} - set(params)
    if missing:
        raise DecodeError(f"checkpoint lacks {len(missing)} parameters, e.g. {sorted(missing)[0]}")
    model.load_state_dict(params)
    return model


def adam_states(ckpt: Checkpoint) -> dict[str, AdamState]:
    out = {}
    for group, step in ckpt.adam_steps.items():
        m, v, i = [], [], 0
        while f"adam.{group}.m.{i}" in ckpt.tensors:
            m.append(ckpt.tensors[f"adam.{group}.m.{i}"].astype(np.float64))
            v.append(ckpt.tensors[f"adam.{group}.v.{i}"].astype(np.float64))
            i += 1
        out[group] = AdamState(step, m, v)
    return out
