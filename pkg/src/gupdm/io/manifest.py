"""Dataset manifests: JSON listing (input, reference-or-null) pairs under a root."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from ..exceptions import ConfigError
from .images import list_images, load_image


@dataclass
class DatasetManifest:
    root: str
    pairs: list[tuple[str, str | None]] = field(default_factory=list)
    split: str = "train"

    def resolve(self, path: str | None) -> str | None:
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.join(self.root, path)

    def validate(self, require_reference: bool = False) -> None:
        if not self.pairs:
            raise ConfigError("manifest lists no images")
        for inp, ref in self.pairs:
            for p in (inp, ref):
                if p is not None and not os.path.exists(self.resolve(p)):
                    raise ConfigError(f"manifest entry does not exist: {self.resolve(p)}")
            if require_reference and ref is None:
                raise ConfigError(f"{inp} has no reference image")

    def load(self, require_reference: bool = False):
        """Return (inputs, references); references hold None where absent."""
        self.validate(require_reference)
        inputs = [load_image(self.resolve(i)) for i, _ in self.pairs]
        refs = [None if r is None else load_image(self.resolve(r)) for _, r in self.pairs]
        return inputs, refs

    def to_dict(self) -> dict:
        return {"root": self.root, "split": self.split, "pairs": [[i, r] for i, r in self.pairs]}


def load_manifest(path) -> DatasetManifest:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid manifest JSON: {exc}") from exc
    root = d.get("root", ".")
    if not os.path.isabs(root):
        root = os.path.join(os.path.dirname(os.path.abspath(path)), root)
    pairs = []
    for entry in d.get("pairs", []):
        if isinstance(entry, str):
            pairs.append((entry, None))
        elif isinstance(entry, (list, tuple)) and 1 <= len(entry) <= 2:
            pairs.append((entry[0], entry[1] if len(entry) == 2 else None))
        elif isinstance(entry, dict) and "input" in entry:
            pairs.append((entry["input"], entry.get("reference")))
        else:
            raise ConfigError(f"{path}: cannot parse manifest entry {entry!r}")
    return DatasetManifest(root, pairs, d.get("split", "train"))


def save_manifest(path, manifest: DatasetManifest) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def manifest_from_dirs(input_dir, reference_dir=None, split: str = "train") -> DatasetManifest:
    """Pair images by file name across two directories."""
    inputs = list_images(input_dir)
    pairs = []
    for p in inputs:
        name = os.path.basename(p)
        ref = None
        if reference_dir is not None:
            cand = os.path.join(reference_dir, name)
            ref = os.path.abspath(cand) if os.path.exists(cand) else None
        pairs.append((os.path.abspath(p), ref))
    return DatasetManifest(os.path.abspath(input_dir), pairs, split)
