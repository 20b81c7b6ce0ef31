"""Image codecs, checkpoints, configuration files and dataset manifests."""

from .images import load_image, save_image, save_gray, decode_image
from .checkpoint import Checkpoint
from .manifest import DatasetManifest, load_manifest, save_manifest

__all__ = ["load_image", "save_image", "save_gray", "decode_image", "Checkpoint", "DatasetManifest", "load_manifest", "save_manifest"]
