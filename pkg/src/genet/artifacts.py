"""Model files: GEW1 weights next to a JSON sidecar."""

import json
from pathlib import Path

from .diffcore import Tensor, load_weights, save_weights
from .errors import DataError

FORMAT_VERSION = 1


def sidecar_path(weights_path):
    return Path(weights_path).with_suffix(".json")


def save_model(weights_path, tensors, sidecar):
    """Write ``tensors`` (ordered name -> Tensor) and ``sidecar`` (a JSON-able dict)."""
    weights_path = Path(weights_path)
    weights_path.parent.mkdir(parents=True, exist_ok=True)
    save_weights(weights_path, {k: t.data for k, t in tensors.items()})
    meta = dict(sidecar)
    meta["format_version"] = FORMAT_VERSION
    sidecar_path(weights_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_model(weights_path):
    """Return (ordered name -> Tensor, sidecar dict)."""
    weights_path = Path(weights_path)
    meta_path = sidecar_path(weights_path)
    if not weights_path.exists() or not meta_path.exists():
        raise DataError(f"missing model files for {weights_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"bad sidecar {meta_path}: {exc}") from exc
    arrays = load_weights(weights_path)
    return {k: Tensor(v) for k, v in arrays.items()}, meta
