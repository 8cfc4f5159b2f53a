"""On-disk dataset layout.

``NNNNNN.png`` (RGB), ``NNNNNN.seg.png`` (8-bit class ids), ``NNNNNN.json``
(parameters and landmarks), plus a ``dataset.json`` manifest.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from ..errors import DataError
from .params import FaceDims, FaceParams, sample_params
from .render import render

FORMAT_VERSION = 1


def to_uint8(image):
    return np.round(np.clip(image, 0, 1) * 255).astype(np.uint8)


def save_png(path, image):
    image = np.asarray(image)
    if image.dtype != np.uint8:
        image = to_uint8(image)
    PILImage.fromarray(image).save(path, format="PNG", optimize=False)


def load_png(path):
    """Float RGB image in [0, 1]."""
    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0


def load_seg(path):
    with PILImage.open(path) as im:
        return np.asarray(im, dtype=np.uint8).copy()


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def sample_seed(seed, index):
    """Per-sample seed; independent of generation order."""
    return np.random.SeedSequence([seed, index])


def _write_sample(out, i, params, image, seg, lms):
    stem = out / f"{i:06d}"
    save_png(stem.with_suffix(".png"), image)
    save_png(out / f"{i:06d}.seg.png", seg)
    record = params.to_dict()
    record["landmarks"] = np.asarray(lms).tolist()
    record["format_version"] = FORMAT_VERSION
    write_json(stem.with_suffix(".json"), record)


def _manifest(count, size, dims, **extra):
    return {"format_version": FORMAT_VERSION, "count": count, "image_size": size, "dims": dims.to_dict(), **extra}


def generate(out_dir, count, seed=0, neutral=False, plausible=False, dims=FaceDims(), size=64):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        params = sample_params(sample_seed(seed, i), neutral_only=neutral, plausible=plausible, dims=dims)
        _write_sample(out, i, params, *render(params, size))
    manifest = _manifest(count, size, dims, seed=seed, neutral=neutral, plausible=plausible)
    write_json(out / "dataset.json", manifest)
    return manifest


def write_dataset(out_dir, data, **extra):
    """Write an in-memory :class:`Dataset` in the on-disk layout."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(len(data)):
        _write_sample(out, i, data.face_params(i), data.images[i], data.segs[i], data.landmarks[i])
    manifest = _manifest(len(data), data.size, data.dims, **extra)
    write_json(out / "dataset.json", manifest)
    return manifest


@dataclass
class Dataset:
    """In-memory dataset: float images, class maps, parameter vectors and landmarks."""

    images: np.ndarray      # (N, H, W, 3) float32
    segs: np.ndarray        # (N, H, W) uint8
    params: np.ndarray      # (N, d) float64
    landmarks: np.ndarray   # (N, 5, 2)
    dims: FaceDims
    size: int

    def __len__(self):
        return len(self.images)

    def face_params(self, i):
        return FaceParams.from_vector(self.params[i], self.dims)

    def subset(self, idx):
        idx = np.asarray(idx)
        return Dataset(self.images[idx], self.segs[idx], self.params[idx], self.landmarks[idx], self.dims, self.size)


def synthesize(count, seed=0, neutral=False, plausible=False, dims=FaceDims(), size=64):
    """Same samples as :func:`generate` (before 8-bit quantization), kept in memory."""
    images = np.empty((count, size, size, 3), dtype=np.float32)
    segs = np.empty((count, size, size), dtype=np.uint8)
    params = np.empty((count, dims.total))
    lms = np.empty((count, 5, 2))
    for i in range(count):
        p = sample_params(sample_seed(seed, i), neutral_only=neutral, plausible=plausible, dims=dims)
        images[i], segs[i], lms[i] = render(p, size)
        params[i] = p.to_vector()
    return Dataset(images, segs, params, lms, dims, size)


def load(data_dir):
    d = Path(data_dir)
    manifest_path = d / "dataset.json"
    if not manifest_path.exists():
        raise DataError(f"no dataset.json in {d}")
    manifest = read_json(manifest_path)
    dims = FaceDims.from_dict(manifest["dims"])
    size = int(manifest["image_size"])
    n = int(manifest["count"])
    images = np.empty((n, size, size, 3), dtype=np.float32)
    segs = np.empty((n, size, size), dtype=np.uint8)
    params = np.empty((n, dims.total))
    lms = np.empty((n, 5, 2))
    for i in range(n):
        stem = d / f"{i:06d}"
        try:
            images[i] = load_png(stem.with_suffix(".png"))
            segs[i] = load_seg(d / f"{i:06d}.seg.png")
        except (OSError, ValueError) as exc:
            raise DataError(f"bad sample {stem}: {exc}") from exc
        rec = read_json(stem.with_suffix(".json"))
        params[i] = FaceParams.from_dict(rec).to_vector()
        lms[i] = rec["landmarks"]
    return Dataset(images, segs, params, lms, dims, size), manifest
