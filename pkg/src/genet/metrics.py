"""Evaluation metrics: ICC(3,1), MAE, sliding-window stability, similarity matrices."""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, UndefinedMetricError

FORMAT_VERSION = 1


def _pair(gt, pred, min_len):
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    if gt.shape != pred.shape:
        raise DimensionError(f"length mismatch {gt.size} vs {pred.size}")
    if gt.size < min_len:
        raise DimensionError(f"need at least {min_len} values")
    return gt, pred


def icc31(gt, pred):
    """ICC(3,1): two-way mixed, consistency, single rater; raters are ``gt`` and ``pred``."""
    gt, pred = _pair(gt, pred, 2)
    x = np.stack([gt, pred], axis=1)
    n, k = x.shape
    grand = x.mean()
    ss_rows = k * np.sum((x.mean(axis=1) - grand) ** 2)
    ss_cols = n * np.sum((x.mean(axis=0) - grand) ** 2)
    ss_err = np.sum((x - grand) ** 2) - ss_rows - ss_cols
    bms = ss_rows / (n - 1)
    ems = max(ss_err, 0.0) / ((n - 1) * (k - 1))
    denom = bms + (k - 1) * ems
    scale = max(np.sum((x - grand) ** 2), 1e-300)
    if ss_rows <= 1e-12 * scale or denom <= 0:
        raise UndefinedMetricError("ICC is undefined without between-target variance")
    return float((bms - ems) / denom)


def mae(gt, pred):
    gt, pred = _pair(gt, pred, 1)
    return float(np.mean(np.abs(gt - pred)))


def stability_std(sequence, window):
    """Per-AU mean, over all sliding windows, of the within-window sample std.

    ``sequence`` is (frames, AUs); a 1-D sequence is treated as a single AU.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[:, None]
    if window < 2:
        raise DimensionError("window must be >= 2")
    if seq.shape[0] < window:
        raise DimensionError(f"sequence of {seq.shape[0]} frames is shorter than the window {window}")
    windows = sliding_window_view(seq, window, axis=0)  # (T - w + 1, AUs, w)
    # shifting each window by its first value keeps constant windows at exactly 0
    return (windows - windows[..., :1]).std(axis=2, ddof=1).mean(axis=0)


def per_au(gt, pred):
    """Per-column ICC and MAE of (samples, AUs) arrays. Undefined ICCs are NaN."""
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape or gt.ndim != 2:
        raise DimensionError(f"expected matching (samples, AUs) arrays, got {gt.shape} and {pred.shape}")
    iccs, maes = [], []
    for j in range(gt.shape[1]):
        try:
            iccs.append(icc31(gt[:, j], pred[:, j]))
        except UndefinedMetricError:
            iccs.append(float("nan"))
        maes.append(mae(gt[:, j], pred[:, j]))
    return np.array(iccs), np.array(maes)


def normalize_matrix(mat):
    mat = np.asarray(mat, dtype=np.float64)
    lo, hi = mat.min(), mat.max()
    if hi <= lo:
        raise UndefinedMetricError("cannot min-max normalize a constant matrix")
    out = (mat - lo) / (hi - lo)
    out[mat == lo] = 0.0
    out[mat == hi] = 1.0
    return out


def diagonal_minima(mat):
    """Number of rows whose smallest entry is on the diagonal (ties count)."""
    mat = np.asarray(mat)
    return int(np.count_nonzero(np.diag(mat) <= mat.min(axis=1)))


def distance_matrix(real, rendered, distance):
    """``L[i, j] = distance(real[i], rendered[j])`` for precomputed items."""
    n = len(real)
    if n != len(rendered):
        raise DimensionError("real and rendered lists differ in length")
    if n < 2:
        raise DimensionError("a similarity matrix needs at least 2 items")
    return np.array([[distance(real[i], rendered[j]) for j in range(n)] for i in range(n)])


def similarity_matrix(real_images, rendered_images, ext, attention=None):
    """Feature-distance matrix between two image lists.

    Returns ``(raw, normalized, diagonal_minimum_count)``.
    """
    from . import diffcore as dc
    from .extractor import extract, feature_distance

    if len(real_images) != len(rendered_images):
        raise DimensionError("real and rendered lists differ in length")
    if len(real_images) < 2:
        raise DimensionError("a similarity matrix needs at least 2 items")
    with dc.no_grad():
        a = extract(ext, np.asarray(real_images), attention)
        b = extract(ext, np.asarray(rendered_images), attention)
    n = len(real_images)
    raw = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            raw[i, j] = sum(float(np.mean(np.abs(x.data[i] - y.data[j]))) for x, y in zip(a.maps, b.maps))
    return raw, normalize_matrix(raw), diagonal_minima(raw)


def pixel_similarity_matrix(real_images, rendered_images):
    """Raw-pixel mean absolute difference matrix; same return layout as :func:`similarity_matrix`."""
    real = np.asarray(real_images, dtype=np.float64)
    rend = np.asarray(rendered_images, dtype=np.float64)
    raw = distance_matrix(list(real), list(rend), lambda x, y: float(np.mean(np.abs(x - y))))
    return raw, normalize_matrix(raw), diagonal_minima(raw)


@dataclass
class MetricReport:
    au_names: list = field(default_factory=list)
    icc: list = field(default_factory=list)
    mae: list = field(default_factory=list)
    icc_avg: float = float("nan")
    mae_avg: float = float("nan")
    stability: dict = field(default_factory=dict)  # window -> per-AU std
    similarity: list = None
    similarity_raw: list = None
    diagonal_minima: int = None

    @classmethod
    def from_predictions(cls, gt, pred, au_names=None):
        iccs, maes = per_au(gt, pred)
        names = list(au_names) if au_names is not None else [f"au{j}" for j in range(len(iccs))]
        return cls(names, iccs.tolist(), maes.tolist(), float(np.nanmean(iccs)) if np.isfinite(iccs).any()
                   else float("nan"), float(maes.mean()))

    def to_dict(self):
        d = asdict(self)
        d["stability"] = {str(k): list(map(float, v)) for k, v in self.stability.items()}
        d["format_version"] = FORMAT_VERSION
        return d

    def save(self, path):
        Path(path).write_text(json.dumps(_json_safe(self.to_dict()), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("format_version", None)
        d["stability"] = {int(k): v for k, v in d.get("stability", {}).items()}
        for k in ("icc", "mae"):
            d[k] = [float("nan") if v is None else v for v in d.get(k, [])]
        for k in ("icc_avg", "mae_avg"):
            if d.get(k) is None:
                d[k] = float("nan")
        return cls(**d)


def _json_safe(obj):
    # NaN is not valid JSON; store it as null
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def save_heatmap(path, normalized, cell=16):
    """Grayscale PNG of a [0, 1] matrix, each entry drawn as a ``cell`` x ``cell`` block."""
    from PIL import Image

    m = np.clip(np.asarray(normalized, dtype=np.float64), 0, 1)
    img = np.round(m * 255).astype(np.uint8)
    img = np.repeat(np.repeat(img, cell, axis=0), cell, axis=1)
    Image.fromarray(img, mode="L").save(path, format="PNG")


__all__ = [
    "MetricReport", "diagonal_minima", "distance_matrix", "icc31", "mae", "normalize_matrix",
    "per_au", "pixel_similarity_matrix", "save_heatmap", "similarity_matrix", "stability_std",
]
