"""Segmentation network used as an attention-masked feature extractor.

The encoder has four 3x3 conv stages (the first with stride 2). A 1x1 head
maps the last stage to class logits, which are upsampled back to the input
size. The same network provides the features compared during fitting, the
attention masks that weight them (its own class probabilities) and the
segmentations used to calibrate per-parameter learning rates.
"""

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .artifacts import load_model, save_model
from .diffcore import Tensor
from .errors import ConfigError, ContractError, DataError, DimensionError, ValidationError
from .facemodel.params import BROW, CLASS_NAMES, EYE, INNER_MOUTH, LIP, NUM_CLASSES, SKIN

WIDTHS = (16, 32, 64, 64)
STRIDES = (2, 1, 1, 1)
KERNEL = 3


@dataclass
class SegTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    val_fraction: float = 0.1
    augment: bool = True
    seed: int = 0

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1 or not self.lr > 0:
            raise ConfigError("extractor training needs epochs >= 0, batch_size >= 1, lr > 0")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")
        return self


@dataclass
class AttentionConfig:
    """One (mask classes, beta) pair per encoder stage; ``None`` classes is the uniform mask."""

    masks: tuple = ((EYE,), (BROW,), (LIP, INNER_MOUTH), (SKIN,))
    betas: tuple = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        self.masks = tuple(_parse_mask(m) for m in self.masks)
        self.betas = tuple(float(b) for b in self.betas)

    def validate(self, layers=len(WIDTHS)):
        if len(self.masks) != layers or len(self.betas) != layers:
            raise ContractError(f"attention config needs exactly {layers} (mask, beta) entries")
        if any(not np.isfinite(b) or b < 0 for b in self.betas):
            raise ContractError("attention weights must be finite and >= 0")
        return self

    @classmethod
    def uniform(cls, beta=1.0, layers=len(WIDTHS)):
        return cls(masks=(None,) * layers, betas=(beta,) * layers)

    def to_dict(self):
        return {
            "masks": [None if m is None else [CLASS_NAMES[c] for c in m] for m in self.masks],
            "betas": list(self.betas),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(masks=tuple(d["masks"]), betas=tuple(d["betas"]))


def _parse_mask(m):
    if m is None or m == "uniform":
        return None
    if isinstance(m, (str, int, np.integer)):
        m = (m,)
    out = []
    for c in m:
        if isinstance(c, str):
            if c not in CLASS_NAMES:
                raise ValidationError(f"unknown class name {c!r}")
            c = CLASS_NAMES.index(c)
        c = int(c)
        if not 0 <= c < NUM_CLASSES:
            raise ValidationError(f"unknown class id {c}")
        out.append(c)
    if not out:
        raise ValidationError("empty mask class list")
    return tuple(out)


def to_nchw(images, dtype=np.float32):
    """Float images (H,W,3) or (N,H,W,3), or an NCHW Tensor, as an NCHW Tensor."""
    if isinstance(images, Tensor):
        if images.ndim != 4 or images.shape[1] != 3:
            raise DimensionError(f"expected an (N, 3, H, W) tensor, got {images.shape}")
        return images
    a = np.asarray(images, dtype=dtype)
    if a.ndim == 3:
        a = a[None]
    if a.ndim != 4 or a.shape[-1] != 3:
        raise DimensionError(f"expected (N, H, W, 3) images, got {a.shape}")
    return Tensor(np.ascontiguousarray(a.transpose(0, 3, 1, 2)))


class ExtractorModel:
    def __init__(self, image_size=64, seed=0, weights=None, attention=None):
        self.image_size = int(image_size)
        if self.image_size % STRIDES[0]:
            raise ConfigError("image size must be divisible by the encoder stride")
        self.attention = (attention or AttentionConfig()).validate()
        self.upsample = int(np.prod(STRIDES))
        if weights is None:
            weights = self._init_weights(seed)
        self.weights = weights

    @staticmethod
    def _init_weights(seed):
        rng = np.random.default_rng(seed)
        arrays = {}
        cin = 3
        for i, cout in enumerate(WIDTHS):
            std = np.sqrt(2.0 / (cin * KERNEL * KERNEL))
            arrays[f"conv{i + 1}.w"] = rng.normal(0, std, (cout, cin, KERNEL, KERNEL))
            arrays[f"conv{i + 1}.b"] = np.zeros(cout)
            cin = cout
        arrays["head.w"] = rng.normal(0, np.sqrt(1.0 / cin), (NUM_CLASSES, cin, 1, 1))
        arrays["head.b"] = np.zeros(NUM_CLASSES)
        return {k: Tensor(v, requires_grad=True, dtype=np.float32) for k, v in arrays.items()}

    def parameters(self):
        return list(self.weights.values())

    def freeze(self):
        for t in self.weights.values():
            t.requires_grad = False
            t.grad = None
        return self

    def _check_input(self, x):
        if x.shape[2] != self.image_size or x.shape[3] != self.image_size:
            raise DimensionError(f"extractor expects {self.image_size}x{self.image_size} input, got {x.shape[2:]}")

    def features(self, images, stages=len(WIDTHS)):
        """Post-relu feature maps of the first ``stages`` encoder stages."""
        x = to_nchw(images)
        self._check_input(x)
        h = dc.sub(x, 0.5)
        feats = []
        for i in range(stages):
            h = dc.conv2d(h, self.weights[f"conv{i + 1}.w"], self.weights[f"conv{i + 1}.b"],
                          stride=STRIDES[i], padding=KERNEL // 2)
            h = dc.relu(h)
            feats.append(h)
        return feats

    def logits(self, images, feats=None):
        """Class logits at full resolution (N, 7, H, W)."""
        feats = feats or self.features(images)
        z = dc.conv2d(feats[-1], self.weights["head.w"], self.weights["head.b"])
        return dc.upsample_nearest(z, self.upsample)

    def to_sidecar(self):
        return {
            "kind": "extractor",
            "image_size": self.image_size,
            "widths": list(WIDTHS),
            "strides": list(STRIDES),
            "kernel": KERNEL,
            "num_classes": NUM_CLASSES,
            "attention": self.attention.to_dict(),
        }

    def save(self, path, extra=None):
        meta = self.to_sidecar()
        meta.update(extra or {})
        save_model(path, self.weights, meta)

    @classmethod
    def load(cls, path):
        weights, meta = load_model(path)
        if meta.get("kind") != "extractor":
            raise DataError(f"{path} is not an extractor model")
        if tuple(meta["widths"]) != WIDTHS or tuple(meta["strides"]) != STRIDES:
            raise ConfigError("extractor architecture in sidecar does not match this build")
        return cls(meta["image_size"], weights=weights, attention=AttentionConfig.from_dict(meta["attention"])), meta


# -- segmentation ---------------------------------------------------------

def segment(model, images):
    """Argmax class map (N, H, W) and class probabilities (N, 7, H, W)."""
    with dc.no_grad():
        probs = dc.softmax(model.logits(images), axis=1).data
    return probs.argmax(axis=1).astype(np.uint8), probs


def pixel_accuracy(pred, target):
    return float(np.mean(np.asarray(pred) == np.asarray(target)))


def iou(pred, target, cls):
    p = np.asarray(pred) == cls
    t = np.asarray(target) == cls
    union = np.count_nonzero(p | t)
    return float(np.count_nonzero(p & t) / union) if union else 1.0


def _blur(images):
    # separable [1, 2, 1] / 4 filter with edge replication, NHWC
    k = np.array([0.25, 0.5, 0.25], dtype=images.dtype)
    p = np.pad(images, ((0, 0), (1, 1), (1, 1), (0, 0)), mode="edge")
    p = k[0] * p[:, :-2] + k[1] * p[:, 1:-1] + k[2] * p[:, 2:]
    return k[0] * p[:, :, :-2] + k[1] * p[:, :, 1:-1] + k[2] * p[:, :, 2:]


def augment(images, rng):
    """Photometric jitter plus random blur; the label maps are unaffected."""
    n = len(images)
    out = images.copy()
    blur = rng.uniform(size=n) < 0.5
    if blur.any():
        out[blur] = _blur(out[blur])
    gain = rng.uniform(0.85, 1.15, (n, 1, 1, 3)).astype(images.dtype)
    shift = rng.uniform(-0.06, 0.06, (n, 1, 1, 1)).astype(images.dtype)
    noise = rng.normal(0, 0.02, images.shape).astype(images.dtype)
    return np.clip(out * gain + shift + noise, 0, 1)


def split_indices(n, val_fraction, seed):
    """Seeded shuffle into (train, validation) index arrays."""
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * val_fraction))
    if n_val == 0 and val_fraction > 0 and n > 1:
        n_val = 1
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def train_seg(model, images, segs, cfg=None, log=None):
    """Fit the extractor with pixel-wise cross-entropy and Adam.

    Returns a history dict with per-epoch mean train loss and held-out pixel
    accuracy.
    """
    cfg = (cfg or SegTrainConfig()).validate()
    images = np.asarray(images, dtype=np.float32)
    segs = np.asarray(segs)
    if len(images) == 0:
        raise DataError("empty training set")
    if images.shape[:3] != segs.shape:
        raise DimensionError(f"images {images.shape} and maps {segs.shape} differ in size")
    train_idx, val_idx = split_indices(len(images), cfg.val_fraction, cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    params = model.parameters()
    for p in params:
        p.requires_grad = True
    opt = dc.Adam(params, lr=cfg.lr)
    history = {"train_loss": [], "val_accuracy": []}
    for epoch in range(cfg.epochs):
        order = rng.permutation(train_idx)
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            batch = augment(images[idx], rng) if cfg.augment else images[idx]
            opt.zero_grad()
            loss = dc.cross_entropy(model.logits(batch), segs[idx])
            loss.backward()
            opt.step()
            losses.append(loss.item())
        history["train_loss"].append(float(np.mean(losses)))
        history["val_accuracy"].append(evaluate(model, images[val_idx], segs[val_idx])["pixel_accuracy"]
                                       if len(val_idx) else float("nan"))
        if log:
            log(f"extractor epoch {epoch + 1}/{cfg.epochs} loss {history['train_loss'][-1]:.4f} "
                f"val acc {history['val_accuracy'][-1]:.4f}")
    return history


def evaluate(model, images, segs, batch_size=64):
    preds = np.concatenate([segment(model, images[i:i + batch_size])[0] for i in range(0, len(images), batch_size)])
    report = {"pixel_accuracy": pixel_accuracy(preds, segs)}
    report["iou"] = {CLASS_NAMES[c]: iou(preds, segs, c) for c in range(NUM_CLASSES)}
    return report


# -- attention-masked features ---------------------------------------------

@dataclass
class FeatureBundle:
    """Masked feature maps ``beta_i * A_i * C_i`` for each encoder stage."""

    maps: list
    layers: list
    masks: list = field(default_factory=list)

    def __len__(self):
        return len(self.maps)


def attention_masks(probs, masks, sizes):
    """Per-stage masks: summed class probabilities area-averaged to each stage's size."""
    n, _, h, _ = probs.shape
    out = []
    for classes, size in zip(masks, sizes):
        if classes is None:
            out.append(np.ones((n, 1, size, size), dtype=probs.dtype))
            continue
        m = probs[:, list(classes)].sum(axis=1, keepdims=True)
        factor = h // size
        if factor > 1:
            m = m.reshape(n, 1, size, factor, size, factor).mean(axis=(3, 5))
        out.append(np.minimum(m, 1.0).astype(probs.dtype))
    return out


def extract(model, images, attention=None):
    """Attention-masked features of ``images``; differentiable w.r.t. the images.

    Each side computes its masks from its own class probabilities. The masks
    are treated as constants in the backward pass.
    """
    attn = (attention or model.attention).validate(len(WIDTHS))
    feats = model.features(images)
    with dc.no_grad():
        probs = dc.softmax(model.logits(None, feats=feats), axis=1).data
    masks = attention_masks(probs, attn.masks, [f.shape[2] for f in feats])
    maps = []
    for f, m, beta in zip(feats, masks, attn.betas):
        c = f.shape[1]
        weight = Tensor(np.broadcast_to(m * np.asarray(beta, dtype=m.dtype), (m.shape[0], c) + m.shape[2:]).copy())
        maps.append(dc.mul(f, weight))
    return FeatureBundle(maps, list(range(1, len(feats) + 1)), masks)


def feature_distance(a, b, per_sample=False):
    """Sum over stages of the mean absolute difference of the masked maps."""
    if len(a) != len(b):
        raise DimensionError("bundles have different layer counts")
    total = None
    for x, y in zip(a.maps, b.maps):
        if x.shape != y.shape:
            raise DimensionError(f"layer shapes differ: {x.shape} vs {y.shape}")
        d = dc.abs(dc.sub(x, y))
        if per_sample:
            term = dc.mul(dc.reshape(dc.sum(d, axis=(1, 2, 3)), (d.shape[0],)), 1.0 / (d.size // d.shape[0]))
        else:
            term = dc.mean(d)
        total = term if total is None else dc.add(total, term)
    return total


__all__ = [
    "AttentionConfig", "ExtractorModel", "FeatureBundle", "SegTrainConfig", "attention_masks",
    "augment", "evaluate", "extract", "feature_distance", "iou", "pixel_accuracy", "segment",
    "split_indices", "to_nchw", "train_seg",
]
