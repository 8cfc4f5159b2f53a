"""Neural renderer: parameter vector -> image, built from transposed convolutions.

The input vector is treated as a 1x1 feature map. Every layer doubles the
spatial size (kernel 4, stride 2, padding 1); hidden layers use instance
normalization and relu, the output layer a bias and a sigmoid.
"""

from contextlib import contextmanager
from dataclasses import asdict, dataclass

import numpy as np

from . import diffcore as dc
from .artifacts import load_model, save_model
from .diffcore import Tensor
from .errors import ConfigError, ContractError, DataError, DimensionError
from .extractor import split_indices, to_nchw

DEFAULT_WIDTHS = (256, 128, 64, 32, 16, 3)
KERNEL, STRIDE, PADDING = 4, 2, 1


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay: float = 0.99  # multiplied in every `decay_every` epochs
    decay_every: int = 3
    momentum: float = 0.0
    optimizer: str = "adam"  # or "sgd" (with optional momentum)
    init_std: float = 0.02
    perceptual_weight: float = 1.0
    ema: float = 0.995  # per-step weight averaging; 0 keeps the raw weights
    val_fraction: float = 0.1
    seed: int = 0

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1 or self.decay_every < 1:
            raise ConfigError("generator training needs epochs >= 0, batch_size >= 1, decay_every >= 1")
        if not (self.lr > 0 and 0 < self.lr_decay <= 1 and self.init_std > 0):
            raise ConfigError("lr, lr_decay and init_std must be positive (lr_decay <= 1)")
        if self.perceptual_weight < 0 or not 0 <= self.momentum < 1:
            raise ConfigError("perceptual_weight must be >= 0 and momentum in [0, 1)")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if not 0 <= self.ema < 1:
            raise ConfigError("ema must lie in [0, 1)")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError("optimizer must be 'sgd' or 'adam'")
        return self

    def lr_at(self, epoch):
        """Learning rate used during (0-based) ``epoch``."""
        return self.lr * self.lr_decay ** (epoch // self.decay_every)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def layer_specs(input_dim, widths=DEFAULT_WIDTHS):
    specs = []
    cin = input_dim
    for i, cout in enumerate(widths):
        last = i == len(widths) - 1
        specs.append({
            "in": cin, "out": cout, "kernel": KERNEL, "stride": STRIDE, "padding": PADDING,
            "norm": not last, "activation": "sigmoid" if last else "relu",
        })
        cin = cout
    return specs


class GeneratorModel:
    def __init__(self, input_dim, widths=DEFAULT_WIDTHS, init_std=0.02, seed=0, weights=None):
        if widths[-1] != 3:
            raise ConfigError("the last generator layer must output 3 channels")
        self.input_dim = int(input_dim)
        self.widths = tuple(int(w) for w in widths)
        self.specs = layer_specs(self.input_dim, self.widths)
        self.image_size = 2 ** len(self.widths)
        self.weights = weights if weights is not None else self._init_weights(init_std, seed)

    def _init_weights(self, std, seed):
        rng = np.random.default_rng(seed)
        arrays = {}
        for i, s in enumerate(self.specs):
            arrays[f"deconv{i + 1}.w"] = rng.normal(0, std, (s["in"], s["out"], KERNEL, KERNEL))
            if s["norm"]:
                arrays[f"norm{i + 1}.w"] = np.ones(s["out"])
                arrays[f"norm{i + 1}.b"] = np.zeros(s["out"])
            else:
                arrays[f"deconv{i + 1}.b"] = np.zeros(s["out"])
        return {k: Tensor(v, requires_grad=True, dtype=np.float32) for k, v in arrays.items()}

    def parameters(self):
        return list(self.weights.values())

    def conv_weights(self):
        return [self.weights[f"deconv{i + 1}.w"] for i in range(len(self.specs))]

    def freeze(self):
        for t in self.weights.values():
            t.requires_grad = False
            t.grad = None
        return self

    def forward(self, params):
        """Images (N, 3, H, W) in [0, 1] for parameter vectors (N, d) or (d,).

        ``params`` may be a Tensor (for gradients w.r.t. the parameters) or an array.
        """
        p = params if isinstance(params, Tensor) else Tensor(np.asarray(params, dtype=np.float32))
        if p.ndim == 1:
            p = dc.reshape(p, (1, p.shape[0]))
        if p.ndim != 2 or p.shape[1] != self.input_dim:
            raise ContractError(f"generator expects {self.input_dim}-dim parameters, got shape {p.shape}")
        h = dc.reshape(p, (p.shape[0], self.input_dim, 1, 1))
        for i, s in enumerate(self.specs):
            if s["norm"]:
                h = dc.conv_transpose2d(h, self.weights[f"deconv{i + 1}.w"], stride=STRIDE, padding=PADDING)
                h = dc.instance_norm(h, weight=self.weights[f"norm{i + 1}.w"], bias=self.weights[f"norm{i + 1}.b"])
                h = dc.relu(h)
            else:
                h = dc.conv_transpose2d(h, self.weights[f"deconv{i + 1}.w"], self.weights[f"deconv{i + 1}.b"],
                                        stride=STRIDE, padding=PADDING)
                h = dc.sigmoid(h)
        return h

    __call__ = forward

    def render(self, params):
        """Numpy images (N, H, W, 3) without recording gradients."""
        with dc.no_grad():
            out = self.forward(params).data
        return out.transpose(0, 2, 3, 1)

    def to_sidecar(self):
        return {"kind": "generator", "input_dim": self.input_dim, "image_size": self.image_size,
                "layers": self.specs}

    def save(self, path, extra=None):
        meta = self.to_sidecar()
        meta.update(extra or {})
        save_model(path, self.weights, meta)

    @classmethod
    def load(cls, path):
        weights, meta = load_model(path)
        if meta.get("kind") != "generator":
            raise DataError(f"{path} is not a generator model")
        widths = tuple(s["out"] for s in meta["layers"])
        return cls(meta["input_dim"], widths=widths, weights=weights), meta


# -- losses -----------------------------------------------------------------

def content_loss(pred, target):
    """Mean absolute error over all pixels and channels."""
    pred, target = to_nchw(pred), to_nchw(target)
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {target.shape}")
    return dc.mean(dc.abs(dc.sub(pred, target)))


class PerceptualNet:
    """Frozen leading stages of a trained extractor, used as a fixed feature map."""

    def __init__(self, extractor, stages=3):
        self.extractor = extractor.freeze()
        self.stages = stages

    def __call__(self, images):
        return self.extractor.features(images, stages=self.stages)


def _rms_per_sample(diff):
    n = diff.size // diff.shape[0]
    return dc.mul(dc.l2(dc.reshape(diff, (diff.shape[0], n)), axis=1), 1.0 / np.sqrt(n))


def perceptual_loss(pred, target, featnet, target_feats=None):
    """Sum over feature layers of the per-layer RMS feature difference, averaged over the batch.

    The RMS is the L2 distance divided by the square root of the layer's
    feature count, so layers of different sizes contribute comparably.
    """
    pred, target = to_nchw(pred), to_nchw(target)
    if pred.shape != target.shape:
        raise DimensionError(f"shape mismatch {pred.shape} vs {target.shape}")
    if any(t.requires_grad for t in featnet.extractor.parameters()):
        raise ContractError("the perceptual feature network must be frozen")
    fp = featnet(pred)
    if target_feats is None:
        with dc.no_grad():
            target_feats = featnet(target)
    total = None
    for a, b in zip(fp, target_feats):
        term = dc.mean(_rms_per_sample(dc.sub(a, b)))
        total = term if total is None else dc.add(total, term)
    return total


def generator_loss(pred, target, featnet, weight, target_feats=None):
    app = content_loss(pred, target)
    if featnet is None or weight == 0:
        return app, app, None
    per = perceptual_loss(pred, target, featnet, target_feats)
    return dc.add(app, dc.mul(per, weight)), app, per


# -- training -----------------------------------------------------------------

def _to_nchw_array(images):
    return np.ascontiguousarray(np.asarray(images, dtype=np.float32).transpose(0, 3, 1, 2))


def target_features(featnet, images, batch_size=128):
    """Feature maps of fixed target images, stored as float16 to bound memory."""
    chunks = []
    with dc.no_grad():
        for s in range(0, len(images), batch_size):
            feats = featnet(Tensor(_to_nchw_array(images[s:s + batch_size])))
            chunks.append([f.data.astype(np.float16) for f in feats])
    return [np.concatenate(layer) for layer in zip(*chunks)]


def _take(cache, idx):
    return None if cache is None else [Tensor(layer[idx].astype(np.float32)) for layer in cache]


def evaluate(model, params, images, featnet=None, batch_size=128, cache=None):
    """Mean content (and perceptual) loss over a set, without gradients."""
    app = per = 0.0
    n = len(params)
    with dc.no_grad():
        for s in range(0, n, batch_size):
            pred = model.forward(params[s:s + batch_size])
            tgt = Tensor(_to_nchw_array(images[s:s + batch_size]))
            k = len(pred.data)
            app += content_loss(pred, tgt).item() * k
            if featnet is not None:
                per += perceptual_loss(pred, tgt, featnet, _take(cache, slice(s, s + k))).item() * k
    return app / n, (per / n if featnet is not None else None)


def train(model, params, images, cfg=None, featnet=None, log=None):
    """Mini-batch training on content + weighted perceptual loss.

    ``params`` is (N, d), ``images`` (N, H, W, 3). Returns a history dict with
    one entry per epoch for the training loss and the held-out content and
    perceptual losses.
    """
    cfg = (cfg or TrainConfig()).validate()
    params = np.asarray(params, dtype=np.float32)
    images = np.asarray(images, dtype=np.float32)
    if len(params) == 0:
        raise DataError("empty training set")
    if len(params) != len(images):
        raise DimensionError("parameter and image counts differ")
    if images.shape[1] != model.image_size:
        raise DimensionError(f"generator renders {model.image_size}px images, data is {images.shape[1]}px")
    if cfg.perceptual_weight > 0 and featnet is None:
        raise ConfigError("a perceptual feature network is required when perceptual_weight > 0")
    use_per = featnet if cfg.perceptual_weight > 0 else None
    train_idx, val_idx = split_indices(len(params), cfg.val_fraction, cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    for p in model.parameters():
        p.requires_grad = True
    if cfg.optimizer == "adam":
        opt = dc.Adam(model.parameters(), lr=cfg.lr)
    else:
        opt = dc.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum)
    # target features never change, so they are computed once
    cache = target_features(use_per, images) if use_per is not None else None
    val_cache = None if cache is None else [layer[val_idx] for layer in cache]
    history = {"lr": [], "train_loss": [], "train_app": [], "val_app": [], "val_per": []}
    weights = model.parameters()
    averaged = [w.data.copy() for w in weights] if cfg.ema > 0 else None
    step = 0
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr_at(epoch)
        order = rng.permutation(train_idx)
        tot = app_tot = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = np.sort(order[start:start + cfg.batch_size])
            opt.zero_grad()
            pred = model.forward(params[idx])
            loss, app, _ = generator_loss(pred, Tensor(_to_nchw_array(images[idx])), use_per, cfg.perceptual_weight,
                                         _take(cache, idx))
            loss.backward()
            opt.step()
            step += 1
            if averaged is not None:
                # short warm-up so the average is not dominated by the initial weights
                d = min(cfg.ema, (1 + step) / (10 + step))
                for a, w in zip(averaged, weights):
                    a *= d
                    a += (1 - d) * w.data
            tot += loss.item() * len(idx)
            app_tot += app.item() * len(idx)
        history["lr"].append(opt.lr)
        history["train_loss"].append(tot / len(order))
        history["train_app"].append(app_tot / len(order))
        if len(val_idx):
            with _swapped(weights, averaged):
                va, vp = evaluate(model, params[val_idx], images[val_idx], use_per, cache=val_cache)
        else:
            va, vp = float("nan"), None
        history["val_app"].append(va)
        history["val_per"].append(vp if vp is not None else 0.0)
        if log:
            log(f"generator epoch {epoch + 1}/{cfg.epochs} lr {opt.lr:.6f} train {history['train_loss'][-1]:.4f} "
                f"val L_app {va:.4f}")
    if averaged is not None:
        for a, w in zip(averaged, weights):
            w.data = a
    return history


@contextmanager
def _swapped(weights, arrays):
    """Temporarily evaluate with ``arrays`` in place of the weights' data."""
    if arrays is None:
        yield
        return
    saved = [w.data for w in weights]
    for w, a in zip(weights, arrays):
        w.data = a
    try:
        yield
    finally:
        for w, a in zip(weights, saved):
            w.data = a


def moving_average_violations(values, window=5):
    """Count of increases in the trailing moving average of ``values``."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) < window + 1:
        return 0
    ma = np.convolve(v, np.ones(window) / window, mode="valid")
    return int(np.count_nonzero(np.diff(ma) > 0))


__all__ = [
    "GeneratorModel", "PerceptualNet", "TrainConfig", "content_loss", "evaluate", "generator_loss",
    "layer_specs", "moving_average_violations", "perceptual_loss", "target_features", "train",
]
