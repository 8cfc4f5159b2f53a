"""Pipeline configuration: one JSON document, overridable from the command line."""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .extractor import AttentionConfig, SegTrainConfig
from .facemodel.params import FaceDims
from .facemodel.render import SIZES
from .generator import DEFAULT_WIDTHS, TrainConfig

FORMAT_VERSION = 1


def default_widths(image_size):
    layers = int(image_size).bit_length() - 1
    if 2 ** layers != image_size:
        raise ConfigError(f"image size {image_size} is not a power of two")
    if layers > len(DEFAULT_WIDTHS):
        return [2 ** (7 + layers - len(DEFAULT_WIDTHS) + 1)] + default_widths(image_size // 2)
    return list(DEFAULT_WIDTHS[len(DEFAULT_WIDTHS) - layers:])


@dataclass
class PipelineConfig:
    dims: dict = field(default_factory=lambda: FaceDims().to_dict())
    image_size: int = 64
    generator_widths: list = None
    generator: dict = field(default_factory=lambda: asdict(TrainConfig()))
    extractor: dict = field(default_factory=lambda: asdict(SegTrainConfig()))
    attention: dict = field(default_factory=lambda: AttentionConfig().to_dict())
    variance_threshold: float = 0.95
    subspace_samples: int = 2000
    lr_cap: float = 100.0
    identity_lr: float = 8.0
    lr_scale: float = 0.1  # global multiplier on the lr table
    pose_lr_factor: float = 0.5
    lr_segmenter: str = "extractor"
    iterations: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.generator_widths is None:
            self.generator_widths = default_widths(self.image_size)
        base_g, base_e = asdict(TrainConfig()), asdict(SegTrainConfig())
        for name, given, base in (("generator", self.generator, base_g), ("extractor", self.extractor, base_e)):
            unknown = set(given) - set(base)
            if unknown:
                raise ConfigError(f"unknown {name} training keys: {sorted(unknown)}")
            base.update(given)
            setattr(self, name, base)

    # typed views -------------------------------------------------------
    @property
    def face_dims(self):
        try:
            return FaceDims.from_dict(self.dims)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad dims block {self.dims}: {exc}") from exc

    @property
    def generator_cfg(self):
        return TrainConfig(**self.generator)

    @property
    def extractor_cfg(self):
        return SegTrainConfig(**self.extractor)

    @property
    def attention_cfg(self):
        try:
            return AttentionConfig.from_dict(self.attention)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad attention block: {exc}") from exc

    def validate(self):
        self.face_dims
        if self.image_size not in SIZES:
            raise ConfigError(f"image_size must be one of {SIZES}")
        if 2 ** len(self.generator_widths) != self.image_size or self.generator_widths[-1] != 3:
            raise ConfigError("generator widths must have log2(image_size) layers ending in 3 channels")
        try:
            self.generator_cfg.validate()
            self.extractor_cfg.validate()
            self.attention_cfg.validate()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if not 0 < self.variance_threshold <= 1:
            raise ConfigError("variance_threshold must lie in (0, 1]")
        if self.subspace_samples < 2:
            raise ConfigError("subspace_samples must be >= 2")
        if not (self.lr_cap > 0 and self.identity_lr > 0 and self.lr_scale > 0 and self.pose_lr_factor > 0):
            raise ConfigError("lr_cap, identity_lr, lr_scale and pose_lr_factor must be positive")
        if self.lr_segmenter not in ("extractor", "oracle"):
            raise ConfigError("lr_segmenter must be 'extractor' or 'oracle'")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        return self

    def to_dict(self):
        d = asdict(self)
        d["format_version"] = FORMAT_VERSION
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("format_version", None)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
