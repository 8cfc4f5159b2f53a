"""End-to-end workflow steps shared by the command line and the acceptance suite.

A models directory holds ``extractor.gew``, ``generator.gew`` (each with a
JSON sidecar), ``subspace.json`` and a lazily built ``lr_table.json``.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import ConfigError, DataError
from .extractor import ExtractorModel, train_seg
from .facemodel import dataset as ds
from .facemodel.align import align_to_base
from .facemodel.params import sample_params
from .fitter import LrTable, SubspaceModel, build_subspace, compute_lr_table, fit
from .generator import GeneratorModel, PerceptualNet
from .generator import train as train_gen

EXTRACTOR_FILE = "extractor.gew"
GENERATOR_FILE = "generator.gew"
SUBSPACE_FILE = "subspace.json"
LR_TABLE_FILE = "lr_table.json"


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def check_manifest(manifest, cfg):
    if manifest.get("dims") != cfg.face_dims.to_dict():
        raise ConfigError(f"dataset dims {manifest.get('dims')} do not match config {cfg.face_dims.to_dict()}")
    if int(manifest.get("image_size", -1)) != cfg.image_size:
        raise ConfigError(f"dataset image size {manifest.get('image_size')} does not match config {cfg.image_size}")


def load_training_data(data, cfg):
    """Aligned images, aligned class maps and parameter vectors from a directory or a Dataset."""
    if isinstance(data, (str, Path)):
        data, manifest = ds.load(data)
        check_manifest(manifest, cfg)
    elif data.dims != cfg.face_dims or data.size != cfg.image_size:
        raise ConfigError("in-memory dataset does not match the config dimensions")
    if len(data) == 0:
        raise DataError("empty dataset")
    images, segs = align_to_base(data.images, data.landmarks, data.segs)
    return images, segs, data.params


def train_extractor(data, cfg, out_dir, log=None):
    images, segs, _ = load_training_data(data, cfg)
    model = ExtractorModel(cfg.image_size, seed=cfg.seed, attention=cfg.attention_cfg)
    history = train_seg(model, images, segs, cfg.extractor_cfg, log=log)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / EXTRACTOR_FILE, {"config": cfg.to_dict(), "train_config": cfg.extractor})
    write_json(out / "extractor.history.json", history)
    return model, history


def train_generator(data, cfg, out_dir, extractor=None, log=None):
    images, _, params = load_training_data(data, cfg)
    out = Path(out_dir)
    tcfg = cfg.generator_cfg
    featnet = None
    if tcfg.perceptual_weight > 0:
        if extractor is None:
            extractor = load_extractor(out, cfg)
        featnet = PerceptualNet(extractor)
    model = GeneratorModel(cfg.face_dims.total, cfg.generator_widths, tcfg.init_std, seed=tcfg.seed)
    history = train_gen(model, params, images, tcfg, featnet=featnet, log=log)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / GENERATOR_FILE, {"config": cfg.to_dict(), "train_config": tcfg.to_dict()})
    write_json(out / "generator.history.json", history)
    return model, history


def identity_samples(cfg, data=None):
    """Neutral identity vectors (continuous block and one-hot block) for the subspace."""
    if data is not None:
        dset, manifest = ds.load(data)
        check_manifest(manifest, cfg)
        sl = cfg.face_dims.slices()
        return dset.params[:, sl["id_cont"]], dset.params[:, sl["id_disc"]]
    dims = cfg.face_dims
    draws = [sample_params(ds.sample_seed(cfg.seed + 7919, i), neutral_only=True, plausible=True, dims=dims)
             for i in range(cfg.subspace_samples)]
    return np.stack([p.id_cont for p in draws]), np.stack([p.id_disc for p in draws])


def train_subspace(cfg, out_dir, data=None):
    cont, disc = identity_samples(cfg, data)
    sub = build_subspace(cont, cfg.variance_threshold, disc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sub.save(out / SUBSPACE_FILE)
    return sub


def _check_sidecar(meta, cfg, what):
    if int(meta.get("image_size", -1)) != cfg.image_size:
        raise ConfigError(f"{what} was trained for {meta.get('image_size')}px images, config says {cfg.image_size}")
    saved = meta.get("config", {}).get("dims")
    if saved is not None and saved != cfg.face_dims.to_dict():
        raise ConfigError(f"{what} dims {saved} do not match config {cfg.face_dims.to_dict()}")


def load_extractor(models_dir, cfg):
    model, meta = ExtractorModel.load(Path(models_dir) / EXTRACTOR_FILE)
    _check_sidecar(meta, cfg, "extractor")
    return model.freeze()


def load_generator(models_dir, cfg):
    model, meta = GeneratorModel.load(Path(models_dir) / GENERATOR_FILE)
    _check_sidecar(meta, cfg, "generator")
    if model.input_dim != cfg.face_dims.total:
        raise ConfigError(f"generator input {model.input_dim} does not match config total {cfg.face_dims.total}")
    return model.freeze()


def load_subspace(models_dir, cfg):
    path = Path(models_dir) / SUBSPACE_FILE
    if not path.exists():
        raise DataError(f"missing {path}")
    sub = SubspaceModel.load(path)
    if sub.dim != cfg.face_dims.id_cont:
        raise ConfigError(f"subspace dimension {sub.dim} does not match config Ic {cfg.face_dims.id_cont}")
    return sub


@dataclass
class Models:
    generator: GeneratorModel
    extractor: ExtractorModel
    subspace: SubspaceModel
    lr_table: LrTable


def load_models(models_dir, cfg):
    """Load all frozen artifacts; the learning-rate table is computed once and cached."""
    gen = load_generator(models_dir, cfg)
    ext = load_extractor(models_dir, cfg)
    sub = load_subspace(models_dir, cfg)
    lr_path = Path(models_dir) / LR_TABLE_FILE
    if lr_path.exists():
        lrs = LrTable.load(lr_path)
    else:
        lrs = compute_lr_table(gen, ext, cfg.face_dims, cfg.lr_cap, cfg.identity_lr, cfg.lr_segmenter)
        lrs.save(lr_path)
    return Models(gen, ext, sub, lrs)


def fit_one(models, cfg, image, landmarks=None, iters=None):
    return fit(image, models.generator, models.extractor, models.subspace, models.lr_table,
               iters=cfg.iterations if iters is None else iters, landmarks=landmarks,
               dims=cfg.face_dims, lr_scale=cfg.lr_scale, attention=cfg.attention_cfg,
               pose_lr_factor=cfg.pose_lr_factor)
