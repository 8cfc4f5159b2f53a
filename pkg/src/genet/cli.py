"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .config import PipelineConfig
from .errors import AlignmentError, ConfigError, DataError, NumericError, ValidationError
from .facemodel import dataset as ds
from .facemodel.fixtures import write_expression_fixture
from .facemodel.params import AU_CATALOGUE, FaceParams
from .fitter import transfer

log = logging.getLogger("genet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _config(args):
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "size", None) is not None:
        overrides["image_size"] = args.size
        if cfg.image_size != args.size:
            overrides["generator_widths"] = None
    if overrides:
        d = cfg.to_dict()
        d.update(overrides)
        cfg = PipelineConfig.from_dict(d)
    return cfg.validate()


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def _params_from_json(path):
    """FaceParams from a parameter file, a dataset sample record or a fit report."""
    d = _read_json(path)
    if "final" in d:
        d = d["final"]
    try:
        return FaceParams.from_dict(d).validate()
    except KeyError as exc:
        raise DataError(f"{path} has no field {exc}") from exc


def _landmarks_from_json(path):
    d = _read_json(path)
    lms = np.asarray(d["landmarks"] if isinstance(d, dict) else d, dtype=np.float64)
    if lms.shape != (5, 2):
        raise DataError(f"{path}: expected 5 landmark points")
    return lms


def _save_image(path, image):
    ds.save_png(path, image)


# -- commands ----------------------------------------------------------------------

def cmd_gen_dataset(args):
    cfg = _config(args)
    try:
        if args.expressions:
            manifest = write_expression_fixture(args.out, cfg.image_size, cfg.face_dims)
        else:
            manifest = ds.generate(args.out, args.count, seed=cfg.seed, neutral=args.neutral,
                                   plausible=args.plausible, dims=cfg.face_dims, size=cfg.image_size)
    except OSError as exc:
        raise DataError(f"cannot write dataset to {args.out}: {exc}") from exc
    log.info("wrote %d samples to %s", manifest["count"], args.out)


def cmd_train(args):
    from . import pipeline

    cfg = _config(args)
    out = Path(args.out)
    logger = log.info
    if args.what == "extractor":
        pipeline.train_extractor(args.data, cfg, out, log=logger)
    elif args.what == "generator":
        ext = pipeline.load_extractor(args.extractor or out, cfg) if cfg.generator_cfg.perceptual_weight > 0 else None
        _, hist = pipeline.train_generator(args.data, cfg, out, extractor=ext, log=logger)
        if not all(np.isfinite(hist["train_loss"])):
            raise NumericError("generator training diverged")
    else:
        pipeline.train_subspace(cfg, out, data=args.data)
    cfg.save(out / "config.json")


def _fit_inputs(args):
    inp = Path(args.input)
    if inp.is_dir():
        images = sorted(p for p in inp.glob("*.png") if not p.name.endswith(".seg.png"))
        if not images:
            raise DataError(f"no images in {inp}")
        out = []
        for p in images:
            lm = p.with_suffix(".json")
            out.append((p, _landmarks_from_json(lm) if lm.exists() else None))
        return out, True
    if not inp.exists():
        raise DataError(f"missing input {inp}")
    return [(inp, _landmarks_from_json(args.landmarks) if args.landmarks else None)], False


def cmd_fit(args):
    from . import pipeline

    cfg = _config(args)
    models = pipeline.load_models(args.models, cfg)
    inputs, batch = _fit_inputs(args)
    out = Path(args.out)
    if batch:
        out.mkdir(parents=True, exist_ok=True)
    for path, lms in inputs:
        image = ds.load_png(path)
        if image.shape[0] != cfg.image_size:
            raise DataError(f"{path} is {image.shape[0]}px, models expect {cfg.image_size}px")
        report = pipeline.fit_one(models, cfg, image, lms, iters=args.iters)
        target = out / f"{path.stem}.report.json" if batch else out
        d = report.to_dict()
        d["config"] = cfg.to_dict()
        d["input"] = path.name
        pipeline.write_json(target, d)
        if args.render:
            render_path = Path(args.render)
            if batch:
                render_path.mkdir(parents=True, exist_ok=True)
                render_path = render_path / f"{path.stem}.png"
            _save_image(render_path, models.generator.render(report.final.to_vector())[0])
        log.info("%s: loss %.5f -> %.5f", path.name, report.initial_loss, report.final_loss)


def cmd_transfer(args):
    from . import pipeline

    cfg = _config(args)
    a = _params_from_json(args.identity)
    b = _params_from_json(args.expression)
    if a.dims != cfg.face_dims or b.dims != cfg.face_dims:
        raise ConfigError("parameter files do not match the configured dimensions")
    result = transfer(a, b)
    out = Path(args.out)
    params_path = Path(args.params) if args.params else out.with_suffix(".json")
    d = result.to_dict()
    d["format_version"] = 1
    pipeline.write_json(params_path, d)
    gen = pipeline.load_generator(args.models, cfg)
    _save_image(out, gen.render(result.to_vector())[0])


def _load_recover_pairs(args, cfg):
    test = Path(args.testset)
    dset, manifest = ds.load(test)
    gt = dset.params
    sl = cfg.face_dims.slices()
    if args.predictions:
        pred_dir = Path(args.predictions)
        preds = []
        for i in range(len(dset)):
            cand = [pred_dir / f"{i:06d}.report.json", pred_dir / f"{i:06d}.json"]
            path = next((c for c in cand if c.exists()), None)
            if path is None:
                raise DataError(f"no prediction for sample {i} in {pred_dir}")
            preds.append(_params_from_json(path).to_vector())
        pred = np.stack(preds)
    else:
        from . import pipeline

        models = pipeline.load_models(args.models, cfg)
        pred = np.stack([pipeline.fit_one(models, cfg, dset.images[i], dset.landmarks[i]).final.to_vector()
                         for i in range(len(dset))])
    return gt[:, sl["exp"]], pred[:, sl["exp"]]


def _load_sequence(path):
    p = Path(path)
    if p.is_dir():
        frames = sorted(p.glob("*.json"))
        if not frames:
            raise DataError(f"no frames in {p}")
        return np.stack([_params_from_json(f).exp for f in frames])
    d = _read_json(p)
    seq = np.asarray(d["frames"] if isinstance(d, dict) else d, dtype=np.float64)
    if seq.ndim != 2:
        raise DataError("a sequence must be a list of per-frame AU vectors")
    return seq


def cmd_eval(args):
    cfg = _config(args)
    names = [a.name for a in AU_CATALOGUE[:cfg.face_dims.exp]]
    if args.what == "recover":
        gt, pred = _load_recover_pairs(args, cfg)
        report = metrics.MetricReport.from_predictions(gt, pred, names)
    elif args.what == "stability":
        seq = _load_sequence(args.sequence)
        report = metrics.MetricReport(au_names=names[:seq.shape[1]])
        for w in args.windows:
            if w <= seq.shape[0]:
                report.stability[w] = metrics.stability_std(seq, w).tolist()
        if not report.stability:
            raise DataError("sequence shorter than every requested window")
    else:
        from . import pipeline

        fixture = Path(args.expressions)
        dset, manifest = ds.load(fixture)
        pipeline.check_manifest(manifest, cfg)
        from .facemodel.align import align_to_base

        real = align_to_base(dset.images, dset.landmarks)
        gen = pipeline.load_generator(args.models, cfg)
        ext = pipeline.load_extractor(args.models, cfg)
        rendered = gen.render(dset.params)
        raw, norm, hits = metrics.similarity_matrix(real, rendered, ext, cfg.attention_cfg)
        report = metrics.MetricReport(au_names=names, similarity=norm.tolist(), similarity_raw=raw.tolist(),
                                      diagonal_minima=hits)
        metrics.save_heatmap(Path(args.report).with_suffix(".png"), norm)
    d = report.to_dict()
    d["config"] = cfg.to_dict()
    from .metrics import _json_safe

    Path(args.report).write_text(json.dumps(_json_safe(d), indent=2, sort_keys=True) + "\n")


# -- parser ------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="genet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("gen-dataset", help="render a synthetic dataset")
    common(p)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--neutral", action="store_true")
    p.add_argument("--plausible", action="store_true")
    p.add_argument("--expressions", action="store_true", help="write the fixed ten-expression set instead")
    p.add_argument("--size", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("what", choices=["generator", "extractor", "subspace"])
    p.add_argument("--data", help="dataset directory (optional for subspace)")
    p.add_argument("--extractor", help="models directory holding the extractor (default: --out)")
    p.add_argument("--out", required=True, help="models directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit", help="recover parameters from an image or a directory of images")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--landmarks")
    p.add_argument("--models", required=True)
    p.add_argument("--iters", type=int, default=None, help="defaults to the config's iterations")
    p.add_argument("--out", required=True)
    p.add_argument("--render")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transfer", help="pose and expression of one face on the identity of another")
    common(p)
    p.add_argument("--identity", required=True)
    p.add_argument("--expression", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True, help="output image (PNG)")
    p.add_argument("--params", help="output parameters (default: next to --out)")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("eval", help="evaluation reports")
    common(p)
    p.add_argument("what", choices=["recover", "stability", "simmatrix"])
    p.add_argument("--testset")
    p.add_argument("--predictions")
    p.add_argument("--sequence")
    p.add_argument("--expressions")
    p.add_argument("--models")
    p.add_argument("--windows", type=int, nargs="+", default=list(range(2, 11)))
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def _check_eval_args(args):
    need = {"recover": ["testset"], "stability": ["sequence"], "simmatrix": ["expressions", "models"]}[args.what]
    if args.what == "recover" and not args.predictions:
        need = need + ["models"]
    missing = [n for n in need if not getattr(args, n)]
    if missing:
        raise ConfigError(f"eval {args.what} needs --{', --'.join(missing)}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "eval":
            _check_eval_args(args)
        if args.command == "train" and args.what != "subspace" and not args.data:
            raise ConfigError(f"train {args.what} needs --data")
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ValidationError, AlignmentError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
