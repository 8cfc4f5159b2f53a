"""The fixed ten-expression set used for expression similarity matrices."""

import numpy as np

from .dataset import Dataset, write_dataset
from .params import AU_CATALOGUE, FaceDims, FaceParams, base_params
from .render import render

# (name, {AU name: intensity}); everything else stays at the base face
EXPRESSIONS = (
    ("neutral", {}),
    ("happy", {"lip_corner_puller": 1.0, "upper_lip_raiser": 0.3}),
    ("sad", {"inner_brow_raiser": 0.8, "lip_corner_depressor": 0.9}),
    ("surprise", {"inner_brow_raiser": 1.0, "outer_brow_raiser_l": 1.0, "outer_brow_raiser_r": 1.0,
                  "jaw_open": 0.8}),
    ("anger", {"brow_lowerer": 1.0, "lip_pucker": 0.4}),
    ("disgust", {"upper_lip_raiser": 1.0, "brow_lowerer": 0.5}),
    ("fear", {"inner_brow_raiser": 1.0, "brow_lowerer": 0.4, "jaw_open": 0.4, "lip_corner_depressor": 0.4}),
    ("eyes_closed", {"eye_blink_l": 1.0, "eye_blink_r": 1.0}),
    ("wink", {"eye_blink_l": 1.0, "lip_corner_puller": 0.5}),
    ("pucker", {"lip_pucker": 1.0}),
)


def expression_params(dims=FaceDims()):
    """Parameter vectors (10, d): base-face identity and pose with each expression's AUs."""
    names = [a.name for a in AU_CATALOGUE[:dims.exp]]
    out = []
    for _, aus in EXPRESSIONS:
        p = base_params(dims)
        for name, value in aus.items():
            if name in names:
                p.exp[names.index(name)] = value
        out.append(p.to_vector())
    return np.stack(out)


def expression_fixture(size=64, dims=FaceDims()):
    """In-memory dataset of the ten expressions rendered by the oracle."""
    params = expression_params(dims)
    images, segs, lms = zip(*(render(FaceParams.from_vector(v, dims), size) for v in params))
    return Dataset(np.stack(images), np.stack(segs), params, np.stack(lms), dims, size)


def write_expression_fixture(out_dir, size=64, dims=FaceDims()):
    return write_dataset(out_dir, expression_fixture(size, dims), fixture="expressions",
                         names=[name for name, _ in EXPRESSIONS])


__all__ = ["EXPRESSIONS", "expression_fixture", "expression_params", "write_expression_fixture"]
