"""Synthetic parametric face oracle (non-differentiable)."""

from .align import align_affine, fit_affine, warp_image, warp_labels
from .params import (
    AU_CATALOGUE, CLASS_NAMES, NUM_CLASSES, POSE_RANGE_DEG,
    BACKGROUND, BROW, EYE, INNER_MOUTH, LIP, NOSE, SKIN,
    FaceDims, FaceParams, base_params, degrees_to_pose, one_hot, pose_to_degrees, sample_params,
)
from .render import base_face, landmarks, palette, rasterize, region_count, render
from .shape import FIELDS, BlendBasis, ShapeState, blend, get_basis

__all__ = [
    "AU_CATALOGUE", "BACKGROUND", "BROW", "BlendBasis", "CLASS_NAMES", "EYE", "FIELDS",
    "FaceDims", "FaceParams", "INNER_MOUTH", "LIP", "NOSE", "NUM_CLASSES", "POSE_RANGE_DEG",
    "SKIN", "ShapeState", "align_affine", "base_face", "base_params", "blend",
    "degrees_to_pose", "fit_affine", "get_basis", "landmarks", "one_hot", "palette",
    "pose_to_degrees", "rasterize", "region_count", "render", "sample_params", "warp_image",
    "warp_labels",
]
