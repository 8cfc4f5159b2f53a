"""Linear blendshape model over 2-D control values.

The shape state is a flat vector of named control values (positions, radii,
thicknesses, colours). It is an exact affine function of the parameters::

    S = base + A_id @ id_cont + A_disc @ id_disc + A_exp @ exp
"""

import numpy as np

from .params import FaceDims

FIELDS = (
    "face_w", "face_h_top", "face_h_bot", "face_cy", "chin_dx",
    "eye_dx", "eye_y", "eye_w", "eye_h_l", "eye_h_r",
    "brow_in_x", "brow_out_x", "brow_in_y_l", "brow_in_y_r", "brow_out_y_l", "brow_out_y_r", "brow_t",
    "brow_up_in", "brow_up_out_l", "brow_up_out_r", "brow_dn_in", "brow_dn_out", "brow_dn_x",
    "nose_y", "nose_len", "nose_w",
    "mouth_y", "mouth_w", "mouth_pull_l", "corner_up", "corner_down", "lip_tu", "lip_tl", "open_u", "open_l",
    "skin_r", "skin_g", "skin_b",
)
F = {name: i for i, name in enumerate(FIELDS)}

# Neutral face at identity 0.5, archetype 0.
_NEUTRAL = {
    "face_w": 0.74, "face_h_top": 0.86, "face_h_bot": 0.86, "face_cy": 0.04, "chin_dx": 0.0,
    "eye_dx": 0.30, "eye_y": -0.13, "eye_w": 0.165, "eye_h_l": 0.09, "eye_h_r": 0.09,
    "brow_in_x": 0.10, "brow_out_x": 0.47, "brow_in_y_l": -0.34, "brow_in_y_r": -0.34,
    "brow_out_y_l": -0.32, "brow_out_y_r": -0.32, "brow_t": 0.09,
    "brow_up_in": 0.0, "brow_up_out_l": 0.0, "brow_up_out_r": 0.0,
    "brow_dn_in": 0.0, "brow_dn_out": 0.0, "brow_dn_x": 0.0,
    "nose_y": 0.11, "nose_len": 0.15, "nose_w": 0.10,
    "mouth_y": 0.47, "mouth_w": 0.27, "mouth_pull_l": 0.0, "corner_up": 0.0, "corner_down": 0.0,
    "lip_tu": 0.10, "lip_tl": 0.12, "open_u": 0.0, "open_l": 0.0,
    "skin_r": 203 / 255, "skin_g": 160 / 255, "skin_b": 130 / 255,
}

# Offsets per unit of each continuous identity parameter.
_ID_BASIS = (
    {"face_w": 0.14},
    {"face_h_top": 0.10, "face_h_bot": 0.10},
    {"face_cy": 0.06},
    {"eye_dx": 0.07},
    {"eye_y": 0.06},
    {"eye_w": 0.04},
    {"eye_h_l": 0.025, "eye_h_r": 0.025},
    {"brow_in_y_l": 0.07, "brow_in_y_r": 0.07, "brow_out_y_l": 0.07, "brow_out_y_r": 0.07},
    {"brow_t": 0.03},
    {"brow_out_x": 0.08},
    {"nose_len": 0.07},
    {"nose_w": 0.06},
    {"mouth_y": 0.08},
    {"mouth_w": 0.08},
    {"lip_tu": 0.05, "lip_tl": 0.05},
    {"skin_r": -66 / 255, "skin_g": -80 / 255, "skin_b": -80 / 255},
)

# Discrete identity archetypes (selected by the one-hot block).
_ARCHETYPES = (
    {},
    {"face_w": 0.05, "face_h_top": -0.03, "face_h_bot": -0.03,
     "brow_in_y_l": 0.02, "brow_in_y_r": 0.02, "brow_out_y_l": 0.02, "brow_out_y_r": 0.02},
    {"face_h_top": 0.05, "face_h_bot": 0.05, "eye_w": -0.02, "nose_len": 0.02},
    {"nose_w": 0.03, "lip_tu": 0.02, "lip_tl": 0.02, "face_w": -0.03},
)

# Offsets per unit AU intensity, in catalogue order. Brow and lip-corner AUs
# sweep their feature (the drawn region grows along the motion) rather than
# translating it, so each AU's region count is monotone at any resolution.
_EXP_BASIS = (
    {"eye_h_l": -0.07},
    {"eye_h_r": -0.07},
    {"brow_up_in": 0.09},
    {"brow_up_out_l": 0.09},
    {"brow_up_out_r": 0.09},
    {"brow_dn_in": 0.06, "brow_dn_out": 0.03, "brow_dn_x": 0.03, "brow_t": 0.03},
    {"open_l": 0.17, "face_h_bot": 0.10},
    {"open_u": 0.08},
    {"corner_up": 0.08},
    {"corner_down": 0.08},
    {"mouth_w": -0.09},
    {"mouth_pull_l": 0.12, "chin_dx": -0.10},
)


def _vec(offsets):
    v = np.zeros(len(FIELDS))
    for k, val in offsets.items():
        v[F[k]] = val
    return v


class BlendBasis:
    """Base shape plus the identity, archetype and AU offset matrices."""

    def __init__(self, dims=FaceDims()):
        self.dims = dims
        self.A_id = np.stack([_vec(o) for o in _ID_BASIS[:dims.id_cont]], axis=1)
        self.A_disc = np.stack([_vec(o) for o in _ARCHETYPES[:dims.id_disc]], axis=1)
        self.A_exp = np.stack([_vec(o) for o in _EXP_BASIS[:dims.exp]], axis=1)
        # the neutral face sits at identity 0.5
        self.base = _vec(_NEUTRAL) - self.A_id @ np.full(dims.id_cont, 0.5)

    def apply(self, pose, exp, id_cont, id_disc):
        """The affine map itself, without validating the parameter domain."""
        return ShapeState(
            self.base + self.A_id @ id_cont + self.A_disc @ id_disc + self.A_exp @ exp,
            np.asarray(pose, dtype=np.float64),
        )


class ShapeState:
    """Control values ``S`` plus the pose applied afterwards as a warp."""

    __slots__ = ("values", "pose")

    def __init__(self, values, pose):
        self.values = np.asarray(values, dtype=np.float64)
        self.pose = np.asarray(pose, dtype=np.float64)

    def __getitem__(self, name):
        return self.values[F[name]]

    def as_dict(self):
        return {k: float(v) for k, v in zip(FIELDS, self.values)}


_BASES = {}


def get_basis(dims):
    if dims not in _BASES:
        _BASES[dims] = BlendBasis(dims)
    return _BASES[dims]


def blend(params):
    """Control values of the face described by ``params`` (validated)."""
    params.validate()
    return get_basis(params.dims).apply(params.pose, params.exp, params.id_cont, params.id_disc)
