"""Layered 2-D rasterizer: control values -> (image, segmentation, landmarks)."""

import functools

import numpy as np

from ..errors import ValidationError
from .params import (
    BACKGROUND, BROW, EYE, INNER_MOUTH, LIP, NOSE, NUM_CLASSES, SKIN,
    FaceDims, base_params, pose_to_degrees,
)
from .shape import blend

SIZES = (32, 64, 128)

# Depth of each layer; sets how far it slides relative to the outline under pose.
DEPTH = {"face": 0.0, "eye": 0.55, "brow": 0.6, "nose": 0.85, "mouth": 0.5}
DEPTH_GAIN = 0.6

EYE_MIN_HALF_HEIGHT = 0.02
CORNER_T = 0.85

BG_COLOR = np.array([70, 90, 120]) / 255
BROW_COLOR = np.array([95, 55, 30]) / 255
EYE_COLOR = np.array([25, 35, 70]) / 255
LIP_COLOR = np.array([190, 60, 70]) / 255
MOUTH_COLOR = np.array([80, 10, 20]) / 255
NOSE_SHADE = 0.78


def palette(state):
    """Per-class RGB colours; skin and nose follow the identity's skin tone."""
    skin = np.array([state["skin_r"], state["skin_g"], state["skin_b"]])
    pal = np.zeros((NUM_CLASSES, 3))
    pal[BACKGROUND] = BG_COLOR
    pal[SKIN] = skin
    pal[BROW] = BROW_COLOR
    pal[EYE] = EYE_COLOR
    pal[NOSE] = skin * NOSE_SHADE
    pal[LIP] = LIP_COLOR
    pal[INNER_MOUTH] = MOUTH_COLOR
    return np.clip(pal, 0, 1)


class _Warp:
    """Per-layer affine pose warp between face space and normalized image space."""

    def __init__(self, pose):
        pitch, yaw = np.deg2rad(pose_to_degrees(np.asarray(pose)))
        self.cx, self.sx = np.cos(yaw), np.sin(yaw)
        self.cy, self.sy = np.cos(pitch), np.sin(pitch)

    def to_image(self, u, v, layer):
        z = DEPTH[layer] * DEPTH_GAIN
        return u * self.cx + z * self.sx, v * self.cy + z * self.sy

    def to_face(self, x, y, layer):
        z = DEPTH[layer] * DEPTH_GAIN
        return (x - z * self.sx) / self.cx, (y - z * self.sy) / self.cy


@functools.lru_cache(maxsize=8)
def _grid(size):
    c = (np.arange(size) + 0.5) / size * 2 - 1
    y, x = np.meshgrid(c, c, indexing="ij")
    y.setflags(write=False)
    x.setflags(write=False)
    return x, y


def _mouth_profile(s, t):
    q = 1 - 0.5 * t ** 2  # lip thickness taper, nonzero at the corners
    o = 1 - t ** 2        # aperture taper, zero at the corners
    upper_inner = s["mouth_y"] - s["open_u"] * o
    lower_inner = s["mouth_y"] + s["open_l"] * o
    top = upper_inner - s["lip_tu"] * q - s["corner_up"] * t ** 2
    bottom = lower_inner + s["lip_tl"] * q + s["corner_down"] * t ** 2
    return top, upper_inner, lower_inner, bottom


def _hull(points):
    """Counter-clockwise convex hull of a few 2-D points."""
    pts = sorted(set(map(tuple, np.round(points, 12))))
    if len(pts) < 3:
        return np.array(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for pt in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], pt) <= 0:
            lower.pop()
        lower.append(pt)
    for pt in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], pt) <= 0:
            upper.pop()
        upper.append(pt)
    return np.array(lower[:-1] + upper[:-1])


def _dilated_polygon(u, v, poly, radius):
    """Pixels within ``radius`` of the convex polygon (or segment / point) ``poly``."""
    n = len(poly)
    out = np.zeros(u.shape, dtype=bool)
    inside = np.ones(u.shape, dtype=bool) if n >= 3 else np.zeros(u.shape, dtype=bool)
    r2 = radius * radius
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        ab = b - a
        denom = max(float(ab @ ab), 1e-12)
        t = np.clip(((u - a[0]) * ab[0] + (v - a[1]) * ab[1]) / denom, 0, 1)
        du = u - (a[0] + t * ab[0])
        dv = v - (a[1] + t * ab[1])
        out |= du * du + dv * dv <= r2
        if n >= 3:
            inside &= ab[0] * (v - a[1]) - ab[1] * (u - a[0]) >= 0
    return out | inside


def _brow_polygon(s, side):
    """Rest segment of one brow swept by its raise and lower offsets."""
    sgn = -1.0 if side == "l" else 1.0
    inner = np.array([sgn * s["brow_in_x"], s[f"brow_in_y_{side}"]])
    outer = np.array([sgn * s["brow_out_x"], s[f"brow_out_y_{side}"]])
    up_in = np.array([0.0, -s["brow_up_in"]])
    up_out = np.array([0.0, -s[f"brow_up_out_{side}"]])
    dn_in = np.array([-sgn * s["brow_dn_x"], s["brow_dn_in"]])
    dn_out = np.array([0.0, s["brow_dn_out"]])
    return _hull([inner, outer, inner + up_in, outer + up_out, inner + dn_in, outer + dn_out])


def rasterize(state, size):
    """Segmentation map of a shape state at ``size`` x ``size`` pixels."""
    s = state
    warp = _Warp(state.pose)
    x, y = _grid(size)
    seg = np.zeros((size, size), dtype=np.uint8)

    u, v = warp.to_face(x, y, "face")
    rel = v - s["face_cy"]
    h = np.where(rel < 0, s["face_h_top"], s["face_h_bot"])
    dx = s["chin_dx"] * np.clip(rel / s["face_h_bot"], 0, 1)
    seg[((u - dx) / s["face_w"]) ** 2 + (rel / h) ** 2 <= 1] = SKIN

    u, v = warp.to_face(x, y, "nose")
    seg[(u / s["nose_w"]) ** 2 + ((v - s["nose_y"]) / s["nose_len"]) ** 2 <= 1] = NOSE

    u, v = warp.to_face(x, y, "brow")
    r = s["brow_t"] / 2
    for side in ("l", "r"):
        seg[_dilated_polygon(u, v, _brow_polygon(s, side), r)] = BROW

    u, v = warp.to_face(x, y, "eye")
    # a closed eye keeps a visible slit at least ~one pixel tall
    floor = max(EYE_MIN_HALF_HEIGHT, 1.5 / size)
    for sgn, hh in ((-1.0, s["eye_h_l"]), (1.0, s["eye_h_r"])):
        hh = max(hh, floor)
        seg[((u - sgn * s["eye_dx"]) / s["eye_w"]) ** 2 + ((v - s["eye_y"]) / hh) ** 2 <= 1] = EYE

    u, v = warp.to_face(x, y, "mouth")
    # the left half of the mouth stretches with the jaw-left offset
    t = u / np.where(u < 0, s["mouth_w"] + s["mouth_pull_l"], s["mouth_w"])
    within = np.abs(t) < 1
    top, upper_inner, lower_inner, bottom = _mouth_profile(s, t)
    seg[within & (v >= top) & (v <= bottom)] = LIP
    seg[within & (v > upper_inner) & (v < lower_inner)] = INNER_MOUTH
    return seg


def landmarks(state, size):
    """Five points in pixel units (pixel centres at i + 0.5): eyes, nose, mouth corners."""
    s = state
    warp = _Warp(state.pose)
    pts = [
        ("eye", -s["eye_dx"], s["eye_y"]),
        ("eye", s["eye_dx"], s["eye_y"]),
        ("nose", 0.0, s["nose_y"]),
    ]
    for t, half_w in ((-CORNER_T, s["mouth_w"] + s["mouth_pull_l"]), (CORNER_T, s["mouth_w"])):
        top, upper_inner, _, _ = _mouth_profile(s, t)
        pts.append(("mouth", t * half_w, 0.5 * (top + upper_inner)))
    out = np.empty((5, 2))
    for i, (layer, u, v) in enumerate(pts):
        x, y = warp.to_image(u, v, layer)
        out[i] = ((x + 1) / 2 * size, (y + 1) / 2 * size)
    return out


def render(params, size=64):
    """Render ``params``: float image (H, W, 3) in [0, 1], uint8 class map, (5, 2) landmarks."""
    if size not in SIZES:
        raise ValidationError(f"size must be one of {SIZES}")
    state = blend(params)
    seg = rasterize(state, size)
    image = palette(state)[seg].astype(np.float32)
    return image, seg, landmarks(state, size)


@functools.lru_cache(maxsize=16)
def _base_face_cached(dims, size):
    image, seg, lms = render(base_params(dims), size)
    for a in (image, seg, lms):
        a.setflags(write=False)
    return image, seg, lms


def base_face(size=64, dims=FaceDims()):
    """Frontal expressionless render with identity 0.5 (archetype 0)."""
    image, seg, lms = _base_face_cached(dims, size)
    return image.copy(), seg.copy(), lms.copy()


def region_count(seg, cls, half=""):
    """Pixel count of a class, optionally restricted to the left/right image half."""
    w = seg.shape[1]
    if half == "left":
        seg = seg[:, : w // 2]
    elif half == "right":
        seg = seg[:, w // 2:]
    return int(np.count_nonzero(seg == cls))
