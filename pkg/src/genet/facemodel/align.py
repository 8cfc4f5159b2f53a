"""Five-point affine alignment."""

import numpy as np

from ..errors import AlignmentError
from .render import BG_COLOR


def fit_affine(src, dst):
    """Least-squares 2x3 affine ``T`` with ``dst ~= T @ [x, y, 1]`` for each src point."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2 or len(src) < 3:
        raise AlignmentError("need matching (n >= 3, 2) landmark arrays")
    design = np.hstack([src, np.ones((len(src), 1))])
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1.0):
        raise AlignmentError("landmarks are collinear or coincident")
    sol, *_ = np.linalg.lstsq(design, dst, rcond=None)
    return sol.T


def _source_coords(transform, shape):
    h, w = shape
    lin = transform[:, :2]
    if abs(np.linalg.det(lin)) < 1e-12:
        raise AlignmentError("affine transform is singular")
    inv = np.linalg.inv(lin)
    yy, xx = np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")
    q = np.stack([xx.ravel(), yy.ravel()]) - transform[:, 2:3]
    p = inv @ q
    # continuous pixel-index coordinates (centres at integers)
    return p[0].reshape(h, w) - 0.5, p[1].reshape(h, w) - 0.5


def warp_image(image, transform, fill=BG_COLOR):
    """Resample ``image`` (H, W, C) so that output = image warped by ``transform``; bilinear."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    px, py = _source_coords(transform, (h, w))
    x0 = np.floor(px).astype(np.int64)
    y0 = np.floor(py).astype(np.int64)
    fx = (px - x0)[..., None]
    fy = (py - y0)[..., None]
    fill = np.asarray(fill, dtype=np.float64)
    out = np.zeros(image.shape, dtype=np.float64)
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            yi, xi = y0 + dy, x0 + dx
            ok = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
            vals = np.where(ok[..., None], image[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)], fill)
            out += wy * wx * vals
    return np.clip(out, 0, 1).astype(image.dtype)


def warp_labels(seg, transform, fill=0):
    """Nearest-neighbour resampling of a class map."""
    h, w = seg.shape
    px, py = _source_coords(transform, (h, w))
    xi = np.floor(px + 0.5).astype(np.int64)
    yi = np.floor(py + 0.5).astype(np.int64)
    ok = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
    out = np.full((h, w), fill, dtype=seg.dtype)
    out[ok] = seg[yi[ok], xi[ok]]
    return out


def align_affine(src, dst, image):
    """Warp ``image`` with the least-squares affine that maps ``src`` landmarks onto ``dst``."""
    return warp_image(image, fit_affine(src, dst))


def align_to_base(images, lms, segs=None):
    """Align a batch (N, H, W, 3) to the base-face landmarks; optionally the class maps too."""
    from .render import base_face

    images = np.asarray(images)
    size = images.shape[1]
    ref = base_face(size)[2]
    out = np.empty_like(images)
    seg_out = None if segs is None else np.empty_like(segs)
    for i in range(len(images)):
        T = fit_affine(lms[i], ref)
        out[i] = warp_image(images[i], T)
        if segs is not None:
            seg_out[i] = warp_labels(segs[i], T)
    return out if segs is None else (out, seg_out)
