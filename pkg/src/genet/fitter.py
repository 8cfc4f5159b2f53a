"""Gradient-based recovery of face parameters through the frozen generator and extractor.

Each iteration renders the current parameters with the generator, compares
attention-masked extractor features of the render and of the (aligned) input
and takes one per-parameter-rate gradient step. Identity is optimized in a
low-dimensional PCA subspace of plausible neutral identities.
"""

import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ContractError, DegenerateSubspaceError, DimensionError, NumericError, ValidationError
from .extractor import extract, feature_distance, segment
from .facemodel.align import fit_affine, warp_image
from .facemodel.params import FaceDims, FaceParams, base_params, one_hot
from .facemodel.render import base_face

FORMAT_VERSION = 1
IDENTITY_LR = 8.0
LR_CAP = 100.0


# -- identity subspace ---------------------------------------------------------

class SubspaceModel:
    """PCA subspace ``m + span(U)`` with per-component ranges mapping coordinates to [0, 1]."""

    def __init__(self, mean, basis, lo, hi, threshold, eigenvalues=None, archetype=0, id_disc=4):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.basis = np.ascontiguousarray(np.asarray(basis, dtype=np.float64).reshape(len(self.mean), -1))
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.threshold = float(threshold)
        self.eigenvalues = None if eigenvalues is None else np.asarray(eigenvalues, dtype=np.float64)
        self.archetype = int(archetype)
        self.id_disc = int(id_disc)

    @property
    def dim(self):
        return len(self.mean)

    @property
    def k(self):
        return self.basis.shape[1]

    def _check(self, x, n):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != n:
            raise DimensionError(f"expected last dimension {n}, got {x.shape}")
        return x

    def coords(self, x):
        """Raw (unnormalized) subspace coordinates ``(x - m) U``."""
        return (self._check(x, self.dim) - self.mean) @ self.basis

    def project(self, x):
        """Normalized coordinates in [0, 1]^k (not clamped)."""
        return (self.coords(x) - self.lo) / (self.hi - self.lo)

    def backproject(self, c, clamp=True):
        """Identity vector for normalized coordinates; coordinates and result are clamped to [0, 1]."""
        c = self._check(c, self.k)
        if clamp:
            c = np.clip(c, 0, 1)
        x = (self.lo + c * (self.hi - self.lo)) @ self.basis.T + self.mean
        return np.clip(x, 0, 1) if clamp else x

    def backproject_tensor(self, c):
        """Differentiable backprojection of a (1, k) coordinate tensor, before clamping."""
        scale = Tensor((self.hi - self.lo)[None], dtype=c.dtype)
        lo = Tensor(self.lo[None], dtype=c.dtype)
        ut = Tensor(self.basis.T, dtype=c.dtype)
        m = Tensor(self.mean[None], dtype=c.dtype)
        return dc.add(dc.matmul(dc.add(dc.mul(c, scale), lo), ut), m)

    def residual_variance(self):
        """Sum of the discarded eigenvalues of the sample covariance."""
        return float(self.eigenvalues[self.k:].sum()) if self.eigenvalues is not None else float("nan")

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "mean": self.mean.tolist(),
            "U": self.basis.reshape(-1).tolist(),
            "shape": [self.dim, self.k],
            "lo": self.lo.tolist(),
            "hi": self.hi.tolist(),
            "k": self.k,
            "threshold": self.threshold,
            "eigenvalues": None if self.eigenvalues is None else self.eigenvalues.tolist(),
            "archetype": self.archetype,
            "id_disc": self.id_disc,
        }

    @classmethod
    def from_dict(cls, d):
        basis = np.asarray(d["U"], dtype=np.float64).reshape(d["shape"])
        return cls(d["mean"], basis, d["lo"], d["hi"], d["threshold"], d.get("eigenvalues"),
                   d.get("archetype", 0), d.get("id_disc", 4))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_subspace(samples, variance_threshold=0.95, disc_samples=None):
    """PCA of identity samples (n, Ic).

    ``k`` is the smallest number of components whose eigenvalues retain at
    least ``variance_threshold`` of the total variance. Ranges are symmetric
    about 0 and cover every sample, so the mean projects to 0.5 and all
    samples project into [0, 1].
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise ContractError("need at least 2 identity samples of shape (n, Ic)")
    if not 0 < variance_threshold <= 1:
        raise ContractError("variance_threshold must lie in (0, 1]")
    m = x.mean(axis=0)
    xc = x - m
    scatter = xc.T @ xc
    evals, evecs = np.linalg.eigh(scatter / (len(x) - 1))
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0, None)
    evecs = evecs[:, order]
    total = evals.sum()
    if total <= 1e-15:
        raise DegenerateSubspaceError("identity samples have zero covariance")
    ratio = np.cumsum(evals) / total
    k = int(np.searchsorted(ratio, variance_threshold - 1e-12) + 1)
    k = min(k, len(evals))
    # sign convention: the largest-magnitude entry of each column is positive
    basis = evecs[:, :k]
    flip = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(k)])
    basis = basis * np.where(flip == 0, 1, flip)
    c = xc @ basis
    half = np.abs(c).max(axis=0)
    half = np.where(half > 0, half, 1.0)
    archetype = 0
    n_disc = 4
    if disc_samples is not None:
        d = np.asarray(disc_samples, dtype=np.float64)
        archetype = int(np.argmax(d.mean(axis=0)))
        n_disc = d.shape[1]
    return SubspaceModel(m, basis, -half, half, variance_threshold, evals, archetype, n_disc)


# -- learning rates --------------------------------------------------------------

@dataclass
class LrTable:
    pose: list
    exp: list
    identity: float = IDENTITY_LR
    ratios: list = field(default_factory=list)  # measured differing-pixel fractions, pose then exp

    def __post_init__(self):
        rates = np.concatenate([np.asarray(self.pose, float), np.asarray(self.exp, float), [self.identity]])
        if not np.all(np.isfinite(rates)) or np.any(rates <= 0):
            raise ValidationError("learning rates must be positive and finite")

    def to_dict(self):
        return {"format_version": FORMAT_VERSION, "pose": list(map(float, self.pose)),
                "exp": list(map(float, self.exp)), "identity": float(self.identity),
                "ratios": list(map(float, self.ratios))}

    @classmethod
    def from_dict(cls, d):
        return cls(d["pose"], d["exp"], d["identity"], d.get("ratios", []))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def rate_from_ratio(r, cap=LR_CAP):
    """Inverse differing-pixel ratio, capped; a zero ratio gets the cap."""
    if r <= 0:
        return cap
    return min(1.0 / r, cap)


def compute_lr_table(gen, ext, dims=FaceDims(), cap=LR_CAP, identity_lr=IDENTITY_LR, segmenter="extractor"):
    """Per-parameter rates from segmentation footprints, measured from the base face.

    Each pose/AU parameter is set to its maximum with everything else at the
    base face; the rate is the inverse of the fraction of pixels whose class
    differs from the base face's segmentation. ``segmenter="oracle"`` uses
    the synthetic renderer's ground-truth maps instead of the networks.
    """
    base = base_params(dims)
    probes = []
    for j in range(2 + dims.exp):
        p = base.to_vector()
        p[j] = 1.0
        probes.append(p)
    vecs = np.stack([base.to_vector()] + probes)
    if segmenter == "oracle":
        from .facemodel.align import align_to_base
        from .facemodel.render import render

        size = gen.image_size
        out = [render(FaceParams.from_vector(v, dims), size) for v in vecs]
        _, segs = align_to_base(np.stack([o[0] for o in out]), np.stack([o[2] for o in out]),
                                np.stack([o[1] for o in out]))
    elif segmenter == "extractor":
        segs, _ = segment(ext, gen.render(vecs))
    else:
        raise ValidationError(f"unknown segmenter {segmenter!r}")
    ratios = [float(np.mean(s != segs[0])) for s in segs[1:]]
    rates = []
    names = ["pitch", "yaw"] + [f"exp[{j}]" for j in range(dims.exp)]
    for name, r in zip(names, ratios):
        if r == 0:
            warnings.warn(f"parameter {name} changes no pixel of the base-face segmentation; "
                          f"using the cap {cap}", RuntimeWarning, stacklevel=2)
        rates.append(rate_from_ratio(r, cap))
    return LrTable(rates[:2], rates[2:], identity_lr, ratios)


# -- fitting ------------------------------------------------------------------

@dataclass
class FitReport:
    initial: FaceParams
    final: FaceParams
    losses: list
    iterations: int
    lr_table: dict
    initial_loss: float
    final_loss: float
    seconds: float = 0.0
    identity_coords: list = field(default_factory=list)

    def to_dict(self, timing=True):
        d = {
            "format_version": FORMAT_VERSION,
            "initial": self.initial.to_dict(),
            "final": self.final.to_dict(),
            "losses": list(map(float, self.losses)),
            "iterations": self.iterations,
            "lr_table": self.lr_table,
            "initial_loss": float(self.initial_loss),
            "final_loss": float(self.final_loss),
            "identity_coords": list(map(float, self.identity_coords)),
        }
        if timing:
            d["seconds"] = float(self.seconds)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(FaceParams.from_dict(d["initial"]), FaceParams.from_dict(d["final"]), d["losses"],
                   d["iterations"], d["lr_table"], d["initial_loss"], d["final_loss"], d.get("seconds", 0.0),
                   d.get("identity_coords", []))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def align_input(image, landmarks):
    """Warp an input image onto the base-face landmark layout."""
    image = np.asarray(image, dtype=np.float32)
    ref = base_face(image.shape[0])[2]
    return warp_image(image, fit_affine(landmarks, ref))


def initial_state(sub, dims):
    """(pose, exp, normalized identity coordinates) used to start every fit."""
    return np.full(2, 0.5), np.zeros(dims.exp), np.clip(sub.project(sub.mean), 0, 1)


def _compose(pose, exp, id_cont, sub, dims):
    return FaceParams(np.clip(pose, 0, 1), np.clip(exp, 0, 1), np.clip(id_cont, 0, 1),
                      one_hot(sub.archetype, dims.id_disc))


def fit(image, gen, ext, sub, lrs, iters=30, landmarks=None, dims=None, lr_scale=0.1, attention=None,
        pose_lr_factor=0.5):
    """Recover face parameters for one image; returns a :class:`FitReport`.

    ``pose_lr_factor`` rescales the pose rates: the pose probes move half the
    range (0.5 -> 1) that the AU probes do (0 -> 1), so 0.5 puts both on a
    per-unit footing.
    """
    t0 = time.perf_counter()
    dims = dims or FaceDims(exp=len(lrs.exp), id_cont=sub.dim, id_disc=sub.id_disc)
    if gen.input_dim != dims.total:
        raise DimensionError(f"generator input {gen.input_dim} does not match parameter size {dims.total}")
    if iters < 0:
        raise ContractError("iters must be >= 0")
    image = np.asarray(image, dtype=np.float32)
    if landmarks is not None:
        image = align_input(image, landmarks)
    pose0, exp0, c0 = initial_state(sub, dims)
    init = _compose(pose0, exp0, sub.backproject(c0), sub, dims)

    f32 = np.float32
    pose = Tensor(pose0[None], requires_grad=True, dtype=f32)
    exp = Tensor(exp0[None], requires_grad=True, dtype=f32)
    coords = Tensor(c0[None], requires_grad=True, dtype=f32)
    disc = Tensor(one_hot(sub.archetype, dims.id_disc)[None], dtype=f32)
    variables = [pose, exp, coords]
    rates = [np.asarray(lrs.pose, np.float32)[None] * (lr_scale * pose_lr_factor),
             np.asarray(lrs.exp, np.float32)[None] * lr_scale,
             np.full((1, sub.k), lrs.identity * lr_scale, np.float32)]

    with dc.no_grad():
        target = extract(ext, image, attention)

    def loss_at():
        identity = dc.clamp(sub.backproject_tensor(coords), 0.0, 1.0)
        y = dc.concat([pose, exp, identity, disc], axis=1)
        return feature_distance(extract(ext, gen.forward(y), attention), target)

    losses = []
    for it in range(iters):
        for v in variables:
            v.grad = None
        loss = loss_at()
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError(f"non-finite loss at iteration {it}",
                               report=_report(init, pose, exp, coords, sub, dims, losses, it, lrs, value, t0))
        losses.append(value)
        loss.backward()
        dc.sgd_step(variables, rates)
        for v in variables:
            np.clip(v.data, 0, 1, out=v.data)
    with dc.no_grad():
        final_loss = loss_at().item()
    if not np.isfinite(final_loss):
        raise NumericError("non-finite final loss",
                           report=_report(init, pose, exp, coords, sub, dims, losses, iters, lrs, final_loss, t0))
    return _report(init, pose, exp, coords, sub, dims, losses, iters, lrs, final_loss, t0)


def _report(init, pose, exp, coords, sub, dims, losses, iters, lrs, final_loss, t0):
    c = coords.data[0].astype(np.float64)
    final = _compose(pose.data[0].astype(np.float64), exp.data[0].astype(np.float64), sub.backproject(c), sub, dims)
    return FitReport(init, final, list(losses), iters, lrs.to_dict(),
                     losses[0] if losses else final_loss, final_loss, time.perf_counter() - t0, c.tolist())


def transfer(identity_source, expression_source):
    """Pose and AUs from ``expression_source`` with the identity of ``identity_source``."""
    identity_source.validate()
    expression_source.validate()
    return FaceParams(expression_source.pose.copy(), expression_source.exp.copy(),
                      identity_source.id_cont.copy(), identity_source.id_disc.copy())


__all__ = [
    "FitReport", "LrTable", "SubspaceModel", "align_input", "build_subspace", "compute_lr_table",
    "fit", "initial_state", "rate_from_ratio", "transfer",
]
