"""Face parameter vectors and the AU catalogue."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError

POSE_RANGE_DEG = 28.6

# Class ids of the segmentation maps.
BACKGROUND, SKIN, BROW, EYE, NOSE, LIP, INNER_MOUTH = range(7)
CLASS_NAMES = ("background", "skin", "brow", "eye", "nose", "lip", "inner_mouth")
NUM_CLASSES = len(CLASS_NAMES)


@dataclass(frozen=True)
class AU:
    name: str
    facs: str
    region: int
    sign: int  # +1: region pixel count grows with intensity, -1: shrinks
    half: str = ""  # restrict the count to the "left"/"right" image half


AU_CATALOGUE = (
    AU("eye_blink_l", "45", EYE, -1, "left"),
    AU("eye_blink_r", "45-2", EYE, -1, "right"),
    AU("inner_brow_raiser", "1", BROW, +1),
    AU("outer_brow_raiser_l", "2", BROW, +1, "left"),
    AU("outer_brow_raiser_r", "3", BROW, +1, "right"),
    AU("brow_lowerer", "4", BROW, +1),
    AU("jaw_open", "27", INNER_MOUTH, +1),
    AU("upper_lip_raiser", "10", INNER_MOUTH, +1),
    AU("lip_corner_puller", "12", LIP, +1),
    AU("lip_corner_depressor", "15", LIP, +1),
    AU("lip_pucker", "18", LIP, -1),
    AU("jaw_left", "47", LIP, +1, "left"),
)

MAX_EXP = len(AU_CATALOGUE)
MAX_ID_CONT = 16
MAX_ID_DISC = 4


@dataclass(frozen=True)
class FaceDims:
    """Dimension configuration of the parameter vector."""

    exp: int = 12
    id_cont: int = 16
    id_disc: int = 4

    def __post_init__(self):
        if not 1 <= self.exp <= MAX_EXP:
            raise ValidationError(f"exp dims must be in [1, {MAX_EXP}]")
        if not 1 <= self.id_cont <= MAX_ID_CONT:
            raise ValidationError(f"id_cont dims must be in [1, {MAX_ID_CONT}]")
        if not 1 <= self.id_disc <= MAX_ID_DISC:
            raise ValidationError(f"id_disc dims must be in [1, {MAX_ID_DISC}]")

    @property
    def total(self):
        return 2 + self.exp + self.id_cont + self.id_disc

    @property
    def identity(self):
        return self.id_cont + self.id_disc

    def slices(self):
        e0 = 2
        i0 = e0 + self.exp
        d0 = i0 + self.id_cont
        return {
            "pose": slice(0, 2),
            "exp": slice(e0, i0),
            "id_cont": slice(i0, d0),
            "id_disc": slice(d0, d0 + self.id_disc),
        }

    def to_dict(self):
        return {"E": self.exp, "Ic": self.id_cont, "D": self.id_disc}

    @classmethod
    def from_dict(cls, d):
        return cls(exp=int(d["E"]), id_cont=int(d["Ic"]), id_disc=int(d["D"]))


@dataclass
class FaceParams:
    """Pose (pitch, yaw), AU intensities, continuous and one-hot identity; all in [0, 1]."""

    pose: np.ndarray
    exp: np.ndarray
    id_cont: np.ndarray
    id_disc: np.ndarray = field(default_factory=lambda: one_hot(0, 4))

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64).reshape(-1)
        self.exp = np.asarray(self.exp, dtype=np.float64).reshape(-1)
        self.id_cont = np.asarray(self.id_cont, dtype=np.float64).reshape(-1)
        self.id_disc = np.asarray(self.id_disc, dtype=np.float64).reshape(-1)

    @property
    def dims(self):
        return FaceDims(exp=len(self.exp), id_cont=len(self.id_cont), id_disc=len(self.id_disc))

    @property
    def archetype(self):
        return int(np.argmax(self.id_disc))

    def validate(self):
        if self.pose.shape != (2,):
            raise ValidationError("pose must have 2 entries (pitch, yaw)")
        self.dims  # noqa: B018 - validates dimension ranges
        for name in ("pose", "exp", "id_cont", "id_disc"):
            v = getattr(self, name)
            if not np.all(np.isfinite(v)) or v.min(initial=0) < 0 or v.max(initial=0) > 1:
                raise ValidationError(f"{name} values must lie in [0, 1]")
        if not (np.count_nonzero(self.id_disc == 1) == 1 and np.count_nonzero(self.id_disc) == 1):
            raise ValidationError("id_disc must be one-hot")
        return self

    def to_vector(self):
        return np.concatenate([self.pose, self.exp, self.id_cont, self.id_disc])

    @classmethod
    def from_vector(cls, vec, dims):
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        if vec.size != dims.total:
            raise ValidationError(f"vector of length {vec.size} does not match dims total {dims.total}")
        sl = dims.slices()
        return cls(vec[sl["pose"]], vec[sl["exp"]], vec[sl["id_cont"]], vec[sl["id_disc"]])

    def to_dict(self):
        return {
            "pose": self.pose.tolist(),
            "exp": self.exp.tolist(),
            "id_cont": self.id_cont.tolist(),
            "id_disc": self.id_disc.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["pose"], d["exp"], d["id_cont"], d["id_disc"])

    def copy(self):
        return FaceParams(self.pose.copy(), self.exp.copy(), self.id_cont.copy(), self.id_disc.copy())

    def __eq__(self, other):
        if not isinstance(other, FaceParams):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("pose", "exp", "id_cont", "id_disc"))


def one_hot(index, size):
    v = np.zeros(size)
    v[index] = 1.0
    return v


def pose_to_degrees(u):
    """Map a normalized pose value in [0, 1] to degrees in [-28.6, 28.6]."""
    u = np.clip(u, 0.0, 1.0)
    return (2.0 * u - 1.0) * POSE_RANGE_DEG


def degrees_to_pose(deg):
    return np.clip(deg / (2 * POSE_RANGE_DEG) + 0.5, 0.0, 1.0)


def base_params(dims=FaceDims()):
    """Frontal, expressionless, identity at 0.5 and archetype 0."""
    return FaceParams(
        pose=np.full(2, 0.5),
        exp=np.zeros(dims.exp),
        id_cont=np.full(dims.id_cont, 0.5),
        id_disc=one_hot(0, dims.id_disc),
    )


# AR(1) correlation: adjacent dims correlate at 0.6 and the matrix stays positive definite.
PLAUSIBLE_STD = 0.15
PLAUSIBLE_RHO = 0.6


def plausible_covariance(n):
    idx = np.arange(n)
    return PLAUSIBLE_STD ** 2 * PLAUSIBLE_RHO ** np.abs(idx[:, None] - idx[None, :])


def sample_params(rng_seed, neutral_only=False, plausible=False, dims=FaceDims()):
    """Draw a random parameter vector.

    Uniform on [0, 1] per dimension by default. ``neutral_only`` zeroes the AU
    block; ``plausible`` draws the continuous identity from a truncated
    correlated Gaussian around 0.5 instead of the uniform box.
    """
    rng = np.random.default_rng(rng_seed)
    pose = rng.uniform(0, 1, 2)
    exp = np.zeros(dims.exp) if neutral_only else rng.uniform(0, 1, dims.exp)
    if plausible:
        chol = np.linalg.cholesky(plausible_covariance(dims.id_cont))
        while True:
            id_cont = 0.5 + chol @ rng.standard_normal(dims.id_cont)
            if id_cont.min() >= 0 and id_cont.max() <= 1:
                break
    else:
        id_cont = rng.uniform(0, 1, dims.id_cont)
    id_disc = one_hot(int(rng.integers(dims.id_disc)), dims.id_disc)
    return FaceParams(pose, exp, id_cont, id_disc)
