"""Core types for polarized imagery and per-pixel sinusoid estimation.

The intensity seen through a rotating linear polarizer follows

    I(a) = i_mean + amplitude * cos(2 * (a - phase))

which is pi-periodic in both the polarizer angle ``a`` and the phase.
All phases here live in [0, pi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFit, DimensionMismatch

CANONICAL_ANGLES = (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4)

# pixels dimmer than this are considered unfit for a ratio-based DoP
DEFAULT_INTENSITY_EPS = 1e-6


def wrap_half_turn(angle):
    """Normalize an angle (scalar or array) into [0, pi)."""
    return np.mod(angle, np.pi)


@dataclass(frozen=True)
class PolarizerAngle:
    """Transmission-axis angle of the linear filter, stored in [0, pi)."""

    radians: float

    def __post_init__(self):
        if not np.isfinite(self.radians):
            raise ValueError("polarizer angle must be finite")
        object.__setattr__(self, "radians", float(wrap_half_turn(self.radians)))


@dataclass
class PolarizedStack:
    """H x W x K stack of intensities taken at K >= 3 polarizer angles."""

    angles: list
    intensities: np.ndarray

    def __post_init__(self):
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        if self.intensities.ndim != 3:
            raise DimensionMismatch("intensities must be H x W x K")
        if len(self.angles) < 3:
            raise ValueError("at least 3 polarizer angles are required")
        if self.intensities.shape[2] != len(self.angles):
            raise DimensionMismatch("channel count does not match angle count")
        rads = np.array([a.radians for a in self.angles])
        diffs = np.abs(rads[:, None] - rads[None, :])
        diffs = np.minimum(diffs, np.pi - diffs)
        if np.any(diffs[~np.eye(len(rads), dtype=bool)] < 1e-12):
            raise ValueError("polarizer angles must be pairwise distinct mod pi")
        if not np.all(np.isfinite(self.intensities)) or np.any(self.intensities < 0):
            raise ValueError("intensities must be finite and nonnegative")

    @property
    def height(self):
        return self.intensities.shape[0]

    @property
    def width(self):
        return self.intensities.shape[1]

    @property
    def angle_radians(self):
        return np.array([a.radians for a in self.angles])


@dataclass
class SinusoidParams:
    """(i_mean, amplitude, phase) of the polarizer sinusoid for one pixel."""

    i_mean: float
    amplitude: float
    phase: float

    def __post_init__(self):
        if self.i_mean < 0 or self.amplitude < 0:
            raise ValueError("i_mean and amplitude must be nonnegative")
        if self.amplitude > self.i_mean + 1e-12 * max(1.0, self.i_mean):
            raise ValueError("amplitude may not exceed i_mean (I_min would be negative)")
        self.phase = float(wrap_half_turn(self.phase))

    @property
    def i_max(self):
        return self.i_mean + self.amplitude

    @property
    def i_min(self):
        return self.i_mean - self.amplitude


@dataclass
class Mask:
    """Boolean foreground map; True marks pixels belonging to the object."""

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise DimensionMismatch("mask must be 2-D")

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @classmethod
    def full(cls, height, width):
        return cls(np.ones((height, width), dtype=bool))


@dataclass
class PolarizationMap:
    """Per-pixel phase, degree of linear polarization, and total intensity."""

    phi: np.ndarray
    rho: np.ndarray
    intensity: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        self.intensity = np.asarray(self.intensity, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        shapes = {a.shape for a in (self.phi, self.rho, self.intensity, self.valid)}
        if len(shapes) != 1 or self.phi.ndim != 2:
            raise DimensionMismatch("phi, rho, intensity, valid must share an H x W shape")

    @property
    def height(self):
        return self.phi.shape[0]

    @property
    def width(self):
        return self.phi.shape[1]


@dataclass
class NormalMap:
    """H x W field of unit camera-space normals plus a foreground mask.

    Frame convention: x along +columns, y along +rows, z toward the camera.
    """

    vectors: np.ndarray
    mask: Mask = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 3 or self.vectors.shape[2] != 3:
            raise DimensionMismatch("normals must be H x W x 3")
        if self.mask is None:
            self.mask = Mask.full(*self.vectors.shape[:2])
        if self.mask.bits.shape != self.vectors.shape[:2]:
            raise DimensionMismatch("mask shape does not match normal field")

    @property
    def height(self):
        return self.vectors.shape[0]

    @property
    def width(self):
        return self.vectors.shape[1]


@dataclass
class FitResult:
    """Sinusoid fit output; phase_valid is False when amplitude ~ 0."""

    params: SinusoidParams
    phase_valid: bool = True


def eval_sinusoid(params: SinusoidParams, angle: PolarizerAngle) -> float:
    """Intensity through the polarizer at the given transmission-axis angle."""
    return params.i_mean + params.amplitude * np.cos(2.0 * (angle.radians - params.phase))


def _params_from_stokes(s0, s1, s2):
    """Map (s0, s1, s2) combinations to (i_mean, amplitude, phase) arrays."""
    i_mean = s0 / 2.0
    amplitude = np.hypot(s1, s2) / 2.0
    phase = wrap_half_turn(0.5 * np.arctan2(s2, s1))
    return i_mean, amplitude, phase


def _is_canonical_quad(radians):
    if len(radians) != 4:
        return False
    return bool(np.allclose(np.sort(radians), CANONICAL_ANGLES, atol=1e-12))


def fit_sinusoid(samples, method="least_squares") -> FitResult:
    """Recover (i_mean, amplitude, phase) from >= 3 (angle, intensity) samples.

    ``closed_form_quad`` uses the Stokes combinations of the canonical
    {0, 45, 90, 135} degree set; ``least_squares`` solves the linear system in
    (i_mean, amplitude*cos 2phase, amplitude*sin 2phase) for any angle set.
    """
    if len(samples) < 3:
        raise DegenerateFit("need at least 3 samples")
    radians = np.array([a.radians for a, _ in samples])
    values = np.array([float(v) for _, v in samples])

    if method == "closed_form_quad":
        if not _is_canonical_quad(radians):
            raise ValueError("closed_form_quad requires the {0,45,90,135} degree angle set")
        order = np.argsort(radians)
        i0, i45, i90, i135 = values[order]
        s0 = (i0 + i45 + i90 + i135) / 2.0
        s1 = i0 - i90
        s2 = i45 - i135
    elif method == "least_squares":
        design = np.stack([np.ones_like(radians), np.cos(2 * radians), np.sin(2 * radians)], axis=1)
        coef, _, rank, _ = np.linalg.lstsq(design, values, rcond=None)
        if rank < 3:
            raise DegenerateFit("angles are collinear mod pi; design matrix rank-deficient")
        s0, s1, s2 = 2.0 * coef[0], 2.0 * coef[1], 2.0 * coef[2]
    else:
        raise ValueError(f"unknown fit method: {method!r}")

    i_mean, amplitude, phase = _params_from_stokes(s0, s1, s2)
    # noise can push the amplitude a hair past the mean; the params type rejects that
    amplitude = min(amplitude, i_mean) if i_mean > 0 else 0.0
    phase_valid = amplitude > 1e-12 * max(1.0, i_mean)
    if not phase_valid:
        phase = 0.0
    return FitResult(SinusoidParams(float(i_mean), float(amplitude), float(phase)), phase_valid)


def fit_stack(stack: PolarizedStack, mask: Mask = None, method="closed_form_quad",
              intensity_eps=DEFAULT_INTENSITY_EPS) -> PolarizationMap:
    """Fit the sinusoid at every foreground pixel of a stack.

    Pixels with near-zero mean intensity, or whose fitted amplitude exceeds the
    mean (DoP ratio above 1), are flagged invalid rather than raised on.
    """
    if mask is None:
        mask = Mask.full(stack.height, stack.width)
    if (mask.height, mask.width) != (stack.height, stack.width):
        raise DimensionMismatch("mask and stack dimensions disagree")

    radians = stack.angle_radians
    intens = stack.intensities  # H x W x K

    if method == "closed_form_quad":
        if not _is_canonical_quad(radians):
            raise ValueError("closed_form_quad requires the {0,45,90,135} degree angle set")
        order = np.argsort(radians)
        i0 = intens[:, :, order[0]]
        i45 = intens[:, :, order[1]]
        i90 = intens[:, :, order[2]]
        i135 = intens[:, :, order[3]]
        s0 = (i0 + i45 + i90 + i135) / 2.0
        s1 = i0 - i90
        s2 = i45 - i135
    elif method == "least_squares":
        design = np.stack([np.ones_like(radians), np.cos(2 * radians), np.sin(2 * radians)], axis=1)
        pinv = np.linalg.pinv(design)
        if np.linalg.matrix_rank(design) < 3:
            raise DegenerateFit("angles are collinear mod pi")
        coef = np.einsum("jk,hwk->hwj", pinv, intens)
        s0 = 2.0 * coef[:, :, 0]
        s1 = 2.0 * coef[:, :, 1]
        s2 = 2.0 * coef[:, :, 2]
    else:
        raise ValueError(f"unknown fit method: {method!r}")

    i_mean, amplitude, phase = _params_from_stokes(s0, s1, s2)

    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(i_mean > 0, amplitude / np.where(i_mean > 0, i_mean, 1.0), 0.0)
    valid = mask.bits & (i_mean >= intensity_eps) & (rho <= 1.0)
    rho = np.where(valid, rho, 0.0)
    phi = np.where(valid, phase, 0.0)
    return PolarizationMap(phi=phi, rho=rho, intensity=2.0 * i_mean, valid=valid)
