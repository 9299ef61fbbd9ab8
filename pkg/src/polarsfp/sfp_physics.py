"""Classical stack -> polarization map -> candidate normals -> one normal.

The azimuth (and, for specular pixels, zenith) ambiguity is resolved by an
explicit policy: an oracle picking the candidate closest to a reference field,
a convexity prior pointing normals away from a given center, or a fixed branch
index.

To keep the result exactly invariant under a global rescale of the input
intensities, the fitted (phi, rho) maps are rounded to f32 before inversion:
a scale factor only perturbs them at the f64-ulp level, far below f32
resolution, while the ~6e-8 relative rounding costs well under 1e-4 degrees
of normal accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyMask
from .fresnel import CandidateField, Material, Mode, brewster_angle, normals_from_polarization
from .polcore import Mask, NormalMap, PolarizationMap, PolarizedStack, fit_stack


@dataclass(frozen=True)
class Oracle:
    """Pick the candidate with the largest dot product against a reference."""

    reference: NormalMap


@dataclass(frozen=True)
class ConvexityPrior:
    """Pick the azimuth pointing away from a center (outward normals on a
    convex object); specular zenith pairs default to the sub-Brewster root."""

    center: tuple  # (row, col)
    sub_brewster: bool = True


@dataclass(frozen=True)
class FixedBranch:
    index: int = 0


@dataclass
class ReconstructionReport:
    normal_map: NormalMap
    invalid: np.ndarray            # pixels that fell back to (0, 0, 1)
    clamped_fraction: float
    invalid_fraction: float
    candidate_counts: np.ndarray


def _select_oracle(field: CandidateField, reference: NormalMap):
    dots = np.einsum("hwkc,hwc->hwk", field.normals, reference.vectors)
    dots = np.where(np.arange(4)[None, None, :] < field.counts[:, :, None], dots, -np.inf)
    return np.argmax(dots, axis=2)


def _select_convexity(field: CandidateField, policy: ConvexityPrior, material: Material):
    h, w = field.counts.shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    out_x = cols - policy.center[1]
    out_y = rows - policy.center[0]
    az = field.azimuths  # H x W x 2
    score = np.cos(az) * out_x[:, :, None] + np.sin(az) * out_y[:, :, None]
    az_pick = np.argmax(score, axis=2)

    if material.mode is Mode.DIFFUSE:
        return az_pick  # candidates ordered (z0,a0), (z0,a1)
    # specular order is (z_lo,a0), (z_lo,a1), (z_hi,a0), (z_hi,a1)
    two_zen = field.counts == 4
    zen_pick = np.where(two_zen & ~policy.sub_brewster, 1, 0)
    return zen_pick * 2 + az_pick


def reconstruct_physics(stack: PolarizedStack, mask: Mask, material: Material,
                        policy, fit_method="closed_form_quad") -> ReconstructionReport:
    """Reconstruct one normal per foreground pixel.

    Pixels whose sinusoid fit is ill-posed get the frontal normal (0, 0, 1)
    and are reported in ``invalid``.
    """
    if (mask.height, mask.width) != (stack.height, stack.width):
        raise DimensionMismatch("mask and stack dimensions disagree")
    if not np.any(mask.bits):
        raise EmptyMask("mask has no foreground pixels")
    if isinstance(policy, Oracle) and (
        policy.reference.height != stack.height or policy.reference.width != stack.width
    ):
        raise DimensionMismatch("oracle reference dimensions disagree with the stack")

    pmap = fit_stack(stack, mask, method=fit_method)
    # f32 canonicalization: see module docstring
    pmap = PolarizationMap(
        phi=np.minimum(pmap.phi.astype(np.float32).astype(np.float64), np.nextafter(np.pi, 0.0)),
        rho=np.minimum(pmap.rho.astype(np.float32).astype(np.float64), 1.0),
        intensity=pmap.intensity,
        valid=pmap.valid,
    )
    field = normals_from_polarization(pmap, material)

    if isinstance(policy, Oracle):
        pick = _select_oracle(field, policy.reference)
    elif isinstance(policy, ConvexityPrior):
        pick = _select_convexity(field, policy, material)
    elif isinstance(policy, FixedBranch):
        counts_safe = np.maximum(field.counts, 1)
        pick = np.mod(policy.index, counts_safe)
    else:
        raise TypeError(f"unknown policy {type(policy).__name__}")

    pick = np.minimum(pick, np.maximum(field.counts - 1, 0))
    h, w = field.counts.shape
    rr, cc = np.mgrid[0:h, 0:w]
    chosen = field.normals[rr, cc, pick]

    invalid = mask.bits & (field.counts == 0)
    chosen[invalid] = (0.0, 0.0, 1.0)
    chosen[~mask.bits] = 0.0

    n_fg = int(np.count_nonzero(mask.bits))
    return ReconstructionReport(
        normal_map=NormalMap(chosen, Mask(mask.bits.copy())),
        invalid=invalid,
        clamped_fraction=float(np.count_nonzero(field.clamped & mask.bits)) / n_fg,
        invalid_fraction=float(np.count_nonzero(invalid)) / n_fg,
        candidate_counts=field.counts,
    )
