"""Fresnel degree-of-polarization relations and their numeric inversion.

The diffuse relation is strictly increasing in zenith angle, so it inverts by
bisection. The specular relation rises to exactly 1 at the Brewster angle
atan(eta) and falls back to 0 at grazing, so a given DoP generally has two
zenith roots, one on each flank of the peak.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError
from .polcore import PolarizationMap

BISECT_TOL = 1e-10  # radians
ETA_MAX = 3.0


class Mode(Enum):
    DIFFUSE = "diffuse"
    SPECULAR = "specular"


@dataclass(frozen=True)
class Material:
    """Refractive index plus the reflection mode that selects the DoP relation."""

    eta: float = 1.5
    mode: Mode = Mode.DIFFUSE

    def __post_init__(self):
        if not 1.0 < self.eta <= ETA_MAX:
            raise DomainError(f"refractive index must lie in (1, {ETA_MAX}], got {self.eta}")


@dataclass(frozen=True)
class SphericalNormal:
    """Surface normal as (azimuth, zenith); z points toward the camera."""

    azimuth: float
    zenith: float

    def __post_init__(self):
        if not 0.0 <= self.zenith <= np.pi / 2 + 1e-12:
            raise DomainError("zenith must lie in [0, pi/2]")
        object.__setattr__(self, "azimuth", float(np.mod(self.azimuth, 2 * np.pi)))
        object.__setattr__(self, "zenith", float(min(self.zenith, np.pi / 2)))

    def to_vector(self):
        st = np.sin(self.zenith)
        return np.array([st * np.cos(self.azimuth), st * np.sin(self.azimuth), np.cos(self.zenith)])


@dataclass
class ZenithSolution:
    """Zenith roots of a DoP inversion, sorted ascending."""

    candidates: list
    clamped: bool = False
    not_finite: bool = False


def _check_zenith(zenith):
    z = np.asarray(zenith, dtype=np.float64)
    if np.any(z < 0) or np.any(z > np.pi / 2 + 1e-12):
        raise DomainError("zenith must lie in [0, pi/2]")
    return z


def dop_diffuse(eta, zenith):
    """Degree of polarization of diffuse (body) reflection at the given zenith."""
    theta = _check_zenith(zenith)
    s2 = np.sin(theta) ** 2
    num = (eta - 1.0 / eta) ** 2 * s2
    den = 2.0 + 2.0 * eta**2 - (eta + 1.0 / eta) ** 2 * s2 + 4.0 * np.cos(theta) * np.sqrt(eta**2 - s2)
    return num / den


def dop_specular(eta, zenith):
    """Degree of polarization of specular (surface) reflection.

    Returns NaN where the denominator vanishes (cannot happen for eta <= 3 on
    [0, pi/2], but guarded anyway).
    """
    theta = _check_zenith(zenith)
    s2 = np.sin(theta) ** 2
    num = 2.0 * s2 * np.cos(theta) * np.sqrt(eta**2 - s2)
    den = eta**2 - s2 - eta**2 * s2 + 2.0 * s2**2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den != 0.0, num / np.where(den != 0.0, den, 1.0), np.nan)
    return out


def brewster_angle(eta):
    """Zenith at which specular reflection is fully polarized."""
    return np.arctan(eta)


def _bisect_increasing(fn, target, lo, hi, tol=BISECT_TOL):
    """Vectorized bisection for a function increasing on [lo, hi]."""
    lo = np.broadcast_to(np.float64(lo), np.shape(target)).copy()
    hi = np.broadcast_to(np.float64(hi), np.shape(target)).copy()
    # ~52 halvings of pi/2 reach 1e-16; stop early once below tol everywhere
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = fn(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < tol:
            break
    return 0.5 * (lo + hi)


def _bisect_decreasing(fn, target, lo, hi, tol=BISECT_TOL):
    return _bisect_increasing(lambda t: -fn(t), -np.asarray(target, dtype=np.float64), lo, hi, tol)


def invert_dop_diffuse_array(eta, rho):
    """Zenith angles solving the diffuse relation; clamps rho above the ceiling.

    Returns (theta, clamped) arrays.
    """
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho < 0) or np.any(rho > 1):
        raise DomainError("rho must lie in [0, 1]")
    ceiling = dop_diffuse(eta, np.pi / 2)
    clamped = rho > ceiling
    target = np.minimum(rho, ceiling)
    theta = _bisect_increasing(lambda t: dop_diffuse(eta, t), target, 0.0, np.pi / 2)
    theta = np.where(clamped, np.pi / 2, theta)
    theta = np.where(rho == 0.0, 0.0, theta)
    return theta, clamped


def invert_dop_specular_array(eta, rho, peak_tol=1e-9):
    """Both zenith roots of the specular relation per rho.

    Returns (theta_low, theta_high, clamped) with theta_low <= Brewster <=
    theta_high; for rho within peak_tol of 1 the two roots coincide at the
    Brewster angle. rho > 1 cannot occur (the peak is exactly 1).
    """
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho < 0) or np.any(rho > 1):
        raise DomainError("rho must lie in [0, 1]")
    peak = brewster_angle(eta)
    clamped = rho > 1.0 - peak_tol
    target = np.minimum(rho, 1.0)
    lo_root = _bisect_increasing(lambda t: dop_specular(eta, t), target, 0.0, peak)
    hi_root = _bisect_decreasing(lambda t: dop_specular(eta, t), target, peak, np.pi / 2)
    lo_root = np.where(clamped, peak, lo_root)
    hi_root = np.where(clamped, peak, hi_root)
    return lo_root, hi_root, clamped


def invert_dop(material: Material, rho: float) -> ZenithSolution:
    """Invert the material's DoP relation for a single rho value."""
    if not 0.0 <= rho <= 1.0:
        raise DomainError("rho must lie in [0, 1]")
    if material.mode is Mode.DIFFUSE:
        theta, clamped = invert_dop_diffuse_array(material.eta, rho)
        return ZenithSolution(candidates=[float(theta)], clamped=bool(clamped))
    lo, hi, clamped = invert_dop_specular_array(material.eta, rho)
    if clamped or abs(float(hi) - float(lo)) < BISECT_TOL:
        return ZenithSolution(candidates=[float(lo)], clamped=bool(clamped))
    return ZenithSolution(candidates=[float(lo), float(hi)], clamped=False)


def azimuth_candidates(phase, mode: Mode):
    """The two azimuths consistent with a fitted phase, pi apart, in [0, 2pi).

    Diffuse reflection leaves {phase, phase + pi}; specular shifts both by a
    quarter turn.
    """
    phase = float(phase)
    if not 0.0 <= phase < np.pi:
        raise DomainError("phase must lie in [0, pi)")
    if mode is Mode.DIFFUSE:
        first = phase
    else:
        first = np.mod(phase + np.pi / 2, 2 * np.pi)
    return [float(np.mod(first, 2 * np.pi)), float(np.mod(first + np.pi, 2 * np.pi))]


@dataclass
class CandidateField:
    """Per-pixel candidate normals from a polarization map.

    ``normals`` is H x W x 4 x 3; only the first ``counts[r, c]`` entries of
    row (r, c) are meaningful. Candidate order is (zenith asc) x (azimuth
    branch), so specular pixels list both sub- and super-Brewster roots.
    """

    normals: np.ndarray
    counts: np.ndarray
    clamped: np.ndarray
    not_finite: np.ndarray
    azimuths: np.ndarray  # H x W x 2
    zeniths: np.ndarray   # H x W x 2 (second column NaN when single root)

    def candidates(self, row, col):
        out = []
        for k in range(int(self.counts[row, col])):
            v = self.normals[row, col, k]
            zen = float(np.arccos(np.clip(v[2], -1.0, 1.0)))
            az = float(np.mod(np.arctan2(v[1], v[0]), 2 * np.pi))
            out.append(SphericalNormal(azimuth=az, zenith=zen))
        return out


def normals_from_polarization(pmap: PolarizationMap, material: Material) -> CandidateField:
    """Enumerate up to 4 candidate unit normals per valid pixel."""
    h, w = pmap.height, pmap.width
    rho = np.where(pmap.valid, pmap.rho, 0.0)
    phi = np.where(pmap.valid, pmap.phi, 0.0)

    zeniths = np.full((h, w, 2), np.nan)
    if material.mode is Mode.DIFFUSE:
        theta, clamped = invert_dop_diffuse_array(material.eta, rho)
        zeniths[:, :, 0] = theta
        n_zen = np.ones((h, w), dtype=np.int64)
    else:
        lo, hi, clamped = invert_dop_specular_array(material.eta, rho)
        zeniths[:, :, 0] = lo
        two = ~clamped & (np.abs(hi - lo) >= BISECT_TOL)
        zeniths[:, :, 1] = np.where(two, hi, np.nan)
        n_zen = np.where(two, 2, 1).astype(np.int64)

    if material.mode is Mode.DIFFUSE:
        az0 = phi
    else:
        az0 = np.mod(phi + np.pi / 2, 2 * np.pi)
    azimuths = np.stack([az0, np.mod(az0 + np.pi, 2 * np.pi)], axis=2)

    normals = np.zeros((h, w, 4, 3))
    counts = np.zeros((h, w), dtype=np.int64)
    for zi in range(2):
        theta = zeniths[:, :, zi]
        have = (~np.isnan(theta)) & pmap.valid
        st, ct = np.sin(theta), np.cos(theta)
        for ai in range(2):
            # zenith 0 makes azimuth irrelevant; keep only one copy of (0,0,1)
            sel = have if ai == 0 else have & (st != 0.0)
            alpha = azimuths[:, :, ai]
            vec = np.stack([st * np.cos(alpha), st * np.sin(alpha), ct], axis=2)
            slot = counts.copy()
            rr, cc = np.nonzero(sel)
            normals[rr, cc, slot[rr, cc]] = vec[rr, cc]
            counts[rr, cc] += 1

    not_finite = np.zeros((h, w), dtype=bool)
    if material.mode is Mode.SPECULAR:
        not_finite = pmap.valid & ~np.isfinite(dop_specular(material.eta, np.where(pmap.valid, zeniths[:, :, 0], 0.0)))
    return CandidateField(
        normals=normals,
        counts=np.where(pmap.valid, counts, 0),
        clamped=clamped & pmap.valid,
        not_finite=not_finite,
        azimuths=azimuths,
        zeniths=zeniths,
    )
