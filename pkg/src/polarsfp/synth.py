"""Synthetic polarized scenes with exact ground-truth normals.

Orthographic camera looking down +z (z toward the camera), a frontal light,
constant albedo. Each foreground pixel's four polarizer channels are produced
by the same sinusoid/Fresnel model the reconstruction code inverts, so every
render doubles as a round-trip oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from .errors import IoError
from .fresnel import Material, Mode, dop_diffuse, dop_specular
from .polcore import CANONICAL_ANGLES, Mask, NormalMap, PolarizedStack, PolarizerAngle


@dataclass(frozen=True)
class Sphere:
    center: tuple  # (row, col) pixels
    radius: float


@dataclass(frozen=True)
class HeightField:
    """Sum of seeded Gaussian bumps evaluated over the full frame."""

    n_bumps: int = 4
    amplitude: float = 12.0
    sigma: float = 20.0
    seed: int = 0


@dataclass(frozen=True)
class Plane:
    """Tilted plane; tilt is the zenith of its normal, azimuth its direction."""

    tilt: float = 0.0
    azimuth: float = 0.0


@dataclass(frozen=True)
class Scene:
    geometry: object
    material: Material = Material()
    albedo: float = 0.8
    shading: str = "lambert_frontal"  # or "constant"

    def __post_init__(self):
        if not 0.0 < self.albedo <= 1.0:
            raise ValueError("albedo must lie in (0, 1]")
        if self.shading not in ("constant", "lambert_frontal"):
            raise ValueError(f"unknown shading model {self.shading!r}")


@dataclass(frozen=True)
class RenderConfig:
    height: int = 128
    width: int = 128
    angles: tuple = tuple(CANONICAL_ANGLES)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


# intensity scale / noise presets standing in for capture conditions
CONDITION_PRESETS = {
    "indoor": (1.0, 1.0),
    "sunny": (1.25, 1.5),
    "cloudy": (0.7, 0.8),
}


def ground_truth(scene: Scene, config: RenderConfig):
    """Analytic per-pixel unit normals and the coverage mask."""
    h, w = config.height, config.width
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    geom = scene.geometry

    if isinstance(geom, Sphere):
        cy, cx = geom.center
        x = (cols - cx) / geom.radius
        y = (rows - cy) / geom.radius
        r2 = x**2 + y**2
        fg = r2 <= 1.0
        z = np.sqrt(np.clip(1.0 - r2, 0.0, None))
        normals = np.stack([x, y, z], axis=2)
    elif isinstance(geom, HeightField):
        rng = np.random.default_rng(geom.seed)
        height_map = np.zeros((h, w))
        for _ in range(geom.n_bumps):
            cy = rng.uniform(0, h)
            cx = rng.uniform(0, w)
            amp = rng.uniform(-geom.amplitude, geom.amplitude)
            height_map += amp * np.exp(-((rows - cy) ** 2 + (cols - cx) ** 2) / (2 * geom.sigma**2))
        gy, gx = np.gradient(height_map)
        normals = np.stack([-gx, -gy, np.ones_like(gx)], axis=2)
        fg = np.ones((h, w), dtype=bool)
    elif isinstance(geom, Plane):
        n = np.array([
            np.sin(geom.tilt) * np.cos(geom.azimuth),
            np.sin(geom.tilt) * np.sin(geom.azimuth),
            np.cos(geom.tilt),
        ])
        normals = np.broadcast_to(n, (h, w, 3)).copy()
        fg = np.ones((h, w), dtype=bool)
    else:
        raise TypeError(f"unknown geometry {type(geom).__name__}")

    norms = np.linalg.norm(normals, axis=2)
    normals = normals / np.where(norms > 0, norms, 1.0)[:, :, None]
    normals[~fg] = 0.0
    return NormalMap(normals, Mask(fg)), Mask(fg)


def render(scene: Scene, config: RenderConfig) -> PolarizedStack:
    """Polarized stack consistent with the scene's ground-truth normals."""
    nmap, mask = ground_truth(scene, config)
    fg = mask.bits
    n = nmap.vectors
    zenith = np.arccos(np.clip(n[:, :, 2], -1.0, 1.0))
    azimuth = np.arctan2(n[:, :, 1], n[:, :, 0])

    if scene.material.mode is Mode.DIFFUSE:
        rho = dop_diffuse(scene.material.eta, zenith)
        phase = np.mod(azimuth, np.pi)
    else:
        rho = dop_specular(scene.material.eta, zenith)
        phase = np.mod(azimuth - np.pi / 2, np.pi)

    if scene.shading == "constant":
        shade = np.ones_like(zenith)
    else:
        shade = np.clip(n[:, :, 2], 0.0, None)
    i_unpol = scene.albedo * shade

    angles = np.array([a.radians if isinstance(a, PolarizerAngle) else float(a) for a in config.angles])
    # I(a) = I_u * (1 + rho * cos(2(a - phase)))
    channels = i_unpol[:, :, None] * (
        1.0 + rho[:, :, None] * np.cos(2.0 * (angles[None, None, :] - phase[:, :, None]))
    )
    channels[~fg] = 0.0

    if config.noise_sigma > 0:
        rng = np.random.default_rng(config.seed)
        channels = channels + rng.normal(0.0, config.noise_sigma, size=channels.shape)
    channels = np.clip(channels, 0.0, None)

    return PolarizedStack(
        angles=[PolarizerAngle(a) for a in angles],
        intensities=channels,
    )


def random_scene(rng, height, width, eta=1.5, mode=Mode.DIFFUSE):
    """A randomized sphere or height field that fits the frame."""
    material = Material(eta=eta, mode=mode)
    albedo = float(rng.uniform(0.5, 1.0))
    if rng.uniform() < 0.5:
        radius = float(rng.uniform(0.25, 0.45) * min(height, width))
        cy = float(rng.uniform(radius, height - radius))
        cx = float(rng.uniform(radius, width - radius))
        geometry = Sphere(center=(cy, cx), radius=radius)
    else:
        geometry = HeightField(
            n_bumps=int(rng.integers(3, 7)),
            amplitude=float(rng.uniform(6.0, 16.0)),
            sigma=float(rng.uniform(0.1, 0.25) * min(height, width)),
            seed=int(rng.integers(0, 2**31)),
        )
    return Scene(geometry=geometry, material=material, albedo=albedo)


def _geometry_label(geom):
    return type(geom).__name__.lower()


def make_dataset(n_scenes, config: RenderConfig, out_dir, seed=0, eta=1.5,
                 mode=Mode.DIFFUSE, views=("front",)):
    """Render n_scenes randomized scenes into the dataio directory layout.

    Conditions rotate through the three capture presets; the manifest lists one
    tab-separated record per scene. Deterministic given (config, seed).
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(str(exc)) from exc

    manifest_lines = []
    for idx in range(n_scenes):
        rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
        scene = random_scene(rng, config.height, config.width, eta=eta, mode=mode)
        condition = dataio.CONDITIONS[idx % len(dataio.CONDITIONS)]
        scale, noise_mult = CONDITION_PRESETS[condition]
        scene = Scene(
            geometry=scene.geometry,
            material=scene.material,
            albedo=min(1.0, scene.albedo * scale),
            shading=scene.shading,
        )
        noise_sigma = config.noise_sigma * noise_mult
        scene_cfg = RenderConfig(
            height=config.height, width=config.width, angles=config.angles,
            noise_sigma=noise_sigma, seed=int(rng.integers(0, 2**31)),
        )
        nmap, mask = ground_truth(scene, scene_cfg)
        stack = render(scene, scene_cfg)
        object_id = f"scene{idx:03d}"
        for view in views:
            record = dataio.SampleRecord(
                object_id=object_id, condition=condition, view=view,
                stack=stack, normals=nmap, mask=mask,
            )
            dataio.save_sample(record, out)
        manifest_lines.append(
            f"{idx}\t{_geometry_label(scene.geometry)}\t{eta}\t{mode.value}\t{noise_sigma}"
        )
    with open(out / "manifest.txt", "w") as f:
        for line in manifest_lines:
            f.write(line + "\n")
    return out
