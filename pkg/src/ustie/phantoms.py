"""Deterministic simulation scenes: apertures, intensities, true phases.

All generators share one coordinate convention: rx, ry are normalized
coordinates spanning [-1, 1) across the grid with the value 0 exactly at
pixel (size//2, size//2), so formula constants quoted in tests land on
exact pixels. Regeneration is bit-identical; the one pseudo-random phase
uses a fixed seed and a documented spectrum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ApertureMask, Grid2D

# irregular non-convex aperture outline for the astigmatism scene:
# polar vertices (degrees, radius in normalized units) around an
# off-center point, sized so the quadratic phase at the rim stays small
# enough for sub-0.01 rad recovery at the default stopping tolerance
_APERTURE_ANGLES_DEG = (0.0, 38.0, 75.0, 110.0, 150.0, 185.0, 225.0, 262.0, 300.0, 335.0)
_APERTURE_RADII = (0.81, 0.738, 0.828, 0.63, 0.783, 0.819, 0.675, 0.522, 0.774, 0.801)
_APERTURE_CENTER = (0.02, -0.03)

_PHASE_SEED = 20240517
_PHASE_SPECTRUM_SIGMA = 6.0  # cycles per grid, Gaussian low-pass
_PHASE_PEAK_TO_VALLEY = 3.0  # radians

_GAUSS_APERTURE_RADIUS = 0.9  # fraction of half-width
_DEFOCUS_APERTURE_RADIUS = 0.85
_INV_GAUSS_SIGMA = 0.15  # normalized units


@dataclass(frozen=True)
class Phantom:
    """A simulation scene: in-focus intensity, true phase, scoring mask."""

    intensity: Grid2D
    phase: Grid2D
    aperture: ApertureMask
    name: str

    def __post_init__(self):
        from .core import require_same_geometry

        require_same_geometry(self.intensity, self.phase, self.aperture.mask)
        inten = self.intensity.data
        if inten.min() < 0 or inten.max() > 1:
            raise ValueError("phantom intensity must lie in [0, 1]")
        if not self.name:
            raise ValueError("phantom needs a name")


def _normalized_coords(size: int):
    r = (np.arange(size) - size / 2) / (size / 2)
    return np.meshgrid(r, r)  # rx varies along columns, ry along rows


def _polygon_mask(rx: np.ndarray, ry: np.ndarray) -> np.ndarray:
    cx, cy = _APERTURE_CENTER
    ang = np.deg2rad(_APERTURE_ANGLES_DEG)
    vx = cx + np.asarray(_APERTURE_RADII) * np.cos(ang)
    vy = cy + np.asarray(_APERTURE_RADII) * np.sin(ang)
    inside = np.zeros(rx.shape, dtype=bool)
    n = len(vx)
    for i in range(n):  # even-odd ray cast against each edge
        x1, y1 = vx[i], vy[i]
        x2, y2 = vx[(i + 1) % n], vy[(i + 1) % n]
        crosses = (y1 > ry) != (y2 > ry)
        denom = np.where(crosses, y2 - y1, 1.0)
        x_at = x1 + (ry - y1) * (x2 - x1) / denom
        inside ^= crosses & (rx < x_at)
    return inside


def _check_size(size: int) -> None:
    if size < 64:
        raise ValueError(f"phantom grids start at 64 pixels, got {size}")


def astigmatism_phantom(size: int, pitch: float) -> Phantom:
    """Shifted astigmatic phase inside an irregular hard aperture.

    phi = 10 rx^2 - 10 ry^2 - 0.7 rx + 2 ry + 0.82: the two quadratic
    terms cancel in the Laplacian, so on uniform interior intensity the
    measurable derivative signal lives entirely on the aperture edge.
    """
    _check_size(size)
    rx, ry = _normalized_coords(size)
    phase = 10 * rx**2 - 10 * ry**2 - 0.7 * rx + 2 * ry + 0.82
    mask = _polygon_mask(rx, ry)
    intensity = mask.astype(np.float64)
    return Phantom(
        intensity=Grid2D(intensity, pitch),
        phase=Grid2D(phase, pitch),
        aperture=ApertureMask(Grid2D(mask, pitch)),
        name="astigmatism",
    )


def gaussian_beam_phantom(size: int, pitch: float, sigma: float = 1.0 / 3.0) -> Phantom:
    """Gaussian intensity in a circular hard aperture, smooth bump phase.

    ``sigma`` is the Gaussian width as a fraction of the aperture radius;
    the default 1/3 leaves exp(-4.5) ~ 1% of peak intensity at the rim.
    """
    _check_size(size)
    if not (0 < sigma <= 1):
        raise ValueError(f"sigma must be in (0, 1], got {sigma}")
    rx, ry = _normalized_coords(size)
    rho2 = rx**2 + ry**2
    mask = rho2 <= _GAUSS_APERTURE_RADIUS**2
    width2 = (sigma * _GAUSS_APERTURE_RADIUS) ** 2
    intensity = np.where(mask, np.exp(-rho2 / (2 * width2)), 0.0)
    phase = 1.5 * np.exp(-((rx - 0.25) ** 2 + (ry - 0.18) ** 2) / (2 * 0.30**2)) + 1.0 * np.exp(
        -((rx + 0.28) ** 2 + (ry + 0.22) ** 2) / (2 * 0.38**2)
    )
    return Phantom(
        intensity=Grid2D(intensity, pitch),
        phase=Grid2D(phase, pitch),
        aperture=ApertureMask(Grid2D(mask, pitch)),
        name="gaussian-beam",
    )


def inverse_gaussian_phantom(size: int, pitch: float, depth: float = 1.0) -> Phantom:
    """Frame-filling intensity with a Gaussian dip, pseudo-random phase.

    depth = 1 puts exactly one zero-intensity pixel at the center; the
    intensity returns to 1 within 1e-10 at the border, so the scene is
    periodic-friendly. The phase is seeded white noise low-passed by a
    Gaussian of sigma 6 cycles/grid, mean-removed, scaled to 3 rad
    peak-to-valley.
    """
    _check_size(size)
    if not (0 <= depth <= 1):
        raise ValueError(f"depth must be in [0, 1], got {depth}")
    rx, ry = _normalized_coords(size)
    rho2 = rx**2 + ry**2
    intensity = 1.0 - depth * np.exp(-rho2 / (2 * _INV_GAUSS_SIGMA**2))

    rng = np.random.default_rng(_PHASE_SEED)
    white = rng.standard_normal((size, size))
    cyc = np.fft.fftfreq(size) * size
    cyc2 = cyc[None, :] ** 2 + cyc[:, None] ** 2
    lowpass = np.exp(-cyc2 / (2 * _PHASE_SPECTRUM_SIGMA**2))
    lowpass[0, 0] = 0.0
    phase = np.fft.ifft2(np.fft.fft2(white) * lowpass).real
    phase -= phase.mean()
    phase *= _PHASE_PEAK_TO_VALLEY / (phase.max() - phase.min())

    return Phantom(
        intensity=Grid2D(intensity, pitch),
        phase=Grid2D(phase, pitch),
        aperture=ApertureMask.full(size, size, pitch),
        name="inverse-gaussian",
    )


def defocus_phantom(size: int, pitch: float, coefficient: float = 10.0) -> Phantom:
    """Quadratic phase over a uniform circular aperture.

    phi = coefficient * rho^2 with rho normalized to the aperture radius,
    so the phase at the rim equals the coefficient. The canonical case
    whose derivative signal concentrates entirely at the boundary.
    """
    _check_size(size)
    rx, ry = _normalized_coords(size)
    rho2 = (rx**2 + ry**2) / _DEFOCUS_APERTURE_RADIUS**2
    mask = rho2 <= 1.0
    phase = coefficient * rho2
    intensity = mask.astype(np.float64)
    return Phantom(
        intensity=Grid2D(intensity, pitch),
        phase=Grid2D(phase, pitch),
        aperture=ApertureMask(Grid2D(mask, pitch)),
        name="defocus",
    )
