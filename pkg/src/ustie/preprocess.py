"""Conditioning of measured focal stacks: aperture masks, dark-region fill.

Real in-focus images need a region-of-interest mask before solving. The
automatic path is histogram thresholding (Otsu) followed by a small
morphological cleanup: closing fills pinholes inside the aperture, and
keeping only the largest connected component drops isolated bright specks
outside it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import ApertureMask, Grid2D

OTSU = "otsu"
MANUAL = "manual"


@dataclass(frozen=True)
class ThresholdParams:
    """How to binarize an intensity image into an aperture mask."""

    method: str = OTSU
    value: float | None = None
    morphology_radius: int = 2

    def __post_init__(self):
        if self.method not in (OTSU, MANUAL):
            raise ValueError(f"method must be '{OTSU}' or '{MANUAL}', got {self.method!r}")
        if self.method == MANUAL and self.value is None:
            raise ValueError("manual thresholding needs a value")
        if self.morphology_radius < 0:
            raise ValueError("morphology_radius must be >= 0")


def _otsu_threshold(values: np.ndarray) -> float:
    """Histogram threshold maximizing between-class variance (256 bins)."""
    lo = float(values.min())
    hi = float(values.max())
    hist, edges = np.histogram(values, bins=256, range=(lo, hi))
    p = hist / hist.sum()
    centers = (edges[:-1] + edges[1:]) / 2
    w0 = np.cumsum(p)
    m = np.cumsum(p * centers)
    total_mean = m[-1]
    w1 = 1.0 - w0
    valid = (w0 > 0) & (w1 > 0)
    between = np.full(256, -1.0)
    np.divide(
        (total_mean * w0 - m) ** 2, w0 * w1, out=between, where=valid
    )
    split = int(np.argmax(between))
    return float(edges[split + 1])


def _disc(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    return (yy * yy + xx * xx) <= radius * radius


def threshold_aperture(
    intensity: Grid2D, params: ThresholdParams | None = None
) -> ApertureMask:
    """Binarize intensity into the aperture region.

    mask = intensity > threshold, then morphological closing with the
    configured radius, then retention of the largest connected component.
    Raises on a constant image (no threshold separates anything).
    """
    if params is None:
        params = ThresholdParams()
    values = intensity.data
    if values.max() == values.min():
        raise ValueError("constant image cannot be thresholded into an aperture")
    if params.method == MANUAL:
        if not (0 <= params.value <= values.max()):
            raise ValueError(
                f"manual threshold {params.value} outside [0, {values.max()}]"
            )
        threshold = float(params.value)
    else:
        threshold = _otsu_threshold(values)

    mask = values > threshold
    if params.morphology_radius > 0 and mask.any():
        structure = _disc(params.morphology_radius)
        # closing by hand: dilation (background border) then erosion with a
        # filled border, so masks touching the frame edge are not eaten
        mask = ndimage.binary_dilation(mask, structure=structure)
        mask = ndimage.binary_erosion(mask, structure=structure, border_value=1)
    labels, count = ndimage.label(mask)
    if count == 0:
        raise ValueError("thresholding produced an empty mask")
    if count > 1:
        sizes = np.bincount(labels.ravel())
        sizes[0] = 0
        mask = labels == int(np.argmax(sizes))
    return ApertureMask(Grid2D(mask, intensity.pitch))


def fill_dark_region(intensity: Grid2D, mask: ApertureMask, fill: float) -> Grid2D:
    """Replace intensity outside the mask with a small positive constant.

    This is what makes divide-by-intensity solvers runnable on data whose
    background is genuinely zero.
    """
    if not (fill > 0):
        raise ValueError(f"fill must be positive, got {fill}")
    if intensity.shape != mask.shape:
        raise ValueError("intensity and mask shapes disagree")
    return intensity.with_data(np.where(mask.mask.data, intensity.data, fill))
