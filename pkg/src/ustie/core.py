"""Grid data model, optical configuration, masks, and phase error metric.

Conventions fixed here and followed everywhere else in the package:

* fields are row-major with (row = y, col = x) indexing;
* all lengths are meters, all phases radians — no normalized grid units;
* a field is immutable after construction and safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Grid2D:
    """Uniformly sampled 2D scalar field with a physical pixel pitch.

    ``data`` is a (height, width) array, real or complex. Real-valued grids
    must be finite everywhere; this is checked at construction, so any
    operation that returns a Grid2D re-establishes the no-NaN/Inf invariant.
    """

    data: np.ndarray
    pitch: float

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"Grid2D data must be a non-empty 2D array, got shape {arr.shape}")
        if not (self.pitch > 0):
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if np.issubdtype(arr.dtype, np.bool_):
            pass
        elif np.issubdtype(arr.dtype, np.complexfloating):
            if not np.isfinite(arr).all():
                raise ValueError("Grid2D data contains NaN or Inf")
        else:
            arr = arr.astype(np.float64, copy=False)
            if not np.isfinite(arr).all():
                raise ValueError("Grid2D data contains NaN or Inf")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "Grid2D":
        """New grid with the same pitch; shape may differ (cropping, padding)."""
        return Grid2D(data, self.pitch)

    def same_geometry(self, other: "Grid2D") -> bool:
        return self.shape == other.shape and np.isclose(self.pitch, other.pitch, rtol=1e-12)


def require_same_geometry(*grids: Grid2D) -> None:
    first = grids[0]
    for g in grids[1:]:
        if not first.same_geometry(g):
            raise ValueError(
                f"grid geometry mismatch: {first.shape} @ {first.pitch} vs {g.shape} @ {g.pitch}"
            )


@dataclass(frozen=True)
class OpticalConfig:
    """Physical scaling of the experiment: wavelength, pitch, defocus.

    ``wave_number`` is derived (2*pi / wavelength) rather than stored, so it
    is correct to machine precision by construction.
    """

    wavelength: float
    pitch: float
    defocus: float

    def __post_init__(self):
        if not (self.wavelength > 0):
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if not (self.pitch > 0):
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if self.defocus == 0:
            raise ValueError("defocus must be nonzero")

    @property
    def wave_number(self) -> float:
        return TWO_PI / self.wavelength


@dataclass(frozen=True)
class ApertureMask:
    """Binary region of interest: where phase is meaningful and errors scored."""

    mask: Grid2D
    area: int = field(init=False)

    def __post_init__(self):
        if self.mask.data.dtype != np.bool_:
            object.__setattr__(self, "mask", Grid2D(self.mask.data.astype(bool), self.mask.pitch))
        object.__setattr__(self, "area", int(np.count_nonzero(self.mask.data)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape

    @classmethod
    def full(cls, height: int, width: int, pitch: float) -> "ApertureMask":
        return cls(Grid2D(np.ones((height, width), dtype=bool), pitch))

    def bounding_box(self) -> tuple[slice, slice]:
        """Row/column slices of the tightest rectangle covering the mask."""
        if self.area == 0:
            raise ValueError("empty aperture has no bounding box")
        rows = np.flatnonzero(self.mask.data.any(axis=1))
        cols = np.flatnonzero(self.mask.data.any(axis=0))
        return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)


@dataclass(frozen=True)
class ComplexField:
    """Complex amplitude u = sqrt(I) * exp(i*phi) on a physical grid."""

    field: Grid2D

    def __post_init__(self):
        if not np.issubdtype(self.field.data.dtype, np.complexfloating):
            raise ValueError("ComplexField requires complex-valued data")

    @property
    def pitch(self) -> float:
        return self.field.pitch

    @property
    def shape(self) -> tuple[int, int]:
        return self.field.shape

    def intensity(self) -> Grid2D:
        return Grid2D(np.abs(self.field.data) ** 2, self.field.pitch)

    def phase(self) -> Grid2D:
        return Grid2D(np.angle(self.field.data), self.field.pitch)


def make_field(intensity: Grid2D, phase: Grid2D) -> ComplexField:
    """Combine an intensity map and a phase map into a complex field.

    Raises on shape/pitch mismatch or negative intensity. The constructed
    field reproduces the source intensity to 1e-12 relative.
    """
    require_same_geometry(intensity, phase)
    inten = intensity.data
    if np.any(inten < 0):
        raise ValueError("intensity must be nonnegative everywhere")
    u = np.sqrt(inten) * np.exp(1j * phase.data)
    out = ComplexField(Grid2D(u, intensity.pitch))
    scale = float(inten.max()) or 1.0
    if np.abs(np.abs(u) ** 2 - inten).max() > 1e-12 * scale:
        raise AssertionError("constructed field does not reproduce source intensity")
    return out


def rmse(a: Grid2D, b: Grid2D, region: ApertureMask) -> float:
    """Root-mean-square difference over the region, mean offset removed.

    The transport-of-intensity problem determines phase only up to an
    additive constant, so the metric subtracts the mean of (a - b) inside
    the region before averaging. Radians when the inputs are phase maps.
    """
    require_same_geometry(a, b, region.mask)
    if region.area < 1:
        raise ValueError("rmse region is empty")
    sel = region.mask.data
    diff = a.data[sel] - b.data[sel]
    diff = diff - diff.mean()
    return float(np.sqrt(np.mean(diff * diff)))
