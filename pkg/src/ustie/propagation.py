"""Scalar free-space propagation and the measured-derivative forward model.

Angular-spectrum propagation is exact for the scalar model: multiply the
field spectrum by ``exp(i d sqrt(k^2 - kx^2 - ky^2))`` and drop evanescent
components. The transfer function has unit modulus on the propagating
band, so total power is conserved; that conservation doubles as the main
correctness check.

``synthesize_stack`` turns a phantom into the three intensity planes a
camera would record at defocus -dz, 0, +dz. Fields that vanish at the grid
border (hard apertures) are propagated on a 2x zero-padded grid and
cropped, which suppresses periodic wrap-around without introducing any
edge of its own; fields that fill the frame (border intensity far from
zero) are treated as periodic and propagated unpadded, since zero-padding
would manufacture a spurious aperture edge there. ``pad`` overrides the
automatic choice.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _transforms as tr
from .core import ComplexField, Grid2D, OpticalConfig, make_field, require_same_geometry
from .operators import _periodic_freqs


@dataclass(frozen=True)
class FocalStack:
    """Intensities recorded at defocus -dz, 0, +dz for one configuration."""

    under: Grid2D
    focus: Grid2D
    over: Grid2D
    config: OpticalConfig

    def __post_init__(self):
        require_same_geometry(self.under, self.focus, self.over)
        if not np.isclose(self.config.pitch, self.focus.pitch, rtol=1e-12):
            raise ValueError("config pitch disagrees with stack pitch")
        for name in ("under", "focus", "over"):
            if np.any(getattr(self, name).data < 0):
                raise ValueError(f"{name} intensity has negative values")


def _require_pitch(field_pitch: float, config: OpticalConfig) -> None:
    if not np.isclose(config.pitch, field_pitch, rtol=1e-12):
        raise ValueError(
            f"config pitch {config.pitch} disagrees with field pitch {field_pitch}"
        )


def angular_spectrum_propagate(
    field: ComplexField, distance: float, config: OpticalConfig
) -> ComplexField:
    """Propagate a complex field by ``distance`` meters (either sign).

    Evanescent components (kx^2 + ky^2 > k^2) are zeroed rather than
    exponentially decayed, which keeps negative distances from overflowing
    and leaves band-limited fields untouched.
    """
    _require_pitch(field.pitch, config)
    a = field.field.data
    _, _, k2 = _periodic_freqs(a.shape, field.pitch)
    kz_sq = config.wave_number**2 - k2
    propagating = kz_sq >= 0
    kz = np.sqrt(np.where(propagating, kz_sq, 0.0))
    transfer = np.where(propagating, np.exp(1j * distance * kz), 0.0)
    out = tr.ifft2(transfer * tr.fft2(a))
    return ComplexField(Grid2D(out, field.pitch))


def _padded_propagate(u: np.ndarray, pitch: float, distance: float, config: OpticalConfig):
    ny, nx = u.shape
    big = np.zeros((2 * ny, 2 * nx), dtype=complex)
    oy, ox = ny // 2, nx // 2
    big[oy : oy + ny, ox : ox + nx] = u
    out = angular_spectrum_propagate(
        ComplexField(Grid2D(big, pitch)), distance, config
    ).field.data
    return out[oy : oy + ny, ox : ox + nx]


def synthesize_stack(
    intensity: Grid2D,
    phase: Grid2D,
    config: OpticalConfig,
    pad: bool | None = None,
) -> FocalStack:
    """Forward model: phantom -> three-plane focal stack.

    ``pad=None`` picks padding automatically from the border intensity:
    zero border means a hard aperture (pad, exact), bright border means a
    frame-filling field (periodic, unpadded, exact for periodic phantoms).
    """
    require_same_geometry(intensity, phase)
    _require_pitch(intensity.pitch, config)
    field = make_field(intensity, phase)
    u = field.field.data
    if pad is None:
        inten = intensity.data
        border = max(
            inten[0, :].max(), inten[-1, :].max(), inten[:, 0].max(), inten[:, -1].max()
        )
        pad = border <= 1e-9 * inten.max()
    dz = config.defocus
    if pad:
        under = np.abs(_padded_propagate(u, intensity.pitch, -dz, config)) ** 2
        over = np.abs(_padded_propagate(u, intensity.pitch, +dz, config)) ** 2
    else:
        under = np.abs(
            angular_spectrum_propagate(field, -dz, config).field.data
        ) ** 2
        over = np.abs(
            angular_spectrum_propagate(field, +dz, config).field.data
        ) ** 2
    return FocalStack(
        under=intensity.with_data(under),
        focus=intensity,
        over=intensity.with_data(over),
        config=config,
    )


def axial_derivative(stack: FocalStack) -> Grid2D:
    """Central-difference estimate of dI/dz from the two defocused planes."""
    dz = stack.config.defocus
    data = (stack.over.data - stack.under.data) / (2.0 * dz)
    return stack.focus.with_data(data)
