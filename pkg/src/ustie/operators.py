"""Differential operators on regular grids, spectral and finite-difference.

Two transform families are supported:

* periodic (Fourier): true ``-(kx^2 + ky^2)`` multipliers on the standard
  DFT frequency grid; real work runs through the half-spectrum rfft pair
  where the multiplier is even;
* Neumann (cosine): half-sample cosine modes ``cos(k_a (x + h/2))`` with
  ``k_a = pi a / (N h)``, so zero normal derivative at the domain edge is
  built into the basis.

Every inverse Laplacian zeroes the DC bin: the solution of a pure Neumann
or periodic Poisson problem is defined only up to a constant, and fixing
the constant to "zero mean" avoids a regularization parameter.

First-derivative operators come in two schemes, ``spectral`` (exact for
band-limited periodic fields) and ``central_difference`` (2nd-order
stencils with replicated edges, see :mod:`.kernels`).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _transforms as tr
from . import kernels
from .core import Grid2D, TWO_PI, require_same_geometry

SPECTRAL = "spectral"
CENTRAL_DIFFERENCE = "central_difference"
_SCHEMES = (SPECTRAL, CENTRAL_DIFFERENCE)


def _check_scheme(scheme: str) -> None:
    if scheme not in _SCHEMES:
        raise ValueError(f"scheme must be one of {_SCHEMES}, got {scheme!r}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


# -- cached frequency layouts -------------------------------------------------

@lru_cache(maxsize=64)
def _periodic_freqs(shape: tuple[int, int], pitch: float):
    """(kx 2D, ky 2D, k_squared 2D) on the full fft2 layout."""
    ny, nx = shape
    kx = TWO_PI * np.fft.fftfreq(nx, d=pitch)
    ky = TWO_PI * np.fft.fftfreq(ny, d=pitch)
    kx2d = np.tile(kx[None, :], (ny, 1))
    ky2d = np.tile(ky[:, None], (1, nx))
    k2 = kx2d**2 + ky2d**2
    return _frozen(kx2d), _frozen(ky2d), _frozen(k2)


@lru_cache(maxsize=64)
def _periodic_inv_lap_full(shape: tuple[int, int], pitch: float):
    _, _, k2 = _periodic_freqs(shape, pitch)
    m = np.zeros(shape)
    np.divide(-1.0, k2, out=m, where=k2 > 0)
    return _frozen(m)


@lru_cache(maxsize=64)
def _periodic_rfft_k2(shape: tuple[int, int], pitch: float):
    ny, nx = shape
    kx = TWO_PI * np.fft.rfftfreq(nx, d=pitch)
    ky = TWO_PI * np.fft.fftfreq(ny, d=pitch)
    k2 = ky[:, None] ** 2 + kx[None, :] ** 2
    return _frozen(k2)


@lru_cache(maxsize=64)
def _periodic_rfft_inv_lap(shape: tuple[int, int], pitch: float):
    k2 = _periodic_rfft_k2(shape, pitch)
    m = np.zeros(k2.shape)
    np.divide(-1.0, k2, out=m, where=k2 > 0)
    return _frozen(m)


@lru_cache(maxsize=64)
def _neumann_freqs(shape: tuple[int, int], pitch: float):
    """(kdy 1D, kdx 1D, k_squared 2D) for half-sample cosine modes."""
    ny, nx = shape
    kdx = np.pi * np.arange(nx) / (nx * pitch)
    kdy = np.pi * np.arange(ny) / (ny * pitch)
    k2 = kdy[:, None] ** 2 + kdx[None, :] ** 2
    return _frozen(kdy), _frozen(kdx), _frozen(k2)


@lru_cache(maxsize=64)
def _neumann_inv_lap(shape: tuple[int, int], pitch: float):
    _, _, k2 = _neumann_freqs(shape, pitch)
    m = np.zeros(shape)
    np.divide(-1.0, k2, out=m, where=k2 > 0)
    return _frozen(m)


@dataclass(frozen=True, eq=False)
class FreqGrid:
    """Angular spatial frequencies (radians/meter) matching a grid layout.

    ``kx``/``ky`` follow the ordering of the transform family they belong
    to: standard DFT ordering for :meth:`periodic`, half-sample cosine
    ordering for :meth:`neumann`. ``k_squared`` is cached at construction
    and vanishes only at the zero-frequency bin.
    """

    kx: Grid2D
    ky: Grid2D
    k_squared: np.ndarray

    @classmethod
    def periodic(cls, shape: tuple[int, int], pitch: float) -> "FreqGrid":
        kx2d, ky2d, k2 = _periodic_freqs(shape, pitch)
        return cls(Grid2D(kx2d, pitch), Grid2D(ky2d, pitch), k2)

    @classmethod
    def neumann(cls, shape: tuple[int, int], pitch: float) -> "FreqGrid":
        kdy, kdx, k2 = _neumann_freqs(shape, pitch)
        ny, nx = shape
        kx2d = np.tile(kdx[None, :], (ny, 1))
        ky2d = np.tile(kdy[:, None], (1, nx))
        return cls(Grid2D(kx2d, pitch), Grid2D(ky2d, pitch), k2)


# -- array-level operators (hot paths, no Grid2D wrapping) --------------------

def _ilap_fft(a: np.ndarray, pitch: float) -> np.ndarray:
    m = _periodic_rfft_inv_lap(a.shape, pitch)
    return tr.irfft2(m * tr.rfft2(a), a.shape)


def _lap_fft(a: np.ndarray, pitch: float) -> np.ndarray:
    k2 = _periodic_rfft_k2(a.shape, pitch)
    return tr.irfft2(-k2 * tr.rfft2(a), a.shape)


def _ilap_dct(a: np.ndarray, pitch: float) -> np.ndarray:
    m = _neumann_inv_lap(a.shape, pitch)
    return tr.idctn2(m * tr.dctn2(a))


def _lap_dct(a: np.ndarray, pitch: float) -> np.ndarray:
    _, _, k2 = _neumann_freqs(a.shape, pitch)
    return tr.idctn2(-k2 * tr.dctn2(a))


def _grad_spectral(a: np.ndarray, pitch: float):
    kx2d, ky2d, _ = _periodic_freqs(a.shape, pitch)
    spec = tr.fft2(a)
    gx = tr.ifft2(1j * kx2d * spec).real
    gy = tr.ifft2(1j * ky2d * spec).real
    return gx, gy


def _div_spectral(fx: np.ndarray, fy: np.ndarray, pitch: float) -> np.ndarray:
    kx2d, ky2d, _ = _periodic_freqs(fx.shape, pitch)
    spec = 1j * kx2d * tr.fft2(fx) + 1j * ky2d * tr.fft2(fy)
    return tr.ifft2(spec).real


def _dct_grad(a: np.ndarray, pitch: float):
    """Neumann-basis partial derivatives; 3 transform executions.

    Differentiating cosine mode a against an axis turns it into sine mode
    a on that axis (type-II DST slot a-1) scaled by -k_a; the grid-Nyquist
    sine slot stays empty because no cosine mode maps onto it.
    """
    ny, nx = a.shape
    kdy, kdx, _ = _neumann_freqs(a.shape, pitch)
    coeff = tr.dctn2(a)
    sx = np.zeros_like(coeff)
    sx[:, : nx - 1] = -kdx[1:] * coeff[:, 1:]
    gx = tr.mixed_inverse(sx, sine_axis=1)
    sy = np.zeros_like(coeff)
    sy[: ny - 1, :] = -kdy[1:, None] * coeff[1:, :]
    gy = tr.mixed_inverse(sy, sine_axis=0)
    return gx, gy


def _dct_div_coeffs(fx: np.ndarray, fy: np.ndarray, pitch: float) -> np.ndarray:
    """Cosine coefficients of dfx/dx + dfy/dy; 2 transform executions.

    Sine mode m differentiates to cosine mode m scaled by +k_m; the sine
    grid-Nyquist mode differentiates to a cosine sampled as exactly zero,
    so its coefficient is dropped.
    """
    ny, nx = fx.shape
    kdy, kdx, _ = _neumann_freqs(fx.shape, pitch)
    sx = tr.mixed_forward(fx, sine_axis=1)
    sy = tr.mixed_forward(fy, sine_axis=0)
    out = np.zeros_like(sx)
    out[:, 1:] = kdx[1:] * sx[:, : nx - 1]
    out[1:, :] += kdy[1:, None] * sy[: ny - 1, :]
    return out


def _dct_div(fx: np.ndarray, fy: np.ndarray, pitch: float) -> np.ndarray:
    return tr.idctn2(_dct_div_coeffs(fx, fy, pitch))


# -- public Grid2D-level API --------------------------------------------------

def _pitch_of(grid: Grid2D, pitch: float | None) -> float:
    if pitch is None:
        return grid.pitch
    if not np.isclose(pitch, grid.pitch, rtol=1e-12):
        raise ValueError(f"pitch argument {pitch} disagrees with grid pitch {grid.pitch}")
    return grid.pitch


def inverse_laplacian_fft(f: Grid2D, pitch: float | None = None) -> Grid2D:
    """Solve lap(psi) = f under periodic boundaries, zero-mean psi."""
    h = _pitch_of(f, pitch)
    return f.with_data(_ilap_fft(f.data, h))


def laplacian_fft(f: Grid2D, pitch: float | None = None) -> Grid2D:
    """Forward spectral Laplacian with the true -(kx^2+ky^2) multiplier."""
    h = _pitch_of(f, pitch)
    return f.with_data(_lap_fft(f.data, h))


def inverse_laplacian_dct(f: Grid2D, pitch: float | None = None) -> Grid2D:
    """Solve lap(psi) = f with homogeneous Neumann boundaries, zero-mean psi.

    Inhomogeneous Neumann data needs no separate channel here: the signal
    measured at the domain edge is already part of f, and the half-sample
    cosine basis absorbs it as the boundary flux of the solution.
    """
    h = _pitch_of(f, pitch)
    return f.with_data(_ilap_dct(f.data, h))


def laplacian_dct(f: Grid2D, pitch: float | None = None) -> Grid2D:
    h = _pitch_of(f, pitch)
    return f.with_data(_lap_dct(f.data, h))


def gradient(
    f: Grid2D, pitch: float | None = None, scheme: str = SPECTRAL
) -> tuple[Grid2D, Grid2D]:
    """(df/dx, df/dy) under the chosen scheme."""
    _check_scheme(scheme)
    h = _pitch_of(f, pitch)
    if scheme == SPECTRAL:
        gx, gy = _grad_spectral(f.data, h)
    else:
        gx, gy = kernels.gradient_cd(f.data, h)
    return f.with_data(gx), f.with_data(gy)


def divergence(
    fx: Grid2D, fy: Grid2D, pitch: float | None = None, scheme: str = SPECTRAL
) -> Grid2D:
    """dfx/dx + dfy/dy under the chosen scheme."""
    _check_scheme(scheme)
    require_same_geometry(fx, fy)
    h = _pitch_of(fx, pitch)
    if scheme == SPECTRAL:
        out = _div_spectral(fx.data, fy.data, h)
    else:
        out = kernels.divergence_cd(fx.data, fy.data, h)
    return fx.with_data(out)


def flux_divergence(
    intensity: Grid2D, phase: Grid2D, pitch: float | None = None, scheme: str = SPECTRAL
) -> Grid2D:
    """div(I * grad(phase)): the transverse energy-flux divergence.

    Up to a factor of -1/k this is the axial intensity derivative the
    transport equation predicts for the given intensity and phase.
    """
    _check_scheme(scheme)
    require_same_geometry(intensity, phase)
    if np.any(intensity.data < 0):
        raise ValueError("intensity must be nonnegative")
    h = _pitch_of(intensity, pitch)
    if scheme == SPECTRAL:
        gx, gy = _grad_spectral(phase.data, h)
        out = _div_spectral(intensity.data * gx, intensity.data * gy, h)
    else:
        out = kernels.flux_divergence_cd(intensity.data, phase.data, h)
    return intensity.with_data(out)


def dct_gradient(f: Grid2D, pitch: float | None = None) -> tuple[Grid2D, Grid2D]:
    """(df/dx, df/dy) in the Neumann cosine basis."""
    h = _pitch_of(f, pitch)
    gx, gy = _dct_grad(f.data, h)
    return f.with_data(gx), f.with_data(gy)


def dct_divergence(fx: Grid2D, fy: Grid2D, pitch: float | None = None) -> Grid2D:
    """dfx/dx + dfy/dy in the Neumann basis (sine modes per derivative axis)."""
    require_same_geometry(fx, fy)
    h = _pitch_of(fx, pitch)
    return fx.with_data(_dct_div(fx.data, fy.data, h))
