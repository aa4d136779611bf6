"""Phase solvers: two direct transform inversions and two iterative schemes.

The direct solvers invert the transport equation through the scalar
potential of the transverse flux (one periodic-FFT variant, one Neumann
cosine variant); each costs exactly eight 2D transform executions and
divides by the in-focus intensity, clamped at a relative floor.

The maximum-intensity iterative solver never divides by intensity.
It replaces I by its ceiling I_max, turning each step into one Poisson
solve (a single forward/inverse FFT pair), and feeds the derivative
mismatch back as a correction. The mismatch is evaluated against the
exact split

    div(I grad phi) = I_max * lap(phi) - div((I_max - I) grad phi)

where the first term is known algebraically from the accumulated Poisson
right-hand sides (the spectral solve inverts it exactly, no extra
transforms) and only the deficit term is evaluated, with the conservative
staggered face-flux stencil. Relative residuals are measured after mean
removal, because the constant component of the derivative is invisible to
a solver that fixes the phase gauge to zero mean; the stopping norm is
restricted to illuminated pixels, where the transport equation actually
constrains the phase, while corrections stay full-frame.

The iterative-DCT baseline compensates a Neumann direct solve inside the
aperture's bounding rectangle. Its per-step mismatch divides by clamped
intensity inside the direct pass, which is exactly what makes it unstable
near intensity zeros; no damping is applied, since reproducing that
instability is the point of carrying the baseline.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _transforms as tr
from . import kernels
from .core import ApertureMask, Grid2D, OpticalConfig, require_same_geometry, rmse
from .operators import (
    _dct_div_coeffs,
    _dct_grad,
    _ilap_dct,
    _ilap_fft,
    _lap_fft,
    _neumann_inv_lap,
    _periodic_freqs,
    _periodic_inv_lap_full,
)

US_TIE = "us-tie"
FFT_TIE = "fft-tie"
DCT_TIE = "dct-tie"
ITER_DCT = "iter-dct"

# Correction relaxation: error modes of the maximum-intensity split contract
# by 1 - omega * (1 - v) with v in [0, contrast], so omega = 2 / (2 - contrast)
# equalizes the two ends of that interval (the minimax choice). The cap keeps
# hard apertures (contrast 1, where the uncapped optimum of 2 would stall the
# weakest modes completely) at a safely damped value.
_MAX_RELAXATION = 1.35


@dataclass(frozen=True)
class UsTieParams:
    """Iteration controls shared by the iterative solvers.

    ``intensity_ceiling`` of None means "use the maximum of the supplied
    in-focus intensity"; a manual ceiling must dominate the intensity
    everywhere or the contraction argument behind the iteration breaks.
    ``rmse_exclusion_radius`` masks a disc around zero-intensity pixels in
    the optional ground-truth error trace, where phase is undefined.
    """

    max_iterations: int = 100
    tolerance: float = 1e-4
    intensity_ceiling: float | None = None
    rmse_exclusion_radius: int = 3

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not (self.tolerance > 0):
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")
        if self.intensity_ceiling is not None and not (self.intensity_ceiling > 0):
            raise ValueError("intensity_ceiling must be positive when given")
        if self.rmse_exclusion_radius < 0:
            raise ValueError("rmse_exclusion_radius must be >= 0")


@dataclass(frozen=True)
class SolverReport:
    """One solver run: recovered phase plus its convergence history.

    ``iterations_run`` counts Poisson solves (the initial estimate is
    iteration 1), so ``residual_trace`` has exactly one relative-residual
    entry per iteration and ``per_iteration_seconds`` aligns with it.
    Direct single-pass solvers report one iteration and ``converged`` true
    by construction.
    """

    solver: str
    phase: Grid2D
    iterations_run: int
    residual_trace: tuple[float, ...]
    converged: bool
    per_iteration_seconds: tuple[float, ...]
    config: OpticalConfig
    rmse_trace: tuple[float, ...] | None = None

    def __post_init__(self):
        if len(self.residual_trace) != self.iterations_run:
            raise ValueError("residual_trace length must equal iterations_run")
        if len(self.per_iteration_seconds) != self.iterations_run:
            raise ValueError("per_iteration_seconds length must equal iterations_run")
        if self.rmse_trace is not None and len(self.rmse_trace) != self.iterations_run:
            raise ValueError("rmse_trace length must equal iterations_run")


def rmse_region(intensity: Grid2D, exclusion_radius: int = 3) -> ApertureMask:
    """Scoring mask: everything except discs around zero-intensity pixels."""
    zeros = intensity.data == 0
    if exclusion_radius > 0 and zeros.any():
        r = exclusion_radius
        yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
        disc = (yy * yy + xx * xx) <= r * r
        zeros = ndimage.binary_dilation(zeros, structure=disc)
    return ApertureMask(Grid2D(~zeros, intensity.pitch))


def _require_config_pitch(grid: Grid2D, config: OpticalConfig) -> None:
    if not np.isclose(config.pitch, grid.pitch, rtol=1e-12):
        raise ValueError(f"config pitch {config.pitch} disagrees with grid pitch {grid.pitch}")


def _checked_ceiling(intensity: np.ndarray, manual: float | None) -> float:
    observed = float(intensity.max())
    if observed <= 0:
        raise ValueError("intensity is identically zero")
    if manual is None:
        return observed
    if manual < observed:
        raise ValueError(
            f"intensity ceiling {manual} is below the observed maximum {observed}"
        )
    return float(manual)


def forward_derivative(
    phase: Grid2D,
    intensity: Grid2D,
    config: OpticalConfig,
    intensity_ceiling: float | None = None,
) -> Grid2D:
    """Calculated dI/dz under the iterative solver's discrete model.

    Evaluates -(1/k) * [I_max lap(phase) - div((I_max - I) grad(phase))]
    with the spectral Laplacian and staggered face-flux deficit term: the
    exact operator whose residual the maximum-intensity iteration drives
    to zero. Useful for synthesizing consistent test data and for dense
    linear-system oracles.
    """
    require_same_geometry(phase, intensity)
    _require_config_pitch(phase, config)
    if np.any(intensity.data < 0):
        raise ValueError("intensity must be nonnegative")
    i_max = _checked_ceiling(intensity.data, intensity_ceiling)
    k = config.wave_number
    h = phase.pitch
    lap = _lap_fft(phase.data, h)
    deficit_flux = kernels.staggered_flux_divergence(i_max - intensity.data, phase.data, h)
    return phase.with_data(-(i_max * lap - deficit_flux) / k)


def us_tie_solve(
    dIdz: Grid2D,
    intensity: Grid2D,
    config: OpticalConfig,
    params: UsTieParams | None = None,
    ground_truth: Grid2D | None = None,
) -> SolverReport:
    """Iterative maximum-intensity solver; two FFT executions per iteration.

    Each iteration solves one Poisson problem -(k/I_max) lap^-1(rhs) and
    evaluates the derivative mismatch of the current phase; the mismatch,
    relaxed by the contrast-matched factor, becomes the next right-hand
    side. No division by intensity occurs anywhere, so zero-intensity
    pixels are structurally harmless (the recovered phase there is
    reported as-is but physically undefined). The stopping norm covers
    illuminated pixels only: dark pixels put nothing into the transport
    equation, so mismatch stranded there says nothing about the phase,
    whereas corrections remain full-frame because the dark rim around an
    aperture is where the edge signal lives.
    """
    if params is None:
        params = UsTieParams()
    require_same_geometry(dIdz, intensity)
    if ground_truth is not None:
        require_same_geometry(dIdz, ground_truth)
    _require_config_pitch(dIdz, config)
    if not np.isfinite(dIdz.data).all():
        raise ValueError("derivative contains NaN or Inf")
    if np.any(intensity.data < 0):
        raise ValueError("intensity must be nonnegative")
    i_max = _checked_ceiling(intensity.data, params.intensity_ceiling)

    k = config.wave_number
    h = dIdz.pitch
    kernels.warmup()

    support = intensity.data > 0
    full_support = bool(support.all())
    d0 = dIdz.data - dIdz.data.mean()
    if full_support:
        ref = float(np.linalg.norm(d0)) or 1.0
    else:
        lit = d0[support]
        ref = float(np.linalg.norm(lit - lit.mean())) or 1.0
    deficit = i_max - intensity.data
    contrast = 1.0 - float(intensity.data.min()) / i_max
    relax = min(2.0 / (2.0 - contrast), _MAX_RELAXATION)
    scale = -(k / i_max)
    region = None
    if ground_truth is not None:
        region = rmse_region(intensity, params.rmse_exclusion_radius)

    trace: list[float] = []
    seconds: list[float] = []
    errors: list[float] | None = [] if ground_truth is not None else None

    started = time.perf_counter()
    phi = scale * _ilap_fft(d0, h)
    # accumulated == -(I_max/k) * lap(phi) exactly: each Poisson solve
    # inverts the spectral Laplacian, so the ceiling term of the split
    # costs nothing to evaluate
    accumulated = d0.copy()
    corrections = 0
    while True:
        calculated = accumulated + kernels.staggered_flux_divergence(deficit, phi, h) / k
        residual = d0 - calculated
        residual -= residual.mean()
        if full_support:
            rel = float(np.linalg.norm(residual) / ref)
        else:
            lit = residual[support]
            rel = float(np.linalg.norm(lit - lit.mean()) / ref)
        seconds.append(time.perf_counter() - started)
        trace.append(rel)
        if errors is not None:
            errors.append(rmse(Grid2D(phi, h), ground_truth, region))
        started = time.perf_counter()
        if corrections + 1 >= params.max_iterations:
            converged = False
            break
        if rel <= params.tolerance:
            converged = True
            break
        phi = phi + relax * scale * _ilap_fft(residual, h)
        accumulated += relax * residual
        corrections += 1

    return SolverReport(
        solver=US_TIE,
        phase=Grid2D(phi, h),
        iterations_run=corrections + 1,
        residual_trace=tuple(trace),
        converged=converged,
        per_iteration_seconds=tuple(seconds),
        config=config,
        rmse_trace=tuple(errors) if errors is not None else None,
    )


def _flux_residual(d: np.ndarray, intensity: np.ndarray, phi: np.ndarray, k: float, h: float) -> float:
    """Post-hoc relative derivative mismatch for the direct solvers.

    Same stencil and same illuminated-pixel norm as the iterative solver,
    so residual numbers are comparable across solver reports.
    """
    support = intensity > 0
    d0 = d - d.mean()
    lit = d0[support]
    ref = float(np.linalg.norm(lit - lit.mean())) or 1.0
    calculated = -kernels.staggered_flux_divergence(intensity, phi, h) / k
    residual = d0 - calculated
    lit = residual[support]
    return float(np.linalg.norm(lit - lit.mean()) / ref)


def _clamped(intensity: np.ndarray, floor: float) -> np.ndarray:
    if not (floor > 0):
        raise ValueError(f"intensity_floor must be positive, got {floor}")
    peak = float(intensity.max())
    if peak <= 0:
        raise ValueError("intensity is identically zero")
    return np.maximum(intensity, floor * peak)


def fft_tie_solve(
    dIdz: Grid2D,
    intensity: Grid2D,
    config: OpticalConfig,
    intensity_floor: float = 1e-3,
) -> SolverReport:
    """Direct periodic-FFT inversion through the flux potential.

    phi = -k lap^-1{ div[ (1/I) grad lap^-1(dI/dz) ] }, all operators
    periodic-spectral: eight transform executions, one pass. The division
    clamps I below at ``intensity_floor`` times its maximum. Periodic
    boundaries mean any signal at the frame edge wraps around, which is
    exactly the failure mode the Neumann variant exists to fix.
    """
    require_same_geometry(dIdz, intensity)
    _require_config_pitch(dIdz, config)
    clamped = _clamped(intensity.data, intensity_floor)
    k = config.wave_number
    h = dIdz.pitch
    kernels.warmup()

    started = time.perf_counter()
    d = dIdz.data
    kx2d, ky2d, _ = _periodic_freqs(d.shape, h)
    inv_lap = _periodic_inv_lap_full(d.shape, h)
    psi = -k * _ilap_fft(d, h)
    spec = tr.fft2(psi)
    flux_x = tr.ifft2(1j * kx2d * spec).real / clamped
    flux_y = tr.ifft2(1j * ky2d * spec).real / clamped
    div_spec = 1j * kx2d * tr.fft2(flux_x) + 1j * ky2d * tr.fft2(flux_y)
    # the -k factor is already inside psi; this solve only inverts div grad
    phi = tr.ifft2(div_spec * inv_lap).real
    elapsed = time.perf_counter() - started

    rel = _flux_residual(d, intensity.data, phi, k, h)
    return SolverReport(
        solver=FFT_TIE,
        phase=Grid2D(phi, h),
        iterations_run=1,
        residual_trace=(rel,),
        converged=True,
        per_iteration_seconds=(elapsed,),
        config=config,
    )


def _dct_teague(d: np.ndarray, clamped: np.ndarray, k: float, h: float) -> np.ndarray:
    """Neumann direct pass; eight transform executions."""
    psi = -k * _ilap_dct(d, h)
    gx, gy = _dct_grad(psi, h)
    coeffs = _dct_div_coeffs(gx / clamped, gy / clamped, h)
    # -k lives in psi already; the second solve is a plain Poisson inversion
    return tr.idctn2(coeffs * _neumann_inv_lap(d.shape, h))


def dct_tie_solve(
    dIdz: Grid2D,
    intensity: Grid2D,
    config: OpticalConfig,
    intensity_floor: float = 1e-3,
) -> SolverReport:
    """Direct Neumann-cosine inversion through the flux potential.

    Same structure as the periodic variant with every operator replaced
    by its cosine-basis counterpart. Valid for a rectangular aperture
    coinciding with the grid boundary; the boundary signal in dI/dz is
    consumed as the Neumann data of the first Poisson solve.
    """
    require_same_geometry(dIdz, intensity)
    _require_config_pitch(dIdz, config)
    clamped = _clamped(intensity.data, intensity_floor)
    k = config.wave_number
    h = dIdz.pitch
    kernels.warmup()

    started = time.perf_counter()
    phi = _dct_teague(dIdz.data, clamped, k, h)
    elapsed = time.perf_counter() - started

    rel = _flux_residual(dIdz.data, intensity.data, phi, k, h)
    return SolverReport(
        solver=DCT_TIE,
        phase=Grid2D(phi, h),
        iterations_run=1,
        residual_trace=(rel,),
        converged=True,
        per_iteration_seconds=(elapsed,),
        config=config,
    )


def iter_dct_solve(
    dIdz: Grid2D,
    intensity: Grid2D,
    aperture: ApertureMask,
    config: OpticalConfig,
    params: UsTieParams | None = None,
    intensity_floor: float = 1e-3,
    ground_truth: Grid2D | None = None,
) -> SolverReport:
    """Compensated Neumann baseline on the aperture's bounding rectangle.

    Repeats: direct Neumann solve with the working derivative, calculated
    derivative of the result (cosine-basis flux divergence with the true,
    unclamped intensity), mismatch inside the aperture fed back into the
    working derivative. The direct pass divides by clamped intensity, so
    near-zero intensity amplifies each compensation and the loop is
    expected to destabilize there; nothing suppresses that on purpose.
    """
    if params is None:
        params = UsTieParams()
    require_same_geometry(dIdz, intensity, aperture.mask)
    if ground_truth is not None:
        require_same_geometry(dIdz, ground_truth)
    _require_config_pitch(dIdz, config)
    if aperture.area == 0:
        raise ValueError("empty aperture")

    rows, cols = aperture.bounding_box()
    inside = aperture.mask.data[rows, cols]
    d_box = dIdz.data[rows, cols] * inside
    i_box = intensity.data[rows, cols]
    clamped = _clamped(intensity.data, intensity_floor)[rows, cols]
    k = config.wave_number
    h = dIdz.pitch

    masked_ref = d_box[inside]
    ref = float(np.linalg.norm(masked_ref - masked_ref.mean())) or 1.0
    region = None
    if ground_truth is not None:
        scoring = rmse_region(intensity, params.rmse_exclusion_radius)
        region = ApertureMask(
            Grid2D(scoring.mask.data & aperture.mask.data, dIdz.pitch)
        )

    def embed(phi_box: np.ndarray) -> np.ndarray:
        full = np.zeros(dIdz.shape)
        full[rows, cols] = phi_box
        return full

    trace: list[float] = []
    seconds: list[float] = []
    errors: list[float] | None = [] if ground_truth is not None else None
    d_work = d_box.copy()
    good_phi = np.zeros_like(d_box)
    corrections = 0

    started = time.perf_counter()
    while True:
        phi_box = _dct_teague(d_work, clamped, k, h)
        gx, gy = _dct_grad(phi_box, h)
        calculated = -tr.idctn2(_dct_div_coeffs(i_box * gx, i_box * gy, h)) / k
        mismatch = (d_box - calculated) * inside
        sel = mismatch[inside]
        sel = sel - sel.mean()
        rel = float(np.linalg.norm(sel) / ref)
        seconds.append(time.perf_counter() - started)
        trace.append(rel)
        finite = bool(np.isfinite(rel))
        if finite:
            good_phi = phi_box
        if errors is not None:
            if finite:
                errors.append(rmse(Grid2D(embed(good_phi), h), ground_truth, region))
            else:
                errors.append(float("inf"))
        started = time.perf_counter()
        if not finite:
            converged = False
            break
        if corrections + 1 >= params.max_iterations:
            converged = False
            break
        if rel <= params.tolerance:
            converged = True
            break
        d_work = d_work + mismatch
        corrections += 1

    return SolverReport(
        solver=ITER_DCT,
        phase=Grid2D(embed(good_phi), h),
        iterations_run=corrections + 1,
        residual_trace=tuple(trace),
        converged=converged,
        per_iteration_seconds=tuple(seconds),
        config=config,
        rmse_trace=tuple(errors) if errors is not None else None,
    )
