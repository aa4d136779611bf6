"""Finite-difference stencil kernels: the per-iteration hot path.

The universal iterative solver evaluates one divergence-of-weighted-gradient
per iteration; at 256x256 this and the FFT pair are the entire iteration
cost, so the stencils are JIT-compiled with numba when available. A pure
numpy path with identical semantics is kept alongside and can be forced via
the environment variable ``TIE_KERNEL_BACKEND`` (``numba``, ``numpy``, or
``auto``, the default). Selection happens at import time.

Two stencil families live here. The central-difference family (gradient,
divergence, and their composition) replicates the border value: the stencil
reads f[-1] as f[0], so the boundary derivative is (f[1] - f[0]) / (2h).
The staggered family evaluates div(w grad f) through face fluxes on the
half-integer grid, w averaged onto each face, with zero flux through the
outer frame; it is conservative (the result sums to zero exactly) and has
no checkerboard null space. Matching backends agree to roundoff.
"""
from __future__ import annotations

import os

import numpy as np

_ENV_VAR = "TIE_KERNEL_BACKEND"


def _requested_backend() -> str:
    value = os.environ.get(_ENV_VAR, "auto").strip().lower()
    if value in {"", "auto"}:
        return "auto"
    if value in {"numba", "jit"}:
        return "numba"
    if value in {"numpy", "np", "pure"}:
        return "numpy"
    raise ValueError(f"{_ENV_VAR} must be 'auto', 'numba', or 'numpy', got {value!r}")


# -- pure numpy path ----------------------------------------------------------

def _replicate_shift(f: np.ndarray, axis: int):
    lead = np.take(f, [0], axis=axis)
    tail = np.take(f, [-1], axis=axis)
    fwd = np.concatenate([np.delete(f, 0, axis=axis), tail], axis=axis)
    bwd = np.concatenate([lead, np.delete(f, -1, axis=axis)], axis=axis)
    return fwd, bwd


def _gradient_numpy(f: np.ndarray, pitch: float):
    inv = 1.0 / (2.0 * pitch)
    fwd_x, bwd_x = _replicate_shift(f, axis=1)
    fwd_y, bwd_y = _replicate_shift(f, axis=0)
    return (fwd_x - bwd_x) * inv, (fwd_y - bwd_y) * inv


def _divergence_numpy(fx: np.ndarray, fy: np.ndarray, pitch: float):
    inv = 1.0 / (2.0 * pitch)
    fwd_x, bwd_x = _replicate_shift(fx, axis=1)
    fwd_y, bwd_y = _replicate_shift(fy, axis=0)
    return (fwd_x - bwd_x) * inv + (fwd_y - bwd_y) * inv


def _flux_divergence_numpy(weight: np.ndarray, f: np.ndarray, pitch: float):
    gx, gy = _gradient_numpy(f, pitch)
    return _divergence_numpy(weight * gx, weight * gy, pitch)


def _staggered_flux_divergence_numpy(weight: np.ndarray, f: np.ndarray, pitch: float):
    inv = 1.0 / (pitch * pitch)
    flux_x = 0.5 * (weight[:, 1:] + weight[:, :-1]) * (f[:, 1:] - f[:, :-1])
    flux_y = 0.5 * (weight[1:, :] + weight[:-1, :]) * (f[1:, :] - f[:-1, :])
    out = np.zeros_like(f)
    out[:, :-1] += flux_x
    out[:, 1:] -= flux_x
    out[:-1, :] += flux_y
    out[1:, :] -= flux_y
    return out * inv


# -- numba path ---------------------------------------------------------------

try:  # pragma: no cover - exercised indirectly through the dispatch table
    from numba import njit

    HAS_NUMBA = True

    @njit(cache=True)
    def _gradient_numba(f, pitch):
        ny, nx = f.shape
        inv = 1.0 / (2.0 * pitch)
        gx = np.empty_like(f)
        gy = np.empty_like(f)
        for i in range(ny):
            im = i - 1 if i > 0 else 0
            ip = i + 1 if i < ny - 1 else ny - 1
            for j in range(nx):
                jm = j - 1 if j > 0 else 0
                jp = j + 1 if j < nx - 1 else nx - 1
                gx[i, j] = (f[i, jp] - f[i, jm]) * inv
                gy[i, j] = (f[ip, j] - f[im, j]) * inv
        return gx, gy

    @njit(cache=True)
    def _divergence_numba(fx, fy, pitch):
        ny, nx = fx.shape
        inv = 1.0 / (2.0 * pitch)
        out = np.empty_like(fx)
        for i in range(ny):
            im = i - 1 if i > 0 else 0
            ip = i + 1 if i < ny - 1 else ny - 1
            for j in range(nx):
                jm = j - 1 if j > 0 else 0
                jp = j + 1 if j < nx - 1 else nx - 1
                out[i, j] = (fx[i, jp] - fx[i, jm]) * inv + (fy[ip, j] - fy[im, j]) * inv
        return out

    @njit(cache=True)
    def _flux_divergence_numba(weight, f, pitch):
        # fused div(weight * grad(f)); recomputes neighbor gradients in place
        # of materializing them, matching the composed numpy result exactly
        ny, nx = f.shape
        inv = 1.0 / (2.0 * pitch)
        out = np.empty_like(f)
        for i in range(ny):
            im = i - 1 if i > 0 else 0
            ip = i + 1 if i < ny - 1 else ny - 1
            for j in range(nx):
                jm = j - 1 if j > 0 else 0
                jp = j + 1 if j < nx - 1 else nx - 1

                jpp = jp + 1 if jp < nx - 1 else nx - 1
                gx_r = (f[i, jpp] - f[i, jp - 1 if jp > 0 else 0]) * inv
                jmm = jm - 1 if jm > 0 else 0
                gx_l = (f[i, jm + 1 if jm < nx - 1 else nx - 1] - f[i, jmm]) * inv

                ipp = ip + 1 if ip < ny - 1 else ny - 1
                gy_d = (f[ipp, j] - f[ip - 1 if ip > 0 else 0, j]) * inv
                imm = im - 1 if im > 0 else 0
                gy_u = (f[im + 1 if im < ny - 1 else ny - 1, j] - f[imm, j]) * inv

                out[i, j] = (weight[i, jp] * gx_r - weight[i, jm] * gx_l) * inv + (
                    weight[ip, j] * gy_d - weight[im, j] * gy_u
                ) * inv
        return out

    @njit(cache=True)
    def _staggered_flux_divergence_numba(weight, f, pitch):
        # face fluxes on the half-integer grid, accumulated in the same
        # order as the numpy slice version so both backends round alike
        ny, nx = f.shape
        inv = 1.0 / (pitch * pitch)
        out = np.zeros_like(f)
        for i in range(ny):
            for j in range(nx):
                acc = 0.0
                if j < nx - 1:
                    acc += 0.5 * (weight[i, j + 1] + weight[i, j]) * (f[i, j + 1] - f[i, j])
                if j > 0:
                    acc -= 0.5 * (weight[i, j] + weight[i, j - 1]) * (f[i, j] - f[i, j - 1])
                if i < ny - 1:
                    acc += 0.5 * (weight[i + 1, j] + weight[i, j]) * (f[i + 1, j] - f[i, j])
                if i > 0:
                    acc -= 0.5 * (weight[i, j] + weight[i - 1, j]) * (f[i, j] - f[i - 1, j])
                out[i, j] = acc * inv
        return out

except ImportError:  # pragma: no cover
    HAS_NUMBA = False


_requested = _requested_backend()
if _requested == "numba" and not HAS_NUMBA:
    raise ImportError(f"{_ENV_VAR}=numba but numba is not importable")
ACTIVE_BACKEND = "numpy" if _requested == "numpy" or not HAS_NUMBA else "numba"

if ACTIVE_BACKEND == "numba":
    gradient_cd = _gradient_numba
    divergence_cd = _divergence_numba
    flux_divergence_cd = _flux_divergence_numba
    staggered_flux_divergence = _staggered_flux_divergence_numba
else:
    gradient_cd = _gradient_numpy
    divergence_cd = _divergence_numpy
    flux_divergence_cd = _flux_divergence_numpy
    staggered_flux_divergence = _staggered_flux_divergence_numpy


def backends() -> dict:
    """Kernel implementations per backend name, for tests and benchmarks."""
    table = {
        "numpy": (
            _gradient_numpy,
            _divergence_numpy,
            _flux_divergence_numpy,
            _staggered_flux_divergence_numpy,
        )
    }
    if HAS_NUMBA:
        table["numba"] = (
            _gradient_numba,
            _divergence_numba,
            _flux_divergence_numba,
            _staggered_flux_divergence_numba,
        )
    return table


def warmup() -> None:
    """Trigger JIT compilation so timing runs do not pay it."""
    f = np.zeros((4, 4))
    gradient_cd(f, 1.0)
    divergence_cd(f, f, 1.0)
    flux_divergence_cd(f, f, 1.0)
    staggered_flux_divergence(f, f, 1.0)
