"""Shared constants and field builders for the test suite."""
import numpy as np
import pytest

from ustie.core import ApertureMask, Grid2D, OpticalConfig

PITCH = 2.2e-6
WAVELENGTH = 550e-9
DZ = 1.0e-6

# Nyquist bins behave differently under first-derivative spectral pipelines
# (their odd-frequency content has no real representative), so fields meant
# to round-trip through several solver families stay below this cutoff.
BANDLIMIT = 0.30


@pytest.fixture
def config():
    return OpticalConfig(WAVELENGTH, PITCH, DZ)


def grid(data, pitch=PITCH):
    return Grid2D(np.asarray(data, dtype=np.float64), pitch)


def full_mask(shape, pitch=PITCH):
    return ApertureMask.full(shape[0], shape[1], pitch)


def bandlimit(data, cutoff=BANDLIMIT):
    """Zero every spectral component above cutoff (cycles per sample)."""
    spec = np.fft.fft2(data)
    fy = np.fft.fftfreq(data.shape[0])[:, None]
    fx = np.fft.fftfreq(data.shape[1])[None, :]
    spec[np.hypot(fy, fx) > cutoff] = 0.0
    return np.fft.ifft2(spec).real


def smooth_phase(shape, seed=0, amplitude=1.0, cutoff=BANDLIMIT):
    """Band-limited zero-mean random field with the given peak amplitude."""
    rng = np.random.default_rng(seed)
    data = bandlimit(rng.standard_normal(shape), cutoff)
    data -= data.mean()
    return data * (amplitude / np.abs(data).max())


def gauge_rmse(a, b, select=None):
    """RMS difference after removing the mean offset (phase gauge)."""
    diff = np.asarray(a) - np.asarray(b)
    if select is not None:
        diff = diff[select]
    diff = diff - diff.mean()
    return float(np.sqrt(np.mean(diff * diff)))
