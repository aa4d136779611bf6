"""Counted 2D transform executions shared by all spectral operators.

Every function here performs exactly one separable 2D transform pass (two
batched 1D transforms, one per axis) and reports it to the active
:class:`TransformCounter`, if any.  Solver cost claims are stated in these
units: one ``fft2`` call is one FFT execution, one ``dctn2`` call is one
cosine-transform execution, and the mixed sine/cosine passes used by the
Neumann-derivative operators count as one cosine-family execution each.

Counting is opt-in via :func:`count_transforms`; a context variable keeps
concurrent counters independent.
"""
from __future__ import annotations

import contextlib
from contextvars import ContextVar
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as _fft


@dataclass
class TransformCounter:
    """Tally of 2D transform executions, split by transform family."""

    fft: int = 0
    dct: int = 0
    by_kind: dict = field(default_factory=dict)

    def record(self, kind: str) -> None:
        if kind.startswith("fft") or kind.startswith("ifft") or "rfft" in kind:
            self.fft += 1
        else:
            self.dct += 1
        self.by_kind[kind] = self.by_kind.get(kind, 0) + 1

    @property
    def total(self) -> int:
        return self.fft + self.dct


_active: ContextVar[TransformCounter | None] = ContextVar("ustie_transform_counter", default=None)


@contextlib.contextmanager
def count_transforms():
    """Install a fresh counter for the duration of the block and yield it."""
    counter = TransformCounter()
    token = _active.set(counter)
    try:
        yield counter
    finally:
        _active.reset(token)


def _record(kind: str) -> None:
    counter = _active.get()
    if counter is not None:
        counter.record(kind)


# -- periodic (Fourier) family ------------------------------------------------

def fft2(a: np.ndarray) -> np.ndarray:
    _record("fft2")
    return _fft.fft2(a)


def ifft2(a: np.ndarray) -> np.ndarray:
    _record("ifft2")
    return _fft.ifft2(a)


def rfft2(a: np.ndarray) -> np.ndarray:
    _record("rfft2")
    return _fft.rfft2(a)


def irfft2(a: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    _record("irfft2")
    return _fft.irfft2(a, s=shape)


# -- cosine (Neumann) family --------------------------------------------------
#
# All cosine-family passes use the unnormalized scipy conventions (norm=None).
# With N samples of pitch h the mode-a basis function along an axis is
# cos(k_a (x + h/2)) with k_a = pi a / (N h); sine modes follow the same
# indexing shifted by one (mode m occupies output slot m-1 of a type-II DST).

def dctn2(a: np.ndarray) -> np.ndarray:
    _record("dctn2")
    return _fft.dctn(a, type=2)


def idctn2(a: np.ndarray) -> np.ndarray:
    _record("idctn2")
    return _fft.idctn(a, type=2)


def mixed_inverse(coeffs: np.ndarray, sine_axis: int) -> np.ndarray:
    """Evaluate a sine-along-one-axis, cosine-along-the-other series.

    ``coeffs`` is laid out like a 2D type-II DCT output except along
    ``sine_axis``, where slot ``m-1`` carries ``N * g_m`` for sine mode ``m``
    (the type-II DST output scaling).  Counts as one transform execution.
    """
    _record("mixed_idstn")
    cos_axis = 1 - sine_axis
    out = _fft.idst(coeffs, type=2, axis=sine_axis)
    return _fft.idct(out, type=2, axis=cos_axis)


def mixed_forward(a: np.ndarray, sine_axis: int) -> np.ndarray:
    """Forward counterpart of :func:`mixed_inverse`; one transform execution."""
    _record("mixed_dstn")
    cos_axis = 1 - sine_axis
    out = _fft.dst(a, type=2, axis=sine_axis)
    return _fft.dct(out, type=2, axis=cos_axis)
