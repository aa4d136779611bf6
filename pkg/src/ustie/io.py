"""File formats: raw field files, PNG renders, solver reports, run configs.

The field format is deliberately trivial so that bit-exactness is checkable
by eye in a hex dump:

    offset 0   5 bytes   magic b"TIEF1"
    offset 5   1 byte    dtype tag: 0 = f32, 1 = f64, 2 = mask-u8
    offset 6   4 bytes   height, little-endian u32
    offset 10  4 bytes   width, little-endian u32
    offset 14  8 bytes   pixel pitch in meters, little-endian f64
    offset 22  payload   row-major, little-endian, no padding

Reports are JSON written by hand with 17-significant-digit floats so that
every value round-trips through text exactly; reading uses the stdlib
parser (which accepts the Infinity/NaN tokens the writer may emit).
"""
from __future__ import annotations

import json
import math
import struct
from configparser import ConfigParser
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import Grid2D
from .solvers import SolverReport

MAGIC = b"TIEF1"
_HEADER = struct.Struct("<BIId")
HEADER_SIZE = len(MAGIC) + _HEADER.size

_TAG_F32 = 0
_TAG_F64 = 1
_TAG_MASK = 2

_DTYPE_NAMES = {"f32": _TAG_F32, "f64": _TAG_F64, "mask-u8": _TAG_MASK}
_PAYLOAD_DTYPES = {
    _TAG_F32: np.dtype("<f4"),
    _TAG_F64: np.dtype("<f8"),
    _TAG_MASK: np.dtype("u1"),
}


class FieldFileError(Exception):
    """Any structural problem with a field file."""


class BadMagicError(FieldFileError):
    pass


class TruncatedFileError(FieldFileError):
    pass


class UnknownDtypeError(FieldFileError):
    pass


def write_field(path, grid: Grid2D, dtype: str | None = None) -> None:
    """Serialize a grid. ``dtype`` overrides the natural payload type.

    Defaults: boolean grids go out as mask-u8, everything else as f64.
    Writing f32 is lossy and only for interchange; f64 round-trips exactly.
    """
    data = grid.data
    if dtype is None:
        tag = _TAG_MASK if data.dtype == np.bool_ else _TAG_F64
    else:
        if dtype not in _DTYPE_NAMES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPE_NAMES)}, got {dtype!r}")
        tag = _DTYPE_NAMES[dtype]
    if tag == _TAG_MASK:
        if data.dtype != np.bool_ and not np.isin(data, (0, 1)).all():
            raise ValueError("mask payload requires boolean or 0/1 data")
        payload = data.astype("u1")
    else:
        payload = data.astype(_PAYLOAD_DTYPES[tag])
    blob = MAGIC + _HEADER.pack(tag, grid.height, grid.width, grid.pitch)
    Path(path).write_bytes(blob + payload.tobytes())


def read_field(path) -> Grid2D:
    """Load a field file. f32 payloads are upcast to f64; masks come back bool."""
    blob = Path(path).read_bytes()
    if len(blob) < HEADER_SIZE:
        raise TruncatedFileError(
            f"{path}: header needs {HEADER_SIZE} bytes, file has {len(blob)}"
        )
    if blob[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:len(MAGIC)]!r}, expected {MAGIC!r}")
    tag, height, width, pitch = _HEADER.unpack_from(blob, len(MAGIC))
    if tag not in _PAYLOAD_DTYPES:
        raise UnknownDtypeError(f"{path}: unknown dtype tag {tag}")
    if height == 0 or width == 0:
        raise FieldFileError(f"{path}: empty field ({height} x {width})")
    if not (math.isfinite(pitch) and pitch > 0):
        raise FieldFileError(f"{path}: invalid pitch {pitch}")
    itemsize = _PAYLOAD_DTYPES[tag].itemsize
    expected = height * width * itemsize
    actual = len(blob) - HEADER_SIZE
    if actual < expected:
        raise TruncatedFileError(
            f"{path}: payload expected {expected} bytes, got {actual}"
        )
    if actual > expected:
        raise FieldFileError(
            f"{path}: {actual - expected} trailing bytes after payload"
        )
    flat = np.frombuffer(blob, dtype=_PAYLOAD_DTYPES[tag], count=height * width, offset=HEADER_SIZE)
    arr = flat.reshape(height, width)
    if tag == _TAG_MASK:
        if not np.isin(arr, (0, 1)).all():
            raise FieldFileError(f"{path}: mask payload contains values other than 0/1")
        arr = arr.astype(bool)
    try:
        return Grid2D(arr, pitch)
    except ValueError as exc:
        raise FieldFileError(f"{path}: {exc}") from exc


GRAY = "gray"
SIGNED = "signed"


def _decimal(x: float) -> str:
    """Shortest text that parses back to exactly the same double."""
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(float(x), ".17g")


def export_png(grid: Grid2D, path, colormap: str = GRAY) -> None:
    """8-bit grayscale render plus a sidecar recording the normalization.

    ``gray`` maps [min, max] onto [0, 255]. ``signed`` maps [-m, m] with
    m = max |value| onto [0, 255], so zero always lands on mid-gray 128.
    Constant images render as uniform 128 under both maps. The sidecar at
    ``<path>.bounds.txt`` holds the exact bounds as decimal text.
    """
    v = grid.data.astype(np.float64)
    lo = float(v.min())
    hi = float(v.max())
    lines = [f"colormap {colormap}", f"min {_decimal(lo)}", f"max {_decimal(hi)}"]
    if colormap == GRAY:
        if hi == lo:
            u8 = np.full(v.shape, 128, dtype=np.uint8)
        else:
            u8 = np.rint((v - lo) / (hi - lo) * 255.0).astype(np.uint8)
    elif colormap == SIGNED:
        m = float(np.abs(v).max())
        lines.append(f"scale {_decimal(m)}")
        if hi == lo:
            u8 = np.full(v.shape, 128, dtype=np.uint8)
        else:
            u8 = np.rint(127.5 + v / m * 127.5).astype(np.uint8)
    else:
        raise ValueError(f"colormap must be '{GRAY}' or '{SIGNED}', got {colormap!r}")
    Image.fromarray(u8, mode="L").save(Path(path), format="PNG")
    Path(str(path) + ".bounds.txt").write_text("\n".join(lines) + "\n")


def _json_floats(values) -> str:
    return "[" + ", ".join(_decimal(v) for v in values) + "]"


def write_report(report: SolverReport, path) -> None:
    """Solver report as JSON; every float carries 17 significant digits."""
    cfg = report.config
    lines = [
        "{",
        f'  "solver": {json.dumps(report.solver)},',
        f'  "converged": {"true" if report.converged else "false"},',
        f'  "iterations_run": {report.iterations_run},',
        '  "config": {',
        f'    "wavelength": {_decimal(cfg.wavelength)},',
        f'    "pitch": {_decimal(cfg.pitch)},',
        f'    "defocus": {_decimal(cfg.defocus)}',
        "  },",
        f'  "residual_trace": {_json_floats(report.residual_trace)},',
    ]
    if report.rmse_trace is not None:
        lines.append(f'  "rmse_trace": {_json_floats(report.rmse_trace)},')
    lines.append(
        f'  "per_iteration_seconds": {_json_floats(report.per_iteration_seconds)}'
    )
    lines.append("}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> dict:
    """Parse a report written by write_report back into a plain dict."""
    return json.loads(Path(path).read_text())


GLOBAL_MAX = "global_max"
MANUAL_CEILING = "manual"


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a solver run, INI-serializable."""

    solver: str
    wavelength: float
    pitch: float
    defocus: float
    max_iterations: int = 100
    tolerance: float = 1e-4
    i_max_mode: str = GLOBAL_MAX
    i_max_value: float | None = None
    intensity_floor: float = 1e-3
    phantom: str | None = None
    inputs: tuple[str, ...] = ()
    out_dir: str = "ustie-out"

    def __post_init__(self):
        if not (self.wavelength > 0):
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if not (self.pitch > 0):
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if self.defocus == 0:
            raise ValueError("defocus must be nonzero")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not (self.tolerance > 0):
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.i_max_mode not in (GLOBAL_MAX, MANUAL_CEILING):
            raise ValueError(
                f"i_max_mode must be '{GLOBAL_MAX}' or '{MANUAL_CEILING}', got {self.i_max_mode!r}"
            )
        if self.i_max_mode == MANUAL_CEILING and not (
            self.i_max_value is not None and self.i_max_value > 0
        ):
            raise ValueError("manual i_max_mode requires a positive i_max_value")
        if not (self.intensity_floor > 0):
            raise ValueError(f"intensity_floor must be positive, got {self.intensity_floor}")
        if self.phantom is not None and self.inputs:
            raise ValueError("phantom and input files are mutually exclusive")
        object.__setattr__(self, "inputs", tuple(self.inputs))


_CONFIG_KEYS = {
    "run": {"solver", "phantom", "inputs", "out_dir"},
    "optics": {"wavelength", "pitch", "defocus"},
    "solver": {"max_iterations", "tolerance", "i_max_mode", "i_max_value", "intensity_floor"},
}


def write_config(config: RunConfig, path) -> None:
    parser = ConfigParser()
    parser.add_section("run")
    parser.set("run", "solver", config.solver)
    if config.phantom is not None:
        parser.set("run", "phantom", config.phantom)
    if config.inputs:
        parser.set("run", "inputs", "\n".join(config.inputs))
    parser.set("run", "out_dir", config.out_dir)
    parser.add_section("optics")
    parser.set("optics", "wavelength", _decimal(config.wavelength))
    parser.set("optics", "pitch", _decimal(config.pitch))
    parser.set("optics", "defocus", _decimal(config.defocus))
    parser.add_section("solver")
    parser.set("solver", "max_iterations", str(config.max_iterations))
    parser.set("solver", "tolerance", _decimal(config.tolerance))
    parser.set("solver", "i_max_mode", config.i_max_mode)
    if config.i_max_value is not None:
        parser.set("solver", "i_max_value", _decimal(config.i_max_value))
    parser.set("solver", "intensity_floor", _decimal(config.intensity_floor))
    with open(path, "w") as fh:
        parser.write(fh)


def read_config(path) -> RunConfig:
    """Parse and validate a run config; unknown sections or keys are errors."""
    parser = ConfigParser()
    text = Path(path).read_text()
    parser.read_string(text, source=str(path))
    for section in parser.sections():
        if section not in _CONFIG_KEYS:
            raise ValueError(f"{path}: unknown section [{section}]")
        for key in parser.options(section):
            if key not in _CONFIG_KEYS[section]:
                raise ValueError(f"{path}: unknown key {key!r} in [{section}]")
    for section in ("run", "optics", "solver"):
        if not parser.has_section(section):
            raise ValueError(f"{path}: missing section [{section}]")
    run = parser["run"]
    optics = parser["optics"]
    solver = parser["solver"]
    inputs: tuple[str, ...] = ()
    if "inputs" in run:
        inputs = tuple(line for line in run["inputs"].splitlines() if line.strip())
    try:
        return RunConfig(
            solver=run["solver"],
            wavelength=float(optics["wavelength"]),
            pitch=float(optics["pitch"]),
            defocus=float(optics["defocus"]),
            max_iterations=int(solver["max_iterations"]),
            tolerance=float(solver["tolerance"]),
            i_max_mode=solver["i_max_mode"],
            i_max_value=float(solver["i_max_value"]) if "i_max_value" in solver else None,
            intensity_floor=float(solver["intensity_floor"]),
            phantom=run.get("phantom"),
            inputs=inputs,
            out_dir=run.get("out_dir", "ustie-out"),
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing key {exc}") from exc
