"""File formats: field payloads, PNG exports, reports, and run configs."""
import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from hypothesis.extra import numpy as hnp
from PIL import Image

from ustie.core import Grid2D, OpticalConfig
from ustie.io import (
    GLOBAL_MAX,
    GRAY,
    HEADER_SIZE,
    MAGIC,
    MANUAL_CEILING,
    SIGNED,
    BadMagicError,
    FieldFileError,
    RunConfig,
    TruncatedFileError,
    UnknownDtypeError,
    export_png,
    read_config,
    read_field,
    read_report,
    write_config,
    write_field,
    write_report,
)
from ustie.solvers import SolverReport

from conftest import DZ, PITCH, WAVELENGTH, grid


# -- field files --------------------------------------------------------------

def test_f64_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.standard_normal((17, 23)) * np.exp(rng.uniform(-300, 300, (17, 23)))
    g = Grid2D(data, PITCH)
    path = tmp_path / "field.tief"
    write_field(path, g)
    back = read_field(path)
    assert back.data.dtype == np.float64
    assert np.array_equal(back.data, g.data)
    assert back.pitch == PITCH


def test_f32_write_is_lossy_but_deterministic(tmp_path):
    data = np.array([[1.0, 1.0 + 1e-12], [np.pi, -np.pi]])
    path = tmp_path / "field.tief"
    write_field(path, Grid2D(data, PITCH), dtype="f32")
    back = read_field(path)
    assert np.array_equal(back.data, data.astype(np.float32).astype(np.float64))


def test_mask_round_trip(tmp_path):
    mask = np.zeros((6, 9), dtype=bool)
    mask[2:4, 3:7] = True
    path = tmp_path / "mask.tief"
    write_field(path, Grid2D(mask, PITCH))
    back = read_field(path)
    assert back.data.dtype == np.bool_
    assert np.array_equal(back.data, mask)


@settings(
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.function_scoped_fixture],
)
@given(
    data=st.tuples(st.integers(1, 8), st.integers(1, 8)).flatmap(
        lambda s: hnp.arrays(
            np.float64, s, elements=st.floats(allow_nan=False, allow_infinity=False, width=64)
        )
    )
)
def test_round_trip_property(data, tmp_path):
    path = tmp_path / "any.tief"
    write_field(path, Grid2D(data, PITCH))
    assert np.array_equal(read_field(path).data, data)


def test_header_layout(tmp_path):
    g = grid(np.arange(6.0).reshape(2, 3))
    path = tmp_path / "field.tief"
    write_field(path, g)
    blob = path.read_bytes()
    assert blob[:5] == MAGIC
    assert HEADER_SIZE == 22
    tag, height, width, pitch = struct.unpack("<BIId", blob[5:22])
    assert (tag, height, width) == (1, 2, 3)
    assert pitch == PITCH
    payload = np.frombuffer(blob[22:], dtype="<f8").reshape(2, 3)
    assert np.array_equal(payload, g.data)


def test_hand_built_file_reads_back(tmp_path):
    data = np.array([[0.5, -1.5], [2.5, 3.5]], dtype="<f8")
    blob = MAGIC + struct.pack("<BIId", 1, 2, 2, PITCH) + data.tobytes()
    path = tmp_path / "hand.tief"
    path.write_bytes(blob)
    back = read_field(path)
    assert np.array_equal(back.data, data)


def test_unknown_dtype_name_rejected(tmp_path):
    with pytest.raises(ValueError, match="dtype"):
        write_field(tmp_path / "x.tief", grid(np.zeros((2, 2))), dtype="f16")


def test_mask_dtype_requires_binary_data(tmp_path):
    with pytest.raises(ValueError, match="0/1"):
        write_field(tmp_path / "x.tief", grid(np.full((2, 2), 0.5)), dtype="mask-u8")


def test_truncated_header(tmp_path):
    path = tmp_path / "short.tief"
    path.write_bytes(MAGIC + b"\x01\x02")
    with pytest.raises(TruncatedFileError):
        read_field(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "short.tief"
    blob = MAGIC + struct.pack("<BIId", 1, 4, 4, PITCH) + b"\x00" * 10
    path.write_bytes(blob)
    with pytest.raises(TruncatedFileError):
        read_field(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.tief"
    path.write_bytes(b"NOTIT" + struct.pack("<BIId", 1, 1, 1, PITCH) + b"\x00" * 8)
    with pytest.raises(BadMagicError):
        read_field(path)


def test_unknown_dtype_tag(tmp_path):
    path = tmp_path / "bad.tief"
    path.write_bytes(MAGIC + struct.pack("<BIId", 7, 1, 1, PITCH) + b"\x00" * 8)
    with pytest.raises(UnknownDtypeError):
        read_field(path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "bad.tief"
    blob = MAGIC + struct.pack("<BIId", 1, 1, 1, PITCH) + b"\x00" * 8 + b"extra"
    path.write_bytes(blob)
    with pytest.raises(FieldFileError, match="trailing|bytes"):
        read_field(path)


@pytest.mark.parametrize("pitch", [0.0, -1.0, float("nan"), float("inf")])
def test_invalid_pitch_rejected(tmp_path, pitch):
    path = tmp_path / "bad.tief"
    path.write_bytes(MAGIC + struct.pack("<BIId", 1, 1, 1, pitch) + b"\x00" * 8)
    with pytest.raises(FieldFileError):
        read_field(path)


def test_empty_dimensions_rejected(tmp_path):
    path = tmp_path / "bad.tief"
    path.write_bytes(MAGIC + struct.pack("<BIId", 1, 0, 4, PITCH))
    with pytest.raises(FieldFileError, match="empty"):
        read_field(path)


def test_mask_payload_values_checked(tmp_path):
    path = tmp_path / "bad.tief"
    path.write_bytes(MAGIC + struct.pack("<BIId", 2, 1, 2, PITCH) + bytes([1, 2]))
    with pytest.raises(FieldFileError, match="0/1"):
        read_field(path)


def test_error_taxonomy_roots_at_field_file_error():
    for exc in (BadMagicError, TruncatedFileError, UnknownDtypeError):
        assert issubclass(exc, FieldFileError)


# -- PNG export ---------------------------------------------------------------

def test_gray_png_maps_min_max(tmp_path):
    g = grid(np.array([[0.0, 1.0], [0.25, 0.75]]))
    path = tmp_path / "img.png"
    export_png(g, path, GRAY)
    pixels = np.asarray(Image.open(path))
    assert pixels.dtype == np.uint8
    assert pixels[0, 0] == 0
    assert pixels[0, 1] == 255
    assert pixels[1, 0] == 64
    sidecar = (tmp_path / "img.png.bounds.txt").read_text().splitlines()
    assert sidecar[0] == "colormap gray"
    assert sidecar[1] == "min 0"
    assert sidecar[2] == "max 1"


def test_signed_png_centers_zero(tmp_path):
    g = grid(np.array([[0.0, 2.0], [-2.0, 1.0]]))
    path = tmp_path / "img.png"
    export_png(g, path, SIGNED)
    pixels = np.asarray(Image.open(path))
    assert pixels[0, 0] == 128
    assert pixels[0, 1] == 255
    assert pixels[1, 0] == 0
    sidecar = (tmp_path / "img.png.bounds.txt").read_text().splitlines()
    assert sidecar[0] == "colormap signed"
    assert sidecar[3] == "scale 2"


def test_constant_image_renders_mid_gray(tmp_path):
    g = grid(np.full((3, 3), 0.7))
    for colormap in (GRAY, SIGNED):
        path = tmp_path / f"{colormap}.png"
        export_png(g, path, colormap)
        assert np.all(np.asarray(Image.open(path)) == 128)


def test_unknown_colormap_rejected(tmp_path):
    with pytest.raises(ValueError, match="colormap"):
        export_png(grid(np.zeros((2, 2))), tmp_path / "x.png", "viridis")


# -- solver reports -----------------------------------------------------------

def make_report(with_rmse=False):
    cfg = OpticalConfig(WAVELENGTH, PITCH, DZ)
    return SolverReport(
        solver="us-tie",
        phase=grid(np.zeros((4, 4))),
        iterations_run=3,
        residual_trace=(0.5, 1.0 / 3.0, 0.1),
        converged=True,
        per_iteration_seconds=(0.001, 0.002, 0.003),
        config=cfg,
        rmse_trace=(0.3, 0.2, 0.1) if with_rmse else None,
    )


def test_report_round_trip(tmp_path):
    report = make_report()
    path = tmp_path / "report.json"
    write_report(report, path)
    back = read_report(path)
    assert back["solver"] == "us-tie"
    assert back["converged"] is True
    assert back["iterations_run"] == 3
    assert back["residual_trace"] == list(report.residual_trace)
    assert back["per_iteration_seconds"] == list(report.per_iteration_seconds)
    assert back["config"]["wavelength"] == WAVELENGTH
    assert back["config"]["pitch"] == PITCH
    assert back["config"]["defocus"] == DZ
    assert "rmse_trace" not in back


def test_report_round_trip_with_rmse_trace(tmp_path):
    path = tmp_path / "report.json"
    write_report(make_report(with_rmse=True), path)
    assert read_report(path)["rmse_trace"] == [0.3, 0.2, 0.1]


# -- run configs --------------------------------------------------------------

def make_config(**overrides):
    base = dict(
        solver="us-tie",
        wavelength=WAVELENGTH,
        pitch=PITCH,
        defocus=DZ,
        max_iterations=50,
        tolerance=1e-5,
        i_max_mode=GLOBAL_MAX,
        intensity_floor=1e-3,
        phantom=None,
        inputs=("didz.tief", "intensity.tief"),
        out_dir="out",
    )
    base.update(overrides)
    return RunConfig(**base)


def test_config_round_trip(tmp_path):
    cfg = make_config()
    path = tmp_path / "run.ini"
    write_config(cfg, path)
    assert read_config(path) == cfg


def test_config_round_trip_with_manual_ceiling(tmp_path):
    cfg = make_config(i_max_mode=MANUAL_CEILING, i_max_value=1.5)
    path = tmp_path / "run.ini"
    write_config(cfg, path)
    back = read_config(path)
    assert back.i_max_mode == MANUAL_CEILING
    assert back.i_max_value == 1.5


def test_config_round_trip_with_phantom(tmp_path):
    cfg = make_config(phantom="astigmatism", inputs=())
    path = tmp_path / "run.ini"
    write_config(cfg, path)
    assert read_config(path).phantom == "astigmatism"


@pytest.mark.parametrize(
    "overrides",
    [
        {"wavelength": 0.0},
        {"pitch": -1.0},
        {"defocus": 0.0},
        {"max_iterations": 0},
        {"tolerance": 0.0},
        {"i_max_mode": "local_max"},
        {"i_max_mode": MANUAL_CEILING},
        {"intensity_floor": 0.0},
        {"phantom": "astigmatism"},
    ],
)
def test_config_validation(overrides):
    with pytest.raises(ValueError):
        make_config(**overrides)


def test_unknown_section_rejected(tmp_path):
    cfg = make_config()
    path = tmp_path / "run.ini"
    write_config(cfg, path)
    path.write_text(path.read_text() + "\n[extras]\nfoo = 1\n")
    with pytest.raises(ValueError, match="unknown section"):
        read_config(path)


def test_unknown_key_rejected(tmp_path):
    cfg = make_config()
    path = tmp_path / "run.ini"
    write_config(cfg, path)
    path.write_text(path.read_text().replace("[optics]", "[optics]\ncolor = blue"))
    with pytest.raises(ValueError, match="unknown key"):
        read_config(path)


def test_missing_key_rejected(tmp_path):
    cfg = make_config()
    path = tmp_path / "run.ini"
    write_config(cfg, path)
    text = "\n".join(
        line for line in path.read_text().splitlines() if not line.startswith("wavelength")
    )
    path.write_text(text)
    with pytest.raises(ValueError, match="missing key"):
        read_config(path)
