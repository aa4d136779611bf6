"""Command-line front end: simulate, solve, compare, bench.

Exit codes: 0 success (and solver converged), 2 usage error, 3 input or
file-format error, 4 solver ran but did not converge. Expected failures
print a single ``error: <category>: <message>`` line on stderr.
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from ._transforms import count_transforms
from .core import ApertureMask, Grid2D, OpticalConfig, rmse
from .io import (
    GRAY,
    SIGNED,
    FieldFileError,
    RunConfig,
    _decimal,
    export_png,
    read_field,
    write_config,
    write_field,
    write_report,
)
from .phantoms import (
    astigmatism_phantom,
    defocus_phantom,
    gaussian_beam_phantom,
    inverse_gaussian_phantom,
)
from .preprocess import threshold_aperture
from .propagation import axial_derivative, synthesize_stack
from .solvers import (
    DCT_TIE,
    FFT_TIE,
    ITER_DCT,
    US_TIE,
    UsTieParams,
    dct_tie_solve,
    fft_tie_solve,
    iter_dct_solve,
    rmse_region,
    us_tie_solve,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NO_CONVERGENCE = 4

PHANTOMS = {
    "astigmatism": astigmatism_phantom,
    "gaussian-beam": gaussian_beam_phantom,
    "inverse-gaussian": inverse_gaussian_phantom,
    "defocus": defocus_phantom,
}
SOLVERS = (US_TIE, FFT_TIE, DCT_TIE, ITER_DCT)


class UsageError(Exception):
    """Precondition failures that argparse cannot express."""


def _add_optics(sp, pitch_default=2.2e-6):
    sp.add_argument("--dz", type=float, default=1e-6, help="defocus distance in meters")
    sp.add_argument("--wavelength", type=float, default=550e-9, help="wavelength in meters")
    sp.add_argument("--pitch", type=float, default=pitch_default, help="pixel pitch in meters")


def _add_solver_params(sp):
    sp.add_argument("--tol", type=float, default=1e-4, help="relative residual tolerance")
    sp.add_argument("--max-iter", type=int, default=100, help="iteration budget")
    sp.add_argument("--i-max", type=float, default=None, help="manual intensity ceiling")
    sp.add_argument(
        "--floor", type=float, default=1e-3, help="intensity clamp, relative to the maximum"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ustie",
        description="Phase retrieval from through-focus intensity stacks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="synthesize a phantom focal stack")
    sim.add_argument("phantom", choices=sorted(PHANTOMS))
    _add_optics(sim)
    sim.add_argument("--size", type=int, default=256, help="grid size in pixels")
    sim.add_argument("--noise", type=float, default=0.0, help="Gaussian sigma / mean intensity")
    sim.add_argument("--seed", type=int, default=0, help="noise generator seed")
    sim.add_argument("--out", default="ustie-out", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    sol = sub.add_parser("solve", help="recover phase from derivative + intensity files")
    sol.add_argument("derivative", help="dI/dz field file")
    sol.add_argument("intensity", help="in-focus intensity field file")
    sol.add_argument("--solver", choices=SOLVERS, default=US_TIE)
    _add_optics(sol, pitch_default=None)
    _add_solver_params(sol)
    sol.add_argument(
        "--aperture",
        default="auto",
        help="'auto' (threshold the intensity), 'none' (full frame), or a mask file path",
    )
    sol.add_argument("--truth", default=None, help="ground-truth phase file, adds an error trace")
    sol.add_argument("--out", default="ustie-out")
    sol.set_defaults(func=cmd_solve)

    cmp_ = sub.add_parser("compare", help="run several solvers on one phantom")
    cmp_.add_argument("phantom", choices=sorted(PHANTOMS))
    cmp_.add_argument("solvers", nargs="+", metavar="solver", help=f"two or more of {', '.join(SOLVERS)}")
    _add_optics(cmp_)
    _add_solver_params(cmp_)
    cmp_.add_argument("--size", type=int, default=256)
    cmp_.add_argument("--out", default="ustie-out")
    cmp_.set_defaults(func=cmd_compare)

    ben = sub.add_parser("bench", help="per-iteration cost at a fixed iteration count")
    ben.add_argument("phantom", choices=sorted(PHANTOMS))
    _add_optics(ben)
    ben.add_argument("--size", type=int, default=256)
    ben.add_argument("--max-iter", type=int, default=30, help="fixed iteration count (>= 10)")
    ben.add_argument("--floor", type=float, default=1e-3)
    ben.add_argument("--out", default="ustie-out")
    ben.set_defaults(func=cmd_bench)
    return parser


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _make_phantom(args):
    config = OpticalConfig(args.wavelength, args.pitch, args.dz)
    phantom = PHANTOMS[args.phantom](args.size, args.pitch)
    return config, phantom


def cmd_simulate(args) -> int:
    config, phantom = _make_phantom(args)
    stack = synthesize_stack(phantom.intensity, phantom.phase, config)
    planes = {
        "stack_under": stack.under.data,
        "stack_focus": stack.focus.data,
        "stack_over": stack.over.data,
    }
    if args.noise > 0:
        rng = np.random.default_rng(args.seed)
        sigma = args.noise * float(stack.focus.data.mean())
        for name in ("stack_under", "stack_focus", "stack_over"):
            noisy = planes[name] + rng.normal(0.0, sigma, planes[name].shape)
            planes[name] = np.clip(noisy, 0.0, None)
    didz = (planes["stack_over"] - planes["stack_under"]) / (2.0 * config.defocus)

    out = _out_dir(args)
    write_field(out / "phase_true.tief", phantom.phase)
    write_field(out / "intensity_true.tief", phantom.intensity)
    for name in ("stack_under", "stack_focus", "stack_over"):
        write_field(out / f"{name}.tief", Grid2D(planes[name], args.pitch))
    write_field(out / "didz.tief", Grid2D(didz, args.pitch))
    export_png(phantom.phase, out / "phase_true.png", SIGNED)
    export_png(phantom.intensity, out / "intensity_true.png", GRAY)
    export_png(Grid2D(planes["stack_focus"], args.pitch), out / "stack_focus.png", GRAY)
    export_png(Grid2D(didz, args.pitch), out / "didz.png", SIGNED)
    print(f"simulate {args.phantom}: 6 field files in {out}")
    return EXIT_OK


def _load_aperture(spec: str, intensity: Grid2D) -> ApertureMask:
    if spec == "auto":
        return threshold_aperture(intensity)
    if spec == "none":
        return ApertureMask.full(intensity.height, intensity.width, intensity.pitch)
    mask = read_field(spec)
    if mask.data.dtype != np.bool_:
        raise FieldFileError(f"{spec}: aperture file must hold a mask payload")
    return ApertureMask(mask)


def _run_solver(name, deriv, inten, aperture, config, params, floor, truth):
    if name == US_TIE:
        return us_tie_solve(deriv, inten, config, params, ground_truth=truth)
    if name == FFT_TIE:
        return fft_tie_solve(deriv, inten, config, floor)
    if name == DCT_TIE:
        return dct_tie_solve(deriv, inten, config, floor)
    return iter_dct_solve(
        deriv, inten, aperture, config, params, floor, ground_truth=truth
    )


def _run_config(args, solver, phantom=None, inputs=()) -> RunConfig:
    return RunConfig(
        solver=solver,
        wavelength=args.wavelength,
        pitch=args.pitch,
        defocus=args.dz,
        max_iterations=getattr(args, "max_iter", 100),
        tolerance=getattr(args, "tol", 1e-4),
        i_max_mode="global_max" if getattr(args, "i_max", None) is None else "manual",
        i_max_value=getattr(args, "i_max", None),
        intensity_floor=getattr(args, "floor", 1e-3),
        phantom=phantom,
        inputs=tuple(str(p) for p in inputs),
        out_dir=str(args.out),
    )


def cmd_solve(args) -> int:
    deriv = read_field(args.derivative)
    inten = read_field(args.intensity)
    if deriv.shape != inten.shape:
        raise FieldFileError(
            f"shape mismatch: derivative {deriv.shape} vs intensity {inten.shape}"
        )
    if abs(deriv.pitch - inten.pitch) > 1e-12 * deriv.pitch:
        raise FieldFileError(
            f"pitch mismatch: derivative {deriv.pitch} vs intensity {inten.pitch}"
        )
    pitch = deriv.pitch
    if args.pitch is not None and abs(args.pitch - pitch) > 1e-12 * pitch:
        raise FieldFileError(f"--pitch {args.pitch} disagrees with file pitch {pitch}")
    args.pitch = pitch
    config = OpticalConfig(args.wavelength, pitch, args.dz)
    params = UsTieParams(
        max_iterations=args.max_iter, tolerance=args.tol, intensity_ceiling=args.i_max
    )
    truth = read_field(args.truth) if args.truth else None
    aperture = _load_aperture(args.aperture, inten)
    report = _run_solver(
        args.solver, deriv, inten, aperture, config, params, args.floor, truth
    )

    out = _out_dir(args)
    write_field(out / "phase.tief", report.phase)
    export_png(report.phase, out / "phase.png", SIGNED)
    write_report(report, out / "report.json")
    write_config(
        _run_config(args, args.solver, inputs=(args.derivative, args.intensity)),
        out / "run.ini",
    )
    last = report.residual_trace[-1]
    print(
        f"{args.solver}: converged={str(report.converged).lower()} "
        f"iterations={report.iterations_run} residual={last:.3e}"
    )
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


_CHART_W = 520
_CHART_H = 360
_CHART_GRAYS = (0, 90, 150, 200)


def _polyline(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, gray: int) -> None:
    for i in range(len(xs) - 1):
        x0, y0, x1, y1 = xs[i], ys[i], xs[i + 1], ys[i + 1]
        n = int(max(abs(x1 - x0), abs(y1 - y0))) * 2 + 2
        t = np.linspace(0.0, 1.0, n)
        cc = np.rint(x0 + (x1 - x0) * t).astype(int)
        rr = np.rint(y0 + (y1 - y0) * t).astype(int)
        img[rr, cc] = gray
    for x, y in zip(xs, ys):
        img[max(y - 1, 0) : y + 1, max(x - 1, 0) : x + 1] = gray


def _render_traces(series, path) -> tuple[float, float]:
    """Log-scale line chart of per-iteration error traces; pure numpy + PNG.

    series: list of (label, values). Returns the (lo, hi) log10 range so the
    caller can document the axes next to the render.
    """
    left, right, top, bottom = 50, 15, 15, 40
    img = np.full((_CHART_H, _CHART_W), 255, dtype=np.uint8)
    cleaned = []
    for label, values in series:
        v = np.asarray(values, dtype=float)
        v = np.nan_to_num(v, nan=1e15, posinf=1e15, neginf=1e-15)
        cleaned.append(np.log10(np.clip(v, 1e-15, 1e15)))
    lo = min(float(v.min()) for v in cleaned)
    hi = max(float(v.max()) for v in cleaned)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    n_max = max(len(v) for v in cleaned)
    x_span = _CHART_W - left - right - 1
    y_span = _CHART_H - top - bottom - 1

    for tick in range(int(np.ceil(lo)), int(np.floor(hi)) + 1):
        r = top + int(round((hi - tick) / (hi - lo) * y_span))
        img[r, left : _CHART_W - right] = 230
    img[top : _CHART_H - bottom, left] = 0
    img[_CHART_H - bottom, left : _CHART_W - right] = 0

    for idx, v in enumerate(cleaned):
        if n_max > 1:
            xs = left + np.rint(np.arange(len(v)) / (n_max - 1) * x_span).astype(int)
        else:
            xs = np.array([left + x_span // 2])
        ys = top + np.rint((hi - v) / (hi - lo) * y_span).astype(int)
        _polyline(img, xs, ys, _CHART_GRAYS[idx % len(_CHART_GRAYS)])

    Image.fromarray(img, mode="L").save(Path(path), format="PNG")
    return lo, hi


def cmd_compare(args) -> int:
    if len(args.solvers) < 2:
        raise UsageError("compare needs at least two solvers")
    for name in args.solvers:
        if name not in SOLVERS:
            raise UsageError(f"unknown solver {name!r}, choose from {', '.join(SOLVERS)}")
    config, phantom = _make_phantom(args)
    stack = synthesize_stack(phantom.intensity, phantom.phase, config)
    deriv = axial_derivative(stack)
    params = UsTieParams(
        max_iterations=args.max_iter, tolerance=args.tol, intensity_ceiling=args.i_max
    )
    scoring = ApertureMask(
        Grid2D(
            rmse_region(phantom.intensity).mask.data & phantom.aperture.mask.data,
            args.pitch,
        )
    )

    out = _out_dir(args)
    rows = []
    chart_series = []
    for idx, name in enumerate(args.solvers, start=1):
        report = _run_solver(
            name, deriv, phantom.intensity, phantom.aperture, config, params,
            args.floor, phantom.phase,
        )
        final_rmse = rmse(report.phase, phantom.phase, scoring)
        write_report(report, out / f"report_{idx}_{name}.json")
        write_field(out / f"phase_{idx}_{name}.tief", report.phase)
        export_png(report.phase, out / f"phase_{idx}_{name}.png", SIGNED)
        median_s = float(np.median(report.per_iteration_seconds))
        rows.append((name, report.converged, report.iterations_run, final_rmse, median_s))
        trace = report.rmse_trace if report.rmse_trace is not None else (final_rmse,)
        chart_series.append((name, trace))

    lo, hi = _render_traces(chart_series, out / "traces.png")
    lines = [
        f"phantom: {args.phantom}  size: {args.size}",
        f"wavelength: {_decimal(args.wavelength)}  pitch: {_decimal(args.pitch)}  defocus: {_decimal(args.dz)}",
        "",
        f"{'solver':<10} {'converged':<10} {'iterations':>10} {'final_rmse_rad':>16} {'median_s_iter':>14}",
    ]
    for name, converged, iters, err, med in rows:
        lines.append(
            f"{name:<10} {str(converged).lower():<10} {iters:>10} {err:>16.6e} {med:>14.6e}"
        )
    lines.append("")
    lines.append("chart: traces.png (log10 phase error vs iteration)")
    lines.append(f"chart y-axis: log10 range [{lo:.3f}, {hi:.3f}]")
    for idx, (name, trace) in enumerate(chart_series):
        lines.append(
            f"chart series {idx + 1}: {name}  gray={_CHART_GRAYS[idx % len(_CHART_GRAYS)]}  points={len(trace)}"
        )
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def _median_kernel_seconds(fn, weight, phase, pitch, reps=9) -> float:
    fn(weight, phase, pitch)
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn(weight, phase, pitch)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def cmd_bench(args) -> int:
    if args.max_iter < 10:
        raise UsageError(f"bench needs an iteration count >= 10, got {args.max_iter}")
    config, phantom = _make_phantom(args)
    stack = synthesize_stack(phantom.intensity, phantom.phase, config)
    deriv = axial_derivative(stack)
    kernels.warmup()
    pinned = UsTieParams(max_iterations=args.max_iter, tolerance=1e-300)

    with count_transforms() as c_us:
        rep_us = us_tie_solve(deriv, phantom.intensity, config, pinned)
    with count_transforms() as c_it:
        rep_it = iter_dct_solve(
            deriv, phantom.intensity, phantom.aperture, config, pinned, args.floor
        )
    with count_transforms() as c_fft:
        rep_fft = fft_tie_solve(deriv, phantom.intensity, config, args.floor)

    per_us = c_us.total / rep_us.iterations_run
    per_it = c_it.total / rep_it.iterations_run
    med_us = float(np.median(rep_us.per_iteration_seconds))
    med_it = float(np.median(rep_it.per_iteration_seconds))

    weight = phantom.intensity.data.max() - phantom.intensity.data
    kernel_rows = [
        (name, _median_kernel_seconds(fns[3], weight, rep_us.phase.data, args.pitch))
        for name, fns in sorted(kernels.backends().items())
    ]

    out = _out_dir(args)
    lines = [
        f"phantom: {args.phantom}  size: {args.size}  iterations: {args.max_iter}",
        "",
        f"{'solver':<10} {'iterations':>10} {'transforms':>11} {'per_iter':>9} {'median_s_iter':>14}",
        f"{US_TIE:<10} {rep_us.iterations_run:>10} {c_us.total:>11} {per_us:>9.1f} {med_us:>14.6e}",
        f"{ITER_DCT:<10} {rep_it.iterations_run:>10} {c_it.total:>11} {per_it:>9.1f} {med_it:>14.6e}",
        f"{FFT_TIE:<10} {1:>10} {c_fft.total:>11} {float(c_fft.total):>9.1f} "
        f"{rep_fft.per_iteration_seconds[0]:>14.6e}",
        "",
        f"speed ratio (iter-dct / us-tie median per iteration): {med_it / med_us:.2f}",
        "",
        "flux-divergence kernel backends:",
    ]
    for name, med in kernel_rows:
        marker = " (active)" if name == kernels.ACTIVE_BACKEND else ""
        lines.append(f"  {name:<6} median {med:.6e} s{marker}")
    text = "\n".join(lines) + "\n"
    (out / "bench.txt").write_text(text)

    report_lines = [
        "{",
        f'  "phantom": "{args.phantom}",',
        f'  "size": {args.size},',
        f'  "iterations": {args.max_iter},',
        '  "us_tie": {',
        f'    "transforms_total": {c_us.total},',
        f'    "transforms_per_iteration": {_decimal(per_us)},',
        f'    "median_seconds_per_iteration": {_decimal(med_us)}',
        "  },",
        '  "iter_dct": {',
        f'    "transforms_total": {c_it.total},',
        f'    "transforms_per_iteration": {_decimal(per_it)},',
        f'    "median_seconds_per_iteration": {_decimal(med_it)}',
        "  },",
        '  "fft_tie": {',
        f'    "transforms_total": {c_fft.total}',
        "  },",
        '  "kernel_backends": {',
    ]
    for i, (name, med) in enumerate(kernel_rows):
        comma = "," if i + 1 < len(kernel_rows) else ""
        report_lines.append(f'    "{name}": {_decimal(med)}{comma}')
    report_lines += ["  }", "}"]
    (out / "bench.json").write_text("\n".join(report_lines) + "\n")
    print(text, end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FieldFileError as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, OSError) as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
