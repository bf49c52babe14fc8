"""Command-line interface.

Commands: spectrum, fingerpinch, rabi, calibrate, rb, irb.  Outputs are
CSV with a unit-annotated header row or JSON with sorted keys; runs with
the same inputs and seed are byte-identical.  Exit codes: 0 success,
2 usage error, 3 numeric or fit failure, 4 configuration error.

Environment overrides (flags win over them): AEON_CONFIG, AEON_SEED,
AEON_OUT, AEON_THREADS.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import benchmarking as bench
from . import calibration as cal
from . import device as dev
from .errors import (
    CalibrationDiverged,
    ConfigError,
    DetectionError,
    FitError,
    ProtocolError,
)
from .hilbert import (
    ExchangeVector,
    FieldConfig,
    build_hamiltonian,
    eigenspectrum,
    initialize_singlet,
    measure_p0,
)
from .rotations import AxisAngle
from .utils import make_executor

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4


def _env_default(name: str, cast, fallback):
    raw = os.environ.get(name)
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {name} value {raw!r}: {exc}") from exc


def parse_linspace(text: str) -> np.ndarray:
    """Parse an inclusive sweep 'start:stop:npoints' into a grid."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"expected start:stop:npoints, got {text!r}")
    start, stop, n = float(parts[0]), float(parts[1]), int(parts[2])
    if n < 2:
        raise ValueError(f"sweep needs at least 2 points, got {n}")
    return np.linspace(start, stop, n)


def parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(x)) if isinstance(x, float) else str(x) for x in row))
    return "\n".join(lines) + "\n"


def _json_doc(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Commands


def _cmd_spectrum(args, device: dev.DeviceModel) -> int:
    j = ExchangeVector(j12=args.j12, j23=args.j23, j13=args.j13)
    fields = FieldConfig(
        f_uniform_hz=args.f_uniform,
        gradients_hz=(args.b1, args.b2, args.b3),
    )
    h = build_hamiltonian(j, fields)
    energies, _ = eigenspectrum(h)
    rows = [(k, float(e)) for k, e in enumerate(energies)]
    _write_text(args.out, _csv(["level (1)", "energy (rad/s)"], rows))
    return EXIT_OK


def _cmd_fingerpinch(args, device: dev.DeviceModel) -> int:
    pairs = tuple(args.pairs.split(","))
    if len(pairs) != 2:
        raise ValueError(f"need two pairs, got {args.pairs!r}")
    v1 = parse_linspace(args.v1)
    v2 = parse_linspace(args.v2)
    p0 = dev.fingerpinch_map(
        device,
        pairs,
        v1,
        v2,
        hadamard=args.hadamard,
        duration_s=args.duration,
        apply_cross=args.cross,
    )
    rows = [
        (float(v1[c]), float(v2[r]), float(p0[r, c]))
        for r in range(v2.size)
        for c in range(v1.size)
    ]
    header = [f"v_x{pairs[0]} (V)", f"v_x{pairs[1]} (V)", "p0 (1)"]
    _write_text(args.out, _csv(header, rows))
    return EXIT_OK


def _cmd_rabi(args, device: dev.DeviceModel) -> int:
    times = parse_linspace(args.times)
    idx = {p: i for i, p in enumerate(dev.PAIR_ORDER)}
    if args.pair not in idx:
        raise ValueError(f"unknown pair {args.pair!r}")
    v_x = np.full(3, -np.inf)
    v_x[idx[args.pair]] = args.v
    rho0 = initialize_singlet()
    p0 = np.empty(times.size)
    rng = dev.rng_stream(args.seed, 101)
    for k, t in enumerate(times):
        pulse = dev.PulseSpec(v_x=tuple(v_x), duration_s=float(t))
        if args.shots is None:
            draw = None
            rho = device.simulate_pulse(rho0, pulse, draw=draw)
            p0[k] = measure_p0(rho)
        else:
            hits = 0
            for shot in range(args.shots):
                shot_rng = dev.rng_stream(args.seed, 101, k, shot)
                draw = dev.sample_noise(device.noise, shot_rng)
                rho = device.simulate_pulse(rho0, pulse, draw=draw)
                hits += int(shot_rng.random() < measure_p0(rho))
            p0[k] = hits / args.shots
    del rng
    fit = bench.fit_oscillation_decay(times, p0)
    doc = {
        "pair": args.pair,
        "v_x": args.v,
        "fit": {
            "baseline": fit.baseline,
            "amplitude": fit.amplitude,
            "frequency_hz": fit.omega / (2.0 * math.pi),
            "phase_rad": fit.phase,
            "t_decay_s": fit.t_decay_s if math.isfinite(fit.t_decay_s) else None,
            "n_oscillations": (
                fit.n_oscillations if math.isfinite(fit.n_oscillations) else None
            ),
        },
    }
    _write_text(args.out, _json_doc(doc))
    if args.emit_plot_data:
        rows = [(float(t), float(p)) for t, p in zip(times, p0)]
        _write_text(args.emit_plot_data, _csv(["time (s)", "p0 (1)"], rows))
    return EXIT_OK


def _cmd_calibrate(args, device: dev.DeviceModel) -> int:
    options = cal.CalibrationOptions(
        schedule=parse_int_list(args.schedule),
        grid_points=args.grid,
        window0_v=args.window,
        shots=args.shots,
        seed=args.seed,
    )
    pairs = tuple(args.pairs.split(",")) if args.pairs else None
    executor = make_executor(args.threads)
    try:
        result = cal.run_calibration(
            device,
            args.phi_star,
            args.theta_star,
            options=options,
            pairs=pairs,
            executor=executor,
        )
    finally:
        executor.shutdown()
    _write_text(args.out, result.to_json() + "\n")
    return EXIT_OK


def _rb_common(args, device, interleaved: AxisAngle | None):
    cfg = bench.RbConfig(
        depths=parse_int_list(args.depths),
        n_sequences=args.sequences,
        shots=args.shots,
        seed=args.seed,
        idle_s=args.idle,
        apply_cross=args.cross,
    )
    inject = bench.InjectedError(
        depol_per_pulse=args.inject_depol,
        leak_per_pulse=args.inject_leak,
        gate_depol=args.gate_depol,
    )
    executor = make_executor(args.threads)
    try:
        if interleaved is None:
            data = bench.run_rb(
                device,
                cfg,
                engine=args.engine,
                inject=inject,
                executor=executor,
            )
            fit = bench.fit_rb(data)
            out = bench.rb_report(data, fit)
        else:
            res = bench.interleaved_rb(
                device,
                cfg,
                interleaved,
                engine=args.engine,
                inject=inject,
                executor=executor,
            )
            doc = {
                "gate": [interleaved.phi, interleaved.theta],
                "gate_error": res["gate_error"],
                "gate_leakage": res["gate_leakage"],
                "reference": {
                    "p": res["reference"].p,
                    "error_per_clifford": res["reference"].err_per_clifford,
                    "leakage_per_clifford": res["reference"].leak_per_clifford,
                },
                "interleaved": {
                    "p": res["interleaved"].p,
                    "error_per_clifford": res["interleaved"].err_per_clifford,
                    "leakage_per_clifford": res["interleaved"].leak_per_clifford,
                },
            }
            out = _json_doc(doc)
    finally:
        executor.shutdown()
    _write_text(args.out, out if out.endswith("\n") else out + "\n")
    if args.emit_plot_data and interleaved is None:
        rows = [
            (int(n), float(np.mean(data.surv_identity[i])), float(np.mean(data.surv_flip[i])))
            for i, n in enumerate(data.depths)
        ]
        _write_text(
            args.emit_plot_data,
            _csv(["depth (1)", "survival_identity (1)", "survival_flip (1)"], rows),
        )
    return EXIT_OK


def _cmd_rb(args, device: dev.DeviceModel) -> int:
    return _rb_common(args, device, None)


def _cmd_irb(args, device: dev.DeviceModel) -> int:
    gate = AxisAngle(args.gate_phi, args.gate_theta)
    return _rb_common(args, device, gate)


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aeonsim",
        description="Simulation and calibration toolchain for exchange-only "
        "triple-dot spin qubits.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="device config JSON")
    common.add_argument("--seed", type=int, default=None, help="sampling seed")
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument(
        "--threads", type=int, default=None, help="worker threads (0 = cpu count)"
    )
    common.add_argument(
        "--emit-plot-data", default=None, help="also write tidy plot CSV here"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", parents=[common], help="triple-dot energy levels")
    p.add_argument("--j12", type=float, default=0.0, help="J12 in Hz")
    p.add_argument("--j23", type=float, default=0.0, help="J23 in Hz")
    p.add_argument("--j13", type=float, default=0.0, help="J13 in Hz")
    p.add_argument("--f-uniform", type=float, default=0.0, help="uniform Zeeman (Hz)")
    p.add_argument("--b1", type=float, default=0.0, help="dot-1 gradient (Hz)")
    p.add_argument("--b2", type=float, default=0.0, help="dot-2 gradient (Hz)")
    p.add_argument("--b3", type=float, default=0.0, help="dot-3 gradient (Hz)")
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser(
        "fingerpinch", parents=[common], help="two-barrier survival map"
    )
    p.add_argument("--pairs", required=True, help="swept pairs, e.g. 12,23")
    p.add_argument("--v1", required=True, help="first sweep start:stop:n (V)")
    p.add_argument("--v2", required=True, help="second sweep start:stop:n (V)")
    p.add_argument("--hadamard", action="store_true", help="sandwich with Hadamards")
    p.add_argument("--duration", type=float, default=None, help="pulse length (s)")
    p.add_argument("--cross", action="store_true", help="apply barrier cross-talk")
    p.set_defaults(func=_cmd_fingerpinch)

    p = sub.add_parser("rabi", parents=[common], help="single-pair duration sweep")
    p.add_argument("--pair", required=True, help="driven pair (12, 13 or 23)")
    p.add_argument("--v", type=float, required=True, help="barrier voltage (V)")
    p.add_argument("--times", required=True, help="duration sweep start:stop:n (s)")
    p.add_argument("--shots", type=int, default=None)
    p.set_defaults(func=_cmd_rabi)

    p = sub.add_parser("calibrate", parents=[common], help="germ peak tracking")
    p.add_argument("--phi-star", type=float, required=True, help="target axis (rad)")
    p.add_argument("--theta-star", type=float, required=True, help="target angle (rad)")
    p.add_argument("--schedule", default="1,2,4,8,16,24")
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--window", type=float, default=0.030, help="first window (V)")
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--pairs", default=None, help="swept pairs override, e.g. 12,23")
    p.set_defaults(func=_cmd_calibrate)

    def add_rb_args(p):
        p.add_argument("--depths", default="1,2,4,8,12,16,24")
        p.add_argument("--sequences", type=int, default=20)
        p.add_argument("--shots", type=int, default=None)
        p.add_argument("--idle", type=float, default=0.0, help="idle between Cliffords (s)")
        p.add_argument("--cross", action="store_true")
        p.add_argument("--engine", choices=("device", "channel"), default="device")
        p.add_argument("--inject-depol", type=float, default=0.0)
        p.add_argument("--inject-leak", type=float, default=0.0)
        p.add_argument("--gate-depol", type=float, default=0.0)

    p = sub.add_parser("rb", parents=[common], help="blind randomized benchmarking")
    add_rb_args(p)
    p.set_defaults(func=_cmd_rb)

    p = sub.add_parser("irb", parents=[common], help="interleaved benchmarking")
    add_rb_args(p)
    p.add_argument("--gate-phi", type=float, required=True)
    p.add_argument("--gate-theta", type=float, required=True)
    p.set_defaults(func=_cmd_irb)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.config is None:
            args.config = _env_default("AEON_CONFIG", str, None)
        if args.seed is None:
            args.seed = _env_default("AEON_SEED", int, 0)
        if args.out is None:
            args.out = _env_default("AEON_OUT", str, None)
        if args.threads is None:
            args.threads = _env_default("AEON_THREADS", int, 1)
        device = (
            dev.default_device() if args.config is None else dev.load_device(args.config)
        )
        return args.func(args, device)
    except ConfigError as exc:
        print(f"aeonsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, DetectionError, CalibrationDiverged, ProtocolError) as exc:
        print(f"aeonsim: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"aeonsim: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
