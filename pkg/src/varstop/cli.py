"""Command-line front end.

Subcommands: `denoise` (train + detect on a corrupted signal), `detect`
(replay a serialized iterate stream), `sweep` (ablate one knob), `oracle`
(closed-form vs simulated windowed variance).  Exit status: 0 success,
2 format/usage errors, 3 training divergence.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import harness
from .decoder import DivergenceError, TrainerConfig, TwoLayerDecoder
from .oracle import SpectralModel
from .signals import NOISE_KINDS, NOISE_LEVELS, NoiseSpec
from .stream import StreamFormatError

EXIT_OK = 0
EXIT_FORMAT = 2
EXIT_DIVERGED = 3


def _add_signal_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", metavar="PGM", default=None,
                   help="ground-truth image (binary PGM); default: synthetic signal")
    p.add_argument("--n", type=int, default=64,
                   help="synthetic signal length (default 64)")
    p.add_argument("--p", type=int, default=8,
                   help="number of low-frequency basis functions (default 8)")
    p.add_argument("--signal-seed", type=int, default=7,
                   help="seed for the synthetic signal coefficients (default 7)")


def _add_noise_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noise", choices=NOISE_KINDS + ("none",), default="gaussian",
                   help="corruption kind (default gaussian)")
    p.add_argument("--level", choices=NOISE_LEVELS, default="high",
                   help="corruption level (default high)")
    p.add_argument("--no-clip", action="store_true",
                   help="skip clipping the corrupted signal to [0,1]")


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=256,
                   help="decoder width / channel count (default 256)")
    p.add_argument("--kernel", choices=harness.KERNEL_CHOICES, default="triangular",
                   help="upsampling kernel (default triangular)")
    p.add_argument("--support", type=int, default=None,
                   help="triangular kernel support, odd "
                        "(default: widest odd width <= min(31, n/2))")
    p.add_argument("--eta", type=float, default=None,
                   help="gradient step size (default: half the stability bound)")
    p.add_argument("--omega", type=float, default=None,
                   help="init scale for C0 (default: |y|_2 / sqrt(n))")
    p.add_argument("--iters", type=int, default=10000,
                   help="max training iterations (default 10000)")


def _add_detector_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--detector", choices=harness.DETECTOR_CHOICES, default="wmv",
                   help="early-stopping detector (default wmv)")
    p.add_argument("-W", "--window", type=int, default=100,
                   help="variance window size (default 100)")
    p.add_argument("-P", "--patience", type=int, default=1000,
                   help="iterations tolerated without a new minimum (default 1000)")
    p.add_argument("--alpha", type=float, default=0.1,
                   help="forgetting factor for emv / ema-wmv (default 0.1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varstop",
        description="Variance-based early stopping for untrained-prior solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("denoise", help="train the two-layer decoder on a "
                       "corrupted signal and stop by variance")
    _add_signal_args(d)
    _add_noise_args(d)
    _add_model_args(d)
    _add_detector_args(d)
    d.add_argument("--trials", type=int, default=1, help="seeded repeats (default 1)")
    d.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument("--dump-stream", action="store_true",
                   help="also serialize the detector's input frames (stream.eswm)")
    d.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    d.set_defaults(func=cmd_denoise)

    t = sub.add_parser("detect", help="replay a serialized iterate stream "
                       "through a detector")
    t.add_argument("--stream", required=True, help="path to an ESWM stream file")
    _add_detector_args(t)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    t.set_defaults(func=cmd_detect)

    s = sub.add_parser("sweep", help="rerun the experiment over one knob")
    _add_signal_args(s)
    _add_noise_args(s)
    _add_model_args(s)
    _add_detector_args(s)
    s.add_argument("--trials", type=int, default=3, help="seeded repeats (default 3)")
    s.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    s.add_argument("--axis", required=True, choices=harness.SWEEP_AXES,
                   help="which knob to sweep")
    s.add_argument("--values", required=True,
                   help="comma-separated values for the axis")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", help="closed-form vs simulated windowed "
                       "variance for a seeded decoder")
    o.add_argument("--n", type=int, default=16, help="signal length (default 16)")
    o.add_argument("--p", type=int, default=4,
                   help="basis functions in the signal (default 4)")
    o.add_argument("--k", type=int, default=32, help="decoder width (default 32)")
    o.add_argument("--kernel", choices=harness.KERNEL_CHOICES, default="triangular")
    o.add_argument("--support", type=int, default=None,
                   help="triangular kernel support, odd "
                        "(default: widest odd width <= min(31, n/2))")
    o.add_argument("--signal-seed", type=int, default=7)
    o.add_argument("--noise", choices=NOISE_KINDS + ("none",), default="gaussian")
    o.add_argument("--level", choices=NOISE_LEVELS, default="medium")
    o.add_argument("-W", "--window", type=int, default=10,
                   help="variance window size (default 10)")
    o.add_argument("--iters", type=int, default=100,
                   help="number of closed-form steps to tabulate (default 100)")
    o.add_argument("--eta", type=float, default=None,
                   help="step size (default: half of 1/sigma_max^2)")
    o.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    o.add_argument("--out", required=True, help="output directory")
    o.add_argument("--no-plot", action="store_true", help="skip figure rendering")
    o.set_defaults(func=cmd_oracle)

    return parser


def _noise_spec(args) -> "NoiseSpec | None":
    if args.noise == "none":
        return None
    return NoiseSpec(kind=args.noise, level=args.level, seed=0,
                     clip=not args.no_clip)


def _experiment_config(args, out_dir, trials, dump_stream=False,
                       plot=True) -> harness.ExperimentConfig:
    signal = None
    if args.input is None:
        signal = harness.synth_spec(args.n, args.p, args.signal_seed)
    trainer = TrainerConfig(eta=args.eta, max_iters=args.iters, seed=0,
                            omega=args.omega)
    return harness.ExperimentConfig(
        out_dir=out_dir, signal=signal, input_path=args.input,
        noise=_noise_spec(args), k=args.k, kernel=args.kernel,
        support=args.support, trainer=trainer,
        detector=args.detector, window=args.window, patience=args.patience,
        alpha=args.alpha, trials=trials, base_seed=args.seed,
        dump_stream=dump_stream, plot=plot)


def cmd_denoise(args) -> int:
    cfg = _experiment_config(args, args.out, args.trials,
                             dump_stream=args.dump_stream, plot=not args.no_plot)
    records = harness.run_denoise(cfg)
    for r in records:
        v = r.verdict
        print(f"trial {r.trial}: stop_iteration={v.stop_iteration} "
              f"best_iteration={v.best_iteration} "
              f"psnr_gap={r.psnr_gap:.3f} dB ({r.wall_time:.1f}s)")
    print(f"wrote {args.out}/summary.csv")
    return EXIT_OK


def cmd_detect(args) -> int:
    verdict = harness.detect_stream(
        args.stream, detector=args.detector, window=args.window,
        patience=args.patience, alpha=args.alpha, out_dir=args.out,
        plot=not args.no_plot)
    print(f"stopped={int(verdict.stopped)}")
    print(f"stop_iteration={verdict.stop_iteration}")
    print(f"best_iteration={verdict.best_iteration}")
    print(f"best_variance={verdict.best_variance:.12g}")
    return EXIT_OK


def _parse_values(axis: str, raw: str) -> list:
    parts = [s.strip() for s in raw.split(",") if s.strip()]
    if not parts:
        raise ValueError("--values must list at least one value")
    if axis in ("W", "P"):
        return [int(s) for s in parts]
    if axis == "alpha":
        return [float(s) for s in parts]
    for s in parts:
        if s not in NOISE_LEVELS:
            raise ValueError(f"unknown noise level {s!r}")
    return parts


def cmd_sweep(args) -> int:
    cfg = _experiment_config(args, args.out, args.trials, plot=not args.no_plot)
    values = _parse_values(args.axis, args.values)
    rows = harness.sweep(cfg, args.axis, values)
    for row in rows:
        print(f"{args.axis}={row[1]} trial={row[2]} psnr_gap={row[5]:.3f} dB")
    print(f"wrote {args.out}/sweep.csv")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .signals import add_noise, make_trig_signal

    spec = harness.synth_spec(args.n, args.p, args.signal_seed)
    truth = make_trig_signal(spec)
    noise_seed, b_seed, c_seed = harness.trial_seeds(args.seed, 0)
    if args.noise == "none":
        y = truth
    else:
        y = add_noise(truth, NoiseSpec(kind=args.noise, level=args.level,
                                       seed=noise_seed, clip=not getattr(args, "no_clip", False)))
    kernel = harness.make_kernel(args.kernel, args.n, args.support)
    omega = float(np.linalg.norm(y.data)) / math.sqrt(args.n)
    c0 = np.random.default_rng(c_seed).normal(0.0, omega, (args.n, args.k))
    dec = TwoLayerDecoder.seeded(kernel, args.k, b_seed, c_init=c0)
    y_hat = y.data - dec.forward().data
    jac = dec.jacobian()
    sigma_max = float(np.linalg.svd(jac, compute_uv=False)[0])
    eta = args.eta if args.eta is not None else 0.5 / sigma_max ** 2
    model = SpectralModel.from_jacobian(jac, y_hat, eta)
    max_err = harness.oracle_report(model, args.window, args.iters, args.out,
                                    plot=not args.no_plot)
    print(f"max_abs_rel_err={max_err:.3e}")
    print(f"wrote {args.out}/oracle.csv")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (StreamFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
