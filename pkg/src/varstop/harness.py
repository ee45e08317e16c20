"""Experiment orchestration: denoise-train-detect loops, external stream
ingestion, ablation sweeps, and deterministic CSV persistence.

Every run is a pure function of its config: trial seeds are derived as
base_seed + trial_index and split into independent noise / B / C0 streams,
and all numeric CSV cells are formatted with 12 significant digits and '\\n'
line endings so replays are byte-identical.

The detectors are fed frames rounded to float32 -- exactly the precision the
binary stream format carries -- so re-detecting a dumped stream reproduces the
in-process verdict bit for bit.
"""

from __future__ import annotations

import dataclasses
import math
import os
import time
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import stream as eswm
from .decoder import (TrainerConfig, TwoLayerDecoder, identity_kernel,
                      train_stream, triangular_kernel)
from .detector import EmvDetector, Verdict, WmvDetector, run_detector, smooth_ema
from .signals import (SSIM_WINDOW, CurveSeries, Image, NoiseSpec, TrigBasisSpec,
                      add_noise, detection_gap, make_trig_signal, mse, psnr,
                      read_pgm, ssim, write_pgm)

DETECTOR_CHOICES = ("wmv", "emv", "ema-wmv")
KERNEL_CHOICES = ("triangular", "identity")
SWEEP_AXES = ("W", "P", "alpha", "noise-level")
NOISE_LEVEL_ORDER = ("low", "medium", "high")

SUMMARY_COLUMNS = ("trial", "stopped", "stop_iteration", "best_iteration",
                   "best_variance", "detected_psnr", "peak_psnr", "psnr_gap",
                   "detected_ssim", "ssim_gap")
TRACE_COLUMNS = ("iter", "loss", "mse", "psnr", "ssim", "variance")
SWEEP_COLUMNS = ("axis", "value", "trial", "stop_iteration", "best_iteration",
                 "psnr_gap", "ssim_gap")


@dataclass(frozen=True)
class ExperimentConfig:
    """One denoising experiment: signal source, corruption, model, detector,
    trial count.  The seed inside `noise` and `trainer` is a placeholder; the
    harness overrides both per trial."""

    out_dir: str
    signal: Optional[TrigBasisSpec] = None
    input_path: Optional[str] = None
    noise: Optional[NoiseSpec] = None
    k: int = 256
    kernel: str = "triangular"
    support: Optional[int] = None
    trainer: TrainerConfig = TrainerConfig()
    detector: str = "wmv"
    window: int = 100
    patience: int = 1000
    alpha: float = 0.1
    trials: int = 1
    base_seed: int = 0
    dump_stream: bool = False
    plot: bool = True

    def __post_init__(self):
        if (self.signal is None) == (self.input_path is None):
            raise ValueError("exactly one of signal / input_path must be given")
        if self.detector not in DETECTOR_CHOICES:
            raise ValueError(f"unknown detector {self.detector!r}")
        if self.kernel not in KERNEL_CHOICES:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if self.window < 1 or self.patience < 1:
            raise ValueError("window and patience must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.support is not None and (self.support < 1 or self.support % 2 == 0):
            raise ValueError("support must be a positive odd width")


@dataclass(frozen=True)
class RunRecord:
    """Everything one trial produced: per-iteration traces plus the verdict
    summary.  Traces are 1-based and parallel (entry i belongs to iteration
    i+1).  wall_time stays off the CSVs to keep them byte-deterministic."""

    trial: int
    verdict: Verdict
    loss: tuple
    mse_trace: tuple
    psnr_trace: tuple
    ssim_trace: Optional[tuple]
    detected_psnr: float
    peak_psnr: float
    psnr_gap: float
    detected_ssim: Optional[float]
    ssim_gap: Optional[float]
    wall_time: float

    def iterations(self) -> range:
        return range(1, len(self.psnr_trace) + 1)

    def psnr_curve(self) -> CurveSeries:
        return CurveSeries("psnr", tuple(zip(self.iterations(), self.psnr_trace)))

    def mse_curve(self) -> CurveSeries:
        return CurveSeries("mse", tuple(zip(self.iterations(), self.mse_trace)))

    def summary_row(self) -> tuple:
        v = self.verdict
        return (self.trial, int(v.stopped), v.stop_iteration, v.best_iteration,
                v.best_variance, self.detected_psnr, self.peak_psnr,
                self.psnr_gap, self.detected_ssim, self.ssim_gap)


def trial_seeds(base_seed: int, trial: int) -> tuple:
    """Independent (noise, B, C0) seeds for one trial."""
    ss = np.random.SeedSequence(base_seed + trial)
    return tuple(int(s) for s in ss.generate_state(3))


def synth_spec(n: int, p: int, seed: int) -> TrigBasisSpec:
    """Random low-frequency test signal: p standard-normal basis coefficients."""
    coeffs = np.random.default_rng(seed).normal(size=p)
    return TrigBasisSpec(n, p, tuple(coeffs))


def load_truth(cfg: ExperimentConfig) -> Image:
    if cfg.signal is not None:
        return make_trig_signal(cfg.signal)
    return read_pgm(cfg.input_path)


def default_support(n: int) -> int:
    """Widest odd triangular support <= min(31, n/2).

    Experiment-scale default, wider than the bare kernel constructor's: the
    kernel support sets how far the slow (noise-fitting) rates sit below the
    fast (signal) ones, hence how many iterations separate the quality peak
    from the inevitable overfit.  Narrow kernels at n = 64 put the peak inside
    the detector's warmup window; this rule lands it mid-run.
    """
    s = min(31, n // 2)
    return max(1, s if s % 2 == 1 else s - 1)


def make_kernel(name: str, n: int, support: Optional[int] = None):
    if name == "identity":
        return identity_kernel(n)
    return triangular_kernel(n, default_support(n) if support is None else support)


def make_detector(name: str, window: int, patience: int, alpha: float):
    if name == "emv":
        return EmvDetector(alpha=alpha, patience=patience)
    return WmvDetector(window=window, patience=patience)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.12g" % float(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _wire_frames(source: Iterable[Image], height: int, width: int,
                 y_data: np.ndarray, loss_out: list, dump_out: Optional[list]):
    # Quantize to the wire precision before anything downstream sees the frame.
    for f in source:
        q = Image(f.data.astype(np.float32).astype(float), height, width)
        d = y_data - q.data
        loss_out.append(float(d @ d))
        if dump_out is not None:
            dump_out.append(q)
        yield q


def run_trial(cfg: ExperimentConfig, trial: int, truth: Image) -> tuple:
    """Train one seeded instance, stream iterates through the detector, and
    score the outcome; returns (RunRecord, dumped frames or None)."""
    t_start = time.perf_counter()
    noise_seed, b_seed, c_seed = trial_seeds(cfg.base_seed, trial)
    if cfg.noise is not None:
        y = add_noise(truth, dataclasses.replace(cfg.noise, seed=noise_seed))
    else:
        y = truth
    kernel = make_kernel(cfg.kernel, truth.size, cfg.support)
    dec = TwoLayerDecoder.seeded(kernel, cfg.k, b_seed)
    tcfg = dataclasses.replace(cfg.trainer, seed=c_seed)

    detector = make_detector(cfg.detector, cfg.window, cfg.patience, cfg.alpha)
    loss: list = []
    dumped: Optional[list] = [] if cfg.dump_stream else None
    wire = _wire_frames(train_stream(dec, y, tcfg), truth.height, truth.width,
                        y.data, loss, dumped)
    # The ema-wmv variant scores and detects on the smoothed stream -- that is
    # the reconstruction it would return -- while loss stays the raw residual.
    visible = smooth_ema(wire, cfg.alpha) if cfg.detector == "ema-wmv" else wire

    do_ssim = min(truth.height, truth.width) >= SSIM_WINDOW
    mses: list = []
    psnrs: list = []
    ssims: list = [] if do_ssim else None
    verdict = None
    for frame in visible:
        mses.append(mse(truth, frame))
        psnrs.append(psnr(truth, frame))
        if do_ssim:
            ssims.append(ssim(truth, frame))
        verdict = detector.step(frame)
        if verdict is not None:
            break
    if verdict is None:
        verdict = detector.finalize()
    if verdict.best_frame is None:
        raise ValueError(
            "stream ended before any variance was measured; "
            "increase --iters or shrink the window"
        )

    best = verdict.best_iteration
    detected_psnr = psnrs[best - 1]
    peak_psnr = max(psnrs)
    detected_ssim = ssims[best - 1] if do_ssim else None
    ssim_gap = (max(ssims) - detected_ssim) if do_ssim else None
    record = RunRecord(
        trial=trial,
        verdict=verdict,
        loss=tuple(loss),
        mse_trace=tuple(mses),
        psnr_trace=tuple(psnrs),
        ssim_trace=tuple(ssims) if do_ssim else None,
        detected_psnr=detected_psnr,
        peak_psnr=peak_psnr,
        psnr_gap=peak_psnr - detected_psnr,
        detected_ssim=detected_ssim,
        ssim_gap=ssim_gap,
        wall_time=time.perf_counter() - t_start,
    )
    return record, dumped


def write_trial_outputs(cfg: ExperimentConfig, record: RunRecord,
                        dumped: Optional[list], trial_dir: str) -> None:
    os.makedirs(trial_dir, exist_ok=True)
    variance = dict(record.verdict.variance_trace)
    rows = []
    for idx, it in enumerate(record.iterations()):
        rows.append((
            it,
            record.loss[idx],
            record.mse_trace[idx],
            record.psnr_trace[idx],
            record.ssim_trace[idx] if record.ssim_trace is not None else None,
            variance.get(it),
        ))
    write_csv(os.path.join(trial_dir, "trace.csv"), TRACE_COLUMNS, rows)
    write_csv(os.path.join(trial_dir, "summary.csv"), SUMMARY_COLUMNS,
              [record.summary_row()])
    write_pgm(record.verdict.best_frame, os.path.join(trial_dir, "best.pgm"))
    if dumped is not None:
        eswm.write_stream(os.path.join(trial_dir, "stream.eswm"), dumped)
    if cfg.plot:
        from . import report
        report.trial_figure(record, os.path.join(trial_dir, "curves.png"))


def run_denoise(cfg: ExperimentConfig) -> list:
    """Run all trials, write per-trial outputs plus a combined summary.csv,
    and return the RunRecords."""
    truth = load_truth(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    records = []
    for trial in range(cfg.trials):
        record, dumped = run_trial(cfg, trial, truth)
        write_trial_outputs(cfg, record, dumped,
                            os.path.join(cfg.out_dir, f"trial_{trial:03d}"))
        records.append(record)
    write_csv(os.path.join(cfg.out_dir, "summary.csv"), SUMMARY_COLUMNS,
              [r.summary_row() for r in records])
    return records


def detect_stream(path, detector: str = "wmv", window: int = 100,
                  patience: int = 1000, alpha: float = 0.1,
                  out_dir: Optional[str] = None, plot: bool = True) -> Verdict:
    """Replay a serialized iterate stream through a detector.

    Frames arrive flat (the wire carries no geometry) and are processed in
    arrival order; output matches the in-process run that produced the stream.
    """
    if detector not in DETECTOR_CHOICES:
        raise ValueError(f"unknown detector {detector!r}")
    frames = (Image(a, a.size, 1) for a in eswm.read_frames(path))
    if detector == "ema-wmv":
        frames = smooth_ema(frames, alpha)
    det = make_detector(detector, window, patience, alpha)
    verdict = run_detector(det, frames)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "detect_trace.csv"),
                  ("iter", "variance"), list(verdict.variance_trace))
        write_csv(os.path.join(out_dir, "verdict.csv"),
                  ("stopped", "stop_iteration", "best_iteration", "best_variance"),
                  [(int(verdict.stopped), verdict.stop_iteration,
                    verdict.best_iteration, verdict.best_variance)])
        if plot:
            from . import report
            report.detect_figure(verdict, os.path.join(out_dir, "detect.png"))
    return verdict


def _apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "W":
        return dataclasses.replace(cfg, window=int(value))
    if axis == "P":
        return dataclasses.replace(cfg, patience=int(value))
    if axis == "alpha":
        return dataclasses.replace(cfg, alpha=float(value))
    if axis == "noise-level":
        if cfg.noise is None:
            raise ValueError("noise-level sweep requires a noise spec")
        return dataclasses.replace(
            cfg, noise=dataclasses.replace(cfg.noise, level=str(value)))
    raise ValueError(f"unknown sweep axis {axis!r}")


def _axis_sort_key(axis: str, value):
    if axis == "noise-level":
        return NOISE_LEVEL_ORDER.index(value)
    return float(value)


def sweep(cfg: ExperimentConfig, axis: str, values) -> list:
    """Re-run the experiment per axis value with shared trial seeds; write one
    sorted summary row per (value, trial) to sweep.csv."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}")
    os.makedirs(cfg.out_dir, exist_ok=True)
    rows = []
    for value in values:
        sub_dir = os.path.join(cfg.out_dir,
                               f"{axis.replace('-', '_')}_{_fmt(value)}")
        sub = dataclasses.replace(_apply_axis(cfg, axis, value), out_dir=sub_dir)
        for record in run_denoise(sub):
            rows.append((axis, value, record.trial,
                         record.verdict.stop_iteration,
                         record.verdict.best_iteration,
                         record.psnr_gap, record.ssim_gap))
    rows.sort(key=lambda r: (_axis_sort_key(axis, r[1]), r[2]))
    write_csv(os.path.join(cfg.out_dir, "sweep.csv"), SWEEP_COLUMNS, rows)
    if cfg.plot:
        from . import report
        report.sweep_figure(rows, axis, os.path.join(cfg.out_dir, "sweep.png"))
    return rows


def oracle_report(model, W: int, T: int, out_dir: str, plot: bool = True) -> float:
    """Tabulate the closed-form windowed variance against the simulated
    trajectory's measured variance for t = 0..T; returns the max relative error
    (also the CSV footer row)."""
    from .detector import windowed_variance
    from .oracle import closed_form_wmv, simulate_linearized

    if T < 0:
        raise ValueError("T must be nonnegative")
    os.makedirs(out_dir, exist_ok=True)
    frames = simulate_linearized(model, T + W - 1)
    rows = []
    max_err = 0.0
    for t in range(T + 1):
        closed = closed_form_wmv(model, W, t)
        empirical = windowed_variance(frames[t:t + W])
        if closed == 0.0:
            err = 0.0 if empirical == 0.0 else math.inf
        else:
            err = abs(closed - empirical) / closed
        max_err = max(max_err, err)
        rows.append((t, closed, empirical, err))
    rows.append(("max", None, None, max_err))
    write_csv(os.path.join(out_dir, "oracle.csv"),
              ("t", "closed_form", "empirical", "abs_rel_err"), rows)
    if plot:
        from . import report
        report.oracle_figure(rows[:-1], os.path.join(out_dir, "oracle.png"))
    return max_err
