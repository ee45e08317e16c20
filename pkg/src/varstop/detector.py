"""Streaming early-stopping detectors.

Two state machines watch a stream of reconstructions and flag the iteration
where the dispersion of recent iterates bottoms out: one tracks the windowed
moving variance over a FIFO of the last W frames, the other an exponential
moving variance with forgetting factor alpha.  Both stop after P consecutive
iterations without a strict new minimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .signals import Image

DEFAULT_WINDOW = 100
DEFAULT_PATIENCE = 1000
DEFAULT_ALPHA = 0.1


@dataclass(frozen=True)
class Verdict:
    """Outcome of a detection run.

    ``stopped`` is False when the stream ended before patience was exhausted;
    the best-snapshot fields are still meaningful in that case.
    """

    stopped: bool
    stop_iteration: int
    best_iteration: int
    best_variance: float
    best_frame: Optional[Image]
    variance_trace: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "variance_trace",
            tuple((int(i), float(v)) for i, v in self.variance_trace),
        )
        if self.stopped and self.best_iteration > self.stop_iteration:
            raise ValueError("best_iteration must not exceed stop_iteration")


def _stack(frames: Sequence[Image]) -> np.ndarray:
    if len(frames) == 0:
        raise ValueError("empty frame window")
    first = frames[0]
    for f in frames[1:]:
        if not first.same_shape(f):
            raise ValueError("frames differ in dimensions")
    return np.stack([f.data for f in frames])


def _window_variance(buf: np.ndarray) -> float:
    # Mean-centered two-pass form; the one-pass moment identity
    # (1/W) sum ||x_w||^2 - ||mean||^2 cancels catastrophically once the
    # frames cluster, which is exactly the regime we must detect.
    mean = buf.mean(axis=0)
    dev = buf - mean
    return float(np.einsum("ij,ij->", dev, dev)) / buf.shape[0]


def windowed_variance(frames: Sequence[Image]) -> float:
    """(1/W) sum_w ||x_w - mean||_2^2 over a full window of frames."""
    return _window_variance(_stack(frames))


class WmvDetector:
    """Windowed-moving-variance early stopping.

    Frames are pushed one at a time with :meth:`step`; once the queue holds W
    frames the window variance is computed every iteration.  A strict decrease
    of the running minimum snapshots the current frame; P consecutive
    iterations without one emits a stopped Verdict.
    """

    def __init__(self, window: int = DEFAULT_WINDOW, patience: int = DEFAULT_PATIENCE):
        if window < 1:
            raise ValueError("window must be positive")
        if patience < 1:
            raise ValueError("patience must be positive")
        self.window = window
        self.patience = patience
        self.k = 0
        self.var_min: Optional[float] = None
        self.best_iteration = 0
        self.best_frame: Optional[Image] = None
        self.stall = 0
        self.trace: list = []
        self._buf: Optional[np.ndarray] = None  # ring buffer, rows are frames
        self._count = 0
        self._shape: Optional[tuple] = None

    def step(self, x_next: Image) -> Optional[Verdict]:
        """Consume one frame; returns a stopped Verdict at the stopping iteration."""
        if self._shape is None:
            self._shape = (x_next.height, x_next.width)
            self._buf = np.empty((self.window, x_next.size))
        elif (x_next.height, x_next.width) != self._shape:
            raise ValueError("frame dimensions changed mid-stream")
        self.k += 1
        self._buf[self._count % self.window] = x_next.data
        self._count += 1
        if self._count < self.window:
            return None
        var = _window_variance(self._buf)
        self.trace.append((self.k, var))
        if self.var_min is None or var < self.var_min:
            self.var_min = var
            self.best_iteration = self.k
            self.best_frame = x_next
            self.stall = 0
        else:
            self.stall += 1
            if self.stall >= self.patience:
                return self.finalize(stopped=True)
        return None

    def finalize(self, stopped: bool = False) -> Verdict:
        """Verdict for the stream so far (e.g. when the trainer ran out of iterations)."""
        return Verdict(
            stopped=stopped,
            stop_iteration=self.k,
            best_iteration=self.best_iteration,
            best_variance=self.var_min if self.var_min is not None else float("nan"),
            best_frame=self.best_frame,
            variance_trace=tuple(self.trace),
        )


class EmvDetector:
    """Exponential-moving-variance early stopping (queue-free variant).

    EMA and EMV both start at zero; each frame updates
    ema <- (1-a)*ema + a*x and emv <- (1-a)*emv + a*(1-a)*||x - ema_old||^2,
    and the patience logic mirrors the windowed detector on emv.
    """

    def __init__(self, alpha: float = DEFAULT_ALPHA, patience: int = DEFAULT_PATIENCE):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if patience < 1:
            raise ValueError("patience must be positive")
        self.alpha = alpha
        self.patience = patience
        self.k = 0
        self.ema: Optional[np.ndarray] = None
        self.emv = 0.0
        self.emv_min: Optional[float] = None
        self.best_iteration = 0
        self.best_frame: Optional[Image] = None
        self.stall = 0
        self.trace: list = []
        self._shape: Optional[tuple] = None

    def step(self, x_next: Image) -> Optional[Verdict]:
        if self._shape is None:
            self._shape = (x_next.height, x_next.width)
            self.ema = np.zeros(x_next.size)
        elif (x_next.height, x_next.width) != self._shape:
            raise ValueError("frame dimensions changed mid-stream")
        self.k += 1
        a = self.alpha
        d = x_next.data - self.ema
        self.emv = (1.0 - a) * self.emv + a * (1.0 - a) * float(d @ d)
        self.ema = (1.0 - a) * self.ema + a * x_next.data
        self.trace.append((self.k, self.emv))
        if self.emv_min is None or self.emv < self.emv_min:
            self.emv_min = self.emv
            self.best_iteration = self.k
            self.best_frame = x_next
            self.stall = 0
        else:
            self.stall += 1
            if self.stall >= self.patience:
                return self.finalize(stopped=True)
        return None

    def finalize(self, stopped: bool = False) -> Verdict:
        return Verdict(
            stopped=stopped,
            stop_iteration=self.k,
            best_iteration=self.best_iteration,
            best_variance=self.emv_min if self.emv_min is not None else float("nan"),
            best_frame=self.best_frame,
            variance_trace=tuple(self.trace),
        )


def run_detector(detector, stream: Iterable[Image]) -> Verdict:
    """Drive a detector over a frame stream; finalize if patience never fires."""
    for x in stream:
        verdict = detector.step(x)
        if verdict is not None:
            return verdict
    return detector.finalize()


def smooth_ema(stream: Iterable[Image], alpha: float) -> Iterator[Image]:
    """EMA-filter a frame stream (zero initial state), for variance detection
    on smoothed iterates."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    ema = None
    for x in stream:
        if ema is None:
            ema = np.zeros(x.size)
        ema = (1.0 - alpha) * ema + alpha * x.data
        yield Image(ema.copy(), x.height, x.width)
