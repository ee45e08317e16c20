"""Signal containers, synthetic ground truth, noise corruption, and quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

NOISE_KINDS = ("gaussian", "impulse", "speckle", "shot")
NOISE_LEVELS = ("low", "medium", "high")

# Per-level corruption parameters: additive-Gaussian variance, pixel replacement
# probability, multiplicative-Gaussian variance, Poisson rate.
GAUSSIAN_VARIANCE = {"low": 0.12, "medium": 0.18, "high": 0.26}
IMPULSE_PROBABILITY = {"low": 0.3, "medium": 0.5, "high": 0.7}
SPECKLE_VARIANCE = {"low": 0.20, "medium": 0.35, "high": 0.45}
SHOT_RATE = {"low": 25.0, "medium": 12.0, "high": 5.0}

PGM_MAXVAL = 65535

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


@dataclass(frozen=True)
class Image:
    """Flat real-valued sample grid; row-major for 2-D, width=1 for 1-D signals."""

    data: np.ndarray
    height: int
    width: int

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=float).ravel()
        object.__setattr__(self, "data", arr)
        if self.height < 1 or self.width < 1:
            raise ValueError("image dimensions must be positive")
        if arr.size != self.height * self.width:
            raise ValueError(
                f"data length {arr.size} != height*width {self.height * self.width}"
            )

    @classmethod
    def from_array(cls, arr) -> "Image":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 1:
            return cls(arr, arr.size, 1)
        if arr.ndim == 2:
            return cls(arr.ravel(), arr.shape[0], arr.shape[1])
        raise ValueError("expected a 1-D or 2-D array")

    def as_grid(self) -> np.ndarray:
        return self.data.reshape(self.height, self.width)

    @property
    def size(self) -> int:
        return self.data.size

    def same_shape(self, other: "Image") -> bool:
        return self.height == other.height and self.width == other.width


@dataclass(frozen=True)
class NoiseSpec:
    """Corruption model: one of four kinds at one of three appendix levels."""

    kind: str
    level: str
    seed: int = 0
    clip: bool = True

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.level not in NOISE_LEVELS:
            raise ValueError(f"unknown noise level {self.level!r}")


@dataclass(frozen=True)
class TrigBasisSpec:
    """Signal synthesized from the first p low-frequency trigonometric basis functions."""

    n: int
    p: int
    coefficients: tuple

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if self.n < 1:
            raise ValueError("signal length must be positive")
        if not 1 <= self.p <= self.n:
            raise ValueError(f"basis count p={self.p} must satisfy 1 <= p <= n={self.n}")
        if len(self.coefficients) != self.p:
            raise ValueError("need exactly p coefficients")


def trig_basis(n: int) -> np.ndarray:
    """Orthonormal trigonometric basis as rows, ordered DC first then (cos, sin)
    pairs of increasing integer frequency; for even n the Nyquist row is cos only."""
    j = np.arange(n)
    rows = [np.full(n, 1.0 / math.sqrt(n))]
    for f in range(1, n // 2 + 1):
        theta = 2.0 * math.pi * f * j / n
        if 2 * f == n:
            rows.append(np.cos(theta) / math.sqrt(n))  # alternating +-1 row
        else:
            rows.append(np.sqrt(2.0 / n) * np.cos(theta))
            rows.append(np.sqrt(2.0 / n) * np.sin(theta))
    basis = np.stack(rows[:n])
    return basis


def make_trig_signal(spec: TrigBasisSpec) -> Image:
    """Build sum_j c_j phi_j over the first p basis functions, affinely mapped to [0,1].

    The affine map only rescales and adds a DC component, so the result stays in
    the span of the first p basis functions (DC is always included).
    """
    basis = trig_basis(spec.n)
    raw = np.asarray(spec.coefficients) @ basis[: spec.p]
    lo, hi = raw.min(), raw.max()
    if hi - lo > 0:
        raw = (raw - lo) / (hi - lo)
    else:
        raw = np.clip(raw, 0.0, 1.0)
    return Image(raw, spec.n, 1)


def add_gaussian_noise(x: Image, variance: float, rng: np.random.Generator,
                       clip: bool = True) -> Image:
    y = x.data + rng.normal(0.0, math.sqrt(variance), x.size)
    return Image(np.clip(y, 0.0, 1.0) if clip else y, x.height, x.width)


def add_impulse_noise(x: Image, prob: float, rng: np.random.Generator,
                      clip: bool = True) -> Image:
    replace = rng.random(x.size) < prob
    values = rng.integers(0, 2, x.size).astype(float)
    y = np.where(replace, values, x.data)
    return Image(np.clip(y, 0.0, 1.0) if clip else y, x.height, x.width)


def add_speckle_noise(x: Image, variance: float, rng: np.random.Generator,
                      clip: bool = True) -> Image:
    y = x.data * (1.0 + rng.normal(0.0, math.sqrt(variance), x.size))
    return Image(np.clip(y, 0.0, 1.0) if clip else y, x.height, x.width)


def add_shot_noise(x: Image, rate: float, rng: np.random.Generator,
                   clip: bool = True) -> Image:
    y = rng.poisson(rate * x.data).astype(float) / rate
    return Image(np.clip(y, 0.0, 1.0) if clip else y, x.height, x.width)


def add_noise(x: Image, spec: NoiseSpec) -> Image:
    """Corrupt ``x`` per the spec's kind/level table; deterministic given the seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "gaussian":
        return add_gaussian_noise(x, GAUSSIAN_VARIANCE[spec.level], rng, spec.clip)
    if spec.kind == "impulse":
        return add_impulse_noise(x, IMPULSE_PROBABILITY[spec.level], rng, spec.clip)
    if spec.kind == "speckle":
        return add_speckle_noise(x, SPECKLE_VARIANCE[spec.level], rng, spec.clip)
    return add_shot_noise(x, SHOT_RATE[spec.level], rng, spec.clip)


def _check_same_shape(x_ref: Image, x_test: Image):
    if not x_ref.same_shape(x_test):
        raise ValueError(
            f"dimension mismatch: {x_ref.height}x{x_ref.width} vs "
            f"{x_test.height}x{x_test.width}"
        )


def mse(x_ref: Image, x_test: Image) -> float:
    """Mean squared sample difference."""
    _check_same_shape(x_ref, x_test)
    d = x_ref.data - x_test.data
    return float(d @ d) / x_ref.size


def psnr(x_ref: Image, x_test: Image) -> float:
    """10*log10(peak^2 / MSE) with peak the largest magnitude in the reference.

    Returns ``math.inf`` (compares greater than any finite value) when MSE is 0.
    """
    _check_same_shape(x_ref, x_test)
    peak = float(np.max(np.abs(x_ref.data)))
    if peak == 0.0:
        raise ValueError("PSNR undefined for an all-zero reference")
    err = mse(x_ref, x_test)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(x_ref: Image, x_test: Image) -> float:
    """Mean local SSIM, Gaussian 11x11 window (sigma 1.5), dynamic range 1."""
    _check_same_shape(x_ref, x_test)
    if min(x_ref.height, x_ref.width) < SSIM_WINDOW:
        raise ValueError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    a = x_ref.as_grid()
    b = x_test.as_grid()
    k = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    mu_a = convolve2d(a, k, mode="valid")
    mu_b = convolve2d(b, k, mode="valid")
    var_a = convolve2d(a * a, k, mode="valid") - mu_a ** 2
    var_b = convolve2d(b * b, k, mode="valid") - mu_b ** 2
    cov = convolve2d(a * b, k, mode="valid") - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class CurveSeries:
    """Named per-iteration metric trace with strictly increasing iteration keys."""

    name: str
    points: tuple

    def __post_init__(self):
        pts = tuple((int(i), float(v)) for i, v in self.points)
        object.__setattr__(self, "points", pts)
        its = [i for i, _ in pts]
        if any(b <= a for a, b in zip(its, its[1:])):
            raise ValueError("iterations must be strictly increasing")

    def iterations(self) -> np.ndarray:
        return np.array([i for i, _ in self.points], dtype=int)

    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.points])

    def value_at(self, iteration: int) -> float:
        for i, v in self.points:
            if i == iteration:
                return v
        raise KeyError(f"no value at iteration {iteration}")


def detection_gap(trace: CurveSeries, stop_iter: int) -> float:
    """Peak trace value minus the value at the detected iterate; always >= 0."""
    detected = trace.value_at(stop_iter)
    peak = float(np.max(trace.values()))
    return peak - detected


def write_pgm(x: Image, path) -> None:
    """Write a binary PGM (P5, maxval 65535, big-endian), quantizing by round(v*65535)."""
    q = np.clip(np.rint(x.data * PGM_MAXVAL), 0, PGM_MAXVAL).astype(">u2")
    header = f"P5\n{x.width} {x.height}\n{PGM_MAXVAL}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(q.reshape(x.height, x.width).tobytes())


def read_pgm(path) -> Image:
    """Read a binary PGM (P5); samples are dequantized to [0,1] by maxval."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P5":
        raise ValueError("not a binary PGM (P5) file")
    # Header tokens may be separated by whitespace and '#' comments.
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if not 0 < maxval <= 65535:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    dtype = ">u2" if maxval > 255 else "u1"
    count = width * height
    raw = np.frombuffer(blob, dtype=dtype, count=count, offset=pos)
    if raw.size != count:
        raise ValueError("truncated PGM pixel data")
    return Image(raw.astype(float) / maxval, height, width)
