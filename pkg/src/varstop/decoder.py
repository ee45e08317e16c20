"""Two-layer untrained generator ReLU(U B C) v with circulant upsampling.

The model is deliberately small: B is a fixed random seed matrix, v a fixed
sign vector, and only the 1x1-convolution bank C trains under plain gradient
descent.  Despite its size it reproduces the early-learning-then-overfitting
trajectory that the variance detectors are built to catch, and its Jacobian
is cheap enough to factor exactly for the closed-form oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
from scipy.linalg import circulant

from .signals import Image

JACOBIAN_SIZE_GUARD = 2 ** 20
DIVERGENCE_FACTOR = 1e6


class DivergenceError(RuntimeError):
    """Training loss blew past the divergence guard (step size too large)."""


@dataclass(frozen=True)
class UpsamplingKernel:
    """Circular-convolution kernel u defining the upsampling operator U."""

    u: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.u, dtype=float).ravel()
        object.__setattr__(self, "u", arr)
        if arr.size < 1 or not np.any(arr):
            raise ValueError("kernel must be a nonzero vector")

    @property
    def n(self) -> int:
        return self.u.size

    def matrix(self) -> np.ndarray:
        """Dense circulant U with U[i, j] = u[(i - j) mod n], so U x = u (*) x."""
        return circulant(self.u)


def identity_kernel(n: int) -> UpsamplingKernel:
    u = np.zeros(n)
    u[0] = 1.0
    return UpsamplingKernel(u)


def triangular_kernel(n: int, support: int = 5) -> UpsamplingKernel:
    """Normalized triangular smoothing kernel (support must be odd, < n)."""
    if support % 2 == 0 or support < 1:
        raise ValueError("support must be odd and positive")
    if support >= n:
        raise ValueError("support must be smaller than the signal length")
    half = support // 2
    u = np.zeros(n)
    for d in range(-half, half + 1):
        u[d % n] = half + 1 - abs(d)
    return UpsamplingKernel(u / (half + 1) ** 2)


def max_step_size(kernel: UpsamplingKernel) -> float:
    """Gradient-descent stability bound 1 / max_i |DFT(u)_i|^2."""
    peak = float(np.max(np.abs(np.fft.fft(kernel.u))))
    return 1.0 / peak ** 2


def spectrum_from_kernel(kernel: UpsamplingKernel) -> np.ndarray:
    """Reference-Jacobian singular values induced by the kernel alone.

    sigma = ||u||_2 * |F g(u (*) u / ||u||_2^2)|^(1/2) with
    g(t) = (1 - arccos(t)/pi) t applied elementwise to the normalized circular
    autocorrelation; returned sorted descending.
    """
    u = kernel.u
    fu = np.fft.fft(u)
    energy = float(u @ u)
    a = np.fft.ifft(fu * np.conj(fu)).real / energy
    a = np.clip(a, -1.0, 1.0)  # Cauchy-Schwarz guarantees this up to roundoff
    g = (1.0 - np.arccos(a) / math.pi) * a
    sig = math.sqrt(energy) * np.sqrt(np.abs(np.fft.fft(g)))
    return np.sort(sig)[::-1]


def sign_vector(k: int) -> np.ndarray:
    """Fixed output weights: ceil(k/2) entries +1 then floor(k/2) entries -1, / sqrt(k)."""
    plus = (k + 1) // 2
    return np.concatenate([np.ones(plus), -np.ones(k - plus)]) / math.sqrt(k)


@dataclass(frozen=True)
class TrainerConfig:
    """Plain gradient descent settings; eta=None means half the stability bound,
    omega=None means ||y||_2 / sqrt(n)."""

    eta: Optional[float] = None
    max_iters: int = 10000
    seed: int = 0
    omega: Optional[float] = None

    def __post_init__(self):
        if self.eta is not None and self.eta < 0:
            raise ValueError("step size must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.omega is not None and self.omega <= 0:
            raise ValueError("omega must be positive")

    def resolve_eta(self, kernel: UpsamplingKernel) -> float:
        # Auto-step stays at half the stability bound; an explicit eta is
        # taken as given (the divergence guard catches runaway choices).
        if self.eta is None:
            return 0.5 * max_step_size(kernel)
        return self.eta


class TwoLayerDecoder:
    """G_C(B) = ReLU(U B C) v with trainable C only."""

    def __init__(self, kernel: UpsamplingKernel, B: np.ndarray, C: np.ndarray):
        B = np.asarray(B, dtype=float)
        C = np.asarray(C, dtype=float)
        n = kernel.n
        if B.shape != (n, n):
            raise ValueError(f"B must be {n}x{n}, got {B.shape}")
        if C.ndim != 2 or C.shape[0] != n:
            raise ValueError(f"C must have {n} rows, got {C.shape}")
        self.kernel = kernel
        self.n = n
        self.k = C.shape[1]
        self.B = B
        self.C = C
        self.v = sign_vector(self.k)
        self.UB = kernel.matrix() @ B  # fixed throughout training

    @classmethod
    def seeded(cls, kernel: UpsamplingKernel, k: int, b_seed: int,
               c_init: Optional[np.ndarray] = None) -> "TwoLayerDecoder":
        """Draw the fixed seed matrix B with i.i.d. N(0, 1/n) entries.

        The 1/n variance keeps B B^T ~ I, so training C through B follows the
        same dynamics as training the product BC directly -- the regime in
        which the kernel-spectrum step bound eta <= 1/max|Fu|^2 is valid.
        With unit-variance entries the Jacobian picks up an extra factor of
        ||B|| ~ 2 sqrt(n) and that step size diverges.
        """
        n = kernel.n
        B = np.random.default_rng(b_seed).standard_normal((n, n)) / math.sqrt(n)
        C = np.zeros((n, k)) if c_init is None else c_init
        return cls(kernel, B, C)

    def forward(self) -> Image:
        z = self.UB @ self.C
        out = np.maximum(z, 0.0) @ self.v
        return Image(out, self.n, 1)

    def _residual_parts(self, y: np.ndarray):
        z = self.UB @ self.C
        out = np.maximum(z, 0.0) @ self.v
        e = out - y
        loss = float(e @ e)
        # ReLU' at exactly 0 taken as 0 (measure-zero under Gaussian init).
        grad = self.UB.T @ ((2.0 * np.outer(e, self.v)) * (z > 0))
        return loss, grad, out

    def loss_and_grad(self, y: Image):
        """(||y - G_C(B)||_2^2, analytic dL/dC)."""
        if y.size != self.n:
            raise ValueError("observation length does not match the decoder")
        loss, grad, _ = self._residual_parts(y.data)
        return loss, grad

    def jacobian(self) -> np.ndarray:
        """Dense d forward / d vec(C), columns ordered column-major over C:
        J[i, a + n*j] = 1[Z_ij > 0] * (UB)_ia * v_j."""
        if self.n * self.k > JACOBIAN_SIZE_GUARD:
            raise ValueError("instance too large for a dense Jacobian")
        z = self.UB @ self.C
        mask = (z > 0).astype(float)
        j3 = np.einsum("ij,ia,j->ija", mask, self.UB, self.v)
        return j3.reshape(self.n, self.n * self.k)


def train_stream(dec: TwoLayerDecoder, y: Image, cfg: TrainerConfig) -> Iterator[Image]:
    """Yield reconstructions x^t after each gradient step C <- C - eta * grad,
    t = 1..max_iters.  Draws C^0 ~ N(0, omega^2) from cfg.seed, so a replay with
    the same config is bit-identical."""
    if y.size != dec.n:
        raise ValueError("observation length does not match the decoder")
    eta = cfg.resolve_eta(dec.kernel)
    omega = cfg.omega
    if omega is None:
        omega = float(np.linalg.norm(y.data)) / math.sqrt(dec.n)
        if omega == 0.0:
            raise ValueError("cannot scale initialization from an all-zero observation")
    rng = np.random.default_rng(cfg.seed)
    dec.C = rng.normal(0.0, omega, (dec.n, dec.k))
    loss0, grad, _ = dec._residual_parts(y.data)
    guard = DIVERGENCE_FACTOR * loss0
    for _ in range(cfg.max_iters):
        dec.C = dec.C - eta * grad
        loss, grad, out = dec._residual_parts(y.data)
        if loss > guard:
            raise DivergenceError(f"loss {loss:.3e} exceeded {guard:.3e}")
        yield Image(out, dec.n, 1)
