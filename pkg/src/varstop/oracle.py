"""Closed-form verification layer for the variance detectors.

Under gradient descent on the linearized (least-squares) objective, the
windowed variance of the reconstruction stream has an exact modal expression;
this module evaluates it, simulates the matching trajectory independently,
and evaluates the three-term upper bound whose U shape explains why the
variance valley tracks the reconstruction-error valley.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .signals import Image

ORTHONORMALITY_TOL = 1e-10
REGIME_TOL = 1e-12


@dataclass(frozen=True)
class SpectralModel:
    """Spectral data (sigma_i, w_i) of a reference Jacobian plus the projected
    observation y_hat and the step size eta; the level at which the closed
    forms live."""

    sigmas: np.ndarray        # descending, nonnegative
    left_vectors: np.ndarray  # columns w_i, orthonormal
    y_hat: np.ndarray
    eta: float

    def __post_init__(self):
        sig = np.asarray(self.sigmas, dtype=float).ravel()
        vec = np.asarray(self.left_vectors, dtype=float)
        yh = np.asarray(self.y_hat, dtype=float).ravel()
        object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "left_vectors", vec)
        object.__setattr__(self, "y_hat", yh)
        if vec.ndim != 2 or vec.shape[1] != sig.size:
            raise ValueError("need one left vector per singular value")
        if yh.size != vec.shape[0]:
            raise ValueError("y_hat length does not match the vectors")
        if np.any(sig < 0) or np.any(np.diff(sig) > 1e-9):
            raise ValueError("singular values must be nonnegative and descending")
        gram = vec.T @ vec
        if np.max(np.abs(gram - np.eye(sig.size))) > ORTHONORMALITY_TOL:
            raise ValueError("left vectors are not orthonormal")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if sig.size and self.eta * sig[0] ** 2 > 1.0 + REGIME_TOL:
            raise ValueError("eta exceeds 1/sigma_max^2 (outside the regime)")

    @property
    def n(self) -> int:
        return self.left_vectors.shape[0]

    def projections(self) -> np.ndarray:
        """<w_i, y_hat> for each mode."""
        return self.left_vectors.T @ self.y_hat

    @classmethod
    def from_jacobian(cls, jac: np.ndarray, y_hat: np.ndarray,
                      eta: float) -> "SpectralModel":
        w, sig, _ = np.linalg.svd(np.asarray(jac, dtype=float), full_matrices=False)
        return cls(sig, w, y_hat, eta)


def variance_constant(W: int, eta: float, sigma: float) -> float:
    """Per-mode windowed-variance constant C_{W, eta, sigma}.

    C = (1/(W^2 xi)) [ W (1 - (1-xi)^{2W}) / (2 - xi) - (1 - (1-xi)^W)^2 / xi ]
    with xi = eta * sigma^2; continuously extended to 0 at xi = 0, and exactly
    0 at W = 1 (a single frame has no spread).

    Evaluated through the equivalent pairwise form
    (1/(2 W^2)) sum_{w, w'} ((1-xi)^w - (1-xi)^{w'})^2: for small xi the
    bracket above subtracts two nearly equal terms and loses ~|log10 xi^2|
    digits, while the sum of squares is cancellation-free.
    """
    if W < 1:
        raise ValueError("window must be positive")
    xi = eta * sigma * sigma
    if xi < 0 or xi > 1.0 + REGIME_TOL:
        raise ValueError(f"eta*sigma^2 = {xi} outside [0, 1]")
    if xi == 0.0 or W == 1:
        return 0.0
    d = (1.0 - xi) ** np.arange(W)
    diff = d[:, None] - d[None, :]
    return float(np.einsum("ij,ij->", diff, diff)) / (2.0 * W * W)


def closed_form_wmv(m: SpectralModel, W: int, t: int) -> float:
    """Exact windowed variance of the linearized trajectory over the window
    starting at iterate t: sum_i C_{W,eta,sigma_i} <w_i, y_hat>^2 (1 - eta sigma_i^2)^{2t}."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    proj = m.projections()
    total = 0.0
    for sig, p in zip(m.sigmas, proj):
        c = variance_constant(W, m.eta, float(sig))
        if c == 0.0:
            continue
        decay = (1.0 - m.eta * sig * sig) ** (2 * t)
        total += c * p * p * decay
    return total


def simulate_linearized(m: SpectralModel, T: int) -> list:
    """Independent trajectory oracle: x^t = sum_i (1 - (1 - eta sigma_i^2)^t)
    <w_i, y_hat> w_i for t = 0..T (gradient descent from c^0 = 0)."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    proj = m.projections()
    decay = 1.0 - m.eta * m.sigmas ** 2
    frames = []
    for t in range(T + 1):
        coeff = (1.0 - decay ** t) * proj
        x = m.left_vectors @ coeff
        frames.append(Image(x, m.n, 1))
    return frames


def surrogate_stream(jac: np.ndarray, y_hat: np.ndarray, eta: float,
                     T: int) -> Iterator[Image]:
    """Gradient descent on the least-squares surrogate: c <- c - eta J^T (J c - y_hat)
    from c^0 = 0, yielding x^t = J c^t for t = 0..T.

    This is the empirical counterpart of simulate_linearized, run in parameter
    space with no closed form involved.
    """
    jac = np.asarray(jac, dtype=float)
    yh = np.asarray(y_hat, dtype=float).ravel()
    n = jac.shape[0]
    c = np.zeros(jac.shape[1])
    for _ in range(T + 1):
        x = jac @ c
        yield Image(x, n, 1)
        c = c - eta * (jac.T @ (x - yh))


@dataclass(frozen=True)
class BoundInputs:
    """Everything the three-term variance upper bound needs.

    p is the 1-based spectral-gap index; epsilon the network-approximation
    scalar (the theorem takes it in (0, sigma_p/sigma_1]; 0 is accepted for
    the degenerate no-approximation-error reading).
    """

    x: np.ndarray
    n_vec: np.ndarray
    y: np.ndarray
    sigmas: np.ndarray
    left_vectors: np.ndarray
    eta: float
    p: int
    epsilon: float
    W: int

    def __post_init__(self):
        for name in ("x", "n_vec", "y", "sigmas"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        object.__setattr__(self, "left_vectors", np.asarray(self.left_vectors, dtype=float))
        if not 1 <= self.p <= self.sigmas.size:
            raise ValueError("gap index p out of range")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.W < 1:
            raise ValueError("window must be positive")

    @property
    def sigma_p(self) -> float:
        return float(self.sigmas[self.p - 1])


def noise_error_term(b: BoundInputs, t: int) -> float:
    """E(n) = sqrt( sum_j ((1 - eta sigma_j^2)^t - 1)^2 <w_j, n>^2 )."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    proj = b.left_vectors.T @ b.n_vec
    decay = (1.0 - b.eta * b.sigmas ** 2) ** t
    return float(math.sqrt(np.sum((decay - 1.0) ** 2 * proj ** 2)))


def upper_bound_wmv(b: BoundInputs, t: int) -> float:
    """Three-term windowed-variance upper bound:

    (12/W) ||x||^2 (1-eta sigma_p^2)^{2t} / (1 - (1-eta sigma_p^2)^2)
      + 12 sum_i ((1-eta sigma_i^2)^{t+W-1} - 1)^2 (w_i^T n)^2
      + 12 eps^2 ||y||^2.

    Decreasing-in-t signal term, increasing-in-t noise term: with both present
    the trace is U-shaped.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    rho = 1.0 - b.eta * b.sigma_p ** 2
    if not 0.0 < b.eta * b.sigma_p ** 2 < 1.0:
        raise ValueError("eta*sigma_p^2 must lie in (0,1) for the geometric sum")
    signal = (12.0 / b.W) * float(b.x @ b.x) * rho ** (2 * t) / (1.0 - rho * rho)
    proj = b.left_vectors.T @ b.n_vec
    decay = (1.0 - b.eta * b.sigmas ** 2) ** (t + b.W - 1)
    noise = 12.0 * float(np.sum((decay - 1.0) ** 2 * proj ** 2))
    approx = 12.0 * b.epsilon ** 2 * float(b.y @ b.y)
    return signal + noise + approx
