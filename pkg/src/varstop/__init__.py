"""Variance-based early stopping for untrained-prior inverse problem solvers.

The library watches the stream of reconstructions an iterative solver emits,
detects where their windowed (or exponential) moving variance bottoms out,
and returns the iterate from that valley -- which, for overparameterized
untrained models fit to a noisy observation, sits near the reconstruction
quality peak.  A small analytically tractable two-layer generator and exact
closed forms for its linearized variance dynamics are included for
verification and experimentation.
"""

from .signals import (
    GAUSSIAN_VARIANCE,
    IMPULSE_PROBABILITY,
    SHOT_RATE,
    SPECKLE_VARIANCE,
    CurveSeries,
    Image,
    NoiseSpec,
    TrigBasisSpec,
    add_noise,
    detection_gap,
    make_trig_signal,
    mse,
    psnr,
    read_pgm,
    ssim,
    trig_basis,
    write_pgm,
)
from .detector import (
    EmvDetector,
    Verdict,
    WmvDetector,
    run_detector,
    smooth_ema,
    windowed_variance,
)
from .decoder import (
    DivergenceError,
    TrainerConfig,
    TwoLayerDecoder,
    UpsamplingKernel,
    identity_kernel,
    max_step_size,
    sign_vector,
    spectrum_from_kernel,
    train_stream,
    triangular_kernel,
)
from .oracle import (
    BoundInputs,
    SpectralModel,
    closed_form_wmv,
    noise_error_term,
    simulate_linearized,
    surrogate_stream,
    upper_bound_wmv,
    variance_constant,
)
from .harness import (
    ExperimentConfig,
    RunRecord,
    detect_stream,
    oracle_report,
    run_denoise,
    sweep,
)

__version__ = "0.1.0"
