"""Single-pass video prediction with a factorized token mixer.

The heavy lifting lives in the compiled `_framecast` extension; this package
re-exports its surface.
"""

from ._framecast import (  # noqa: F401
    IoError,
    Model,
    ModelConfig,
    NumericError,
    ValidationError,
    __version__,
    copy_last_baseline,
    cost_table,
    generate_clip,
    perceptual_distance,
    psnr,
    roofline_latency_ms,
    run_gradcheck,
    ssim,
)

__all__ = [
    "IoError",
    "Model",
    "ModelConfig",
    "NumericError",
    "ValidationError",
    "__version__",
    "copy_last_baseline",
    "cost_table",
    "generate_clip",
    "perceptual_distance",
    "psnr",
    "roofline_latency_ms",
    "run_gradcheck",
    "ssim",
]
