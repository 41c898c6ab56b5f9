"""Alpha matting by fitting three untrained U-nets to a single image and trimap.

Images are float arrays of shape (H, W, 3) in [0, 1]; alpha is (H, W);
trimaps are uint8 (H, W) gray codes (<64 background, >191 foreground).
"""

from ._dipmatte import (
    LOSS_COLUMNS,
    ConfigError,
    DivergenceError,
    IoError,
    ShapeError,
    baseline_matte,
    composite,
    composite_residual,
    extract_matte,
    extract_video,
    gradcheck,
    load_alpha,
    load_image,
    load_trimap,
    mse,
    sad,
    save_alpha,
    save_image,
    synth_case,
)

__all__ = [
    "LOSS_COLUMNS",
    "ConfigError",
    "DivergenceError",
    "IoError",
    "ShapeError",
    "baseline_matte",
    "composite",
    "composite_residual",
    "extract_matte",
    "extract_video",
    "gradcheck",
    "load_alpha",
    "load_image",
    "load_trimap",
    "mse",
    "sad",
    "save_alpha",
    "save_image",
    "synth_case",
]
