"""Pyramid-constraint fundus image enhancement.

Images are float64 arrays of shape (H, W, 3) with values in [0, 1].
Feature taps are channel-first arrays of shape (C, H, W).
"""

from ._pcenet import (
    ConfigError,
    DimensionError,
    FormatError,
    IoError,
    Model,
    NumericError,
    ParameterError,
    PcenetError,
    __version__,
    apply_blur,
    degrade,
    downsample,
    enhancement_loss,
    gaussian_blur,
    laplacian_decompose,
    laplacian_reconstruct,
    layer_consistency_loss,
    load_image,
    lr_schedule,
    make_fov_mask,
    overlap_metrics,
    parameter_count,
    psnr,
    save_image,
    spp,
    ssim,
    synthetic_fundus,
    total_loss,
    upsample,
    wfqa,
)

__all__ = [name for name in dir() if not name.startswith("_")]
