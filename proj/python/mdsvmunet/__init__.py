"""MDSVM-UNet: two-stage coronary-artery segmentation toolkit.

Multidirectional snake convolution, residual visual Mamba layers, a
UNet++-style assembly, surface metrics, and the coarse-to-fine pipeline,
backed by a framework-free C++ core.
"""

from ._core import (
    ConfigError,
    ContractError,
    IoError,
    Network,
    NumericsError,
    ShapeError,
    UndefinedMetricError,
    average_hausdorff,
    conv3d,
    dice_coefficient,
    grid_sample_trilinear,
    hausdorff,
    load_label,
    load_volume,
    save_label,
    save_volume,
    selective_scan,
    synth_generate,
    train,
    two_stage_infer,
    upsample_trilinear,
    verify,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "IoError",
    "Network",
    "NumericsError",
    "ShapeError",
    "UndefinedMetricError",
    "average_hausdorff",
    "conv3d",
    "dice_coefficient",
    "grid_sample_trilinear",
    "hausdorff",
    "load_label",
    "load_volume",
    "save_label",
    "save_volume",
    "selective_scan",
    "synth_generate",
    "train",
    "two_stage_infer",
    "upsample_trilinear",
    "verify",
]

__version__ = "0.1.0"
