"""Bayesian transfer learning for volumetric segmentation.

Thin python surface over the C++ core: variational kernel distributions,
segmentation metrics, the 3D U-Net builder, the plateau schedule and the
synthetic volume generator.
"""

from dwp._core import (
    PlateauSchedule,
    UNet,
    __version__,
    ce_loss,
    combined_loss,
    dice_loss,
    dsc,
    entropy,
    gaussian_kl,
    generate,
    iou,
    log_q,
    sample_weights,
    trace_shapes,
)

__all__ = [
    "PlateauSchedule",
    "UNet",
    "__version__",
    "ce_loss",
    "combined_loss",
    "dice_loss",
    "dsc",
    "entropy",
    "gaussian_kl",
    "generate",
    "iou",
    "log_q",
    "sample_weights",
    "trace_shapes",
]
