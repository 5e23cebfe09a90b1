"""Few-shot thermal image super-resolution experimentation toolkit.

Provides Gaussian probability-guided quantization degradation, LR/HR pair
synthesis, full-reference image quality metrics (PSNR / SSIM / MS-SSIM /
FSIM), a verifiable denoising-diffusion schedule kernel, a training-curve
overfitting monitor, and a dataset/benchmark harness, all behind one CLI.
"""

__version__ = "0.1.0"

from .image_io import ImageBuffer, PixelStats, channel_stats, crop_to_multiple, load_image, save_image
from .quantize import ChannelPartition, QuantizerConfig, quantize_image

__all__ = [
    "ImageBuffer",
    "PixelStats",
    "load_image",
    "save_image",
    "channel_stats",
    "crop_to_multiple",
    "QuantizerConfig",
    "ChannelPartition",
    "quantize_image",
    "__version__",
]
