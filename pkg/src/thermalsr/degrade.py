"""LR/HR pair synthesis: quantization degradation plus spatial resampling.

Downsampling follows the SR dataset-preparation convention: Catmull-Rom
bicubic (a = -0.5) with the kernel support stretched by the scale factor
as an antialias prefilter, plus exact block-mean ("box") and nearest
kernels.  All arithmetic runs in float64 and is rounded back to the
integer sample grid once, at the end.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .image_io import ImageBuffer, crop_to_multiple, load_image, save_image
from .manifest import DatasetManifest
from .quantize import QuantizerConfig, quantize_image
from .rng import stream_id

KERNELS = ("bicubic", "box", "nearest")
ORDERS = ("quantize-first", "downsample-first")


@dataclass(frozen=True)
class DegradationRecipe:
    """Fully determines an LR/HR pair given the HR input."""

    scale: int
    kernel: str = "bicubic"
    quantizer: QuantizerConfig | None = None
    order: str = "quantize-first"
    seed: int = 0

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {self.order!r}")

    def to_json_dict(self) -> dict:
        return {
            "scale": self.scale,
            "kernel": self.kernel,
            "quantizer": None if self.quantizer is None else self.quantizer.to_json_dict(),
            "order": self.order,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DegradationRecipe":
        q = d.get("quantizer")
        return cls(scale=d["scale"], kernel=d.get("kernel", "bicubic"),
                   quantizer=None if q is None else QuantizerConfig.from_json_dict(q),
                   order=d.get("order", "quantize-first"), seed=d.get("seed", 0))


def _cubic(x: np.ndarray) -> np.ndarray:
    # Catmull-Rom cubic, a = -0.5, support 2.
    x = np.abs(x)
    out = np.zeros_like(x)
    m1 = x <= 1
    m2 = (x > 1) & (x < 2)
    out[m1] = (1.5 * x[m1] - 2.5) * x[m1] * x[m1] + 1.0
    out[m2] = ((-0.5 * x[m2] + 2.5) * x[m2] - 4.0) * x[m2] + 2.0
    return out


def _resample_weights(in_size: int, out_size: int) -> np.ndarray:
    """Dense (out_size, in_size) bicubic weight matrix for one axis.

    When shrinking, the kernel is stretched by in/out so it acts as an
    antialias prefilter; out-of-range taps clamp to the edge samples.
    """
    ratio = in_size / out_size
    stretch = max(ratio, 1.0)
    support = 2.0 * stretch
    centers = (np.arange(out_size) + 0.5) * ratio - 0.5
    left = np.floor(centers - support).astype(int) + 1
    ntaps = int(np.ceil(2.0 * support)) + 1
    taps = left[:, None] + np.arange(ntaps)[None, :]
    weights = _cubic((taps - centers[:, None]) / stretch)
    weights /= weights.sum(axis=1, keepdims=True)
    taps = np.clip(taps, 0, in_size - 1)  # replicate edges
    dense = np.zeros((out_size, in_size))
    for i in range(out_size):
        np.add.at(dense[i], taps[i], weights[i])
    return dense


def resize(img: ImageBuffer, width: int, height: int, kernel: str = "bicubic") -> ImageBuffer:
    """Resample to an arbitrary size (bicubic only); used for upscaling baselines."""
    if kernel != "bicubic":
        raise ValueError("resize supports only the bicubic kernel")
    data = img.to_float()
    wy = _resample_weights(img.height, height)
    wx = _resample_weights(img.width, width)
    out = np.einsum("oh,hwc->owc", wy, data)
    out = np.einsum("ow,hwc->hoc", wx, out)
    out = np.clip(np.rint(out), 0, img.max_value)
    return img.with_samples(out.astype(img.samples.dtype))


def downsample(img: ImageBuffer, scale: int, kernel: str = "bicubic") -> ImageBuffer:
    """Shrink by an integer factor; dimensions must divide evenly."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if kernel not in KERNELS:
        raise ValueError(f"kernel must be one of {KERNELS}, got {kernel!r}")
    if img.width % scale or img.height % scale:
        raise ValueError(f"dimensions {img.width}x{img.height} not divisible by {scale} "
                         "(crop_to_multiple first)")
    if scale == 1:
        return img
    h, w = img.height // scale, img.width // scale
    if kernel == "box":
        blocks = img.to_float().reshape(h, scale, w, scale, img.channels)
        out = blocks.mean(axis=(1, 3))
    elif kernel == "nearest":
        off = scale // 2
        return img.with_samples(img.samples[off::scale, off::scale, :])
    else:
        return resize(img, w, h)
    out = np.clip(np.rint(out), 0, img.max_value)
    return img.with_samples(out.astype(img.samples.dtype))


def upsample(img: ImageBuffer, scale: int, kernel: str = "bicubic") -> ImageBuffer:
    """Bicubic enlargement by an integer factor (baseline SR predictor)."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if scale == 1:
        return img
    if kernel != "bicubic":
        raise ValueError("upsample supports only the bicubic kernel")
    return resize(img, img.width * scale, img.height * scale)


def make_pair(hr: ImageBuffer, recipe: DegradationRecipe,
              image_index: int = 0) -> tuple[ImageBuffer, ImageBuffer]:
    """(lr, hr_cropped) per the recipe; deterministic under recipe.seed."""
    hr_cropped = crop_to_multiple(hr, recipe.scale)
    work = hr_cropped
    if recipe.quantizer is not None and recipe.order == "quantize-first":
        work, _ = quantize_image(work, recipe.quantizer, seed=recipe.seed, image_index=image_index)
    work = downsample(work, recipe.scale, recipe.kernel)
    if recipe.quantizer is not None and recipe.order == "downsample-first":
        work, _ = quantize_image(work, recipe.quantizer, seed=recipe.seed, image_index=image_index)
    return work, hr_cropped


@dataclass
class DegradationReport:
    recipe: DegradationRecipe
    images: list[dict] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "recipe": self.recipe.to_json_dict(),
            "images": self.images,
            "skipped": self.skipped,
        }

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _degrade_one(entry, index: int, recipe: DegradationRecipe, out_dir: str) -> dict:
    lr_path = os.path.join(out_dir, "lr", entry.id + ".png")
    hr_path = os.path.join(out_dir, "hr", entry.id + ".png")
    try:
        hr = load_image(entry.path)
        hr_cropped = crop_to_multiple(hr, recipe.scale)
        k_per_channel: list[int] = []
        work = hr_cropped
        if recipe.quantizer is not None and recipe.order == "quantize-first":
            work, parts = quantize_image(work, recipe.quantizer, seed=recipe.seed, image_index=index)
            k_per_channel = [p.region_count for p in parts]
        work = downsample(work, recipe.scale, recipe.kernel)
        if recipe.quantizer is not None and recipe.order == "downsample-first":
            work, parts = quantize_image(work, recipe.quantizer, seed=recipe.seed, image_index=index)
            k_per_channel = [p.region_count for p in parts]
        os.makedirs(os.path.dirname(lr_path), exist_ok=True)
        os.makedirs(os.path.dirname(hr_path), exist_ok=True)
        save_image(work, lr_path)
        save_image(hr_cropped, hr_path)
    except Exception as exc:
        for p in (lr_path, hr_path):  # all-or-nothing per image
            if os.path.exists(p):
                os.unlink(p)
        raise RuntimeError(f"{entry.id}: {exc}") from exc
    return {
        "id": entry.id,
        "k_per_channel": k_per_channel,
        "lr_path": lr_path,
        "hr_path": hr_path,
        "substream": stream_id(recipe.seed, index),
    }


def batch_degrade(manifest: DatasetManifest, recipe: DegradationRecipe,
                  out_dir: str | os.PathLike, threads: int = 1) -> DegradationReport:
    """Write lr/ and hr/ trees mirroring the manifest, plus a recipe report.

    Images are processed in manifest-id order with per-image substreams
    derived from (seed, image index), so output bytes do not depend on the
    thread count.  A failing image is skipped whole (no partial files) and
    listed in the report.
    """
    out_dir = os.fspath(out_dir)
    entries = sorted(manifest.entries, key=lambda e: e.id)
    report = DegradationReport(recipe=recipe)
    if not entries:
        return report
    os.makedirs(out_dir, exist_ok=True)

    def work(pair):
        index, entry = pair
        return _degrade_one(entry, index, recipe, out_dir)

    results: list[dict | None] = [None] * len(entries)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = {pool.submit(work, (i, e)): (i, e) for i, e in enumerate(entries)}
        for fut, (i, entry) in futures.items():
            try:
                results[i] = fut.result()
            except RuntimeError as exc:
                report.skipped.append(str(exc))
    report.images = [r for r in results if r is not None]
    return report


def tree_digest(root: str | os.PathLike) -> str:
    """SHA-256 over the sorted relative paths and contents of a directory tree."""
    root = os.fspath(root)
    digest = hashlib.sha256()
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            path = os.path.join(dirpath, name)
            rel = os.path.relpath(path, root).replace(os.sep, "/")
            digest.update(rel.encode())
            with open(path, "rb") as fh:
                digest.update(fh.read())
    return digest.hexdigest()
