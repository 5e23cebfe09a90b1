"""Gaussian probability-guided adaptive quantization.

Degrades an image by, per channel: drawing an interval count K from a
clamped, parity-adjusted normal distribution; randomly partitioning the
channel's value range [v_min, v_max] into K regions; assigning each region
a single proxy value; and replacing every pixel by its region's proxy.

Determinism contract: all randomness flows through Philox substreams keyed
by (seed, image_index, channel_index), consumed in a fixed order (interval
count, boundaries, proxies, zero mask), so results are bit-identical
across runs, platforms, and thread counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .image_io import ImageBuffer, PixelStats, channel_stats
from .rng import substream

STRATEGIES = ("middle", "random", "zero")


@dataclass(frozen=True)
class QuantizerConfig:
    """Interval-count distribution, clamp range, step parity, proxy strategy.

    Defaults reproduce the reference parameterization: mean 17, std 2,
    counts clamped to [7, 27], step 2 (after the step adjustment every
    realized count is odd and lies in [9, 27]).
    """

    mean: float = 17.0
    std: float = 2.0
    count_min: int = 7
    count_max: int = 27
    step: int = 2
    strategy: str = "random"
    zero_keep_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError(f"std must be > 0, got {self.std}")
        if self.count_min < 2:
            raise ValueError(f"count_min must be >= 2, got {self.count_min}")
        if self.count_min > self.count_max:
            raise ValueError(f"count_min {self.count_min} > count_max {self.count_max}")
        if self.step < 1:
            raise ValueError(f"step must be >= 1, got {self.step}")
        if not 0.0 <= self.zero_keep_prob <= 1.0:
            raise ValueError(f"zero_keep_prob must be in [0,1], got {self.zero_keep_prob}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "count_min": self.count_min,
            "count_max": self.count_max,
            "step": self.step,
            "strategy": self.strategy,
            "zero_keep_prob": self.zero_keep_prob,
            "seed": self.seed,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "QuantizerConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "QuantizerConfig":
        return cls.from_json_dict(json.loads(text))


@dataclass(frozen=True)
class GaussianSampler:
    """N(mean, std^2) draws from a dedicated stream; pre-clamp distribution."""

    mean: float
    std: float
    rng: np.random.Generator

    def draw(self, n: int | None = None):
        return self.rng.normal(self.mean, self.std, size=n)


def gaussian_pdf(x, mean: float, std: float):
    """Normal probability density (1/sqrt(2*pi*std^2)) * exp(-(x-mean)^2/(2*std^2))."""
    if std <= 0:
        raise ValueError(f"std must be > 0, got {std}")
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-((x - mean) ** 2) / (2.0 * std * std)) / math.sqrt(2.0 * math.pi * std * std)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ChannelPartition:
    """Realized quantization regions for one channel.

    boundaries (b_0 < ... < b_n) tile [v_min, v_max] into regions
    [b_0, b_1], (b_1, b_2], ..., (b_{n-1}, b_n].  A flat channel is the
    degenerate single-element tuple (v,): one region containing only v.
    Region widths are measured on the integer sample grid as the count of
    representable values the region covers.
    """

    boundaries: tuple[int, ...]
    proxies: tuple[int, ...] | None = None
    k_drawn: int | None = None  # interval count drawn before dedup shrank it

    def __post_init__(self):
        b = self.boundaries
        if len(b) == 0:
            raise ValueError("empty boundaries")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ValueError("boundaries must be strictly increasing")
        if self.proxies is not None:
            if len(self.proxies) != self.region_count:
                raise ValueError("one proxy per region required")
            for j, p in enumerate(self.proxies):
                lo, hi = self.member_range(j)
                if not lo <= p <= hi:
                    raise ValueError(f"proxy {p} outside region {j} [{lo}, {hi}]")

    @property
    def region_count(self) -> int:
        return max(1, len(self.boundaries) - 1)

    def member_range(self, j: int) -> tuple[int, int]:
        """Smallest and largest representable sample value in region j."""
        b = self.boundaries
        if len(b) == 1:
            return b[0], b[0]
        if j == 0:
            return b[0], b[1]  # first region is closed: [v_min, b_1]
        return b[j] + 1, b[j + 1]

    def region_width(self, j: int) -> int:
        lo, hi = self.member_range(j)
        return hi - lo + 1

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(self.region_width(j) for j in range(self.region_count))

    def locate(self, values: np.ndarray) -> np.ndarray:
        """Region index for each value; values beyond the span clip to the end regions."""
        b = self.boundaries
        if len(b) == 1:
            return np.zeros(np.shape(values), dtype=np.intp)
        idx = np.searchsorted(np.asarray(b[1:]), values, side="left")
        return np.clip(idx, 0, self.region_count - 1)

    def to_json_dict(self) -> dict:
        return {
            "boundaries": list(self.boundaries),
            "proxies": None if self.proxies is None else list(self.proxies),
            "region_count": self.region_count,
            "k_drawn": self.k_drawn,
        }


def adjust_interval_count(z: float, cfg: QuantizerConfig) -> int:
    """Clamp a raw draw, snap it up to the next step multiple, re-clamp.

    With defaults: round and clamp into [7, 27], then z += 2 - (z-7) % 2,
    then clamp to 27 again (the adjustment can overshoot the top).  The
    result is always an odd count in [9, 27].
    """
    zi = int(np.rint(z))
    zi = max(cfg.count_min, min(zi, cfg.count_max))
    zi = zi + (cfg.step - (zi - cfg.count_min) % cfg.step)
    return min(zi, cfg.count_max)


def sample_interval_count(cfg: QuantizerConfig, rng: np.random.Generator) -> int:
    """Draw z ~ N(mean, std^2) and adjust it to a valid interval count."""
    return adjust_interval_count(rng.normal(cfg.mean, cfg.std), cfg)


def generate_partition(stats: PixelStats, k: int, rng: np.random.Generator) -> ChannelPartition:
    """Draw K-1 interior boundaries uniformly in (v_min, v_max).

    Duplicate draws are removed rather than re-drawn, so the realized
    region count may shrink below K.  Proxies are left unset.
    """
    if k < 1:
        raise ValueError(f"interval count must be >= 1, got {k}")
    v_min, v_max = stats.min_value, stats.max_value
    if v_min == v_max:
        return ChannelPartition(boundaries=(v_min,), k_drawn=k)
    if k == 1 or v_max - v_min < 2:
        return ChannelPartition(boundaries=(v_min, v_max), k_drawn=k)
    interior = rng.integers(v_min + 1, v_max, size=k - 1)  # uniform on [v_min+1, v_max-1]
    uniq = np.unique(interior)
    return ChannelPartition(boundaries=(v_min, *uniq.tolist(), v_max), k_drawn=k)


def proxy_value(left: int, right: int, p: float) -> int:
    """Region proxy left + (right - left) * p, rounded to the sample grid."""
    return int(np.rint(left + (right - left) * p))


def assign_proxies(partition: ChannelPartition, strategy: str,
                   rng: np.random.Generator | None = None) -> ChannelPartition:
    """Set one proxy per region.

    middle: midpoint of the region's representable values.  random: drawn
    at left + (right-left) * p with p ~ Uniform(0, 1], then rounded and
    clamped into the region.  zero: proxies as middle; the per-pixel
    zeroing happens at assignment time in quantize_image/apply_partitions.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    n = partition.region_count
    b = partition.boundaries
    if strategy == "random" and len(b) > 1:
        if rng is None:
            raise ValueError("random strategy needs an rng")
        ps = 1.0 - rng.random(n)  # Uniform(0, 1]: proxy stays inside the half-open region
        proxies = []
        for j in range(n):
            raw = proxy_value(b[j], b[j + 1], float(ps[j]))
            lo, hi = partition.member_range(j)
            proxies.append(min(max(raw, lo), hi))
    else:
        proxies = []
        for j in range(n):
            lo, hi = partition.member_range(j)
            proxies.append((lo + hi) // 2)
    return replace(partition, proxies=tuple(proxies))


def apply_partitions(img: ImageBuffer, partitions: list[ChannelPartition]) -> ImageBuffer:
    """Map every pixel to its region's proxy.  Pure; no randomness."""
    if len(partitions) != img.channels:
        raise ValueError(f"{len(partitions)} partitions for {img.channels} channels")
    out = np.empty_like(img.samples)
    for c, part in enumerate(partitions):
        if part.proxies is None:
            raise ValueError(f"partition for channel {c} has no proxies")
        idx = part.locate(img.samples[:, :, c])
        out[:, :, c] = np.asarray(part.proxies, dtype=img.samples.dtype)[idx]
    return img.with_samples(out)


def quantize_image(img: ImageBuffer, cfg: QuantizerConfig, seed: int | None = None,
                   image_index: int = 0) -> tuple[ImageBuffer, list[ChannelPartition]]:
    """Quantize each channel independently; returns the image and realized partitions.

    Per channel c the substream (seed, image_index, c) supplies, in order:
    the interval-count draw, the boundary draws, the proxy draws, and (zero
    strategy only) the per-pixel keep mask.
    """
    if seed is None:
        seed = cfg.seed
    stats = channel_stats(img)
    out = np.empty_like(img.samples)
    partitions = []
    for c in range(img.channels):
        g = substream(seed, image_index, c)
        k = sample_interval_count(cfg, g)
        part = assign_proxies(generate_partition(stats[c], k, g), cfg.strategy, g)
        idx = part.locate(img.samples[:, :, c])
        ch = np.asarray(part.proxies, dtype=img.samples.dtype)[idx]
        if cfg.strategy == "zero":
            keep = g.random(ch.shape) < cfg.zero_keep_prob
            ch = np.where(keep, ch, np.zeros_like(ch))
        out[:, :, c] = ch
        partitions.append(part)
    return img.with_samples(out), partitions
