"""Seeded random mask generation.

Binary masks (value 1 = pixel retained, drawn with probability `p_mask`)
drive the positional estimators; color masks (each cell masked with
probability `p_mask`, masked cells colored uniformly from the K-color set)
drive the per-color estimator.  Low-resolution cell grids are upsampled to
image resolution, optionally with bilinear interpolation and a random crop
shift, exactly one coherent perturbation per sample index.

Reproducibility contract: sample `index` under seed `s` is generated from
an independent Philox4x64 stream keyed by SeedSequence(entropy=s,
spawn_key=(index,)), so any sample can be regenerated in isolation and
batching never changes the masks.  Per sample the draws are consumed in a
fixed documented order:

  1. low-res cells, row-major: one uniform per cell (plus one color index
     per cell in color mode),
  2. if shift is enabled: pad cells for the extra right column (top to
     bottom) then the extra bottom row (left to right, corner last), same
     per-cell distribution as step 1,
  3. if shift is enabled: the crop offset, one integer in [0, H//h) then
     one in [0, W//w).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .imaging import bilinear_resize, nearest_resize, write_grid_bin

# §-style five-color default palette: red, green, blue, white, black.
DEFAULT_COLORS = (
    (1.0, 0.0, 0.0),
    (0.0, 1.0, 0.0),
    (0.0, 0.0, 1.0),
    (1.0, 1.0, 1.0),
    (0.0, 0.0, 0.0),
)

_UINT64_MASK = (1 << 64) - 1
CHANNEL_SUM_TOL = 1e-9


@dataclass(frozen=True)
class RunConfig:
    """All sampling parameters of one explanation run."""

    num_masks: int = 8000
    p_mask: float = 0.5
    cell_grid: tuple[int, int] = (7, 7)
    color_set: tuple[tuple[float, float, float], ...] = DEFAULT_COLORS
    seed: int = 0
    interpolate: bool = True
    shift: bool = True
    batch_size: int = 32

    def validate(self) -> "RunConfig":
        if self.num_masks < 1:
            raise ConfigError(f"num_masks must be >= 1, got {self.num_masks}")
        # p_mask = 0 or 1 would divide by zero in the estimator weights
        if not 0.0 < self.p_mask < 1.0:
            raise ConfigError(f"p_mask must lie strictly in (0, 1), got {self.p_mask}")
        h, w = self.cell_grid
        if h < 1 or w < 1:
            raise ConfigError(f"cell_grid sides must be >= 1, got {self.cell_grid}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {type(self.seed).__name__}")
        for color in self.color_set:
            if len(color) != 3 or any(not 0.0 <= c <= 1.0 for c in color):
                raise ConfigError(f"color {color} is not an RGB triple in [0, 1]")
        if len(set(self.color_set)) != len(self.color_set):
            raise ConfigError("color_set entries must be distinct")
        return self

    @property
    def num_colors(self) -> int:
        return len(self.color_set)

    def check_fits(self, height: int, width: int) -> None:
        h, w = self.cell_grid
        if h > height or w > width:
            raise ConfigError(
                f"cell grid {self.cell_grid} exceeds image size {(height, width)}"
            )


@dataclass
class ColorMaskSample:
    """One color perturbation: K soft channels plus the non-masked map."""

    channels: np.ndarray  # (K, H, W) in [0, 1]
    nonmasked: np.ndarray  # (H, W) in [0, 1]


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Independent per-sample generator: Philox keyed by (seed, index)."""
    seq = np.random.SeedSequence(entropy=seed & _UINT64_MASK, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(seq))


def sample_binary_lowres(cfg: RunConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw the h x w cell grid; a cell is 1 (retained) with probability p_mask."""
    h, w = cfg.cell_grid
    return (rng.random(h * w) < cfg.p_mask).astype(np.float64).reshape(h, w)


def _color_states(cfg: RunConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw n cell states: 0 = unmasked, k in 1..K = masked with color k.

    Always consumes one uniform and one color index per cell so the draw
    count is outcome-independent.
    """
    masked = rng.random(n) < cfg.p_mask
    colors = rng.integers(0, cfg.num_colors, size=n)
    return np.where(masked, colors + 1, 0)


def _states_to_channels(states: np.ndarray, num_colors: int) -> np.ndarray:
    """One-hot encode states (0 = no channel set) as (K, ...) float planes."""
    return np.stack(
        [(states == k + 1).astype(np.float64) for k in range(num_colors)], axis=0
    )


def sample_color_lowres(cfg: RunConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw the low-res color mask as K binary channels of shape (h, w)."""
    if cfg.num_colors < 1:
        raise ConfigError("color mask sampling needs a non-empty color_set")
    h, w = cfg.cell_grid
    states = _color_states(cfg, rng, h * w).reshape(h, w)
    return _states_to_channels(states, cfg.num_colors)


def upsample_and_shift(
    lowres: np.ndarray,
    height: int,
    width: int,
    rng: np.random.Generator,
    cfg: RunConfig,
    kind: str = "binary",
) -> np.ndarray:
    """Upsample (C, h, w) channels to (C, H, W), honoring cfg flags.

    With shift enabled the grid is padded by one freshly drawn row/column
    (same per-cell distribution, shared across channels), resized to
    (H + H//h, W + W//w) and cropped at a random offset in
    [0, H//h) x [0, W//w); all channels share the offset.  Interpolation
    picks bilinear vs nearest-neighbor resizing.
    """
    if kind not in ("binary", "color"):
        raise ValueError(f"unknown mask kind {kind!r}")
    lr = np.asarray(lowres, dtype=np.float64)
    if lr.ndim == 2:
        lr = lr[None]
    channels, h, w = lr.shape
    if h > height or w > width:
        raise ConfigError(f"cell grid {(h, w)} exceeds target size {(height, width)}")
    resize = bilinear_resize if cfg.interpolate else nearest_resize
    if not cfg.shift:
        out = np.stack([resize(lr[c], height, width) for c in range(channels)])
        return np.clip(out, 0.0, 1.0)

    cell_h, cell_w = height // h, width // w
    padded = np.zeros((channels, h + 1, w + 1))
    padded[:, :h, :w] = lr
    n_pad = h + w + 1
    if kind == "binary":
        pad = (rng.random(n_pad) < cfg.p_mask).astype(np.float64)[None, :]
    else:
        pad = _states_to_channels(_color_states(cfg, rng, n_pad), channels)
    padded[:, :h, w] = pad[:, :h]  # right column, top to bottom
    padded[:, h, :] = pad[:, h:]  # bottom row, left to right (corner last)

    big_h, big_w = height + cell_h, width + cell_w
    off_y = int(rng.integers(0, cell_h))
    off_x = int(rng.integers(0, cell_w))
    out = np.stack(
        [
            resize(padded[c], big_h, big_w)[off_y : off_y + height, off_x : off_x + width]
            for c in range(channels)
        ]
    )
    return np.clip(out, 0.0, 1.0)


def nonmasked_map(channels: np.ndarray) -> np.ndarray:
    """m0 = 1 - sum of color channels, clamped to [0, 1]."""
    total = np.asarray(channels, dtype=np.float64).sum(axis=0)
    if total.max(initial=0.0) > 1.0 + CHANNEL_SUM_TOL:
        raise ValueError(
            f"color channels sum to {total.max():.12f} > 1 at some pixel"
        )
    return np.clip(1.0 - total, 0.0, 1.0)


def binary_mask(cfg: RunConfig, height: int, width: int, index: int) -> np.ndarray:
    """Full-resolution binary-mode mask for one sample index."""
    rng = sample_stream(cfg.seed, index)
    lowres = sample_binary_lowres(cfg, rng)
    return upsample_and_shift(lowres, height, width, rng, cfg, kind="binary")[0]


def color_mask(cfg: RunConfig, height: int, width: int, index: int) -> ColorMaskSample:
    """Full-resolution color mask sample for one sample index."""
    rng = sample_stream(cfg.seed, index)
    lowres = sample_color_lowres(cfg, rng)
    channels = upsample_and_shift(lowres, height, width, rng, cfg, kind="color")
    return ColorMaskSample(channels=channels, nonmasked=nonmasked_map(channels))


def apply_binary_mask(image: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-pixel multiply; mask value 0 blacks the pixel out."""
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {image.shape[:2]}")
    return image * mask[:, :, None]


def apply_color_mask(
    image: np.ndarray, sample: ColorMaskSample, colors
) -> np.ndarray:
    """Alpha-blend masking colors into the image: i*m0 + sum_k c_k*m_k."""
    channels = sample.channels
    if channels.shape[0] != len(colors):
        raise ValueError(
            f"sample has {channels.shape[0]} channels but {len(colors)} colors given"
        )
    if channels.shape[1:] != image.shape[:2]:
        raise ValueError(
            f"mask shape {channels.shape[1:]} does not match image {image.shape[:2]}"
        )
    out = image * sample.nonmasked[:, :, None]
    palette = np.asarray(colors, dtype=np.float64)
    out += np.einsum("khw,kc->hwc", channels, palette)
    return np.clip(out, 0.0, 1.0)


def dump_sample(directory, index: int, channels: np.ndarray, nonmasked=None) -> Path:
    """Debug dump: channels (+ m0 last, when given) as mask_{index:06}.bin."""
    path = Path(directory) / f"mask_{index:06d}.bin"
    arr = np.asarray(channels, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if nonmasked is not None:
        arr = np.concatenate([arr, np.asarray(nonmasked)[None]], axis=0)
    write_grid_bin(arr, path)
    return path
