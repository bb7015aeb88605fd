"""Exhaustive-enumeration reference saliency on small cell grids.

Interpolation and shift are disabled: each enumerated low-res mask is
nearest-neighbor upsampled, applied to the image and scored, and the exact
expectations behind the Monte-Carlo estimators are computed by summing over
every mask.  Enumeration is lexicographic over cell states in row-major
cell order with cell (0, 0) as the least-significant digit: binary mask n
has cell j equal to bit j of n; color state n has cell j equal to digit j
of n in base K+1 (0 = unmasked, k = masked with color k).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import nearest_resize
from .maskgen import nonmasked_map

MAX_BINARY_CELLS = 16
MAX_COLOR_STATES = 1 << 20
_CHUNK = 512


@dataclass(frozen=True)
class OracleConfig:
    cell_grid: tuple[int, int]
    p_mask: float
    color_set: tuple[tuple[float, float, float], ...] = ()

    def validate_binary(self) -> None:
        h, w = self.cell_grid
        if h < 1 or w < 1:
            raise ValueError(f"cell_grid sides must be >= 1, got {self.cell_grid}")
        if not 0.0 < self.p_mask < 1.0:
            raise ValueError(f"p_mask must lie strictly in (0, 1), got {self.p_mask}")
        if h * w > MAX_BINARY_CELLS:
            raise ValueError(
                f"binary enumeration of {h}x{w} cells exceeds {MAX_BINARY_CELLS}"
            )

    def validate_color(self) -> None:
        h, w = self.cell_grid
        if h < 1 or w < 1:
            raise ValueError(f"cell_grid sides must be >= 1, got {self.cell_grid}")
        if not 0.0 < self.p_mask < 1.0:
            raise ValueError(f"p_mask must lie strictly in (0, 1), got {self.p_mask}")
        if len(self.color_set) < 1:
            raise ValueError("color mode needs a non-empty color_set")
        if (len(self.color_set) + 1) ** (h * w) > MAX_COLOR_STATES:
            raise ValueError(
                f"color enumeration (K+1)^(h*w) exceeds {MAX_COLOR_STATES}"
            )


def _binary_masks(n_cells: int) -> np.ndarray:
    """(2^n, n) array; mask m, cell j = bit j of m."""
    indices = np.arange(1 << n_cells, dtype=np.uint32)
    return ((indices[:, None] >> np.arange(n_cells)) & 1).astype(np.float64)


def _color_states_table(n_cells: int, n_colors: int) -> np.ndarray:
    """((K+1)^n, n) array of states in {0..K}; cell j = digit j base K+1."""
    count = (n_colors + 1) ** n_cells
    indices = np.arange(count, dtype=np.int64)
    digits = np.empty((count, n_cells), dtype=np.int64)
    for j in range(n_cells):
        digits[:, j] = indices % (n_colors + 1)
        indices = indices // (n_colors + 1)
    return digits


def _score_masked(scorer, image, label, cell_masks, ocfg) -> np.ndarray:
    """Scores for every enumerated binary mask (chunked batches)."""
    h, w = ocfg.cell_grid
    height, width = image.shape[:2]
    scores = np.empty(cell_masks.shape[0])
    for start in range(0, cell_masks.shape[0], _CHUNK):
        chunk = cell_masks[start : start + _CHUNK]
        batch = np.empty((chunk.shape[0], height, width, 3))
        for i, cells in enumerate(chunk):
            full = nearest_resize(cells.reshape(h, w), height, width)
            batch[i] = image * full[:, :, None]
        scores[start : start + chunk.shape[0]] = np.asarray(
            scorer.score_batch(batch, [label]), dtype=np.float64
        )[:, 0]
    if not np.isfinite(scores).all():
        raise ValueError("scorer produced non-finite values during enumeration")
    return scores


def _score_color_masked(scorer, image, label, states, ocfg) -> np.ndarray:
    h, w = ocfg.cell_grid
    height, width = image.shape[:2]
    palette = np.asarray(ocfg.color_set, dtype=np.float64)
    n_colors = palette.shape[0]
    scores = np.empty(states.shape[0])
    for start in range(0, states.shape[0], _CHUNK):
        chunk = states[start : start + _CHUNK]
        batch = np.empty((chunk.shape[0], height, width, 3))
        for i, cells in enumerate(chunk):
            grid = cells.reshape(h, w)
            channels = np.stack(
                [
                    nearest_resize((grid == k + 1).astype(np.float64), height, width)
                    for k in range(n_colors)
                ]
            )
            m0 = nonmasked_map(channels)
            batch[i] = np.clip(
                image * m0[:, :, None] + np.einsum("khw,kc->hwc", channels, palette),
                0.0,
                1.0,
            )
        scores[start : start + chunk.shape[0]] = np.asarray(
            scorer.score_batch(batch, [label]), dtype=np.float64
        )[:, 0]
    if not np.isfinite(scores).all():
        raise ValueError("scorer produced non-finite values during enumeration")
    return scores


def _binary_probs(cell_masks: np.ndarray, p: float) -> np.ndarray:
    ones = cell_masks.sum(axis=1)
    return p**ones * (1.0 - p) ** (cell_masks.shape[1] - ones)


def exact_rise(scorer, image, label, ocfg: OracleConfig) -> np.ndarray:
    """Exact expectation of the confidence over masks retaining each cell."""
    ocfg.validate_binary()
    h, w = ocfg.cell_grid
    masks = _binary_masks(h * w)
    probs = _binary_probs(masks, ocfg.p_mask)
    scores = _score_masked(scorer, image, label, masks, ocfg)
    weighted = (scores * probs) @ masks  # sum_m M * m(cell) * P[m]
    return (weighted / ocfg.p_mask).reshape(h, w)


def exact_debiased(scorer, image, label, ocfg: OracleConfig) -> np.ndarray:
    """Weighted-sum form: sum_m (m(cell)-p)/(p(1-p)) * M * P[m]."""
    ocfg.validate_binary()
    h, w = ocfg.cell_grid
    p = ocfg.p_mask
    masks = _binary_masks(h * w)
    probs = _binary_probs(masks, p)
    scores = _score_masked(scorer, image, label, masks, ocfg)
    weighted = (scores * probs) @ ((masks - p) / (p * (1.0 - p)))
    return weighted.reshape(h, w)


def exact_debiased_conditional(scorer, image, label, ocfg: OracleConfig) -> np.ndarray:
    """Independent two-conditional-expectation form of the debiased map."""
    ocfg.validate_binary()
    h, w = ocfg.cell_grid
    p = ocfg.p_mask
    masks = _binary_masks(h * w)
    probs = _binary_probs(masks, p)
    scores = _score_masked(scorer, image, label, masks, ocfg)
    kept = (scores * probs) @ masks / p
    dropped = (scores * probs) @ (1.0 - masks) / (1.0 - p)
    return (kept - dropped).reshape(h, w)


def exact_mcrise(scorer, image, label, ocfg: OracleConfig) -> np.ndarray:
    """Difference of the two conditional expectations, per cell and color."""
    ocfg.validate_color()
    h, w = ocfg.cell_grid
    n_colors = len(ocfg.color_set)
    p = ocfg.p_mask
    states = _color_states_table(h * w, n_colors)
    probs = np.where(states > 0, p / n_colors, 1.0 - p).prod(axis=1)
    scores = _score_color_masked(scorer, image, label, states, ocfg)
    weighted = scores * probs
    out = np.empty((n_colors, h * w))
    unmasked = weighted @ (states == 0) / (1.0 - p)
    for k in range(n_colors):
        masked_k = weighted @ (states == k + 1) / (p / n_colors)
        out[k] = masked_k - unmasked
    return out.reshape(n_colors, h, w)


def exact_mcrise_weighted(scorer, image, label, ocfg: OracleConfig) -> np.ndarray:
    """Independent single-weighted-sum form of the color saliency stack."""
    ocfg.validate_color()
    h, w = ocfg.cell_grid
    n_colors = len(ocfg.color_set)
    p = ocfg.p_mask
    states = _color_states_table(h * w, n_colors)
    probs = np.where(states > 0, p / n_colors, 1.0 - p).prod(axis=1)
    scores = _score_color_masked(scorer, image, label, states, ocfg)
    out = np.empty((n_colors, h * w))
    base_term = (states == 0) / (1.0 - p)
    for k in range(n_colors):
        weights = (states == k + 1) / (p / n_colors) - base_term
        out[k] = (scores * probs) @ weights
    return out.reshape(n_colors, h, w)
