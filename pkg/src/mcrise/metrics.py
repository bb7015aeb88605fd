"""Deletion-style evaluation of saliency output.

A deletion curve removes pixels from the image in a ranked order (most
important first), re-scores the model after each batch of removals, and
reports the area under the confidence-vs-fraction plot (lower = better
localization).  Plain deletion fills removed pixels with black; the
color-aware variant ranks pixels by their most confidence-damaging color
channel and fills each removed pixel with that color.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import ColorSaliencyStack


@dataclass
class DeletionCurve:
    fractions: np.ndarray  # strictly increasing, 0 .. 1
    confidences: np.ndarray
    auc: float


def trapezoid_auc(fractions, confidences) -> float:
    f = np.asarray(fractions, dtype=np.float64)
    c = np.asarray(confidences, dtype=np.float64)
    if f.size < 2:
        raise ValueError("need at least two curve points for an AUC")
    return float(0.5 * np.sum((f[1:] - f[:-1]) * (c[1:] + c[:-1])))


def auc(curve: DeletionCurve) -> float:
    return trapezoid_auc(curve.fractions, curve.confidences)


def saliency_order(grid) -> np.ndarray:
    """Flat pixel indices, most salient first; ties break row-major."""
    g = np.asarray(grid, dtype=np.float64)
    return np.argsort(-g.ravel(), kind="stable")


def random_order(height: int, width: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return rng.permutation(height * width)


def _removal_counts(total: int, steps: int) -> np.ndarray:
    """Cumulative removal counts 0 .. total in `steps` equal batches.

    Counts are floor(j * total / steps), so coarser step grids subsample
    the finer ones exactly at shared fractions.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    counts = (np.arange(steps + 1, dtype=np.int64) * total) // steps
    return np.unique(counts)


def deletion_curve(scorer, image, label, order, steps: int = 100,
                   fill=(0.0, 0.0, 0.0), batch_size: int = 32) -> DeletionCurve:
    """Score the image while removing pixels in `order`, `steps` batches.

    `order` must be a permutation of all flat pixel indices.  `fill` is a
    single RGB triple or a per-pixel (H*W, 3) array indexed by flat pixel.
    """
    height, width = image.shape[:2]
    total = height * width
    order = np.asarray(order)
    if order.shape != (total,) or not np.array_equal(np.sort(order), np.arange(total)):
        raise ValueError("order must be a permutation of all pixel indices")
    fill = np.asarray(fill, dtype=np.float64)
    per_pixel = fill.ndim == 2
    if per_pixel and fill.shape != (total, 3):
        raise ValueError(f"per-pixel fill must be ({total}, 3), got {fill.shape}")

    counts = _removal_counts(total, steps)
    flat = image.reshape(total, 3).copy()
    snapshots = np.empty((counts.size, height, width, 3))
    previous = 0
    for i, count in enumerate(counts):
        removed = order[previous:count]
        flat[removed] = fill[removed] if per_pixel else fill
        snapshots[i] = flat.reshape(height, width, 3)
        previous = count

    confidences = np.empty(counts.size)
    for start in range(0, counts.size, batch_size):
        chunk = snapshots[start : start + batch_size]
        scores = np.asarray(scorer.score_batch(chunk, [label]), dtype=np.float64)
        confidences[start : start + chunk.shape[0]] = scores[:, 0]
    if not np.isfinite(confidences).all():
        raise ValueError("scorer produced non-finite confidences")
    if confidences.min() < 0.0 or confidences.max() > 1.0:
        raise ValueError("scorer produced confidences outside [0, 1]")

    fractions = counts / total
    return DeletionCurve(fractions=fractions, confidences=confidences,
                         auc=trapezoid_auc(fractions, confidences))


def ca_deletion_order(stack: ColorSaliencyStack) -> tuple[np.ndarray, np.ndarray]:
    """Removal order and per-pixel fill colors for color-aware deletion.

    Pixels are removed in ascending min over colors of the stack (row-major
    tie-break); each pixel is filled with its argmin color (lowest color
    index on ties).
    """
    channels = np.asarray(stack.channels, dtype=np.float64)
    min_values = channels.min(axis=0)
    order = np.argsort(min_values.ravel(), kind="stable")
    palette = np.asarray(stack.color_set, dtype=np.float64)
    fill = palette[channels.argmin(axis=0).ravel()]
    return order, fill


def ca_deletion(scorer, image, label, stack: ColorSaliencyStack, steps: int = 100,
                batch_size: int = 32) -> DeletionCurve:
    if stack.channels.shape[1:] != image.shape[:2]:
        raise ValueError(
            f"stack size {stack.channels.shape[1:]} does not match image "
            f"{image.shape[:2]}"
        )
    order, fill = ca_deletion_order(stack)
    return deletion_curve(scorer, image, label, order, steps=steps, fill=fill,
                          batch_size=batch_size)


def curve_to_csv(curve: DeletionCurve) -> str:
    lines = ["fraction,confidence"]
    lines += [
        f"{float(f)!r},{float(c)!r}"
        for f, c in zip(curve.fractions, curve.confidences)
    ]
    return "\n".join(lines) + "\n"


def curve_to_json_dict(curve: DeletionCurve) -> dict:
    return {
        "schema": "mcrise/curve-v1",
        "auc": curve.auc,
        "fractions": curve.fractions.tolist(),
        "confidences": curve.confidences.tolist(),
    }
