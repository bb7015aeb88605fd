"""Monte-Carlo saliency estimators.

Three single-pass estimators over a shared, seeded mask stream:

  rise      S(x)    = mean_n[ m_n(x)/p * M(i*m_n, l) ]
  debiased  S_pn(x) = mean_n[ (m_n(x)-p)/(p(1-p)) * M(i*m_n, l) ]
  mcrise    S_mc(x,k): raw_k += K*mc_n(x,k)/p * M(i'_n, l) and
                       base  += m0_n(x)/(1-p) * M(i'_n, l) accumulated
                       separately, then (raw_k - base)/N.

All labels of a run are accumulated from one mask sequence, weights use the
nominal p from the config (soft interpolated mask values enter unchanged),
and accumulation is performed sample-by-sample in index order inside fixed
batches, so results never depend on batch boundaries and multi-worker runs
reduce partial sums in batch order.  Accumulators are float64.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import TransportError
from .maskgen import (
    RunConfig,
    apply_color_mask,
    binary_mask,
    color_mask,
    dump_sample,
)

KIND_IRRELEVANT = 0
KIND_TEXTURE_OBSTACLE = 1
KIND_TEXTURE_FEATURE = 2
KIND_PER_COLOR = 3

TAG_COLOR_MATCH = 0
TAG_MISSING_COLOR = 1
TAG_COLOR_FEATURE = -1

KIND_NAMES = {
    KIND_IRRELEVANT: "irrelevant",
    KIND_TEXTURE_OBSTACLE: "texture_obstacle",
    KIND_TEXTURE_FEATURE: "texture_feature",
    KIND_PER_COLOR: "per_color",
}
TAG_NAMES = {
    TAG_COLOR_MATCH: "color_match",
    TAG_MISSING_COLOR: "missing_color",
    TAG_COLOR_FEATURE: "color_feature",
}


@dataclass
class SaliencyMap:
    grid: np.ndarray  # (H, W) signed values
    label: str
    kind: str  # "rise" | "debiased"
    n_samples: int = 0
    stderr: np.ndarray | None = None


@dataclass
class ColorSaliencyStack:
    channels: np.ndarray  # (K, H, W) signed values, ordered as color_set
    label: str
    color_set: tuple
    n_samples: int = 0
    stderr: np.ndarray | None = None


@dataclass
class ColorResponseMap:
    """Per-pixel interpretation of a color saliency stack at threshold eps."""

    kinds: np.ndarray  # (H, W) codes from KIND_NAMES
    color_tags: np.ndarray  # (K, H, W) codes from TAG_NAMES, valid where per_color
    epsilon: float


def _batch_ranges(total: int, size: int):
    return [(start, min(start + size, total)) for start in range(0, total, size)]


def _score(scorer, images, labels, start, stop) -> np.ndarray:
    try:
        scores = np.asarray(scorer.score_batch(images, labels), dtype=np.float64)
    except Exception as exc:
        message = f"scoring samples [{start}, {stop}) failed: {exc}"
        try:
            wrapped = type(exc)(message)
        except Exception:
            wrapped = TransportError(message)
        raise wrapped from exc
    if scores.shape != (stop - start, len(labels)):
        raise ValueError(
            f"scorer returned shape {scores.shape} for samples [{start}, {stop}), "
            f"expected {(stop - start, len(labels))}"
        )
    if not np.isfinite(scores).all():
        raise ValueError(f"non-finite score among samples [{start}, {stop})")
    return scores


def _run_batches(make_acc, accumulate_into, ranges, workers: int):
    """Single worker: one accumulator, strict sample order (results do not
    depend on batch boundaries).  Multi-worker: per-batch partial
    accumulators reduced in batch-index order (reproducible; matches the
    single-worker result up to float reduction order)."""
    if workers <= 1:
        acc = make_acc()
        for batch in ranges:
            accumulate_into(batch, acc)
        return acc

    def task(batch):
        acc = make_acc()
        accumulate_into(batch, acc)
        return acc

    with ThreadPoolExecutor(max_workers=workers) as pool:
        partials = list(pool.map(task, ranges))
    total = partials[0]
    for part in partials[1:]:
        for target, update in zip(total, part):
            if target is not None:
                target += update
    return total


def _binary_run(scorer, image, labels, cfg: RunConfig, weight_of, workers,
                with_stderr, dump_dir):
    cfg.validate()
    height, width = image.shape[:2]
    cfg.check_fits(height, width)
    n_labels = len(labels)

    def make_acc():
        sq = np.zeros((n_labels, height, width)) if with_stderr else None
        return [np.zeros((n_labels, height, width)), sq]

    def accumulate_into(batch, acc):
        start, stop = batch
        masks = np.empty((stop - start, height, width))
        for offset, index in enumerate(range(start, stop)):
            masks[offset] = binary_mask(cfg, height, width, index)
            if dump_dir is not None:
                dump_sample(dump_dir, index, masks[offset])
        scores = _score(scorer, image[None] * masks[..., None], labels, start, stop)
        weights = weight_of(masks)
        total, sq = acc
        for offset in range(stop - start):
            contrib = scores[offset][:, None, None] * weights[offset][None]
            total += contrib
            if sq is not None:
                sq += contrib * contrib

    acc, sq = _run_batches(make_acc, accumulate_into,
                           _batch_ranges(cfg.num_masks, cfg.batch_size), workers)
    return acc / cfg.num_masks, _stderr_from(sq, acc, cfg.num_masks)


def _stderr_from(sq, acc, n):
    if sq is None:
        return None
    mean = acc / n
    variance = np.maximum(sq / n - mean * mean, 0.0)
    return np.sqrt(variance / n)


def rise_saliency(scorer, image, labels, cfg: RunConfig, *, workers: int = 1,
                  with_stderr: bool = False, dump_dir=None) -> list[SaliencyMap]:
    """Positional saliency, one map per label (values >= 0)."""
    p = cfg.p_mask
    grids, errs = _binary_run(scorer, image, labels, cfg, lambda m: m / p,
                              workers, with_stderr, dump_dir)
    return [
        SaliencyMap(grid=grids[i], label=label, kind="rise", n_samples=cfg.num_masks,
                    stderr=None if errs is None else errs[i])
        for i, label in enumerate(labels)
    ]


def debiased_saliency(scorer, image, labels, cfg: RunConfig, *, workers: int = 1,
                      with_stderr: bool = False, dump_dir=None) -> list[SaliencyMap]:
    """Signed saliency with the masked-branch expectation subtracted."""
    p = cfg.p_mask
    scale = p * (1.0 - p)
    grids, errs = _binary_run(scorer, image, labels, cfg,
                              lambda m: (m - p) / scale, workers, with_stderr,
                              dump_dir)
    return [
        SaliencyMap(grid=grids[i], label=label, kind="debiased",
                    n_samples=cfg.num_masks,
                    stderr=None if errs is None else errs[i])
        for i, label in enumerate(labels)
    ]


def mcrise_saliency(scorer, image, labels, cfg: RunConfig, *, workers: int = 1,
                    with_stderr: bool = False, dump_dir=None) -> list[ColorSaliencyStack]:
    """Per-color saliency stack, one per label.

    Raw (masked-with-color-k) and baseline (non-masked) branches are
    accumulated separately over the same samples and differenced at the end.
    """
    cfg.validate()
    if cfg.num_colors < 1:
        raise ValueError("mcrise_saliency needs a non-empty color_set")
    height, width = image.shape[:2]
    cfg.check_fits(height, width)
    n_labels, n_colors = len(labels), cfg.num_colors
    raw_scale = n_colors / cfg.p_mask
    base_scale = 1.0 / (1.0 - cfg.p_mask)

    def make_acc():
        sq = np.zeros((n_labels, n_colors, height, width)) if with_stderr else None
        return [
            np.zeros((n_labels, n_colors, height, width)),
            np.zeros((n_labels, height, width)),
            sq,
        ]

    def accumulate_into(batch, acc):
        start, stop = batch
        samples = []
        masked = np.empty((stop - start, height, width, 3))
        for offset, index in enumerate(range(start, stop)):
            sample = color_mask(cfg, height, width, index)
            samples.append(sample)
            masked[offset] = apply_color_mask(image, sample, cfg.color_set)
            if dump_dir is not None:
                dump_sample(dump_dir, index, sample.channels, sample.nonmasked)
        scores = _score(scorer, masked, labels, start, stop)
        raw, base, sq = acc
        for offset, sample in enumerate(samples):
            s = scores[offset]
            raw_w = raw_scale * sample.channels
            base_w = base_scale * sample.nonmasked
            raw += s[:, None, None, None] * raw_w[None]
            base += s[:, None, None] * base_w[None]
            if sq is not None:
                diff = s[:, None, None, None] * (raw_w - base_w[None])[None]
                sq += diff * diff

    raw, base, sq = _run_batches(
        make_acc, accumulate_into, _batch_ranges(cfg.num_masks, cfg.batch_size), workers
    )
    stacks = (raw - base[:, None]) / cfg.num_masks
    errs = _stderr_from(sq, raw - base[:, None], cfg.num_masks)
    return [
        ColorSaliencyStack(channels=stacks[i], label=label, color_set=cfg.color_set,
                           n_samples=cfg.num_masks,
                           stderr=None if errs is None else errs[i])
        for i, label in enumerate(labels)
    ]


# ---------------------------------------------------------------------------
# Interpretation of color stacks


def default_epsilon(channels: np.ndarray) -> float:
    """Relative threshold: 10% of the stack's peak magnitude."""
    peak = float(np.abs(channels).max())
    return 0.1 * peak if peak > 0 else 1e-12


def classify_color_response(stack: ColorSaliencyStack,
                            epsilon: float | None = None) -> ColorResponseMap:
    """Assign each pixel a response category from its K channel values.

    All channels > eps: masking with any color helps, so the original
    texture is an obstacle; all < -eps: the texture is a feature; all
    within [-eps, eps]: irrelevant.  Otherwise each color k is tagged
    individually: > eps missing_color, < -eps color_feature, else
    color_match.
    """
    channels = np.asarray(stack.channels, dtype=np.float64)
    if not np.isfinite(channels).all():
        raise ValueError("saliency stack contains non-finite values")
    if epsilon is None:
        epsilon = default_epsilon(channels)
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")

    positive = channels > epsilon
    negative = channels < -epsilon
    small = ~positive & ~negative

    kinds = np.full(channels.shape[1:], KIND_PER_COLOR, dtype=np.uint8)
    kinds[positive.all(axis=0)] = KIND_TEXTURE_OBSTACLE
    kinds[negative.all(axis=0)] = KIND_TEXTURE_FEATURE
    kinds[small.all(axis=0)] = KIND_IRRELEVANT

    tags = np.zeros(channels.shape, dtype=np.int8)
    tags[positive] = TAG_MISSING_COLOR
    tags[negative] = TAG_COLOR_FEATURE
    return ColorResponseMap(kinds=kinds, color_tags=tags, epsilon=float(epsilon))


# ---------------------------------------------------------------------------
# Artifact serialization (JSON forms; binary grids live in imaging)


def saliency_to_json_dict(m: SaliencyMap) -> dict:
    return {
        "schema": "mcrise/saliency-v1",
        "kind": m.kind,
        "label": m.label,
        "height": int(m.grid.shape[0]),
        "width": int(m.grid.shape[1]),
        "n_samples": int(m.n_samples),
        "data": m.grid.tolist(),
    }


def saliency_from_json_dict(payload: dict) -> SaliencyMap:
    grid = np.asarray(payload["data"], dtype=np.float64)
    if grid.shape != (payload["height"], payload["width"]):
        raise ValueError("saliency data shape disagrees with declared size")
    return SaliencyMap(grid=grid, label=payload["label"], kind=payload["kind"],
                       n_samples=int(payload.get("n_samples", 0)))


def stack_to_json_dict(s: ColorSaliencyStack) -> dict:
    return {
        "schema": "mcrise/stack-v1",
        "kind": "mcrise",
        "label": s.label,
        "height": int(s.channels.shape[1]),
        "width": int(s.channels.shape[2]),
        "channels": int(s.channels.shape[0]),
        "colors": [list(c) for c in s.color_set],
        "n_samples": int(s.n_samples),
        "data": s.channels.tolist(),
    }


def stack_from_json_dict(payload: dict) -> ColorSaliencyStack:
    channels = np.asarray(payload["data"], dtype=np.float64)
    expected = (payload["channels"], payload["height"], payload["width"])
    if channels.shape != expected:
        raise ValueError("stack data shape disagrees with declared size")
    return ColorSaliencyStack(
        channels=channels,
        label=payload["label"],
        color_set=tuple(tuple(c) for c in payload["colors"]),
        n_samples=int(payload.get("n_samples", 0)),
    )


def response_map_to_json_dict(r: ColorResponseMap) -> dict:
    return {
        "schema": "mcrise/response-v1",
        "epsilon": r.epsilon,
        "kind_legend": {str(k): v for k, v in KIND_NAMES.items()},
        "tag_legend": {str(k): v for k, v in TAG_NAMES.items()},
        "kinds": r.kinds.tolist(),
        "color_tags": r.color_tags.tolist(),
    }
