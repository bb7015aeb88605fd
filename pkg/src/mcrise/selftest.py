"""Built-in property suite: estimators vs exhaustive oracles.

Runs quickly on tiny grids with in-process synthetic scorers; used by the
`selftest` CLI subcommand and by the test suite's negative control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import estimators, oracle
from .maskgen import RunConfig, binary_mask, color_mask
from .modelio import (
    ConstantSpec,
    IgnorePixelSpec,
    PixelLinearSpec,
    SyntheticScorer,
)


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str


_IMAGE = np.stack(
    [
        np.linspace(0.2, 0.9, 4).reshape(2, 2),
        np.linspace(0.8, 0.1, 4).reshape(2, 2),
        np.full((2, 2), 0.5),
    ],
    axis=-1,
)
_WEIGHTS = (np.arange(12, dtype=np.float64) + 1).reshape(2, 2, 3) / 100.0
_LABEL = "target"


def _estimator_cfg(num_masks: int, colors=()) -> RunConfig:
    return RunConfig(
        num_masks=num_masks,
        p_mask=0.5,
        cell_grid=(2, 2),
        color_set=tuple(colors),
        seed=7,
        interpolate=False,
        shift=False,
        batch_size=512,
    )


def _oracle_cfg(colors=()) -> oracle.OracleConfig:
    return oracle.OracleConfig(cell_grid=(2, 2), p_mask=0.5, color_set=tuple(colors))


def _within_stderr(estimate, exact, stderr, sigmas=4.0):
    tol = sigmas * np.maximum(stderr, 1e-12)
    gap = np.abs(estimate - exact)
    return bool((gap <= tol).all()), float((gap / tol).max())


def check_rise_matches_oracle(num_masks: int, tamper: bool = False) -> PropertyResult:
    scorer = SyntheticScorer(PixelLinearSpec(weights=_WEIGHTS))
    (estimate,) = estimators.rise_saliency(
        scorer, _IMAGE, [_LABEL], _estimator_cfg(num_masks), with_stderr=True
    )
    # the tamper hook corrupts the accumulated map well beyond any
    # statistically plausible deviation; the suite must catch it
    grid = estimate.grid + (0.05 if tamper else 0.0)
    exact = oracle.exact_rise(scorer, _IMAGE, _LABEL, _oracle_cfg())
    ok, worst = _within_stderr(grid, exact, estimate.stderr)
    return PropertyResult("rise_matches_oracle", ok, f"max |err|/4se = {worst:.3f}")


def check_debiased_matches_oracle(num_masks: int) -> PropertyResult:
    scorer = SyntheticScorer(PixelLinearSpec(weights=_WEIGHTS))
    (estimate,) = estimators.debiased_saliency(
        scorer, _IMAGE, [_LABEL], _estimator_cfg(num_masks), with_stderr=True
    )
    exact = oracle.exact_debiased(scorer, _IMAGE, _LABEL, _oracle_cfg())
    ok, worst = _within_stderr(estimate.grid, exact, estimate.stderr)
    return PropertyResult("debiased_matches_oracle", ok, f"max |err|/4se = {worst:.3f}")


def check_mcrise_matches_oracle(num_masks: int) -> PropertyResult:
    colors = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    scorer = SyntheticScorer(PixelLinearSpec(weights=_WEIGHTS))
    (estimate,) = estimators.mcrise_saliency(
        scorer, _IMAGE, [_LABEL], _estimator_cfg(num_masks, colors), with_stderr=True
    )
    exact = oracle.exact_mcrise(scorer, _IMAGE, _LABEL, _oracle_cfg(colors))
    ok, worst = _within_stderr(estimate.channels, exact, estimate.stderr)
    return PropertyResult("mcrise_matches_oracle", ok, f"max |err|/4se = {worst:.3f}")


def check_ignored_cells_score_zero() -> PropertyResult:
    ignored = ((0, 1), (1, 0))
    scorer = SyntheticScorer(
        IgnorePixelSpec(base=PixelLinearSpec(weights=_WEIGHTS), pixels=ignored)
    )
    exact = oracle.exact_debiased(scorer, _IMAGE, _LABEL, _oracle_cfg())
    ignored_vals = [abs(exact[y, x]) for y, x in ignored]
    kept_vals = [abs(exact[y, x]) for y, x in ((0, 0), (1, 1))]
    ok = max(ignored_vals) <= 1e-12 and max(kept_vals) > 0.01
    return PropertyResult(
        "ignored_cells_score_zero",
        ok,
        f"ignored max = {max(ignored_vals):.2e}, kept max = {max(kept_vals):.4f}",
    )


def check_constant_scorer_nullity() -> PropertyResult:
    scorer = SyntheticScorer(ConstantSpec(value=0.42))
    colors = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    debiased = oracle.exact_debiased(scorer, _IMAGE, _LABEL, _oracle_cfg())
    stack = oracle.exact_mcrise(scorer, _IMAGE, _LABEL, _oracle_cfg(colors))
    worst = max(np.abs(debiased).max(), np.abs(stack).max())
    return PropertyResult("constant_scorer_nullity", worst <= 1e-12,
                          f"max |value| = {worst:.2e}")


def check_conditional_equals_weighted() -> PropertyResult:
    colors = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    scorer = SyntheticScorer(PixelLinearSpec(weights=_WEIGHTS))
    gap_binary = np.abs(
        oracle.exact_debiased(scorer, _IMAGE, _LABEL, _oracle_cfg())
        - oracle.exact_debiased_conditional(scorer, _IMAGE, _LABEL, _oracle_cfg())
    ).max()
    gap_color = np.abs(
        oracle.exact_mcrise(scorer, _IMAGE, _LABEL, _oracle_cfg(colors))
        - oracle.exact_mcrise_weighted(scorer, _IMAGE, _LABEL, _oracle_cfg(colors))
    ).max()
    worst = max(gap_binary, gap_color)
    return PropertyResult("conditional_equals_weighted", worst <= 1e-12,
                          f"max gap = {worst:.2e}")


def check_partition_of_unity(samples: int) -> PropertyResult:
    cfg = RunConfig(
        num_masks=samples,
        p_mask=0.4,
        cell_grid=(3, 4),
        color_set=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
        seed=11,
        interpolate=True,
        shift=True,
    )
    worst = 0.0
    for index in range(samples):
        sample = color_mask(cfg, 17, 23, index)
        gap = np.abs(sample.nonmasked + sample.channels.sum(axis=0) - 1.0).max()
        worst = max(worst, float(gap))
    return PropertyResult("partition_of_unity", worst <= 1e-9,
                          f"max |m0 + sum - 1| = {worst:.2e}")


def check_estimator_identity(num_masks: int) -> PropertyResult:
    """rise - debiased must equal the dropped-branch accumulation."""
    cfg = _estimator_cfg(num_masks)
    scorer = SyntheticScorer(PixelLinearSpec(weights=_WEIGHTS))
    (rise,) = estimators.rise_saliency(scorer, _IMAGE, [_LABEL], cfg)
    (debiased,) = estimators.debiased_saliency(scorer, _IMAGE, [_LABEL], cfg)
    height, width = _IMAGE.shape[:2]
    dropped = np.zeros((height, width))
    for index in range(cfg.num_masks):
        mask = binary_mask(cfg, height, width, index)
        score = scorer.score_batch(_IMAGE[None] * mask[None, :, :, None], [_LABEL])[0, 0]
        dropped += (1.0 - mask) / (1.0 - cfg.p_mask) * score
    dropped /= cfg.num_masks
    gap = np.abs((rise.grid - debiased.grid) - dropped).max()
    return PropertyResult("estimator_identity", gap <= 1e-9, f"max gap = {gap:.2e}")


def run_selftest(quick: bool = False, tamper: bool = False) -> list[PropertyResult]:
    n_estimator = 2000 if quick else 20000
    n_partition = 100 if quick else 500
    n_identity = 300 if quick else 1000
    return [
        check_rise_matches_oracle(n_estimator, tamper=tamper),
        check_debiased_matches_oracle(n_estimator),
        check_mcrise_matches_oracle(n_estimator),
        check_ignored_cells_score_zero(),
        check_constant_scorer_nullity(),
        check_conditional_equals_weighted(),
        check_partition_of_unity(n_partition),
        check_estimator_identity(n_identity),
    ]
