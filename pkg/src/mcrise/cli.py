"""Command-line front end.

Subcommands:
  explain   compute saliency artifacts (JSON + binary + heatmap PNGs)
  evaluate  deletion / ca-deletion curves and an AUC comparison table
  selftest  run the built-in estimator-vs-oracle property suite

Exit codes: 0 success, 2 configuration error, 3 model-transport error,
4 validation or property failure.  Option precedence: command-line flags
override the optional JSON config file, which overrides built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, estimators, imaging, metrics
from .errors import ConfigError, TransportError
from .maskgen import DEFAULT_COLORS, RunConfig
from .modelio import parse_hex_color, scorer_from_string
from .selftest import run_selftest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRANSPORT = 3
EXIT_VALIDATION = 4

_METHODS = ("rise", "debias", "mcrise")
_METRICS = ("deletion", "ca-deletion")

_RESPONSE_COLORS = {
    estimators.KIND_IRRELEVANT: (0.55, 0.55, 0.55),
    estimators.KIND_TEXTURE_OBSTACLE: (0.85, 0.20, 0.85),
    estimators.KIND_TEXTURE_FEATURE: (0.10, 0.70, 0.70),
    estimators.KIND_PER_COLOR: (0.95, 0.65, 0.10),
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "explain":
            return _cmd_explain(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        return _cmd_selftest(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TransportError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except Exception as exc:  # module/validation failures
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcrise", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    explain = sub.add_parser("explain", help="compute saliency artifacts")
    _add_run_options(explain)
    explain.add_argument("--method", choices=_METHODS)
    explain.add_argument("--epsilon", type=float,
                         help="response-class threshold (default: 10%% of peak)")
    explain.add_argument("--dump-masks", action="store_true",
                         help="also dump every mask sample as binary grids")

    evaluate = sub.add_parser("evaluate", help="deletion-style evaluation")
    _add_run_options(evaluate)
    evaluate.add_argument("--method", help="comma list: rise|debias|mcrise|random "
                                           "or paths to saliency JSON artifacts")
    evaluate.add_argument("--metric", help="comma list: deletion|ca-deletion "
                                           "(broadcast if single)")
    evaluate.add_argument("--steps", type=int, help="removal batches (default 100)")

    selftest = sub.add_parser("selftest", help="estimator-vs-oracle property suite")
    selftest.add_argument("--quick", action="store_true", help="reduced sample counts")
    selftest.add_argument("--tamper", action="store_true",
                          help="corrupt one accumulator (negative control)")
    return parser


def _add_run_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--model", help="http(s) URL or synthetic:<spec>")
    sub.add_argument("--image", help="input PNG/JPEG path")
    sub.add_argument("--labels", help="comma-separated label list")
    sub.add_argument("--num-masks", type=int)
    sub.add_argument("--pmask", type=float)
    sub.add_argument("--cell-grid", help="low-res mask size HxW, e.g. 7x7")
    sub.add_argument("--colors", help="comma-separated #RRGGBB masking colors")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--batch-size", type=int)
    sub.add_argument("--workers", type=int)
    sub.add_argument("--no-interpolate", action="store_true")
    sub.add_argument("--no-shift", action="store_true")
    sub.add_argument("--out-dir")
    sub.add_argument("--config", help="JSON config file (or a previous run manifest)")


# ---------------------------------------------------------------------------
# Config assembly


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if "config" in payload and isinstance(payload["config"], dict):
        payload = payload["config"]  # accept run manifests directly
    return payload


def _parse_cell_grid(value) -> tuple[int, int]:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return int(value[0]), int(value[1])
    match = re.fullmatch(r"(\d+)x(\d+)", str(value))
    if not match:
        raise ConfigError(f"cell grid must look like 7x7, got {value!r}")
    return int(match.group(1)), int(match.group(2))


def _parse_colors(value) -> tuple:
    if isinstance(value, str):
        entries = [v for v in value.split(",") if v]
        return tuple(parse_hex_color(v) for v in entries)
    return tuple(tuple(float(c) for c in color) for color in value)


def _merged(args, key: str, config: dict, default):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in config:
        return config[key]
    return default


def resolve_run(args) -> dict:
    """Merge flags > config file > defaults into one settings dict."""
    config = _load_config_file(args.config)
    labels = _merged(args, "labels", config, None)
    if isinstance(labels, str):
        labels = [v for v in labels.split(",") if v]
    interpolate = bool(config.get("interpolate", True))
    shift = bool(config.get("shift", True))
    if getattr(args, "no_interpolate", False):
        interpolate = False
    if getattr(args, "no_shift", False):
        shift = False
    colors = _merged(args, "colors", config, None)
    run_cfg = RunConfig(
        num_masks=int(_merged(args, "num_masks", config, 8000)),
        p_mask=float(_merged(args, "pmask", config, config.get("p_mask", 0.5))),
        cell_grid=_parse_cell_grid(_merged(args, "cell_grid", config, "7x7")),
        color_set=_parse_colors(colors) if colors is not None else DEFAULT_COLORS,
        seed=int(_merged(args, "seed", config, 0)),
        interpolate=interpolate,
        shift=shift,
        batch_size=int(_merged(args, "batch_size", config, 32)),
    ).validate()
    return {
        "model": _merged(args, "model", config, None),
        "image": _merged(args, "image", config, None),
        "labels": labels,
        "method": _merged(args, "method", config, None),
        "metric": _merged(args, "metric", config, None),
        "steps": int(_merged(args, "steps", config, 100)),
        "epsilon": _merged(args, "epsilon", config, None),
        "workers": int(_merged(args, "workers", config, 1)),
        "out_dir": _merged(args, "out_dir", config, None),
        "run": run_cfg,
    }


def _require(settings: dict, *keys: str) -> None:
    for key in keys:
        if settings.get(key) in (None, []):
            raise ConfigError(f"--{key.replace('_', '-')} is required")


def _config_echo(settings: dict) -> dict:
    run: RunConfig = settings["run"]
    echo = {
        "model": settings["model"],
        "image": settings["image"],
        "labels": settings["labels"],
        "method": settings["method"],
        "num_masks": run.num_masks,
        "p_mask": run.p_mask,
        "cell_grid": list(run.cell_grid),
        "colors": [list(c) for c in run.color_set],
        "seed": run.seed,
        "interpolate": run.interpolate,
        "shift": run.shift,
        "batch_size": run.batch_size,
        "workers": settings["workers"],
        "out_dir": settings["out_dir"],
    }
    if settings["method"] is None:
        echo.pop("method")
    if settings.get("metric") is not None:
        echo["metric"] = settings["metric"]
        echo["steps"] = settings["steps"]
    if settings.get("epsilon") is not None:
        echo["epsilon"] = settings["epsilon"]
    return echo


# ---------------------------------------------------------------------------
# Artifact bookkeeping


class ArtifactDir:
    """Tracks written files so a failed run leaves no partial outputs."""

    def __init__(self, out_dir: str):
        self.root = Path(out_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        path = self.root / name
        self.written.append(path)
        return path

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.path(name)
        path.write_text(json.dumps(payload) + "\n")
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.path(name)
        path.write_text(text)
        return path

    def cleanup(self) -> None:
        for path in self.written:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass

    def manifest_outputs(self) -> list[dict]:
        entries = []
        for path in self.written:
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            entries.append(
                {"path": path.name, "sha256": digest, "bytes": path.stat().st_size}
            )
        return entries


def _safe_label(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label)


# ---------------------------------------------------------------------------
# explain


def _cmd_explain(args) -> int:
    settings = resolve_run(args)
    _require(settings, "model", "image", "labels", "method", "out_dir")
    run: RunConfig = settings["run"]
    method = settings["method"]
    if method not in _METHODS:
        raise ConfigError(f"--method must be one of {_METHODS}, got {method!r}")
    scorer = scorer_from_string(settings["model"])
    image = imaging.load_image(settings["image"])
    run.check_fits(*image.shape[:2])
    out = ArtifactDir(settings["out_dir"])
    started = time.monotonic()
    dump_dir = None
    try:
        if args.dump_masks:
            dump_dir = out.root / "masks"
            dump_dir.mkdir(exist_ok=True)
        if method == "mcrise":
            _explain_mcrise(scorer, image, settings, out, dump_dir)
        else:
            _explain_positional(scorer, image, settings, out, dump_dir)
        manifest = {
            "schema": "mcrise/manifest-v1",
            "engine_version": __version__,
            "command": "explain",
            "config": _config_echo(settings),
            "scorer": settings["model"],
            "labels": settings["labels"],
            "wall_clock_seconds": time.monotonic() - started,
            "outputs": out.manifest_outputs(),
        }
        (out.root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except Exception:
        out.cleanup()
        if dump_dir is not None:
            shutil.rmtree(dump_dir, ignore_errors=True)
        raise
    print(f"wrote {len(out.written) + 1} artifacts to {out.root}")
    return EXIT_OK


def _explain_positional(scorer, image, settings, out: ArtifactDir, dump_dir) -> None:
    run: RunConfig = settings["run"]
    method = settings["method"]
    compute = estimators.rise_saliency if method == "rise" else estimators.debiased_saliency
    maps = compute(scorer, image, settings["labels"], run,
                   workers=settings["workers"], dump_dir=dump_dir)
    render_mode = "unsigned" if method == "rise" else "signed"
    for m in maps:
        tag = f"{method}_{_safe_label(m.label)}"
        out.write_json(f"saliency_{tag}.json", estimators.saliency_to_json_dict(m))
        imaging.write_grid_bin(m.grid, out.path(f"saliency_{tag}.bin"))
        imaging.save_png(imaging.render_heatmap(m.grid, render_mode),
                         out.path(f"heatmap_{tag}.png"))
        imaging.save_png(imaging.overlay(m.grid, image, 0.5, render_mode),
                         out.path(f"overlay_{tag}.png"))


def _explain_mcrise(scorer, image, settings, out: ArtifactDir, dump_dir) -> None:
    run: RunConfig = settings["run"]
    stacks = estimators.mcrise_saliency(scorer, image, settings["labels"], run,
                                        workers=settings["workers"], dump_dir=dump_dir)
    for stack in stacks:
        tag = f"mcrise_{_safe_label(stack.label)}"
        out.write_json(f"saliency_{tag}.json", estimators.stack_to_json_dict(stack))
        imaging.write_grid_bin(stack.channels, out.path(f"saliency_{tag}.bin"))
        amplitude = float(np.abs(stack.channels).max())
        for k, color in enumerate(stack.color_set):
            heat = imaging.render_heatmap(stack.channels[k], "signed", amplitude)
            hexname = "".join(f"{round(c * 255):02x}" for c in color)
            imaging.save_png(heat, out.path(f"heatmap_{tag}_c{k}_{hexname}.png"))
        imaging.save_png(_color_panel(stack, amplitude), out.path(f"panel_{tag}.png"))
        response = estimators.classify_color_response(stack, settings["epsilon"])
        out.write_json(f"response_{tag}.json",
                       estimators.response_map_to_json_dict(response))
        imaging.save_png(_render_response(response), out.path(f"response_{tag}.png"))


def _color_panel(stack, amplitude) -> np.ndarray:
    """Per-color heatmap panels side by side, masking color shown above each."""
    _, height, width = stack.channels.shape
    swatch_h = max(4, height // 8)
    panels = []
    for k, color in enumerate(stack.color_set):
        swatch = np.full((swatch_h, width, 3), color, dtype=np.float64)
        heat = imaging.render_heatmap(stack.channels[k], "signed", amplitude)
        panels.append(np.vstack([swatch, heat]))
    separator = np.ones((panels[0].shape[0], 2, 3))
    joined = panels[0]
    for panel in panels[1:]:
        joined = np.hstack([joined, separator, panel])
    return joined


def _render_response(response) -> np.ndarray:
    out = np.empty(response.kinds.shape + (3,), dtype=np.float64)
    for code, color in _RESPONSE_COLORS.items():
        out[response.kinds == code] = color
    return out


# ---------------------------------------------------------------------------
# evaluate


def _cmd_evaluate(args) -> int:
    settings = resolve_run(args)
    _require(settings, "model", "image", "labels", "method", "out_dir")
    labels = settings["labels"]
    if len(labels) != 1:
        raise ConfigError("evaluate needs exactly one label")
    label = labels[0]
    methods = [m for m in str(settings["method"]).split(",") if m]
    metric_field = settings["metric"]
    metric_list = [m for m in str(metric_field).split(",") if m] if metric_field else []
    if metric_list and len(metric_list) not in (1, len(methods)):
        raise ConfigError("--metric must be one entry or one per method")

    scorer = scorer_from_string(settings["model"])
    image = imaging.load_image(settings["image"])
    run: RunConfig = settings["run"]
    out = ArtifactDir(settings["out_dir"])
    started = time.monotonic()
    try:
        results = []
        for i, method in enumerate(methods):
            metric = (metric_list[i % len(metric_list)] if metric_list
                      else _default_metric(method))
            if metric not in _METRICS:
                raise ConfigError(f"unknown metric {metric!r}")
            curve, source = _evaluate_one(scorer, image, label, method, metric, settings)
            tag = f"{_safe_label(Path(method).stem)}_{metric.replace('-', '_')}"
            out.write_text(f"curve_{tag}.csv", metrics.curve_to_csv(curve))
            out.write_json(f"curve_{tag}.json", metrics.curve_to_json_dict(curve))
            results.append({"method": source, "metric": metric, "auc": curve.auc,
                            "curve": f"curve_{tag}.csv"})
        summary = {
            "schema": "mcrise/evaluation-v1",
            "label": label,
            "results": results,
        }
        out.write_json("summary.json", summary)
        manifest = {
            "schema": "mcrise/manifest-v1",
            "engine_version": __version__,
            "command": "evaluate",
            "config": _config_echo(settings),
            "scorer": settings["model"],
            "labels": labels,
            "wall_clock_seconds": time.monotonic() - started,
            "outputs": out.manifest_outputs(),
        }
        (out.root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    except Exception:
        out.cleanup()
        raise
    width = max(len(r["method"]) for r in results)
    print(f"label: {label}")
    for r in results:
        print(f"  {r['method']:<{width}}  {r['metric']:<12} AUC = {r['auc']:.6f}")
    return EXIT_OK


def _default_metric(method: str) -> str:
    return "ca-deletion" if method == "mcrise" else "deletion"


def _evaluate_one(scorer, image, label, method, metric, settings):
    """Returns (curve, method description). `method` may be an artifact path."""
    run: RunConfig = settings["run"]
    steps = settings["steps"]
    height, width = image.shape[:2]

    if method == "random":
        if metric != "deletion":
            raise ConfigError("random ordering only supports the deletion metric")
        order = metrics.random_order(height, width, run.seed)
        return metrics.deletion_curve(scorer, image, label, order, steps=steps,
                                      batch_size=run.batch_size), "random"

    artifact = Path(method)
    if artifact.suffix == ".json" and artifact.exists():
        payload = json.loads(artifact.read_text())
        if payload.get("schema") == "mcrise/stack-v1":
            stack = estimators.stack_from_json_dict(payload)
            if metric != "ca-deletion":
                raise ConfigError("a color stack artifact needs --metric ca-deletion")
            return metrics.ca_deletion(scorer, image, label, stack, steps=steps,
                                       batch_size=run.batch_size), f"stack:{artifact.name}"
        saliency = estimators.saliency_from_json_dict(payload)
        if metric != "deletion":
            raise ConfigError("a positional saliency artifact needs --metric deletion")
        order = metrics.saliency_order(saliency.grid)
        return metrics.deletion_curve(scorer, image, label, order, steps=steps,
                                      batch_size=run.batch_size), f"map:{artifact.name}"

    if method not in _METHODS:
        raise ConfigError(f"unknown evaluate method {method!r}")
    if method == "mcrise":
        if metric != "ca-deletion":
            raise ConfigError("mcrise pairs with --metric ca-deletion")
        (stack,) = estimators.mcrise_saliency(scorer, image, [label], run,
                                              workers=settings["workers"])
        return metrics.ca_deletion(scorer, image, label, stack, steps=steps,
                                   batch_size=run.batch_size), "mcrise"
    if metric != "deletion":
        raise ConfigError(f"{method} pairs with --metric deletion")
    compute = estimators.rise_saliency if method == "rise" else estimators.debiased_saliency
    (saliency,) = compute(scorer, image, [label], run, workers=settings["workers"])
    order = metrics.saliency_order(saliency.grid)
    return metrics.deletion_curve(scorer, image, label, order, steps=steps,
                                  batch_size=run.batch_size), method


# ---------------------------------------------------------------------------
# selftest


def _cmd_selftest(args) -> int:
    results = run_selftest(quick=args.quick, tamper=args.tamper)
    failed = False
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        failed = failed or not result.passed
        print(f"{status}  {result.name}: {result.detail}")
    return EXIT_VALIDATION if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
