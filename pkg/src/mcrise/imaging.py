"""Image and scalar-grid primitives.

Images are float arrays of shape (H, W, 3) with channels in [0, 1]; scalar
grids are float arrays of shape (H, W).  Everything here is a pure function
on immutable inputs: loading, bilinear resampling, pseudo-color rendering,
overlay blending, and the JSON / binary grid exchange formats.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

GRID_MAGIC = b"CSAL"
GRID_HEADER = struct.Struct("<4sIII")  # magic, height, width, channels

_SUPPORTED_FORMATS = ("PNG", "JPEG")

# Piecewise-linear color ramps (position, rgb).  The diverging ramp has a
# node exactly at 0.5 so a zero saliency value renders as the exact
# mid-color.
_SEQUENTIAL_RAMP = (
    (0.00, (0.00, 0.00, 0.05)),
    (0.35, (0.55, 0.05, 0.25)),
    (0.70, (1.00, 0.55, 0.05)),
    (1.00, (1.00, 1.00, 0.85)),
)
_DIVERGING_RAMP = (
    (0.00, (0.10, 0.25, 0.85)),
    (0.50, (1.00, 1.00, 1.00)),
    (1.00, (0.85, 0.10, 0.10)),
)


def validate_image(image) -> np.ndarray:
    """Coerce to a float64 (H, W, 3) array and check the [0, 1] range."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected (H, W, 3) image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image channels must lie in [0, 1]")
    return arr


def load_image(path, target: tuple[int, int] | None = None) -> np.ndarray:
    """Decode an 8-bit RGB PNG/JPEG into a float (H, W, 3) array in [0, 1].

    If `target` = (H, W) is given, the decoded image is bilinearly resized.
    """
    try:
        with PILImage.open(path) as img:
            fmt = img.format
            if fmt not in _SUPPORTED_FORMATS:
                raise ValueError(f"unsupported image format {fmt!r} (need PNG or JPEG)")
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except ValueError:
        raise
    except Exception as exc:  # PIL raises various decode errors
        raise ValueError(f"cannot decode image {path}: {exc}") from exc
    if target is not None:
        out_h, out_w = target
        if out_h < 1 or out_w < 1:
            raise ValueError(f"zero-sized resize target {target}")
        if (out_h, out_w) != arr.shape[:2]:
            arr = np.stack(
                [bilinear_resize(arr[:, :, c], out_h, out_w) for c in range(3)], axis=-1
            )
    return arr


def save_png(image, path) -> None:
    save_image(image, path, fmt="PNG")


def save_image(image, path, fmt: str | None = None) -> None:
    """Encode as 8-bit PNG or JPEG (format from `fmt` or the extension)."""
    if fmt is None:
        suffix = Path(path).suffix.lower()
        fmt = {"png": "PNG", "jpg": "JPEG", "jpeg": "JPEG"}.get(suffix.lstrip("."))
    if fmt not in _SUPPORTED_FORMATS:
        raise ValueError(f"unsupported image format {fmt!r} (need PNG or JPEG)")
    arr = validate_image(image)
    data = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path, format=fmt)


def _axis_samples(n_in: int, n_out: int):
    """Half-pixel-center source coordinates, split into floor index and fraction."""
    centers = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    centers = np.clip(centers, 0.0, float(n_in - 1))
    lo = np.minimum(np.floor(centers).astype(np.intp), n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = centers - lo
    return lo, hi, frac


def bilinear_resize(grid, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resampling with half-pixel-center alignment.

    Every output value is a convex combination of input values, so the
    output range never exceeds [min(grid), max(grid)].
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {g.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"zero-sized resize output {(out_h, out_w)}")
    lo, hi, t = _axis_samples(g.shape[0], out_h)
    rows = g[lo] + t[:, None] * (g[hi] - g[lo])
    lo, hi, t = _axis_samples(g.shape[1], out_w)
    out = rows[:, lo] + t[None, :] * (rows[:, hi] - rows[:, lo])
    # clamp away sub-ulp spill so the convexity bound holds exactly
    return np.clip(out, g.min(), g.max())


def nearest_resize(grid, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor block upsampling (exact cell blocks when sizes divide)."""
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {g.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"zero-sized resize output {(out_h, out_w)}")
    ys = np.minimum((np.arange(out_h) * g.shape[0]) // out_h, g.shape[0] - 1)
    xs = np.minimum((np.arange(out_w) * g.shape[1]) // out_w, g.shape[1] - 1)
    return g[np.ix_(ys, xs)]


def _apply_ramp(t: np.ndarray, ramp) -> np.ndarray:
    xs = np.array([p for p, _ in ramp])
    colors = np.array([c for _, c in ramp])
    idx = np.clip(np.searchsorted(xs, t, side="right") - 1, 0, len(xs) - 2)
    x0 = xs[idx]
    span = xs[idx + 1] - x0
    s = (t - x0) / span
    return colors[idx] + s[..., None] * (colors[idx + 1] - colors[idx])


def render_heatmap(grid, mode: str = "unsigned",
                   amplitude: float | None = None) -> np.ndarray:
    """Render a scalar grid as a pseudo-color image.

    unsigned: [min, max] onto a sequential ramp.
    signed:   [-A, +A] (A = max |value|) onto a diverging ramp whose exact
              mid-color sits at value 0.  Pass `amplitude` to normalize
              several grids on one shared scale.
    Degenerate ranges (flat grid) render as the ramp midpoint everywhere.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {g.shape}")
    if not np.isfinite(g).all():
        raise ValueError("grid contains NaN or Inf")
    if mode == "unsigned":
        lo, hi = g.min(), g.max()
        t = np.full_like(g, 0.5) if hi == lo else (g - lo) / (hi - lo)
        ramp = _SEQUENTIAL_RAMP
    elif mode == "signed":
        amp = np.abs(g).max() if amplitude is None else float(amplitude)
        t = np.full_like(g, 0.5) if amp == 0.0 else np.clip((g + amp) / (2.0 * amp), 0.0, 1.0)
        ramp = _DIVERGING_RAMP
    else:
        raise ValueError(f"unknown render mode {mode!r}")
    return np.clip(_apply_ramp(t, ramp), 0.0, 1.0)


def overlay(grid, image, alpha: float, mode: str = "unsigned") -> np.ndarray:
    """Alpha-blend the rendered heatmap of `grid` over `image`.

    alpha = 0 returns the image unchanged; alpha = 1 returns the heatmap.
    """
    img = validate_image(image)
    g = np.asarray(grid, dtype=np.float64)
    if g.shape != img.shape[:2]:
        raise ValueError(f"grid shape {g.shape} does not match image {img.shape[:2]}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return img
    heat = render_heatmap(g, mode=mode)
    if alpha == 1.0:
        return heat
    return np.clip((1.0 - alpha) * img + alpha * heat, 0.0, 1.0)


def grid_to_json_dict(grid) -> dict:
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {g.shape}")
    return {"height": g.shape[0], "width": g.shape[1], "data": g.tolist()}


def grid_from_json_dict(payload: dict) -> np.ndarray:
    g = np.asarray(payload["data"], dtype=np.float64)
    if g.shape != (payload["height"], payload["width"]):
        raise ValueError(
            f"grid data shape {g.shape} disagrees with declared "
            f"{(payload['height'], payload['width'])}"
        )
    return g


def write_grid_json(grid, path) -> None:
    Path(path).write_text(json.dumps(grid_to_json_dict(grid)))


def read_grid_json(path) -> np.ndarray:
    return grid_from_json_dict(json.loads(Path(path).read_text()))


def write_grid_bin(grid, path) -> None:
    """Write a grid or channel stack as CSAL binary.

    Layout: 16-byte header (magic "CSAL", u32 height, u32 width, u32
    channels, little-endian) followed by row-major float32 planes, one per
    channel.  2-D input is stored as a single channel.
    """
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W) or (C, H, W), got shape {arr.shape}")
    c, h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(GRID_HEADER.pack(GRID_MAGIC, h, w, c))
        fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_grid_bin(path) -> np.ndarray:
    """Read CSAL binary back as a float32 (C, H, W) array."""
    raw = Path(path).read_bytes()
    if len(raw) < GRID_HEADER.size:
        raise ValueError(f"{path}: truncated grid file")
    magic, h, w, c = GRID_HEADER.unpack_from(raw)
    if magic != GRID_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = GRID_HEADER.size + 4 * h * w * c
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=GRID_HEADER.size)
    return data.reshape(c, h, w).copy()
