"""The black-box model boundary.

A scorer maps a batch of images and an ordered label list to a confidence
matrix in [0, 1].  Three families live here: deterministic synthetic
scorers (test oracles and CLI demos), an HTTP client for external model
servers speaking the JSON scoring protocol, and the metric-learning
distance-to-confidence transform.

Wire protocol (shared with any conforming server):

  POST {base}/v1/score
    {"id": str, "height": int, "width": int,
     "images": [[[r, g, b], ...row-major...], ...], "labels": [str, ...]}
  -> {"id": str, "scores": [[float, ...], ...]}   # rows = images
  GET {base}/v1/health -> {"status": "ok", "labels": [...]}
"""

from __future__ import annotations

import abc
import json
import math
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .errors import ScorerResponseError, TransportError


class ModelScorer(abc.ABC):
    """Batch scoring contract: images x labels -> confidences in [0, 1]."""

    @abc.abstractmethod
    def score_batch(self, images: np.ndarray, labels) -> np.ndarray:
        """Score a (B, H, W, 3) batch; returns (B, len(labels)) confidences."""


def as_batch(images) -> np.ndarray:
    batch = np.asarray(images, dtype=np.float64)
    if batch.ndim == 3:
        batch = batch[None]
    if batch.ndim != 4 or batch.shape[3] != 3 or batch.shape[0] < 1:
        raise ValueError(f"expected a (B, H, W, 3) batch, got shape {batch.shape}")
    return batch


# ---------------------------------------------------------------------------
# Synthetic scorers


@dataclass(frozen=True)
class ConstantSpec:
    value: float


@dataclass(frozen=True, eq=False)
class PixelLinearSpec:
    """Score = clamp(sum of weights * image), weights shaped (H, W, 3)."""

    weights: np.ndarray


@dataclass(frozen=True)
class RegionColorSpec:
    """Score = exp(-mse(region, color) / bandwidth^2); ignores everything
    outside the region rectangle (y0, x0, y1, x1), half-open."""

    region: tuple[int, int, int, int]
    color: tuple[float, float, float]
    bandwidth: float


@dataclass(frozen=True, eq=False)
class IgnorePixelSpec:
    """Wraps a base spec; the listed (y, x) pixels are zeroed before scoring,
    making the score provably independent of their content."""

    base: object
    pixels: tuple[tuple[int, int], ...]


def _compile(spec):
    if isinstance(spec, ConstantSpec):
        if not 0.0 <= spec.value <= 1.0:
            raise ValueError(f"constant scorer value {spec.value} outside [0, 1]")
        return lambda batch: np.full(batch.shape[0], float(spec.value))
    if isinstance(spec, PixelLinearSpec):
        weights = np.asarray(spec.weights, dtype=np.float64)
        if weights.ndim != 3 or weights.shape[2] != 3:
            raise ValueError(f"pixel_linear weights must be (H, W, 3), got {weights.shape}")

        def linear(batch):
            if batch.shape[1:] != weights.shape:
                raise ValueError(
                    f"batch images {batch.shape[1:]} do not match weights {weights.shape}"
                )
            return np.clip(np.tensordot(batch, weights, axes=3), 0.0, 1.0)

        return linear
    if isinstance(spec, RegionColorSpec):
        y0, x0, y1, x1 = spec.region
        if not (y0 < y1 and x0 < x1):
            raise ValueError(f"empty region rectangle {spec.region}")
        if spec.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {spec.bandwidth}")
        color = np.asarray(spec.color, dtype=np.float64)

        def region(batch):
            sub = batch[:, y0:y1, x0:x1, :]
            if sub.shape[1] != y1 - y0 or sub.shape[2] != x1 - x0:
                raise ValueError(f"region {spec.region} exceeds image bounds")
            mse = np.mean((sub - color) ** 2, axis=(1, 2, 3))
            return np.exp(-mse / (spec.bandwidth * spec.bandwidth))

        return region
    if isinstance(spec, IgnorePixelSpec):
        base = _compile(spec.base)
        ys = np.array([p[0] for p in spec.pixels], dtype=np.intp)
        xs = np.array([p[1] for p in spec.pixels], dtype=np.intp)

        def ignoring(batch):
            neutral = batch.copy()
            neutral[:, ys, xs, :] = 0.0
            return base(neutral)

        return ignoring
    raise ValueError(f"unknown synthetic scorer spec {type(spec).__name__}")


class SyntheticScorer(ModelScorer):
    """Pure in-process scorer; every requested label gets the same score."""

    def __init__(self, spec):
        self.spec = spec
        self._fn = _compile(spec)

    def score_batch(self, images, labels) -> np.ndarray:
        batch = as_batch(images)
        values = np.clip(self._fn(batch), 0.0, 1.0)
        return np.repeat(values[:, None], len(labels), axis=1)


class LinearMixScorer(ModelScorer):
    """a * first + b * second, clamped; linearity test plumbing."""

    def __init__(self, a: float, first: ModelScorer, b: float, second: ModelScorer):
        self.a, self.b = float(a), float(b)
        self.first, self.second = first, second

    def score_batch(self, images, labels) -> np.ndarray:
        mixed = self.a * self.first.score_batch(images, labels) + (
            self.b * self.second.score_batch(images, labels)
        )
        return np.clip(mixed, 0.0, 1.0)


def make_synthetic_scorer(spec) -> SyntheticScorer:
    return SyntheticScorer(spec)


def spec_from_dict(payload: dict):
    """Build a synthetic spec from its JSON form (recursive for wrappers)."""
    kind = payload.get("kind")
    if kind == "constant":
        return ConstantSpec(value=float(payload["value"]))
    if kind == "pixel_linear":
        weights = payload["weights"]
        if isinstance(weights, str):
            weights = np.load(weights)
        return PixelLinearSpec(weights=np.asarray(weights, dtype=np.float64))
    if kind == "region_color":
        return RegionColorSpec(
            region=tuple(int(v) for v in payload["region"]),
            color=tuple(float(v) for v in payload["color"]),
            bandwidth=float(payload["bandwidth"]),
        )
    if kind == "ignore_pixel":
        return IgnorePixelSpec(
            base=spec_from_dict(payload["base"]),
            pixels=tuple((int(y), int(x)) for y, x in payload["pixels"]),
        )
    raise ValueError(f"unknown synthetic spec kind {kind!r}")


def scorer_from_string(text: str) -> ModelScorer:
    """CLI scorer selection: an http(s) URL or synthetic:<...> spec string.

    Inline forms: synthetic:constant:<c> and
    synthetic:region_color:<y0>,<x0>,<y1>,<x1>:<#RRGGBB>:<bandwidth>;
    anything else via synthetic:file:<spec.json>.
    """
    if text.startswith(("http://", "https://")):
        return HttpScorer(text)
    if not text.startswith("synthetic:"):
        raise ValueError(f"model must be an http(s) URL or synthetic:<spec>, got {text!r}")
    body = text[len("synthetic:") :]
    kind, _, rest = body.partition(":")
    if kind == "constant":
        return SyntheticScorer(ConstantSpec(value=float(rest)))
    if kind == "file":
        return SyntheticScorer(spec_from_dict(json.loads(Path(rest).read_text())))
    if kind == "region_color":
        region_s, _, tail = rest.partition(":")
        color_s, _, bw_s = tail.partition(":")
        region = tuple(int(v) for v in region_s.split(","))
        color = parse_hex_color(color_s)
        return SyntheticScorer(
            RegionColorSpec(region=region, color=color, bandwidth=float(bw_s))
        )
    raise ValueError(f"unknown synthetic scorer kind {kind!r}")


def parse_hex_color(text: str) -> tuple[float, float, float]:
    s = text.lstrip("#")
    if len(s) != 6:
        raise ValueError(f"expected #RRGGBB color, got {text!r}")
    return tuple(int(s[i : i + 2], 16) / 255.0 for i in (0, 2, 4))


# ---------------------------------------------------------------------------
# HTTP client


class HttpScorer(ModelScorer):
    """Client for the JSON scoring protocol.

    One session per thread; requests are retried on transport failures and
    5xx responses, then abort the run.  Out-of-range or malformed scores are
    rejected, never repaired.
    """

    def __init__(self, base_url: str, timeout: float = 30.0, retries: int = 2,
                 backoff: float = 0.5):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._local = threading.local()

    def _session(self) -> requests.Session:
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def health(self) -> dict:
        reply = self._request("GET", self.base_url + "/v1/health")
        payload = reply.json()
        if payload.get("status") != "ok" or "labels" not in payload:
            raise ScorerResponseError(f"malformed health reply: {payload!r}")
        return payload

    def _request(self, method: str, url: str, data: bytes | None = None):
        last_error = None
        for attempt in range(self.retries + 1):
            try:
                reply = self._session().request(
                    method,
                    url,
                    data=data,
                    headers={"Content-Type": "application/json"} if data else None,
                    timeout=self.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
            else:
                if reply.status_code < 500:
                    return reply
                last_error = TransportError(
                    f"server error {reply.status_code}: {reply.text[:200]}"
                )
            if attempt < self.retries:
                time.sleep(self.backoff * (2**attempt))
        raise TransportError(f"{method} {url} failed after {self.retries + 1} attempts: "
                             f"{last_error}")

    def score_batch(self, images, labels) -> np.ndarray:
        batch = as_batch(images)
        n, height, width, _ = batch.shape
        request_id = uuid.uuid4().hex
        body = encode_score_request(request_id, batch, list(labels))
        reply = self._request("POST", self.base_url + "/v1/score", data=body)
        if reply.status_code != 200:
            raise ScorerResponseError(
                f"scoring request rejected ({reply.status_code}): {reply.text[:200]}"
            )
        try:
            payload = reply.json()
        except ValueError as exc:
            raise ScorerResponseError(f"response is not JSON: {exc}") from exc
        if payload.get("id") != request_id:
            raise ScorerResponseError(
                f"response id {payload.get('id')!r} does not match request {request_id!r}"
            )
        scores = np.asarray(payload.get("scores"), dtype=np.float64)
        if scores.shape != (n, len(labels)):
            raise ScorerResponseError(
                f"expected scores shaped {(n, len(labels))}, got {scores.shape}"
            )
        if not np.isfinite(scores).all():
            raise ScorerResponseError("scores contain non-finite values")
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise ScorerResponseError(
                f"scores outside [0, 1]: min {scores.min()}, max {scores.max()}"
            )
        return scores


def encode_score_request(request_id: str, batch: np.ndarray, labels: list[str]) -> bytes:
    """Serialize a scoring request; floats keep full round-trip precision.

    Large batches dominate runtime through float formatting, so each image's
    pixel values are formatted once per distinct value and the body is
    assembled from token arrays instead of per-pixel string joins.
    """
    n, height, width, _ = batch.shape
    pixels = height * width
    images = []
    for img in batch.reshape(n, pixels, 3):
        uniques, inverse = np.unique(img.reshape(-1), return_inverse=True)
        reprs = np.array([repr(v) for v in uniques.tolist()], dtype=object)
        tokens = reprs[inverse].reshape(pixels, 3)
        cells = np.empty((pixels, 8), dtype=object)
        cells[:, 0] = "["
        cells[:, 2] = cells[:, 4] = ","
        cells[:, 6] = "]"
        cells[:, 7] = ","
        cells[:, 1] = tokens[:, 0]
        cells[:, 3] = tokens[:, 1]
        cells[:, 5] = tokens[:, 2]
        cells[-1, 7] = ""
        images.append("[" + "".join(cells.ravel().tolist()) + "]")
    head = json.dumps(
        {"id": request_id, "height": height, "width": width, "labels": labels}
    )
    return (head[:-1] + ',"images":[' + ",".join(images) + "]}").encode()


# ---------------------------------------------------------------------------
# Metric-learning transform


def reid_confidence(distance: float, d0: float) -> float:
    """Map a feature distance to a confidence: exp(-distance / d0)."""
    if d0 <= 0:
        raise ValueError(f"d0 must be positive, got {d0}")
    if distance < 0:
        raise ValueError(f"distance must be non-negative, got {distance}")
    return math.exp(-distance / d0)
