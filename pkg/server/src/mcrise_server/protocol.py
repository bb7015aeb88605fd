"""Wire-protocol parsing and validation for the scoring endpoint.

Request body:
  {"id": str, "height": int, "width": int,
   "images": [[[r, g, b], ...row-major...], ...], "labels": [str, ...]}

Bodies are parsed bit-exactly.  Large numeric payloads take a fast path
(byte-level extraction of the images array plus a round-trip-exact pandas
parse) that only engages when five structural checks prove the segment is a
compact, regular nesting; anything else falls back to a full stdlib JSON
parse.  Both paths produce identical float64 values.
"""

from __future__ import annotations

import io
import json
from itertools import chain

import numpy as np
import pandas as pd


class ProtocolError(ValueError):
    """Malformed scoring request (maps to HTTP 400)."""


_NUMERIC_BYTES = b"0123456789.eE+-,[]"
_BRACKETS_TO_NEWLINE = bytes.maketrans(b"[],", b"\n\n\n")


def _fast_images_segment(body: bytes):
    """Locate a trailing compact images array; None if not provably regular."""
    key = body.rfind(b'"images"')
    if key < 0:
        return None
    start = body.find(b"[", key)
    end = body.rfind(b"]")
    if start < 0 or end <= start:
        return None
    tail = body[end + 1 :].strip()
    if tail != b"}":
        return None  # images is not the final field
    segment = body[start : end + 1]
    if segment.translate(None, delete=_NUMERIC_BYTES) != b"":
        return None  # whitespace or foreign characters: use the slow path
    return key, start, end, segment


def _parse_fast(body: bytes):
    located = _fast_images_segment(body)
    if located is None:
        return None
    key, start, end, segment = located
    envelope_bytes = body[:start] + b"[]" + body[end + 1 :]
    try:
        envelope = json.loads(envelope_bytes)
    except ValueError:
        return None
    if not isinstance(envelope, dict) or envelope.get("images") != []:
        return None
    height, width = envelope.get("height"), envelope.get("width")
    if not (isinstance(height, int) and isinstance(width, int)) or height < 1 or width < 1:
        raise ProtocolError("height and width must be positive integers")
    pixels = height * width

    try:
        values = pd.read_csv(
            io.BytesIO(segment.translate(_BRACKETS_TO_NEWLINE)),
            header=None,
            dtype=np.float64,
            float_precision="round_trip",
            skip_blank_lines=True,
        ).to_numpy().ravel()
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError):
        return None
    count = values.size
    if count == 0 or count % (3 * pixels) != 0:
        return None
    batch = count // (3 * pixels)
    # structural counts for a regular [[ [r,g,b] x PIXELS ] x B] nesting
    opens, closes = segment.count(b"["), segment.count(b"]")
    commas = segment.count(b",")
    if opens != closes or opens != 1 + batch + batch * pixels:
        return None
    if commas != 3 * batch * pixels - 1:
        return None
    envelope["images"] = values.reshape(batch, height, width, 3)
    return envelope


def _parse_slow(body: bytes):
    try:
        payload = json.loads(body)
    except ValueError as exc:
        raise ProtocolError(f"body is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ProtocolError("body must be a JSON object")
    height, width = payload.get("height"), payload.get("width")
    if not (isinstance(height, int) and isinstance(width, int)) or height < 1 or width < 1:
        raise ProtocolError("height and width must be positive integers")
    images = payload.get("images")
    if not isinstance(images, list) or not images:
        raise ProtocolError("images must be a non-empty list")
    pixels = height * width
    for img in images:
        if not isinstance(img, list) or len(img) != pixels or any(
            not isinstance(px, list) or len(px) != 3 for px in img
        ):
            raise ProtocolError(
                f"each image must hold {pixels} row-major [r, g, b] triples"
            )
    try:
        flat = np.fromiter(
            chain.from_iterable(chain.from_iterable(images)),
            dtype=np.float64,
            count=len(images) * pixels * 3,
        )
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"images are not nested [r, g, b] rows: {exc}") from exc
    payload["images"] = flat.reshape(len(images), height, width, 3)
    return payload


def parse_score_request(body: bytes, batch_cap: int):
    """Returns (request_id, images (B, H, W, 3) float64, labels)."""
    payload = _parse_fast(body)
    if payload is None:
        payload = _parse_slow(body)
    request_id = payload.get("id")
    if not isinstance(request_id, str) or not request_id:
        raise ProtocolError("id must be a non-empty string")
    labels = payload.get("labels")
    if (
        not isinstance(labels, list)
        or not labels
        or not all(isinstance(l, str) for l in labels)
    ):
        raise ProtocolError("labels must be a non-empty list of strings")
    images = payload["images"]
    if images.shape[0] > batch_cap:
        raise ProtocolError(
            f"batch of {images.shape[0]} exceeds the server cap of {batch_cap}"
        )
    if not np.isfinite(images).all():
        raise ProtocolError("image values must be finite")
    if images.min() < 0.0 or images.max() > 1.0:
        raise ProtocolError("image channel values must lie in [0, 1]")
    return request_id, images, labels


def encode_score_response(request_id: str, scores: np.ndarray) -> bytes:
    return json.dumps({"id": request_id, "scores": scores.tolist()}).encode()
