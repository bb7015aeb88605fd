"""Scoring backends: deterministic synthetics and a torchvision classifier.

The synthetic specs mirror the engine's in-process scorer semantics exactly
(the golden fixtures pin that equivalence); the classifier backend wraps a
torchvision model, applying its preprocessing and a softmax server-side so
clients always send raw [0, 1] RGB and receive confidences that sum to one
over the advertised label set.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np


class UnknownLabelError(KeyError):
    """A requested label is not served by the backend (HTTP 422)."""


class BackendError(RuntimeError):
    """Backend failed to score a batch (HTTP 500)."""


class SyntheticBackend:
    """Pure-function scorer; every advertised label carries the same score."""

    def __init__(self, spec: dict, labels=("target",)):
        self._labels = list(labels)
        self._fn = _compile_spec(spec)
        self.description = f"synthetic:{spec.get('kind')}"

    def labels(self) -> list[str]:
        return self._labels

    def score(self, images: np.ndarray, labels) -> np.ndarray:
        unknown = [l for l in labels if l not in self._labels]
        if unknown:
            raise UnknownLabelError(f"unknown labels {unknown}")
        values = np.clip(self._fn(images), 0.0, 1.0)
        return np.repeat(values[:, None], len(labels), axis=1)


def _compile_spec(spec: dict):
    kind = spec.get("kind")
    if kind == "constant":
        value = float(spec["value"])
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"constant value {value} outside [0, 1]")
        return lambda images: np.full(images.shape[0], value)
    if kind == "pixel_linear":
        weights = spec["weights"]
        if isinstance(weights, str):
            weights = np.load(weights)
        weights = np.asarray(weights, dtype=np.float64)

        def linear(images):
            if images.shape[1:] != weights.shape:
                raise BackendError(
                    f"images {images.shape[1:]} do not match weights {weights.shape}"
                )
            return np.clip(np.tensordot(images, weights, axes=3), 0.0, 1.0)

        return linear
    if kind == "region_color":
        y0, x0, y1, x1 = (int(v) for v in spec["region"])
        color = np.asarray(spec["color"], dtype=np.float64)
        bandwidth = float(spec["bandwidth"])
        if bandwidth <= 0:
            raise ValueError("bandwidth must be positive")

        def region(images):
            sub = images[:, y0:y1, x0:x1, :]
            mse = np.mean((sub - color) ** 2, axis=(1, 2, 3))
            return np.exp(-mse / (bandwidth * bandwidth))

        return region
    if kind == "ignore_pixel":
        base = _compile_spec(spec["base"])
        ys = np.array([int(p[0]) for p in spec["pixels"]], dtype=np.intp)
        xs = np.array([int(p[1]) for p in spec["pixels"]], dtype=np.intp)

        def ignoring(images):
            neutral = images.copy()
            neutral[:, ys, xs, :] = 0.0
            return base(neutral)

        return ignoring
    raise ValueError(f"unknown synthetic spec kind {kind!r}")


class MultiSpecBackend:
    """Each advertised label is served by its own synthetic spec.

    Used for conformance fixtures, where one server must answer several
    independent reference cases distinguished by label."""

    def __init__(self, spec_by_label: dict):
        self._fns = {label: _compile_spec(spec) for label, spec in spec_by_label.items()}
        self.description = f"synthetic-multi[{len(self._fns)}]"

    def labels(self) -> list[str]:
        return list(self._fns)

    def score(self, images: np.ndarray, labels) -> np.ndarray:
        unknown = [l for l in labels if l not in self._fns]
        if unknown:
            raise UnknownLabelError(f"unknown labels {unknown}")
        columns = [np.clip(self._fns[l](images), 0.0, 1.0) for l in labels]
        return np.stack(columns, axis=1)


class ClassifierBackend:
    """torchvision model behind the wire protocol.

    Weights load from a local file when given; otherwise the architecture is
    initialized from a fixed seed so runs stay deterministic even without
    pretrained weights on disk.  Inputs are normalized with the standard
    ImageNet statistics and outputs pass through a softmax.
    """

    IMAGENET_MEAN = (0.485, 0.456, 0.406)
    IMAGENET_STD = (0.229, 0.224, 0.225)

    def __init__(self, model_name: str, weights_path=None, labels=None,
                 device: str = "cpu", seed: int = 0):
        import torch
        import torchvision.models as models

        self._torch = torch
        factory = getattr(models, model_name, None)
        if factory is None:
            raise ValueError(f"unknown torchvision model {model_name!r}")
        torch.manual_seed(seed)
        self._model = factory(weights=None)
        if weights_path:
            state = torch.load(weights_path, map_location=device)
            self._model.load_state_dict(state)
        self._model.to(device).eval()
        self._device = device
        self._lock = threading.Lock()

        out_dim = self._infer_output_dim()
        if labels is None:
            labels = [f"class_{i:04d}" for i in range(out_dim)]
        if len(labels) != out_dim:
            raise ValueError(
                f"{len(labels)} labels advertised but the model emits {out_dim} classes"
            )
        self._labels = list(labels)
        self._index = {label: i for i, label in enumerate(self._labels)}
        self.description = f"classifier:{model_name}"
        self._mean = np.asarray(self.IMAGENET_MEAN, dtype=np.float32)
        self._std = np.asarray(self.IMAGENET_STD, dtype=np.float32)

    def _infer_output_dim(self) -> int:
        with self._torch.no_grad():
            probe = self._torch.zeros(1, 3, 224, 224, device=self._device)
            return int(self._model(probe).shape[1])

    def labels(self) -> list[str]:
        return self._labels

    def score(self, images: np.ndarray, labels) -> np.ndarray:
        torch = self._torch
        try:
            columns = [self._index[label] for label in labels]
        except KeyError as exc:
            raise UnknownLabelError(f"unknown label {exc.args[0]!r}") from exc
        arr = (images.astype(np.float32) - self._mean) / self._std
        tensor = torch.from_numpy(arr.transpose(0, 3, 1, 2)).to(self._device)
        try:
            with self._lock, torch.no_grad():
                logits = self._model(tensor)
                probs = torch.softmax(logits, dim=1).cpu().numpy().astype(np.float64)
        except Exception as exc:
            raise BackendError(f"inference failed: {exc}") from exc
        return np.clip(probs[:, columns], 0.0, 1.0)


def backend_from_string(text: str, *, weights=None, labels=None, device="cpu",
                        seed: int = 0):
    """CLI backend selection.

    synthetic:constant:<c> | synthetic:file:<spec.json> |
    synthetic:region_color:<y0>,<x0>,<y1>,<x1>:<#RRGGBB>:<bw> |
    synthetic:fixtures (the golden-fixture conformance target) |
    classifier:<torchvision model name>
    """
    kind, _, rest = text.partition(":")
    if kind == "synthetic":
        sub, _, tail = rest.partition(":")
        if sub == "fixtures":
            from .conformance import fixture_backend

            return fixture_backend()
        if sub == "constant":
            spec = {"kind": "constant", "value": float(tail)}
        elif sub == "file":
            spec = json.loads(Path(tail).read_text())
        elif sub == "region_color":
            region_s, _, rem = tail.partition(":")
            color_s, _, bw_s = rem.partition(":")
            rgb = color_s.lstrip("#")
            spec = {
                "kind": "region_color",
                "region": [int(v) for v in region_s.split(",")],
                "color": [int(rgb[i : i + 2], 16) / 255.0 for i in (0, 2, 4)],
                "bandwidth": float(bw_s),
            }
        else:
            raise ValueError(f"unknown synthetic backend {sub!r}")
        return SyntheticBackend(spec, labels=labels or ("target",))
    if kind == "classifier":
        return ClassifierBackend(rest, weights_path=weights, labels=labels,
                                 device=device, seed=seed)
    raise ValueError(f"unknown backend {text!r}")
