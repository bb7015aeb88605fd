import json

import numpy as np
import pytest

from mcrise_server.backends import (
    ClassifierBackend,
    SyntheticBackend,
    UnknownLabelError,
    backend_from_string,
)
from mcrise_server.conformance import default_fixtures


class TestSyntheticBackend:
    def test_golden_fixture_cases_reproduce_exactly(self):
        for case in default_fixtures()["cases"]:
            backend = SyntheticBackend(case["spec"], labels=case["labels"])
            batch = np.array(case["images"], dtype=np.float64).reshape(
                len(case["images"]), case["height"], case["width"], 3
            )
            scores = backend.score(batch, case["labels"])
            assert np.array_equal(scores, np.array(case["scores"])), case["name"]

    def test_unknown_label_rejected(self):
        backend = SyntheticBackend({"kind": "constant", "value": 0.5}, labels=["a"])
        with pytest.raises(UnknownLabelError):
            backend.score(np.zeros((1, 1, 1, 3)), ["b"])

    def test_region_color_ignores_outside(self):
        backend = SyntheticBackend(
            {"kind": "region_color", "region": [0, 0, 1, 1],
             "color": [1.0, 0.0, 0.0], "bandwidth": 1.0},
            labels=["target"],
        )
        a = np.zeros((1, 2, 2, 3))
        b = np.zeros((1, 2, 2, 3))
        b[0, 1, 1] = 1.0  # outside the region
        assert np.array_equal(
            backend.score(a, ["target"]), backend.score(b, ["target"])
        )

    def test_backend_from_string_variants(self, tmp_path):
        constant = backend_from_string("synthetic:constant:0.25")
        assert constant.score(np.zeros((1, 1, 1, 3)), ["target"])[0, 0] == 0.25
        spec = {"kind": "constant", "value": 0.5}
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec))
        from_file = backend_from_string(f"synthetic:file:{path}")
        assert from_file.score(np.zeros((1, 1, 1, 3)), ["target"])[0, 0] == 0.5
        region = backend_from_string("synthetic:region_color:0,0,1,1:#FF0000:0.5")
        assert region.labels() == ["target"]
        fixtures = backend_from_string("synthetic:fixtures")
        assert "fix-const-seven" in fixtures.labels()
        with pytest.raises(ValueError):
            backend_from_string("synthetic:banana:1")
        with pytest.raises(ValueError):
            backend_from_string("teapot:418")


@pytest.fixture(scope="module")
def backend():
    return ClassifierBackend("mobilenet_v3_small", seed=1)


class TestClassifierBackend:

    def test_advertises_one_label_per_class(self, backend):
        assert len(backend.labels()) == 1000
        assert backend.labels()[7] == "class_0007"

    def test_scores_are_softmax_rows(self, backend):
        rng = np.random.default_rng(0)
        batch = rng.random((2, 224, 224, 3))
        scores = backend.score(batch, backend.labels())
        assert scores.shape == (2, 1000)
        assert scores.min() >= 0.0 and scores.max() <= 1.0
        assert np.allclose(scores.sum(axis=1), 1.0, atol=1e-6)

    def test_label_subset_selects_columns(self, backend):
        rng = np.random.default_rng(1)
        batch = rng.random((1, 224, 224, 3))
        full = backend.score(batch, backend.labels())
        subset = backend.score(batch, ["class_0007", "class_0000"])
        assert subset[0, 0] == full[0, 7]
        assert subset[0, 1] == full[0, 0]

    def test_repeated_calls_identical(self, backend):
        rng = np.random.default_rng(2)
        batch = rng.random((1, 224, 224, 3))
        first = backend.score(batch, ["class_0003"])
        second = backend.score(batch, ["class_0003"])
        assert np.array_equal(first, second)

    def test_same_seed_same_model(self):
        rng = np.random.default_rng(3)
        batch = rng.random((1, 224, 224, 3))
        a = ClassifierBackend("mobilenet_v3_small", seed=7).score(batch, ["class_0001"])
        b = ClassifierBackend("mobilenet_v3_small", seed=7).score(batch, ["class_0001"])
        assert np.array_equal(a, b)

    def test_unknown_label_rejected(self, backend):
        with pytest.raises(UnknownLabelError):
            backend.score(np.zeros((1, 224, 224, 3)), ["no_such_class"])

    def test_label_count_must_match_output_dim(self):
        with pytest.raises(ValueError, match="classes"):
            ClassifierBackend("mobilenet_v3_small", labels=["just_one"])

    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError, match="model"):
            ClassifierBackend("not_a_model")
