import json
import time

import numpy as np
import pytest

from mcrise import cli
from mcrise.estimators import ColorSaliencyStack, stack_to_json_dict
from mcrise.maskgen import DEFAULT_COLORS


@pytest.fixture
def demo_image(tmp_png):
    rng = np.random.default_rng(0)
    image = rng.random((8, 8, 3))
    image[0:4, 0:4] = (1.0, 0.0, 0.0)
    return tmp_png("demo.png", image)


def explain_args(image, out_dir, method="mcrise", extra=()):
    return [
        "explain",
        "--model", "synthetic:region_color:0,0,4,4:#FF0000:0.6",
        "--image", str(image),
        "--labels", "target",
        "--method", method,
        "--num-masks", "120",
        "--cell-grid", "4x4",
        "--seed", "5",
        "--out-dir", str(out_dir),
        *extra,
    ]


class TestConfigResolution:
    def test_defaults_match_reference_configuration(self):
        parser = cli._build_parser()
        args = parser.parse_args(["explain", "--method", "rise"])
        settings = cli.resolve_run(args)
        run = settings["run"]
        assert run.num_masks == 8000
        assert run.p_mask == 0.5
        assert run.color_set == DEFAULT_COLORS
        assert run.interpolate and run.shift
        assert run.batch_size == 32
        assert settings["workers"] == 1

    def test_flags_override_config_file(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"num_masks": 50, "seed": 9, "p_mask": 0.3}))
        parser = cli._build_parser()
        args = parser.parse_args(
            ["explain", "--config", str(config), "--num-masks", "75"]
        )
        run = cli.resolve_run(args)["run"]
        assert run.num_masks == 75  # flag wins
        assert run.seed == 9  # config wins over default
        assert run.p_mask == 0.3

    def test_zero_masks_is_config_error(self, demo_image, tmp_path):
        args = explain_args(demo_image, tmp_path / "out")
        args[args.index("--num-masks") + 1] = "0"
        assert cli.main(args) == cli.EXIT_CONFIG

    def test_colors_flag_parsing(self):
        parser = cli._build_parser()
        args = parser.parse_args(["explain", "--colors", "#FF0000,#00FF00"])
        run = cli.resolve_run(args)["run"]
        assert run.color_set == ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))

    def test_bad_cell_grid_rejected(self):
        parser = cli._build_parser()
        args = parser.parse_args(["explain", "--cell-grid", "7by7"])
        with pytest.raises(cli.ConfigError):
            cli.resolve_run(args)


class TestExplain:
    def test_mcrise_artifact_set(self, demo_image, tmp_path):
        out = tmp_path / "out"
        assert cli.main(explain_args(demo_image, out)) == 0
        names = {p.name for p in out.iterdir()}
        assert "saliency_mcrise_target.json" in names
        assert "saliency_mcrise_target.bin" in names
        assert "panel_mcrise_target.png" in names
        assert "response_mcrise_target.json" in names
        assert "response_mcrise_target.png" in names
        assert "manifest.json" in names
        heatmaps = [n for n in names if n.startswith("heatmap_mcrise_target_c")]
        assert len(heatmaps) == 5  # one per default palette color

    def test_manifest_lists_outputs_with_checksums(self, demo_image, tmp_path):
        out = tmp_path / "out"
        cli.main(explain_args(demo_image, out, method="rise"))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["engine_version"]
        assert manifest["config"]["num_masks"] == 120
        listed = {entry["path"] for entry in manifest["outputs"]}
        actual = {p.name for p in out.iterdir()} - {"manifest.json"}
        assert listed == actual
        for entry in manifest["outputs"]:
            assert len(entry["sha256"]) == 64 and entry["bytes"] > 0

    def test_rise_and_debias_write_maps(self, demo_image, tmp_path):
        for method in ("rise", "debias"):
            out = tmp_path / method
            assert cli.main(explain_args(demo_image, out, method=method)) == 0
            assert (out / f"saliency_{method}_target.json").exists()
            assert (out / f"heatmap_{method}_target.png").exists()
            assert (out / f"overlay_{method}_target.png").exists()

    def test_single_worker_reruns_are_byte_identical(self, demo_image, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cli.main(explain_args(demo_image, out_a))
        cli.main(explain_args(demo_image, out_b))
        for name in ("saliency_mcrise_target.json", "saliency_mcrise_target.bin"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_rerun_from_manifest_reproduces_artifacts(self, demo_image, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cli.main(explain_args(demo_image, out_a, method="rise"))
        code = cli.main([
            "explain", "--config", str(out_a / "manifest.json"),
            "--out-dir", str(out_b),
        ])
        assert code == 0
        name = "saliency_rise_target.json"
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_mask_dump_option(self, demo_image, tmp_path):
        out = tmp_path / "out"
        args = explain_args(demo_image, out, method="rise")
        args[args.index("--num-masks") + 1] = "6"
        assert cli.main(args + ["--dump-masks"]) == 0
        dumps = sorted(p.name for p in (out / "masks").iterdir())
        assert dumps[0] == "mask_000000.bin" and len(dumps) == 6

    def test_unreachable_model_exits_3_and_leaves_no_partial_outputs(
        self, demo_image, tmp_path
    ):
        out = tmp_path / "out"
        args = explain_args(demo_image, out)
        args[args.index("--model") + 1] = "http://127.0.0.1:1"
        code = cli.main(args + ["--dump-masks"])
        assert code == cli.EXIT_TRANSPORT
        leftover = [p for p in out.rglob("*") if p.is_file()]
        assert leftover == []

    def test_unknown_method_rejected_by_parser(self, demo_image, tmp_path):
        with pytest.raises(SystemExit) as info:
            cli.main(explain_args(demo_image, tmp_path / "o", method="banana"))
        assert info.value.code == 2


class TestEvaluate:
    def test_side_by_side_summary(self, demo_image, tmp_path, capsys):
        out = tmp_path / "eval"
        code = cli.main([
            "evaluate",
            "--model", "synthetic:region_color:0,0,4,4:#FF0000:0.6",
            "--image", str(demo_image),
            "--labels", "target",
            "--method", "rise,random,mcrise",
            "--num-masks", "150",
            "--cell-grid", "4x4",
            "--seed", "3",
            "--steps", "16",
            "--out-dir", str(out),
        ])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        methods = [r["method"] for r in summary["results"]]
        assert methods == ["rise", "random", "mcrise"]
        assert [r["metric"] for r in summary["results"]] == [
            "deletion", "deletion", "ca-deletion",
        ]
        for result in summary["results"]:
            assert 0.0 <= result["auc"] <= 1.0
            assert (out / result["curve"]).exists()
            assert (out / result["curve"].replace(".csv", ".json")).exists()
        assert "AUC" in capsys.readouterr().out

    def test_flat_zero_stack_artifact_defines_finite_curve(self, demo_image, tmp_path):
        stack = ColorSaliencyStack(
            channels=np.zeros((2, 8, 8)), label="target",
            color_set=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)), n_samples=1,
        )
        artifact = tmp_path / "zero_stack.json"
        artifact.write_text(json.dumps(stack_to_json_dict(stack)))
        out = tmp_path / "eval"
        code = cli.main([
            "evaluate",
            "--model", "synthetic:constant:0.5",
            "--image", str(demo_image),
            "--labels", "target",
            "--method", str(artifact),
            "--metric", "ca-deletion",
            "--steps", "8",
            "--out-dir", str(out),
        ])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert np.isfinite(summary["results"][0]["auc"])

    def test_mismatched_metric_is_config_error(self, demo_image, tmp_path):
        code = cli.main([
            "evaluate",
            "--model", "synthetic:constant:0.5",
            "--image", str(demo_image),
            "--labels", "target",
            "--method", "rise",
            "--metric", "ca-deletion",
            "--out-dir", str(tmp_path / "eval"),
        ])
        assert code == cli.EXIT_CONFIG

    def test_multiple_labels_rejected(self, demo_image, tmp_path):
        code = cli.main([
            "evaluate",
            "--model", "synthetic:constant:0.5",
            "--image", str(demo_image),
            "--labels", "a,b",
            "--method", "random",
            "--out-dir", str(tmp_path / "eval"),
        ])
        assert code == cli.EXIT_CONFIG


class TestSelftest:
    def test_quick_suite_passes_under_ten_seconds(self, capsys):
        start = time.monotonic()
        code = cli.main(["selftest", "--quick"])
        elapsed = time.monotonic() - start
        out = capsys.readouterr().out
        assert code == 0
        assert elapsed < 10.0
        assert out.count("PASS") == 8 and "FAIL" not in out

    def test_tampered_accumulator_fails_suite(self, capsys):
        code = cli.main(["selftest", "--quick", "--tamper"])
        assert code == cli.EXIT_VALIDATION
        assert "FAIL" in capsys.readouterr().out
