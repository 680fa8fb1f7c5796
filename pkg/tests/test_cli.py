import json

import pytest
import torch
from click.testing import CliRunner

from pixelman.cli import EXIT_BACKEND, EXIT_INVALID, main
from pixelman.io import load_image, save_image, save_mask

from conftest import block_image


@pytest.fixture
def workdir(tmp_path):
    img = torch.round(block_image() * 255.0) / 255.0
    save_image(img, tmp_path / "img.png")
    mask = torch.zeros(64, 64, dtype=torch.bool)
    mask[8:24, 8:24] = True
    save_mask(mask, tmp_path / "mask.png")
    return tmp_path


def run_cli(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


class TestEdit:
    def test_basic_edit_writes_outputs(self, workdir):
        out = workdir / "out"
        r = run_cli("edit", "--input", workdir / "img.png",
                    "--mask", workdir / "mask.png",
                    "--dx", 24, "--dy", 24, "--steps", 8,
                    "--no-guidance", "--out", out)
        assert r.exit_code == 0, r.output
        assert (out / "output.png").exists()
        report = json.loads((out / "report.json").read_text())
        assert report["nfe"] == 24

    def test_identity_edit_reproduces_input(self, workdir):
        out = workdir / "out"
        r = run_cli("edit", "--input", workdir / "img.png",
                    "--mask", workdir / "mask.png",
                    "--dx", 0, "--dy", 0, "--steps", 8,
                    "--no-guidance", "--out", out)
        assert r.exit_code == 0, r.output
        src = load_image(workdir / "img.png")
        result = load_image(out / "output.png")
        assert torch.allclose(result, src, atol=1 / 255.0)

    def test_nfe_with_guidance(self, workdir):
        out = workdir / "out"
        r = run_cli("edit", "--input", workdir / "img.png",
                    "--mask", workdir / "mask.png",
                    "--dx", 24, "--dy", 24, "--steps", 16, "--out", out)
        assert r.exit_code == 0, r.output
        assert json.loads((out / "report.json").read_text())["nfe"] == 64

    def test_invalid_args_exit_2(self, workdir):
        r = run_cli("edit", "--input", workdir / "img.png",
                    "--mask", workdir / "mask.png",
                    "--dx", 63, "--dy", 63, "--steps", 8,
                    "--out", workdir / "out")
        # the mask leaves the frame entirely: invalid request
        assert r.exit_code != 0

    def test_bad_config_exit_2(self, workdir):
        cfgfile = workdir / "cfg.yaml"
        cfgfile.write_text("steps: -3\n")
        r = run_cli("edit", "--input", workdir / "img.png",
                    "--mask", workdir / "mask.png", "--dx", 8,
                    "--out", workdir / "out", "--config", cfgfile)
        assert r.exit_code == EXIT_INVALID

    def test_unavailable_backend_exit_3(self, workdir):
        r = run_cli("edit", "--input", workdir / "img.png",
                    "--mask", workdir / "mask.png", "--dx", 8,
                    "--backend", "ldm", "--out", workdir / "out")
        assert r.exit_code == EXIT_BACKEND

    def test_config_file_applies(self, workdir):
        cfgfile = workdir / "cfg.yaml"
        cfgfile.write_text("steps: 8\nguidance:\n  enabled: false\n")
        out = workdir / "out"
        r = run_cli("edit", "--input", workdir / "img.png",
                    "--mask", workdir / "mask.png", "--dx", 16,
                    "--out", out, "--config", cfgfile)
        assert r.exit_code == 0, r.output
        assert json.loads((out / "report.json").read_text())["nfe"] == 24

    def test_cli_overrides_config_file(self, workdir):
        cfgfile = workdir / "cfg.yaml"
        cfgfile.write_text("steps: 16\nguidance:\n  enabled: false\n")
        out = workdir / "out"
        r = run_cli("edit", "--input", workdir / "img.png",
                    "--mask", workdir / "mask.png", "--dx", 16,
                    "--steps", 8, "--out", out, "--config", cfgfile)
        assert r.exit_code == 0, r.output
        report = json.loads((out / "report.json").read_text())
        assert len(report["steps"]) == 8


class TestBench:
    def test_bench_manifest(self, workdir):
        entries = [{"id": "identity", "image": "img.png", "mask": "mask.png",
                    "task": "move", "dx": 0, "dy": 0},
                   {"id": "move", "image": "img.png", "mask": "mask.png",
                    "task": "move", "dx": 16, "dy": 16}]
        (workdir / "manifest.json").write_text(json.dumps(
            {"dataset": "cli-test", "entries": entries}))
        out = workdir / "bench"
        r = run_cli("bench", "--manifest", workdir / "manifest.json",
                    "--steps", 8, "--out", out)
        assert r.exit_code == 0, r.output
        assert (out / "report.csv").exists()
        agg = json.loads(r.output[r.output.index("{"):])
        assert agg["entries_total"] == 2 and agg["entries_failed"] == 0

    def test_bench_missing_manifest_exit_2(self, workdir):
        r = run_cli("bench", "--manifest", workdir / "nope.json",
                    "--out", workdir / "bench")
        assert r.exit_code == EXIT_INVALID

    def test_bench_malformed_manifest_exit_2(self, workdir):
        bad = workdir / "bad.json"
        bad.write_text(json.dumps({"entries": [
            {"id": "x", "image": "missing.png", "mask": "mask.png"}]}))
        r = run_cli("bench", "--manifest", bad, "--out", workdir / "bench")
        assert r.exit_code == EXIT_INVALID


class TestHelp:
    def test_commands_registered(self):
        r = run_cli("--help")
        assert r.exit_code == 0
        for cmd in ("edit", "bench", "serve"):
            assert cmd in r.output
