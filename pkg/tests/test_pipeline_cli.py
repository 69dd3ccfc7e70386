import json
import subprocess
import sys
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from octseg import pipeline
from octseg.cli import main
from octseg.errors import DegeneracyError
from octseg.fileio import read_surface_text, write_ascan_text
from octseg.phantom import PhantomSpec, spec_to_text
from octseg.schemas import ConvertRequest, EvalRequest, PhantomRequest, SegmentRequest
from octseg.volume import Volume

from _support import parse_ppm


def small_spec(**overrides) -> PhantomSpec:
    base = dict(width=48, depth=128, slices=4, noise_std=3.0,
                rpe_amp_x=8.0, ilm_amp_y=4.0, seed=11)
    base.update(overrides)
    return PhantomSpec(**base)


@pytest.fixture
def spec_file(tmp_path):
    p = tmp_path / "phantom.spec"
    spec_to_text(small_spec(), p)
    return p


@pytest.fixture
def dark_volume_dir(tmp_path):
    d = tmp_path / "dark"
    d.mkdir()
    write_ascan_text(Volume(np.zeros((2, 64, 8), dtype=np.int32)), d)
    return d


class TestRunPhantom:
    def test_materializes_all_artifacts(self, tmp_path, spec_file):
        out = tmp_path / "out"
        report = pipeline.run_phantom(
            PhantomRequest(out_dir=str(out), spec_path=str(spec_file))
        )
        vol_dir = Path(report.volume_dir)
        assert len(list(vol_dir.iterdir())) == 4
        assert read_surface_text(report.ilm_path).depth.shape == (4, 48)
        assert read_surface_text(report.rpe_path).depth.shape == (4, 48)
        assert Path(report.spec_path).exists()
        assert report.ms > 0

    def test_seed_override_changes_volume(self, tmp_path, spec_file):
        reports = [
            pipeline.run_phantom(PhantomRequest(
                out_dir=str(tmp_path / f"o{i}"), spec_path=str(spec_file), seed=seed))
            for i, seed in enumerate((100, 200))
        ]
        a = (Path(reports[0].volume_dir) / "bscan_0000.txt").read_text()
        b = (Path(reports[1].volume_dir) / "bscan_0000.txt").read_text()
        assert a != b


class TestRunSegment:
    def test_both_detectors_with_obj_and_metrics(self, tmp_path, spec_file):
        out = tmp_path / "out"
        report = pipeline.run_segment(SegmentRequest(
            input_path=str(spec_file), out_dir=str(out),
            detector="both", emit=["obj", "metrics"],
        ))
        assert set(report.surfaces) == {"rpe", "ilm"}
        for name in ("rpe", "ilm"):
            assert (out / f"{name}_surface.txt").exists()
            assert (out / f"{name}.obj").exists()
            assert report.metrics[name]["mae"] < 3.0
        assert (out / "metrics.json").exists()
        assert (out / "report.json").exists()
        stage_names = [s.name for s in report.stages]
        assert "load" in stage_names and "export" in stage_names

    def test_stage_times_account_for_total(self, tmp_path, spec_file):
        report = pipeline.run_segment(SegmentRequest(
            input_path=str(spec_file), out_dir=str(tmp_path / "out"), detector="rpe",
        ))
        stage_sum = sum(s.ms for s in report.stages)
        assert 0 < stage_sum <= report.total_ms + 1.0
        assert report.total_ms - stage_sum < 100.0

    def test_traced_boundary_scores_against_band_truth(self, tmp_path, spec_file):
        out = tmp_path / "out"
        report = pipeline.run_segment(SegmentRequest(
            input_path=str(spec_file), out_dir=str(out),
            detector="canny", emit=["metrics"],
        ))
        assert set(report.surfaces) == {"traced"}
        assert report.metrics["traced"]["mae"] < 5.0

    def test_metrics_without_truth_becomes_warning(self, tmp_path, volume_dir):
        d, _ = volume_dir
        report = pipeline.run_segment(SegmentRequest(
            input_path=str(d), out_dir=str(tmp_path / "out"),
            detector="rpe", emit=["metrics"],
        ))
        assert report.metrics is None
        assert any("ground truth" in note for note in report.warnings)

    def test_preprocess_stage_runs(self, tmp_path, spec_file):
        report = pipeline.run_segment(SegmentRequest(
            input_path=str(spec_file), out_dir=str(tmp_path / "out"),
            preprocessor="binarize=150", detector="rpe",
        ))
        assert "preprocess" in [s.name for s in report.stages]
        surf = read_surface_text(report.surfaces["rpe"])
        assert not np.isnan(surf.depth).any()

    def test_thinning_ops_parallel_safe(self, tmp_path, spec_file):
        report = pipeline.run_segment(SegmentRequest(
            input_path=str(spec_file), out_dir=str(tmp_path / "out"),
            preprocessor="zs=fill,contour", detector="canny", threads=2,
        ))
        assert "preprocess" in [s.name for s in report.stages]

    def test_ppm_emission_covers_every_slice(self, tmp_path, spec_file):
        out = tmp_path / "out"
        pipeline.run_segment(SegmentRequest(
            input_path=str(spec_file), out_dir=str(out),
            detector="rpe", emit=["ppm"],
        ))
        dumped = sorted(out.glob("slice_*.ppm"))
        assert len(dumped) == 4
        w, h, _, payload = parse_ppm(dumped[0])
        assert (w, h) == (48, 128)
        px = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
        reds = (px[..., 0] == 255) & (px[..., 1] == 0) & (px[..., 2] == 0)
        assert reds.sum() == 48  # one mark per column

    def test_thread_count_does_not_change_artifacts(self, tmp_path, spec_file):
        blobs = {}
        for threads in (1, 4):
            out = tmp_path / f"t{threads}"
            pipeline.run_segment(SegmentRequest(
                input_path=str(spec_file), out_dir=str(out),
                detector="both", emit=["obj"], threads=threads,
            ))
            blobs[threads] = {
                p.name: p.read_bytes()
                for p in out.iterdir() if p.name != "report.json"
            }
        assert blobs[1].keys() == blobs[4].keys()
        for name in blobs[1]:
            assert blobs[1][name] == blobs[4][name], name

    def test_phantom_then_eval_truth_is_exact(self, tmp_path, spec_file):
        report = pipeline.run_phantom(
            PhantomRequest(out_dir=str(tmp_path / "p"), spec_path=str(spec_file))
        )
        metrics = pipeline.run_eval(EvalRequest(
            detected_path=report.rpe_path, truth_path=report.rpe_path,
        ))
        assert metrics.mae == 0.0
        assert metrics.defined_fraction == 1.0


class TestRunConvert:
    def test_pinned_header(self, tmp_path):
        d = tmp_path / "v"
        d.mkdir()
        write_ascan_text(Volume(np.array([[[0, 255], [128, 64]]], dtype=np.int32)), d)
        out = tmp_path / "out"
        report = pipeline.run_convert(ConvertRequest(input_path=str(d), out_dir=str(out)))
        assert len(report.outputs) == 1
        blob = (out / "slice_0000.ppm").read_bytes()
        assert blob[:11] == b"P6\n2 2\n255\n"

    def test_failure_removes_partial_outputs(self, tmp_path):
        d = tmp_path / "v"
        d.mkdir()
        data = np.zeros((2, 2, 2), dtype=np.int32)
        data[1, 0, 0] = 300  # breaks the second slice dump, after the first is on disk
        write_ascan_text(Volume(data), d)
        out = tmp_path / "out"
        with pytest.raises(ValueError):
            pipeline.run_convert(ConvertRequest(input_path=str(d), out_dir=str(out)))
        assert list(out.glob("*.ppm")) == []

    def test_rescale_makes_wide_range_dumpable(self, tmp_path):
        d = tmp_path / "v"
        d.mkdir()
        data = np.zeros((1, 2, 2), dtype=np.int32)
        data[0, 0, 0] = 1000
        write_ascan_text(Volume(data), d)
        out = tmp_path / "out"
        pipeline.run_convert(ConvertRequest(input_path=str(d), out_dir=str(out), rescale=True))
        _, _, _, payload = parse_ppm(out / "slice_0000.ppm")
        assert max(payload) == 255


class TestCliExitCodes:
    def test_help(self, capsys):
        assert main(["--help"]) == 0
        assert "segment" in capsys.readouterr().out

    def test_invalid_detector_is_usage(self, tmp_path, spec_file, capsys):
        rc = main(["segment", "--input", str(spec_file),
                   "--out", str(tmp_path / "o"), "--detector", "bogus"])
        assert rc == 1

    def test_invalid_preprocessor_is_usage(self, tmp_path, spec_file, capsys):
        rc = main(["segment", "--input", str(spec_file),
                   "--out", str(tmp_path / "o"), "--pre", "sharpen"])
        assert rc == 1

    def test_missing_input_is_io(self, tmp_path, capsys):
        rc = main(["segment", "--input", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_corrupt_scan_is_io(self, tmp_path, capsys):
        d = tmp_path / "v"
        d.mkdir()
        (d / "a.txt").write_text("1 2\n3\n")
        rc = main(["segment", "--input", str(d), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_dark_volume_is_degenerate(self, tmp_path, dark_volume_dir, capsys):
        rc = main(["segment", "--input", str(dark_volume_dir),
                   "--out", str(tmp_path / "o"), "--detector", "ilm"])
        assert rc == 3

    def test_happy_segment(self, tmp_path, spec_file, capsys):
        out = tmp_path / "o"
        rc = main(["segment", "--input", str(spec_file), "--out", str(out),
                   "--detector", "rpe"])
        assert rc == 0
        assert (out / "report.json").exists()
        assert "detect_rpe" in capsys.readouterr().out

    def test_console_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "octseg.cli", "--help"],
            capture_output=True, text=True, timeout=60,
        )
        assert proc.returncode == 0
        assert "segment" in proc.stdout


class TestCliSubcommands:
    def test_convert(self, tmp_path, volume_dir, capsys):
        d, _ = volume_dir
        out = tmp_path / "o"
        assert main(["convert", "--input", str(d), "--out", str(out)]) == 0
        assert (out / "slice_0000.ppm").exists()

    def test_phantom_and_eval_round_trip(self, tmp_path, spec_file, capsys):
        out = tmp_path / "o"
        assert main(["phantom", "--out", str(out), "--spec", str(spec_file)]) == 0
        report = json.loads(capsys.readouterr().out)
        rc = main(["eval", "--detected", report["rpe_path"],
                   "--truth", report["rpe_path"]])
        assert rc == 0
        metrics = json.loads(capsys.readouterr().out)
        assert metrics["mae"] == 0.0

    def test_config_file_loses_to_flags(self, tmp_path, spec_file, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"input={spec_file}\nout={tmp_path / 'o'}\ndetector=rpe\nemit=metrics\n"
        )
        rc = main(["segment", "--config", str(cfg), "--detector", "ilm"])
        assert rc == 0
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["detector"] == "ilm"
        assert set(report["surfaces"]) == {"ilm"}
        assert report["metrics"] is not None  # emit came from the file

    def test_config_file_alone_drives_run(self, tmp_path, spec_file, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"input={spec_file}\nout={tmp_path / 'o'}\ndetector=rpe\n")
        assert main(["segment", "--config", str(cfg)]) == 0
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["detector"] == "rpe"

    def test_malformed_config_is_usage(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("just words\n")
        assert main(["segment", "--config", str(cfg)]) == 1


@pytest.fixture(scope="module")
def live_server():
    uvicorn = pytest.importorskip("uvicorn")
    from octseg.service import app

    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("test server never came up")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestCliAgainstServer:
    def test_segment_round_trip(self, tmp_path, spec_file, live_server, capsys):
        out = tmp_path / "o"
        rc = main(["segment", "--server", live_server,
                   "--input", str(spec_file), "--out", str(out),
                   "--detector", "rpe"])
        assert rc == 0
        assert (out / "rpe_surface.txt").exists()
        assert "detect_rpe" in capsys.readouterr().out

    def test_server_io_error_maps_to_exit_2(self, tmp_path, live_server, capsys):
        rc = main(["segment", "--server", live_server,
                   "--input", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert rc == 2

    def test_server_degeneracy_maps_to_exit_3(self, tmp_path, dark_volume_dir,
                                              live_server, capsys):
        rc = main(["segment", "--server", live_server,
                   "--input", str(dark_volume_dir), "--out", str(tmp_path / "o"),
                   "--detector", "ilm"])
        assert rc == 3

    def test_unreachable_server_is_io(self, tmp_path, spec_file, capsys):
        rc = main(["segment", "--server", "http://127.0.0.1:1",
                   "--input", str(spec_file), "--out", str(tmp_path / "o")])
        assert rc == 2
