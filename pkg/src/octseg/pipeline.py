"""Run engine: executes one request end to end with per-stage timing.

Both the HTTP service and the CLI funnel into run_segment; the other
entry points cover conversion, phantom materialization and surface
scoring. On failure every file written so far is removed, so an output
directory never holds a half-finished run.
"""

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import fileio, morphology
from .detectors import detect_ilm, detect_rpe, trace_boundary
from .errors import DegeneracyWarning
from .filters import binarize, otsu_threshold
from .phantom import (
    PhantomSpec,
    generate_phantom,
    spec_from_text,
    spec_to_text,
    surface_error,
)
from .schemas import (
    ConvertRequest,
    EvalRequest,
    MetricsReport,
    PhantomReport,
    PhantomRequest,
    RunReport,
    SegmentRequest,
    StageTiming,
)
from .volume import Surface, Volume

MARK_COLORS = {
    "rpe": (255, 0, 0),
    "ilm": (0, 255, 0),
    "traced": (255, 255, 0),
}


class _Run:
    """Tracks stage timings, written files and collected warnings."""

    def __init__(self):
        self.stages = []
        self.outputs = []
        self.notes = []
        self.t0 = time.perf_counter()

    def stage(self, name):
        run = self

        class _Stage:
            def __enter__(self):
                self.start = time.perf_counter()
                self.caught = warnings.catch_warnings(record=True)
                self.log = self.caught.__enter__()
                warnings.simplefilter("always", DegeneracyWarning)
                return self

            def __exit__(self, exc_type, exc, tb):
                for w in self.log:
                    if issubclass(w.category, DegeneracyWarning):
                        run.notes.append(f"{name}: {w.message}")
                self.caught.__exit__(exc_type, exc, tb)
                run.stages.append(
                    StageTiming(name=name, ms=(time.perf_counter() - self.start) * 1e3)
                )
                return False

        return _Stage()

    def wrote(self, path):
        self.outputs.append(str(path))
        return path

    def total_ms(self):
        return (time.perf_counter() - self.t0) * 1e3

    def cleanup(self):
        for path in self.outputs:
            try:
                Path(path).unlink()
            except OSError:
                pass


def _load_input(req: SegmentRequest):
    """Volume from a scan directory, or volume+truth from a phantom spec."""
    path = Path(req.input_path)
    if path.is_dir():
        return fileio.load_ascan_text(path), None
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    spec = spec_from_text(path)
    if req.seed is not None:
        spec.seed = req.seed
    volume, truth = generate_phantom(spec)
    return volume, truth


def _rescale(volume: Volume) -> Volume:
    peak = int(volume.data.max())
    if peak <= 255:
        return volume
    data = np.rint(volume.data.astype(np.float64) * (255.0 / peak)).astype(np.int32)
    return Volume(data, bit_max=255)


def _preprocess(volume: Volume, directive: str, threads: int) -> Volume:
    if directive == "none":
        return volume
    if directive.startswith("binarize="):
        threshold = float(directive.split("=", 1)[1])
    else:
        threshold, degenerate = otsu_threshold(volume.data)
        if degenerate:
            warnings.warn("volume is constant, preprocessing binarization is vacuous",
                          DegeneracyWarning)
    mask = binarize(volume.data, threshold)

    if directive.startswith("zs="):
        ops = directive.split("=", 1)[1].split(",")

        def run_slice(y):
            img = mask[y]
            for op in ops:
                if op == "thin":
                    img = morphology.zhang_suen_thin(img)
                elif op == "fill":
                    img = morphology.fill(img)
                elif op == "contour":
                    img = morphology.contour(img)
            return img

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                slices = list(pool.map(run_slice, range(mask.shape[0])))
        else:
            slices = [run_slice(y) for y in range(mask.shape[0])]
        mask = np.stack(slices)

    return Volume(mask.astype(np.int32) * 255, bit_max=255)


def _detect(volume: Volume, req: SegmentRequest, run: _Run) -> dict:
    surfaces = {}

    def run_rpe():
        return detect_rpe(volume, req.rpe.to_config())

    def run_ilm():
        return detect_ilm(volume, req.ilm.to_config())

    if req.detector == "rpe":
        with run.stage("detect_rpe"):
            surfaces["rpe"] = run_rpe()
    elif req.detector == "ilm":
        with run.stage("detect_ilm"):
            surfaces["ilm"] = run_ilm()
    elif req.detector == "both":
        if req.threads > 1:
            # the two detectors only read the volume, so they can race
            with run.stage("detect_both"):
                with ThreadPoolExecutor(max_workers=2) as pool:
                    rpe_f = pool.submit(run_rpe)
                    ilm_f = pool.submit(run_ilm)
                    surfaces["rpe"] = rpe_f.result()
                    surfaces["ilm"] = ilm_f.result()
        else:
            with run.stage("detect_rpe"):
                surfaces["rpe"] = run_rpe()
            with run.stage("detect_ilm"):
                surfaces["ilm"] = run_ilm()
    else:  # canny
        with run.stage("trace_boundary"):
            _, surfaces["traced"] = trace_boundary(
                volume,
                w1=req.w1, w2=req.w2, w3=req.w3,
                canny_sigma=req.canny_sigma,
                canny_low=req.canny_low,
                canny_high=req.canny_high,
                smooth_sigma=req.sigma,
                align=req.align,
                max_shift=req.max_shift,
                reference=req.reference,
                threads=req.threads,
            )
    return surfaces


def _export(volume, surfaces, truth, req: SegmentRequest, run: _Run, out: Path):
    surface_paths = {}
    for name, surf in surfaces.items():
        path = out / f"{name}_surface.txt"
        fileio.write_surface_text(surf, path)
        run.wrote(path)
        surface_paths[name] = str(path)

    if "obj" in req.emit:
        for name, surf in surfaces.items():
            path = out / f"{name}.obj"
            fileio.export_obj(surf, path, z_scale=req.z_scale)
            run.wrote(path)

    if "ppm" in req.emit:
        for y in range(volume.slices):
            marks = []
            for name, surf in surfaces.items():
                color = MARK_COLORS.get(name, (255, 0, 255))
                row = surf.depth[y]
                for x in range(volume.width):
                    if not np.isnan(row[x]):
                        marks.append((int(round(row[x])), x, color))
            img = fileio.SliceImage(volume.bscan(y), marks=marks, rescale=req.rescale)
            path = out / f"slice_{y:04d}.ppm"
            fileio.write_ppm(img, path)
            run.wrote(path)

    metrics = None
    if "metrics" in req.emit:
        if truth is None:
            run.notes.append("export: metrics requested but the input has no ground truth")
        else:
            # the band is the strongest edge, so traced paths score
            # against the same truth as the dedicated band detector
            ref = {"rpe": truth.rpe, "ilm": truth.ilm, "traced": truth.rpe}
            metrics = {
                name: surface_error(surf, ref[name]).as_dict()
                for name, surf in surfaces.items()
            }
            path = out / "metrics.json"
            path.write_text(json.dumps(metrics, indent=2) + "\n")
            run.wrote(path)
    return surface_paths, metrics


def run_segment(req: SegmentRequest) -> RunReport:
    """Execute one segmentation request; see SegmentRequest for knobs."""
    run = _Run()
    out = Path(req.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        with run.stage("load"):
            volume, truth = _load_input(req)
            if req.rescale:
                volume = _rescale(volume)
        if req.preprocessor != "none":
            with run.stage("preprocess"):
                volume = _preprocess(volume, req.preprocessor, req.threads)
        surfaces = _detect(volume, req, run)
        with run.stage("export"):
            surface_paths, metrics = _export(volume, surfaces, truth, req, run, out)
    except Exception:
        run.cleanup()
        raise

    report = RunReport(
        detector=req.detector,
        stages=run.stages,
        total_ms=run.total_ms(),
        outputs=run.outputs,
        surfaces=surface_paths,
        metrics=metrics,
        warnings=run.notes,
    )
    report_path = out / "report.json"
    report_path.write_text(report.model_dump_json(indent=2) + "\n")
    return report


def run_convert(req: ConvertRequest) -> RunReport:
    """Dump every slice of a text volume as a PPM image."""
    run = _Run()
    out = Path(req.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        with run.stage("load"):
            volume = fileio.load_ascan_text(req.input_path)
        with run.stage("export"):
            for y in range(volume.slices):
                img = fileio.SliceImage(volume.bscan(y), rescale=req.rescale)
                path = out / f"slice_{y:04d}.ppm"
                fileio.write_ppm(img, path)
                run.wrote(path)
    except Exception:
        run.cleanup()
        raise
    return RunReport(
        detector="none",
        stages=run.stages,
        total_ms=run.total_ms(),
        outputs=run.outputs,
        warnings=run.notes,
    )


def run_phantom(req: PhantomRequest) -> PhantomReport:
    """Materialize a phantom: volume text dir, truth grids, spec copy."""
    t0 = time.perf_counter()
    if req.spec_path:
        spec = spec_from_text(req.spec_path)
    elif req.spec is not None:
        spec = req.spec.to_spec()
    else:
        spec = PhantomSpec()
    if req.seed is not None:
        spec.seed = req.seed

    volume, truth = generate_phantom(spec)
    out = Path(req.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vol_dir = out / "volume"
    fileio.write_ascan_text(volume, vol_dir)
    ilm_path = out / "truth_ilm.txt"
    rpe_path = out / "truth_rpe.txt"
    fileio.write_surface_text(truth.ilm, ilm_path)
    fileio.write_surface_text(truth.rpe, rpe_path)
    spec_path = out / "phantom.spec"
    spec_to_text(spec, spec_path)
    return PhantomReport(
        volume_dir=str(vol_dir),
        ilm_path=str(ilm_path),
        rpe_path=str(rpe_path),
        spec_path=str(spec_path),
        ms=(time.perf_counter() - t0) * 1e3,
    )


def run_eval(req: EvalRequest) -> MetricsReport:
    """Score a detected surface grid against a truth grid."""
    detected = fileio.read_surface_text(req.detected_path)
    truth = fileio.read_surface_text(req.truth_path)
    metrics = surface_error(detected, truth)
    return MetricsReport(**metrics.as_dict())
