"""Pydantic request/response models shared by the service and the CLI.

The CLI builds these models from flags and either executes them
in-process or posts them to a running service; the service exposes the
same models over HTTP. Requests reference volumes by filesystem path
because scans are far too large to ship in JSON bodies.
"""

from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator

from .detectors import IlmConfig, RpeConfig
from .phantom import PhantomSpec

EMIT_CHOICES = ("ppm", "obj", "metrics")


class RpeParams(BaseModel):
    iterations: int = 3
    band_schedule: list = Field(default=[(10, 20), (10, 10), (5, 5)])
    window_schedule: list = Field(default=[(30, 2), (40, 2), (20, 2)])
    initial_window: tuple = (30, 2)
    final_window: tuple = (20, 2)
    tophat_size: int = 5

    def to_config(self) -> RpeConfig:
        cfg = RpeConfig(
            iterations=self.iterations,
            band_schedule=tuple(tuple(b) for b in self.band_schedule),
            window_schedule=tuple(tuple(w) for w in self.window_schedule),
            initial_window=tuple(self.initial_window),
            final_window=tuple(self.final_window),
            tophat_size=self.tophat_size,
        )
        cfg.validate()
        return cfg


class IlmParams(BaseModel):
    noise_rows: int = 5
    zero_fraction: float = 0.005
    band_schedule: list = Field(default=[(15, 30), (3, 27)])
    window_schedule: list = Field(default=[[(1, 25), (25, 1)], [(10, 1)]])
    iterations: int = 2

    def to_config(self) -> IlmConfig:
        cfg = IlmConfig(
            noise_rows=self.noise_rows,
            zero_fraction=self.zero_fraction,
            band_schedule=tuple(tuple(b) for b in self.band_schedule),
            window_schedule=tuple(tuple(tuple(w) for w in ws) for ws in self.window_schedule),
            iterations=self.iterations,
        )
        cfg.validate()
        return cfg


class SegmentRequest(BaseModel):
    """One segmentation run: where to read, what to run, what to write.

    input_path may be a directory of A-scan text files or a phantom
    spec file (key=value), in which case the volume is synthesized and
    ground-truth metrics become available.
    """

    input_path: str
    out_dir: str
    preprocessor: str = "none"
    detector: Literal["rpe", "ilm", "both", "canny"] = "both"
    w1: float = 0.6
    w2: float = 0.4
    w3: float = 0.0
    canny_sigma: float = 2.0
    canny_low: float = 0.1
    canny_high: float = 0.3
    sigma: float = 1.0
    align: bool = False
    max_shift: int = 10
    reference: int = 0
    seed: Optional[int] = None
    threads: int = 1
    emit: list = Field(default_factory=list)
    z_scale: float = 1.0
    rescale: bool = False
    rpe: RpeParams = Field(default_factory=RpeParams)
    ilm: IlmParams = Field(default_factory=IlmParams)

    @field_validator("preprocessor")
    @classmethod
    def _check_pre(cls, v: str) -> str:
        if v == "none" or v == "otsu":
            return v
        if v.startswith("binarize="):
            try:
                float(v.split("=", 1)[1])
            except ValueError:
                raise ValueError("binarize needs a numeric threshold, e.g. binarize=90")
            return v
        if v.startswith("zs="):
            ops = [op for op in v.split("=", 1)[1].split(",") if op]
            bad = [op for op in ops if op not in ("thin", "fill", "contour")]
            if bad or not ops:
                raise ValueError("zs ops must be a comma list of thin/fill/contour")
            return v
        raise ValueError("preprocessor must be none, binarize=<T>, otsu, or zs=<ops>")

    @field_validator("emit")
    @classmethod
    def _check_emit(cls, v: list) -> list:
        bad = [e for e in v if e not in EMIT_CHOICES]
        if bad:
            raise ValueError(f"emit entries must be among {EMIT_CHOICES}, got {bad}")
        return list(dict.fromkeys(v))

    @field_validator("threads")
    @classmethod
    def _check_threads(cls, v: int) -> int:
        if v < 1:
            raise ValueError("threads must be >= 1")
        return v


class StageTiming(BaseModel):
    name: str
    ms: float


class RunReport(BaseModel):
    """What a run did: per-stage wall clock, artifacts, warnings."""

    detector: str
    stages: list[StageTiming]
    total_ms: float
    outputs: list[str]
    surfaces: dict[str, str] = Field(default_factory=dict)
    metrics: Optional[dict] = None
    warnings: list[str] = Field(default_factory=list)


class ConvertRequest(BaseModel):
    input_path: str
    out_dir: str
    rescale: bool = False


class PhantomSpecModel(BaseModel):
    """Wire mirror of the phantom generator's spec."""

    width: int = 128
    depth: int = 128
    slices: int = 16
    ilm_base: float = 60.0
    ilm_amp_x: float = 0.0
    ilm_period_x: float = 0.0
    ilm_amp_y: float = 10.0
    ilm_period_y: float = 0.0
    rpe_base: float = 90.0
    rpe_amp_x: float = 15.0
    rpe_period_x: float = 0.0
    rpe_amp_y: float = 0.0
    rpe_period_y: float = 0.0
    vitreous_intensity: float = 0.0
    tissue_intensity: float = 120.0
    band_intensity: float = 200.0
    band_slope: float = 15.0
    band_thickness: float = 6.0
    below_intensity: float = 20.0
    noise_std: float = 4.0
    outlier_fraction: float = 0.0
    outlier_intensity: float = 255.0
    shadow_fraction: float = 0.0
    seed: int = 0
    bit_max: int = 255

    def to_spec(self) -> PhantomSpec:
        spec = PhantomSpec(**self.model_dump())
        spec.validate()
        return spec


class PhantomRequest(BaseModel):
    out_dir: str
    spec_path: Optional[str] = None
    spec: Optional[PhantomSpecModel] = None
    seed: Optional[int] = None


class PhantomReport(BaseModel):
    volume_dir: str
    ilm_path: str
    rpe_path: str
    spec_path: str
    ms: float


class EvalRequest(BaseModel):
    detected_path: str
    truth_path: str


class MetricsReport(BaseModel):
    mae: float
    max_abs: float
    bias: float
    defined_fraction: float
