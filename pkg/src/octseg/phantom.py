"""Synthetic layered volumes with known ground truth, plus the
surface-error metrics used to score detections against them.

The intensity model stacks four zones per A-scan: noise above the
first surface, tissue between the first surface and the bright band,
the band itself (triangular axial profile peaking at the band center,
so the brightest sample sits at the true surface), and a darker zone
below. Speckle patches and fully dark shadow columns are injected on
top, then truncated Gaussian noise.

Randomness is reproducible and parallel-safe: slice y draws from
default_rng(SeedSequence(entropy=seed, spawn_key=(y,))) (PCG64), so
generating slices serially or concurrently yields identical volumes.
"""

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .errors import DegeneracyError, ParseError
from .volume import Surface, Volume


@dataclass
class PhantomSpec:
    """Geometry, intensities and corruption levels of a synthetic scan.

    Surfaces follow base + amp_x * sin(2*pi*x / period_x)
    + amp_y * cos(2*pi*y / period_y); zero amplitude flattens a term.
    """

    width: int = 128
    depth: int = 128
    slices: int = 16

    ilm_base: float = 60.0
    ilm_amp_x: float = 0.0
    ilm_period_x: float = 0.0  # 0 means use the full width
    ilm_amp_y: float = 10.0
    ilm_period_y: float = 0.0  # 0 means use the full slice count

    rpe_base: float = 90.0
    rpe_amp_x: float = 15.0
    rpe_period_x: float = 0.0
    rpe_amp_y: float = 0.0
    rpe_period_y: float = 0.0

    vitreous_intensity: float = 0.0
    tissue_intensity: float = 120.0
    band_intensity: float = 200.0
    band_slope: float = 15.0  # intensity drop per voxel away from the band center
    band_thickness: float = 6.0
    below_intensity: float = 20.0

    noise_std: float = 4.0
    outlier_fraction: float = 0.0  # share of columns covered by speckle patches
    outlier_intensity: float = 255.0
    shadow_fraction: float = 0.0  # share of fully dark columns
    seed: int = 0
    bit_max: int = 255

    def validate(self):
        if min(self.width, self.depth, self.slices) < 1:
            raise ValueError("phantom dimensions must be positive")
        if self.noise_std < 0 or not (0 <= self.outlier_fraction < 1):
            raise ValueError("bad corruption levels")
        if not (0 <= self.shadow_fraction < 1):
            raise ValueError("shadow fraction must lie in [0, 1)")
        if self.band_thickness <= 0:
            raise ValueError("band thickness must be positive")

    def surface_rows(self, which: str, y: int) -> np.ndarray:
        """The (W,) depth profile of a surface at slice y."""
        if which == "ilm":
            base, ax, px, ay, py = (
                self.ilm_base, self.ilm_amp_x, self.ilm_period_x,
                self.ilm_amp_y, self.ilm_period_y,
            )
        else:
            base, ax, px, ay, py = (
                self.rpe_base, self.rpe_amp_x, self.rpe_period_x,
                self.rpe_amp_y, self.rpe_period_y,
            )
        px = px or self.width
        py = py or self.slices
        x = np.arange(self.width, dtype=np.float64)
        row = base + ax * np.sin(2 * np.pi * x / px)
        row = row + ay * np.cos(2 * np.pi * y / py)
        return row


@dataclass
class GroundTruth:
    """True surfaces and corruption masks of a generated phantom."""

    ilm: Surface
    rpe: Surface
    shadow_mask: np.ndarray
    outlier_mask: np.ndarray


@dataclass
class SurfaceMetrics:
    """Error summary of a detected surface against ground truth.

    mae, max_abs and bias are computed over entries defined in both
    surfaces; defined_fraction is the share of truth-defined entries
    where the detection is defined.
    """

    mae: float
    max_abs: float
    bias: float
    defined_fraction: float

    def as_dict(self) -> dict:
        return {
            "mae": self.mae,
            "max_abs": self.max_abs,
            "bias": self.bias,
            "defined_fraction": self.defined_fraction,
        }


def _slice_rng(seed: int, y: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(y,)))


def _render_slice(spec: PhantomSpec, y: int):
    """One (M, W) slice plus its shadow and outlier column masks."""
    rng = _slice_rng(spec.seed, y)
    w, m = spec.width, spec.depth
    ilm = spec.surface_rows("ilm", y)
    center = spec.surface_rows("rpe", y)

    z = np.arange(m, dtype=np.float64)[:, None]
    half = spec.band_thickness / 2.0
    img = np.full((m, w), spec.vitreous_intensity)
    img = np.where(z >= ilm[None, :], spec.tissue_intensity, img)
    img = np.where(z > (center + half)[None, :], spec.below_intensity, img)
    in_band = np.abs(z - center[None, :]) <= half
    profile = spec.band_intensity - spec.band_slope * np.abs(z - center[None, :])
    img = np.where(in_band, profile, img)

    outlier_cols = np.zeros(w, dtype=bool)
    if spec.outlier_fraction > 0:
        patches = rng.binomial(w, spec.outlier_fraction / 3.0)
        for _ in range(patches):
            x0 = int(rng.integers(1, max(2, w - 1)))
            z_lo = int(np.ceil(ilm[x0] + 4))
            z_hi = int(np.floor(center[x0] - half - 6))
            if z_hi <= z_lo:
                continue
            z0 = int(rng.integers(z_lo, z_hi + 1))
            img[max(0, z0 - 1):z0 + 2, max(0, x0 - 1):x0 + 2] = spec.outlier_intensity
            outlier_cols[max(0, x0 - 1):x0 + 2] = True

    shadow_cols = np.zeros(w, dtype=bool)
    if spec.shadow_fraction > 0:
        shadow_cols = rng.random(w) < spec.shadow_fraction

    if spec.noise_std > 0:
        img = img + rng.normal(0.0, spec.noise_std, size=(m, w))
    img = np.clip(img, 0, spec.bit_max)
    # shadows are signal-free: exactly zero, no noise floor
    img[:, shadow_cols] = 0

    return np.rint(img).astype(np.int32), shadow_cols, outlier_cols


def generate_phantom(spec: PhantomSpec):
    """Build the volume and its ground truth. Returns (volume, truth)."""
    spec.validate()
    margin = spec.band_thickness / 2 + 1
    for y in range(spec.slices):
        ilm = spec.surface_rows("ilm", y)
        center = spec.surface_rows("rpe", y)
        if (ilm < 0).any() or (center + margin >= spec.depth).any():
            raise ValueError("surfaces leave the axial range")
        if not (ilm < center - margin).all():
            raise ValueError("first surface must stay strictly above the band")

    slices, shadows, outliers = [], [], []
    for y in range(spec.slices):
        img, sh, ol = _render_slice(spec, y)
        slices.append(img)
        shadows.append(sh)
        outliers.append(ol)

    volume = Volume(np.stack(slices), bit_max=spec.bit_max)
    truth = GroundTruth(
        ilm=Surface(np.stack([spec.surface_rows("ilm", y) for y in range(spec.slices)])),
        rpe=Surface(np.stack([spec.surface_rows("rpe", y) for y in range(spec.slices)])),
        shadow_mask=np.stack(shadows),
        outlier_mask=np.stack(outliers),
    )
    return volume, truth


def surface_error(detected: Surface, truth: Surface) -> SurfaceMetrics:
    """Compare a detection against ground truth over their overlap."""
    if detected.depth.shape != truth.depth.shape:
        raise ValueError("surface extents differ")
    truth_defined = ~np.isnan(truth.depth)
    both = truth_defined & ~np.isnan(detected.depth)
    if not both.any():
        raise DegeneracyError("no entry is defined in both surfaces")
    err = detected.depth[both] - truth.depth[both]
    denom = truth_defined.sum()
    return SurfaceMetrics(
        mae=float(np.mean(np.abs(err))),
        max_abs=float(np.max(np.abs(err))),
        bias=float(np.mean(err)),
        defined_fraction=float(both.sum() / denom) if denom else 1.0,
    )


def spec_to_text(spec: PhantomSpec, path) -> None:
    """Serialize a phantom spec as flat key=value lines."""
    with open(path, "w") as fh:
        for f in fields(PhantomSpec):
            fh.write(f"{f.name}={getattr(spec, f.name)}\n")


def spec_from_text(path) -> PhantomSpec:
    """Parse a key=value phantom spec file; unknown keys are errors."""
    known = {f.name: f.type for f in fields(PhantomSpec)}
    values = {}
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError("expected key=value", path=str(path), line=lineno)
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ParseError(f"unknown key {key!r}", path=str(path), line=lineno)
            caster = int if known[key] in ("int", int) else float
            try:
                values[key] = caster(float(raw.strip()))
            except ValueError:
                raise ParseError(f"bad value for {key!r}", path=str(path), line=lineno)
    spec = PhantomSpec(**values)
    spec.validate()
    return spec
