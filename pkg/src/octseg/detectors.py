"""Layer detectors for OCT volumes.

Three detectors live here:

  * detect_rpe: the retinal pigment epithelium is the brightest layer,
    so its first estimate is the per-A-scan peak depth; outliers are
    masked via top-hat + Otsu, inpainted, and the estimate is refined
    by re-running the peak search inside shrinking axial bands with
    median smoothing between passes.
  * detect_ilm: the inner limiting membrane is the first bright pixel
    under the noise ceiling estimated from the top rows of each
    B-scan; the estimate is refined inside axial bands whose
    intensities are median-smoothed across (x, y) before
    re-thresholding.
  * trace_boundary: a generic edge-cost shortest-path tracer (Canny
    plus axial-gradient cost, dynamic programming with a bounded
    per-step jump), with optional A-scan alignment.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .edges import canny
from .errors import DegeneracyError, DegeneracyWarning
from .filters import (
    Kernel2DSpec,
    align_ascans_xcorr,
    gaussian_smooth_across_slices,
    inpaint_nearest,
    median_filter,
    otsu_threshold,
    tophat,
)
from .volume import Band, Surface, Volume, band_indices, _gather_band, max_intensity_depth

DP_JUMP = 2  # largest axial step the traced path may take per column


@dataclass
class RpeConfig:
    """Knobs for detect_rpe.

    The band schedule lists (above, below) extents per refinement pass
    and pairs positionally with the window schedule; when iterations
    exceed the schedule length the last entry repeats.
    """

    iterations: int = 3
    band_schedule: tuple = ((10, 20), (10, 10), (5, 5))
    window_schedule: tuple = ((30, 2), (40, 2), (20, 2))
    initial_window: tuple = (30, 2)
    final_window: tuple = (20, 2)
    tophat_size: int = 5

    def validate(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if not self.band_schedule or not self.window_schedule:
            raise ValueError("schedules must be non-empty")
        for a, b in self.band_schedule:
            if a < 0 or b < 0:
                raise ValueError("band extents must be non-negative")


@dataclass
class IlmConfig:
    """Knobs for detect_ilm.

    noise_rows top rows of every B-scan are treated as pure noise; the
    per-slice threshold is the smallest T leaving at most zero_fraction
    of those pixels at or above T. Each refinement round extracts the
    scheduled band, median-smooths it with the scheduled windows, and
    re-finds the first above-threshold depth.
    """

    noise_rows: int = 5
    zero_fraction: float = 0.005
    band_schedule: tuple = ((15, 30), (3, 27))
    window_schedule: tuple = (((1, 25), (25, 1)), ((10, 1),))
    iterations: int = 2

    def validate(self):
        if self.noise_rows < 1:
            raise ValueError("noise_rows must be >= 1")
        if not (0 <= self.zero_fraction < 1):
            raise ValueError("zero_fraction must lie in [0, 1)")
        if len(self.band_schedule) != len(self.window_schedule):
            raise ValueError("band and window schedules must pair up")


@dataclass
class CostMap:
    """Combined per-pixel cost for one slice, row i = lateral position,
    column j = axial depth (transposed relative to the B-scan image)."""

    costs: np.ndarray
    weights: tuple = (0.6, 0.4, 0.0)


@dataclass
class BoundaryPath:
    """One axial index per lateral position plus the path's total cost."""

    js: np.ndarray
    total_cost: float

    def __post_init__(self):
        self.js = np.asarray(self.js, dtype=np.int64)


def _re_argmax(band: Band) -> np.ndarray:
    """Depth of the brightest valid sample per column of a band; NaN for
    columns with no valid samples. Ties go to the shallowest depth."""
    vals = np.where(band.zindex >= 0, band.values, -1.0)
    k = np.argmax(vals, axis=1)
    z = np.take_along_axis(band.zindex, k[:, None, :], axis=1)[:, 0, :]
    has = (band.zindex >= 0).any(axis=1)
    return np.where(has, z.astype(np.float64), np.nan)


def detect_rpe(volume: Volume, cfg: RpeConfig = None) -> Surface:
    """Locate the brightest-layer surface of a volume.

    Steps: per-A-scan peak depth; top-hat of the negated position
    matrix (shallow outliers become peaks) binarized with Otsu to mask
    erroneous columns; nearest-neighbor inpaint; median smoothing; then
    scheduled rounds of band-limited peak re-search with median
    smoothing, and a final median pass. The result is defined
    everywhere. A constant volume degenerates gracefully (warning,
    surface of zeros).
    """
    cfg = cfg or RpeConfig()
    cfg.validate()
    if volume.depth <= 30:
        raise ValueError("volume too shallow for band refinement (need M > 30)")

    est = max_intensity_depth(volume).depth

    # argmax errors come from bright speckle above the layer, which
    # pulls the position toward smaller z; negate so those pits turn
    # into peaks the white top-hat can flag
    deviation = tophat(-est, cfg.tophat_size)
    threshold, degenerate = otsu_threshold(deviation)
    if not degenerate:
        est = est.copy()
        est[deviation >= threshold] = np.nan
        if np.isnan(est).all():
            raise DegeneracyError("every column was flagged as erroneous")
        est = inpaint_nearest(est)
    est = median_filter(est, Kernel2DSpec(*cfg.initial_window))

    last = len(cfg.band_schedule) - 1
    for i in range(cfg.iterations):
        above, below = cfg.band_schedule[min(i, last)]
        window = cfg.window_schedule[min(i, min(last, len(cfg.window_schedule) - 1))]
        zindex = band_indices(Surface(est), above, below, volume.depth)
        band = Band(_gather_band(volume.data, zindex), zindex, above, below)
        est = _re_argmax(band)
        est = median_filter(est, Kernel2DSpec(*window))

    est = median_filter(est, Kernel2DSpec(*cfg.final_window))
    return Surface(est)


def ilm_threshold(bscan: np.ndarray, cfg: IlmConfig = None, bit_max: int = 255) -> int:
    """Per-slice binarization threshold from the noise ceiling.

    Returns the smallest integer T such that at most zero_fraction of
    the pixels in the top noise_rows rows are >= T. If the noise region
    is saturated the threshold lands above the representable range and
    a degeneracy warning is emitted.
    """
    cfg = cfg or IlmConfig()
    cfg.validate()
    img = np.asarray(bscan)
    if img.ndim != 2 or img.shape[0] < cfg.noise_rows:
        raise ValueError(f"B-scan must have at least {cfg.noise_rows} depth rows")
    noise = img[: cfg.noise_rows].ravel()
    allowed = int(np.floor(cfg.zero_fraction * noise.size))
    if allowed >= noise.size:
        return 0
    # (allowed+1)-th largest noise value; one past it is the smallest
    # threshold that leaves at most `allowed` pixels at or above T
    kth = np.partition(noise, noise.size - 1 - allowed)[noise.size - 1 - allowed]
    threshold = int(kth) + 1
    if threshold > bit_max:
        warnings.warn(
            "noise region saturated, threshold exceeds the intensity range",
            DegeneracyWarning,
        )
    return threshold


def _first_crossing(values: np.ndarray, zindex: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Shallowest valid band sample at or above each slice's threshold;
    NaN where a column never crosses."""
    bright = (values >= thresholds[:, None, None]) & (zindex >= 0)
    k = np.argmax(bright, axis=1)
    z = np.take_along_axis(zindex, k[:, None, :], axis=1)[:, 0, :]
    has = bright.any(axis=1)
    return np.where(has, z.astype(np.float64), np.nan)


def detect_ilm(volume: Volume, cfg: IlmConfig = None, *, inpaint: bool = True) -> Surface:
    """Locate the first bright surface under the per-slice noise ceiling.

    The initial estimate is each A-scan's first above-threshold depth.
    Each refinement round median-smooths the position matrix with the
    scheduled windows (killing isolated false crossings), copies the
    scheduled axial band around the smoothed estimate, re-applies the
    same per-slice threshold inside it, and takes the first crossing
    again. Columns that never cross stay undefined and are inpainted
    at the end (pass inpaint=False to inspect the raw result).
    """
    cfg = cfg or IlmConfig()
    cfg.validate()
    if volume.depth <= 45:
        raise ValueError("volume too shallow for band refinement (need M > 45)")

    data = volume.data
    thresholds = np.array(
        [ilm_threshold(volume.bscan(y), cfg, volume.bit_max) for y in range(volume.slices)],
        dtype=np.float64,
    )

    bright = data >= thresholds[:, None, None]
    first = np.argmax(bright, axis=1)
    has = bright.any(axis=1)
    est = np.where(has, first.astype(np.float64), np.nan)
    if not has.any():
        raise DegeneracyError("no A-scan crosses its slice threshold")

    last = len(cfg.band_schedule) - 1
    for r in range(cfg.iterations):
        above, below = cfg.band_schedule[min(r, last)]
        windows = cfg.window_schedule[min(r, last)]
        for wx, wy in windows:
            est = median_filter(est, Kernel2DSpec(wx, wy))
        est = np.clip(est, 0, volume.depth - 1)
        zindex = band_indices(Surface(est), above, below, volume.depth)
        values = _gather_band(data, zindex)
        est = _first_crossing(values, zindex, thresholds)
        if np.isnan(est).all():
            raise DegeneracyError("refinement lost every column")

    surface = Surface(est)
    if inpaint:
        surface = Surface(inpaint_nearest(surface.depth))
    return surface


def build_cost_map(
    bscan: np.ndarray,
    w1: float = 0.6,
    w2: float = 0.4,
    w3: float = 0.0,
    canny_sigma: float = 2.0,
    canny_low: float = 0.1,
    canny_high: float = 0.3,
    others: np.ndarray = None,
) -> CostMap:
    """Combine edge evidence into a cost grid for the path search.

    Strength(i, j) = w1 * Canny(i, j) + w2 * Axial(i, j) + w3 * Others(i, j),
    where Canny is the thin binary edge map, Axial the axial intensity
    gradient magnitude normalized to [0, 1], and Others an optional
    caller-supplied strength array. Cost = max strength - strength, so
    strong evidence is cheap. The grid is transposed to (W, M): row =
    lateral position, column = depth.
    """
    img = np.asarray(bscan, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2D (M, W) B-scan")
    for name, w in (("w1", w1), ("w2", w2), ("w3", w3)):
        if w < 0:
            raise ValueError(f"{name} must be >= 0")
    if w1 == 0 and w2 == 0 and (w3 == 0 or others is None):
        raise ValueError("all cost terms vanish; supply at least one nonzero term")
    if canny_low > canny_high:
        raise ValueError("canny_low must not exceed canny_high")

    strength = np.zeros_like(img)
    if w1 > 0:
        strength += w1 * canny(img, canny_sigma, canny_low, canny_high)
    if w2 > 0:
        axial = np.abs(np.gradient(img, axis=0))
        peak = axial.max()
        if peak > 0:
            axial /= peak
        strength += w2 * axial
    if w3 > 0 and others is not None:
        others = np.asarray(others, dtype=np.float64)
        if others.shape != img.shape:
            raise ValueError("others term must match the B-scan shape")
        strength += w3 * others

    costs = (strength.max() - strength).T
    return CostMap(costs=np.ascontiguousarray(costs), weights=(w1, w2, w3))


def dp_shortest_path(cost) -> BoundaryPath:
    """Cheapest top-to-bottom path through a cost grid.

    The path visits one column j per row i with |j(i) - j(i-1)| <= 2;
    t(0, j) = C(0, j) and t(i, j) = min over m in [j-2, j+2] of
    t(i-1, m), plus C(i, j). Ties resolve toward smaller j, both at the
    final row and at every backtracking step.
    """
    grid = cost.costs if isinstance(cost, CostMap) else np.asarray(cost, dtype=np.float64)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError("cost grid must be a non-empty 2D array")
    n, m = grid.shape

    t = np.empty((n, m), dtype=np.float64)
    t[0] = grid[0]
    for i in range(1, n):
        best = np.full(m, np.inf)
        prev = t[i - 1]
        for d in range(-DP_JUMP, DP_JUMP + 1):
            lo, hi = max(0, -d), m - max(0, d)
            if lo < hi:
                np.minimum(best[lo + d:hi + d], prev[lo:hi], out=best[lo + d:hi + d])
        t[i] = best + grid[i]

    js = np.empty(n, dtype=np.int64)
    js[n - 1] = int(np.argmin(t[n - 1]))
    for i in range(n - 1, 0, -1):
        lo = max(0, js[i] - DP_JUMP)
        hi = min(m, js[i] + DP_JUMP + 1)
        js[i - 1] = lo + int(np.argmin(t[i - 1, lo:hi]))
    return BoundaryPath(js=js, total_cost=float(t[n - 1, js[n - 1]]))


def trace_boundary(
    volume: Volume,
    w1: float = 0.6,
    w2: float = 0.4,
    w3: float = 0.0,
    canny_sigma: float = 2.0,
    canny_low: float = 0.1,
    canny_high: float = 0.3,
    smooth_sigma: float = 1.0,
    align: bool = False,
    max_shift: int = 10,
    reference: int = 0,
    others=None,
    threads: int = 1,
):
    """Trace one boundary per slice and assemble the smoothed surface.

    Each slice optionally gets its A-scans aligned by cross-correlation
    before the cost map is built; detected depths are mapped back to
    the original frame afterwards. The per-slice paths feed a surface
    that is Gaussian smoothed across slices. Returns (paths, surface).
    """
    data = volume.data
    n, m, w = data.shape

    def run(y):
        img = data[y].astype(np.float64)
        shifts = None
        if align:
            shifts, img = align_ascans_xcorr(img, reference, max_shift)
        other = others[y] if others is not None else None
        cm = build_cost_map(img, w1, w2, w3, canny_sigma, canny_low, canny_high, other)
        path = dp_shortest_path(cm)
        zs = path.js.astype(np.float64)
        if shifts is not None:
            zs = np.clip(zs - shifts, 0, m - 1)
        return path, zs

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(n)))
    else:
        results = [run(y) for y in range(n)]

    paths = [r[0] for r in results]
    depth = np.stack([r[1] for r in results])
    smoothed = gaussian_smooth_across_slices(depth, smooth_sigma)
    return paths, Surface(smoothed)
