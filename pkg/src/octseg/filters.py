"""2D filtering primitives shared by the detectors.

Everything here operates on plain (rows, cols) numpy arrays. Surfaces
pass through as (N, W) position matrices with NaN marking undefined
entries; B-scan images pass through as (M, W) intensity arrays.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyWarning

OTSU_LEVELS = 256


@dataclass(frozen=True)
class Kernel2DSpec:
    """Rectangular window extents, given as (x, y) = (cols, rows).

    Even extents anchor toward the negative side: extent e spans
    offsets -(e//2) .. e - e//2 - 1, so a 2-wide window covers the
    sample itself and its predecessor. Borders replicate: window
    positions past the edge clamp to the nearest in-range sample.
    """

    wx: int
    wy: int

    def __post_init__(self):
        if self.wx < 1 or self.wy < 1:
            raise ValueError("window extents must be >= 1")

    def offsets_x(self) -> range:
        return range(-(self.wx // 2), self.wx - self.wx // 2)

    def offsets_y(self) -> range:
        return range(-(self.wy // 2), self.wy - self.wy // 2)


def binarize(matrix: np.ndarray, threshold: float) -> np.ndarray:
    """1 where value >= threshold, else 0 (uint8)."""
    m = np.asarray(matrix)
    return (m >= threshold).astype(np.uint8)


def otsu_threshold(matrix: np.ndarray):
    """Threshold maximizing inter-class variance on a 256-bin histogram.

    Values are rounded and clipped to [0, 255] before histogramming.
    Returns (threshold, degenerate); a constant input yields that
    constant with the degenerate flag set (and a warning), since no
    split exists.

    The returned T separates the classes {v < T} and {v >= T}, matching
    binarize(). Ties resolve to the smallest threshold.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.size == 0:
        raise ValueError("cannot threshold an empty matrix")
    levels = np.clip(np.round(m), 0, OTSU_LEVELS - 1).astype(np.int64)
    hist = np.bincount(levels.ravel(), minlength=OTSU_LEVELS).astype(np.float64)

    nonzero = np.nonzero(hist)[0]
    if len(nonzero) == 1:
        warnings.warn("constant input, no threshold separates it", DegeneracyWarning)
        return int(nonzero[0]), True

    total = hist.sum()
    idx = np.arange(OTSU_LEVELS, dtype=np.float64)
    # cumulative mass and first moment of the class {v < T} for every T
    w0 = np.concatenate(([0.0], np.cumsum(hist)))[:-1]
    s0 = np.concatenate(([0.0], np.cumsum(hist * idx)))[:-1]
    w1 = total - w0
    s1 = hist @ idx - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = s0 / w0
        mu1 = s1 / w1
        between = w0 * w1 * (mu0 - mu1) ** 2
    between[~np.isfinite(between)] = -1.0
    return int(np.argmax(between)), False


def _shifted_stack(matrix: np.ndarray, spec: Kernel2DSpec) -> np.ndarray:
    """All window translates of the matrix, borders replicated."""
    m = np.asarray(matrix, dtype=np.float64)
    rows, cols = m.shape
    ri = np.arange(rows)
    ci = np.arange(cols)
    layers = []
    for dy in spec.offsets_y():
        rsel = np.clip(ri + dy, 0, rows - 1)
        for dx in spec.offsets_x():
            # layer[p] = m[clamp(p + offset)]
            csel = np.clip(ci + dx, 0, cols - 1)
            layers.append(m[rsel[:, None], csel[None, :]])
    return np.stack(layers)


def median_filter(matrix: np.ndarray, spec: Kernel2DSpec) -> np.ndarray:
    """Moving-window median with replicated borders.

    Undefined (NaN) inputs are excluded from each window's population;
    a window with no defined samples stays undefined.
    """
    stack = _shifted_stack(matrix, spec)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN windows
        return np.nanmedian(stack, axis=0)


def _minmax_filter(matrix: np.ndarray, size: int, take_max: bool) -> np.ndarray:
    """Flat square erosion/dilation with replicated borders."""
    m = np.asarray(matrix, dtype=np.float64)
    r_lo = size // 2
    r_hi = size - r_lo - 1
    padded = np.pad(m, ((r_lo, r_hi), (r_lo, r_hi)), mode="edge")
    rows, cols = m.shape
    out = None
    for dy in range(size):
        for dx in range(size):
            view = padded[dy:dy + rows, dx:dx + cols]
            if out is None:
                out = view.copy()
            elif take_max:
                np.maximum(out, view, out=out)
            else:
                np.minimum(out, view, out=out)
    return out


def tophat(matrix: np.ndarray, size: int = 5) -> np.ndarray:
    """White top-hat: input minus its opening by a flat size x size square.

    Non-negative everywhere; responds to features brighter than their
    surroundings and narrower than the structuring element.
    """
    if size < 1:
        raise ValueError("structuring element must be at least 1x1")
    m = np.asarray(matrix, dtype=np.float64)
    if not np.isfinite(m).all():
        raise ValueError("top-hat input must be fully defined")
    opened = _minmax_filter(_minmax_filter(m, size, take_max=False), size, take_max=True)
    out = m - opened
    # the opening never exceeds the input for a flat SE; clamp rounding dust
    np.maximum(out, 0.0, out=out)
    return out


def inpaint_nearest(matrix: np.ndarray) -> np.ndarray:
    """Fill NaNs with the value of the nearest defined entry.

    Distance is Euclidean in (x, y); ties resolve by scan order,
    smaller x first then smaller y. Raises if nothing is defined.
    """
    m = np.asarray(matrix, dtype=np.float64).copy()
    undef = np.isnan(m)
    if not undef.any():
        return m
    defined = ~undef
    if not defined.any():
        raise ValueError("cannot inpaint a fully undefined matrix")

    dy_, dx_ = np.nonzero(defined)
    order = np.lexsort((dy_, dx_))  # primary smaller x, then smaller y
    dx_, dy_ = dx_[order], dy_[order]
    donor_vals = m[dy_, dx_]

    uy, ux = np.nonzero(undef)
    # chunk the undefined entries so the distance table stays small
    chunk = max(1, 4_000_000 // max(1, len(dx_)))
    for start in range(0, len(ux), chunk):
        sl = slice(start, start + chunk)
        d2 = (ux[sl, None] - dx_[None, :]) ** 2 + (uy[sl, None] - dy_[None, :]) ** 2
        pick = np.argmin(d2, axis=1)  # first minimum = scan-order tie-break
        m[uy[sl], ux[sl]] = donor_vals[pick]
    return m


def gaussian_smooth_across_slices(matrix: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian smoothing of each x's profile across the slice axis.

    The kernel is truncated at radius ceil(3*sigma) and renormalized
    over the weights that actually land on defined samples, so borders
    and NaN gaps lose no mass. sigma = 0 is the identity.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    m = np.asarray(matrix, dtype=np.float64)
    radius = int(np.ceil(3 * sigma)) if sigma > 0 else 0
    if radius == 0:
        return m.copy()

    offsets = np.arange(-radius, radius + 1)
    weights = np.exp(-(offsets.astype(np.float64) ** 2) / (2 * sigma * sigma))

    rows, cols = m.shape
    acc = np.zeros_like(m)
    norm = np.zeros_like(m)
    for off, wgt in zip(offsets, weights):
        # shifted[y] = m[y + off], NaN where that falls outside
        shifted = np.full_like(m, np.nan)
        yt = slice(max(0, -off), rows - max(0, off))
        ys = slice(max(0, off), rows - max(0, -off))
        shifted[yt, :] = m[ys, :]
        good = ~np.isnan(shifted)
        acc[good] += wgt * shifted[good]
        norm[good] += wgt
    out = np.full_like(m, np.nan)
    covered = norm > 0
    out[covered] = acc[covered] / norm[covered]
    return out


def shift_column(column: np.ndarray, lag: int) -> np.ndarray:
    """Move an A-scan profile axially by lag samples (positive = deeper),
    replicating the edge value into the vacated range."""
    m = len(column)
    idx = np.clip(np.arange(m) - lag, 0, m - 1)
    return column[idx]


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da @ da) * (db @ db))
    if denom == 0:
        return -np.inf
    return float((da @ db) / denom)


def align_ascans_xcorr(bscan: np.ndarray, reference: int = 0, max_shift: int = 10):
    """Column-wise axial alignment of a B-scan by cross-correlation.

    Starting from the reference column, each column takes the per-step
    lag in [-max_shift, max_shift] relative to its already-aligned
    neighbor that maximizes normalized cross-correlation, chaining
    outward in both directions; the accumulated totals are what get
    applied and returned, so drift across a slice can exceed max_shift
    even though each step cannot. Ties prefer the smaller |step|, then
    the smaller step; constant columns stay put (total 0). Returns
    (shifts, aligned).
    """
    img = np.asarray(bscan, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2D (M, W) B-scan")
    m, w = img.shape
    if not (0 <= reference < w):
        raise ValueError("reference column outside the slice")
    if max_shift < 0 or max_shift >= m / 2:
        raise ValueError("max_shift must satisfy 0 <= max_shift < M/2")

    # candidate steps ordered by |step| then value, so argmax tie-breaks right
    steps = sorted(range(-max_shift, max_shift + 1), key=lambda s: (abs(s), s))

    shifts = np.zeros(w, dtype=np.int64)
    aligned = img.copy()

    def best_total(col, target, prev):
        if np.ptp(col) == 0:
            return 0
        scores = [(_ncc(shift_column(col, prev + r), target), r) for r in steps]
        best = max(scores, key=lambda t: t[0])
        return prev + best[1]

    for x in range(reference + 1, w):
        t = best_total(img[:, x], aligned[:, x - 1], int(shifts[x - 1]))
        shifts[x] = t
        aligned[:, x] = shift_column(img[:, x], t)
    for x in range(reference - 1, -1, -1):
        t = best_total(img[:, x], aligned[:, x + 1], int(shifts[x + 1]))
        shifts[x] = t
        aligned[:, x] = shift_column(img[:, x], t)
    return shifts, aligned
