"""Volume and surface containers plus the depth-domain primitives.

Conventions used throughout the package:

  * a volume stores intensities as ``data[y, z, x]`` with y the B-scan
    (slice) index in [0, N), z the axial depth in [0, M) growing away
    from the scanner, and x the lateral position in [0, W);
  * a surface is a per-(x, y) axial position map stored as a float
    array ``depth[y, x]``; NaN marks an undefined entry;
  * intensities are non-negative, nominally 8-bit.
"""

from dataclasses import dataclass, field

import numpy as np

# Face-adjacent voxel offsets (dx, dy, dz). Neighborhood statistics are
# deliberately 6-connected; widening the stencil changes every derived
# feature, so the choice lives here as a visible constant.
FACE_NEIGHBORS = (
    (-1, 0, 0), (1, 0, 0),
    (0, -1, 0), (0, 1, 0),
    (0, 0, -1), (0, 0, 1),
)


@dataclass
class Volume:
    """A 3D scan: N B-scans of M axial samples by W lateral positions."""

    data: np.ndarray
    bit_max: int = 255

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or self.data.size == 0:
            raise ValueError("volume data must be a non-empty (N, M, W) array")
        if not np.issubdtype(self.data.dtype, np.number):
            raise ValueError("volume data must be numeric")
        if np.issubdtype(self.data.dtype, np.floating) and not np.isfinite(self.data).all():
            raise ValueError("volume intensities must be finite")
        if self.data.min() < 0:
            raise ValueError("volume intensities must be non-negative")
        peak = int(self.data.max())
        if peak > self.bit_max:
            self.bit_max = peak

    @property
    def slices(self) -> int:
        return self.data.shape[0]

    @property
    def depth(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def bscan(self, y: int) -> np.ndarray:
        """The (M, W) image of slice y."""
        return self.data[y]


@dataclass
class Surface:
    """Axial position of a layer at each (x, y); NaN where undefined."""

    depth: np.ndarray

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.ndim != 2 or self.depth.size == 0:
            raise ValueError("surface must be a non-empty (N, W) array")

    @property
    def slices(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def defined_mask(self) -> np.ndarray:
        return ~np.isnan(self.depth)

    def defined_fraction(self) -> float:
        return float(np.mean(self.defined_mask()))

    def copy(self) -> "Surface":
        return Surface(self.depth.copy())


@dataclass
class NeighborhoodFeatures:
    """Local statistics of the intensity field around one voxel."""

    position: tuple
    intensity: float
    mean: float
    variance: float
    gradient: np.ndarray = field(repr=False)


@dataclass
class Band:
    """A fixed-height axial window copied out around a surface.

    ``values[y, k, x]`` holds the intensity at depth ``zindex[y, k, x]``;
    entries whose window row fell outside [0, M) carry zindex -1 and a
    NaN value, so clipped columns simply have fewer valid samples.
    """

    values: np.ndarray
    zindex: np.ndarray
    above: int
    below: int

    def sample_counts(self) -> np.ndarray:
        """Number of in-range samples per (y, x) column."""
        return (self.zindex >= 0).sum(axis=1)


def max_intensity_depth(volume: Volume) -> Surface:
    """Depth of the brightest sample of every A-scan.

    Ties resolve to the smallest depth, which keeps the result stable
    under any monotone remap of the intensities.
    """
    z = np.argmax(volume.data, axis=1)
    return Surface(z.astype(np.float64))


def _central_gradient(data: np.ndarray, x: int, y: int, z: int) -> np.ndarray:
    """Central-difference intensity gradient (d/dx, d/dy, d/dz).

    Falls back to one-sided differences at volume faces.
    """
    n, m, w = data.shape

    def diff(lo, hi, span):
        return (float(hi) - float(lo)) / span

    x0, x1 = max(x - 1, 0), min(x + 1, w - 1)
    gx = diff(data[y, z, x0], data[y, z, x1], x1 - x0) if x1 > x0 else 0.0
    y0, y1 = max(y - 1, 0), min(y + 1, n - 1)
    gy = diff(data[y0, z, x], data[y1, z, x], y1 - y0) if y1 > y0 else 0.0
    z0, z1 = max(z - 1, 0), min(z + 1, m - 1)
    gz = diff(data[y, z0, x], data[y, z1, x], z1 - z0) if z1 > z0 else 0.0
    return np.array([gx, gy, gz])


def neighborhood_features(volume: Volume, position) -> NeighborhoodFeatures:
    """Mean, variance and averaged gradient over the face neighbors.

    The mean and variance run over the neighbor set only (offsets in
    FACE_NEIGHBORS, clipped at faces); the gradient averages the
    central-difference gradients of the voxel itself and its neighbors,
    weighted 1/(|N| + 1).
    """
    x, y, z = position
    data = volume.data
    n, m, w = data.shape
    if not (0 <= x < w and 0 <= y < n and 0 <= z < m):
        raise ValueError(f"position {position} outside volume bounds")

    neighbors = []
    for dx, dy, dz in FACE_NEIGHBORS:
        nx, ny, nz = x + dx, y + dy, z + dz
        if 0 <= nx < w and 0 <= ny < n and 0 <= nz < m:
            neighbors.append((nx, ny, nz))
    if not neighbors:
        raise ValueError("voxel has no in-bounds neighbors")

    vals = np.array([float(data[ny, nz, nx]) for nx, ny, nz in neighbors])
    mean = float(vals.mean())
    variance = float(np.mean((vals - mean) ** 2))

    grad = _central_gradient(data, x, y, z)
    for nx, ny, nz in neighbors:
        grad = grad + _central_gradient(data, nx, ny, nz)
    grad = grad / (len(neighbors) + 1)

    return NeighborhoodFeatures(
        position=(x, y, z),
        intensity=float(data[y, z, x]),
        mean=mean,
        variance=variance,
        gradient=grad,
    )


def band_indices(surface: Surface, above: int, below: int, depth: int):
    """Absolute depth indices of the window rows, -1 where out of range
    or where the surface itself is undefined.

    Float surface entries are rounded to the nearest integer row
    (numpy rounding, halves to even) before the window is laid out.
    """
    if above < 0 or below < 0:
        raise ValueError("band extents must be non-negative")
    center = np.round(surface.depth)
    defined = ~np.isnan(center)
    center_i = np.where(defined, center, 0).astype(np.int64)

    offsets = np.arange(-above, below + 1)
    # zindex[y, k, x] = center(y, x) + offsets[k]
    zindex = center_i[:, None, :] + offsets[None, :, None]
    valid = (zindex >= 0) & (zindex < depth) & defined[:, None, :]
    return np.where(valid, zindex, -1)


def extract_band(volume: Volume, surface: Surface, above: int, below: int) -> Band:
    """Copy the axial run [z - above, z + below] out of every A-scan.

    The window is clipped to [0, M): clipped rows are marked invalid
    rather than padded, so border columns carry fewer samples. The
    surface must be fully defined (inpaint first if it is not) and must
    lie inside the volume.
    """
    if surface.depth.shape != (volume.slices, volume.width):
        raise ValueError("surface extent does not match volume extent")
    undef = np.isnan(surface.depth)
    if undef.any():
        ys, xs = np.nonzero(undef)
        raise ValueError(
            f"surface undefined at (x={xs[0]}, y={ys[0]}); inpaint before extracting a band"
        )
    if surface.depth.min() < 0 or np.round(surface.depth).max() >= volume.depth:
        raise ValueError("surface leaves the volume's depth range")

    zindex = band_indices(surface, above, below, volume.depth)
    values = _gather_band(volume.data, zindex)
    return Band(values=values, zindex=zindex, above=above, below=below)


def _gather_band(data: np.ndarray, zindex: np.ndarray) -> np.ndarray:
    """Fetch intensities at the band's depth indices; NaN where invalid."""
    n, m, w = data.shape
    safe = np.clip(zindex, 0, m - 1)
    yy = np.arange(n)[:, None, None]
    xx = np.arange(w)[None, None, :]
    values = data[yy, safe, xx].astype(np.float64)
    values[zindex < 0] = np.nan
    return values
