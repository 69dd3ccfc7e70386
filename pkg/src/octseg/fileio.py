"""File formats: A-scan text volumes, PPM slice dumps, OBJ meshes,
and surface grids.

The volume text layout is one file per B-scan, one line per A-scan
(so a file has W lines), each line M whitespace-separated decimal
integers running from shallow to deep. Files sort into slice order by
natural filename sort (embedded numbers compare numerically).
"""

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegeneracyError, ParseError
from .volume import Surface, Volume

_TOKEN_RE = re.compile(r"\d+|\D+")


def natural_key(name: str):
    """Sort key treating digit runs as numbers: scan2 before scan10."""
    return [int(tok) if tok.isdigit() else tok for tok in _TOKEN_RE.findall(name)]


def load_ascan_text(directory, expected_dims=None) -> Volume:
    """Read a directory of A-scan text files into a volume.

    expected_dims, if given, is (W, M, N) and mismatches raise
    ParseError. Non-integer tokens, ragged lines and ragged files all
    raise ParseError naming the offending file and line.
    """
    root = Path(directory)
    if not root.is_dir():
        raise ParseError("not a directory", path=str(root))
    files = sorted((p for p in root.iterdir() if p.is_file()), key=lambda p: natural_key(p.name))
    if not files:
        raise ParseError("directory contains no scan files", path=str(root))

    slices = []
    width = depth = None
    for path in files:
        rows = []
        with open(path, "r") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    row = np.array([int(tok) for tok in line.split()], dtype=np.int64)
                except ValueError:
                    raise ParseError("non-integer token", path=str(path), line=lineno)
                if (row < 0).any():
                    raise ParseError("negative intensity", path=str(path), line=lineno)
                if depth is None:
                    depth = len(row)
                elif len(row) != depth:
                    raise ParseError(
                        f"expected {depth} samples, found {len(row)}",
                        path=str(path), line=lineno,
                    )
                rows.append(row)
        if not rows:
            raise ParseError("file holds no A-scans", path=str(path))
        if width is None:
            width = len(rows)
        elif len(rows) != width:
            raise ParseError(f"expected {width} A-scans, found {len(rows)}", path=str(path))
        # rows are A-scans: rows[x][z]; the slice image wants [z, x]
        slices.append(np.stack(rows).T)

    data = np.stack(slices)
    if expected_dims is not None:
        w, m, n = expected_dims
        if (data.shape[2], data.shape[1], data.shape[0]) != (w, m, n):
            raise ParseError(
                f"expected {w}x{m}x{n} (WxMxN), found "
                f"{data.shape[2]}x{data.shape[1]}x{data.shape[0]}",
                path=str(root),
            )
    return Volume(data)


def write_ascan_text(volume: Volume, directory) -> list:
    """Inverse of load_ascan_text: one bscan_###.txt per slice.

    Intensities must be integral. Returns the written paths.
    """
    data = volume.data
    if np.issubdtype(data.dtype, np.floating):
        if not np.equal(np.mod(data, 1), 0).all():
            raise ValueError("volume intensities must be integers to serialize as text")
        data = data.astype(np.int64)
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for y in range(volume.slices):
        path = root / f"bscan_{y:04d}.txt"
        ascans = data[y].T  # [x, z]
        with open(path, "w") as fh:
            for row in ascans:
                fh.write(" ".join(str(int(v)) for v in row))
                fh.write("\n")
        written.append(str(path))
    return written


@dataclass
class SliceImage:
    """A grayscale slice plus overlay marks to burn into the dump.

    Marks are (z, x) pixel positions drawn in mark_color, or
    (z, x, (r, g, b)) to color a mark individually. With rescale=True
    intensities are stretched so the slice maximum maps to 255;
    otherwise values above 255 are rejected.
    """

    pixels: np.ndarray
    marks: list = field(default_factory=list)
    mark_color: tuple = (255, 0, 0)
    rescale: bool = False

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2 or self.pixels.size == 0:
            raise ValueError("slice image must be a non-empty 2D array")


def write_ppm(image: SliceImage, path) -> None:
    """Dump a slice as binary PPM (P6, maxval 255, grayscale as RGB).

    Header is exactly b"P6\\n{W} {H}\\n255\\n" followed by 3*W*H bytes
    of row-major RGB, top row first.
    """
    px = image.pixels.astype(np.float64)
    if image.rescale:
        peak = px.max()
        if peak > 0:
            px = px * (255.0 / peak)
    if px.max() > 255 or px.min() < 0:
        raise ValueError("intensities not representable in 8 bits; set rescale")
    gray = np.round(px).astype(np.uint8)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)

    h, w = gray.shape
    for mark in image.marks:
        z, x = mark[0], mark[1]
        color = mark[2] if len(mark) > 2 else image.mark_color
        z, x = int(round(z)), int(round(x))
        if 0 <= z < h and 0 <= x < w:
            rgb[z, x] = np.array(color, dtype=np.uint8)

    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def export_obj(surface: Surface, path, z_scale: float = 1.0) -> tuple:
    """Write a surface as a Wavefront OBJ heightfield.

    One vertex per defined entry ("v x y z*z_scale"), numbered from 1
    in row-major (y outer, x inner) order. Each unit cell contributes
    two triangles when all four corners are defined and one triangle
    when exactly three are; undefined entries leave holes. Raises when
    no cell has three defined corners (nothing renderable). Returns
    (vertex_count, face_count).
    """
    depth = surface.depth
    n, w = depth.shape
    defined = ~np.isnan(depth)

    ids = np.zeros((n, w), dtype=np.int64)
    ids[defined] = np.arange(1, defined.sum() + 1)

    lines = []
    for y in range(n):
        for x in range(w):
            if defined[y, x]:
                z = depth[y, x] * z_scale
                lines.append(f"v {x} {y} {z:.6g}")

    faces = []
    for y in range(n - 1):
        for x in range(w - 1):
            corners = [(y, x), (y, x + 1), (y + 1, x), (y + 1, x + 1)]
            have = [c for c in corners if defined[c]]
            if len(have) == 4:
                a, b, c, d = (ids[p] for p in corners)
                faces.append(f"f {a} {b} {c}")
                faces.append(f"f {b} {d} {c}")
            elif len(have) == 3:
                a, b, c = (ids[p] for p in have)
                faces.append(f"f {a} {b} {c}")

    if not faces:
        raise DegeneracyError("surface has no three mutually adjacent defined entries")

    with open(path, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
        fh.write("\n".join(faces))
        fh.write("\n")
    return len(lines), len(faces)


def write_surface_text(surface: Surface, path) -> None:
    """Surface as a text grid: N lines of W values, nan for undefined."""
    with open(path, "w") as fh:
        for row in surface.depth:
            fh.write(" ".join(format(v, ".10g") for v in row))
            fh.write("\n")


def read_surface_text(path) -> Surface:
    """Read a surface grid written by write_surface_text."""
    rows = []
    width = None
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = np.array([float(tok) for tok in line.split()], dtype=np.float64)
            except ValueError:
                raise ParseError("non-numeric token", path=str(path), line=lineno)
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(
                    f"expected {width} values, found {len(row)}",
                    path=str(path), line=lineno,
                )
            rows.append(row)
    if not rows:
        raise ParseError("surface file is empty", path=str(path))
    return Surface(np.stack(rows))
