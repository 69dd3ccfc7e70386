"""Canny edge detection, staged so each step can be checked alone.

Images are (rows, cols) float arrays; for B-scans rows run along the
axial z direction and cols along the lateral x direction.
"""

from collections import deque

import numpy as np


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel truncated at radius ceil(3*sigma),
    borders replicated. sigma = 0 returns a copy."""
    m = np.asarray(img, dtype=np.float64)
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    radius = int(np.ceil(3 * sigma)) if sigma > 0 else 0
    if radius == 0:
        return m.copy()
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-(offsets.astype(np.float64) ** 2) / (2 * sigma * sigma))
    kernel /= kernel.sum()

    def pass1d(arr, axis):
        padded = np.pad(
            arr,
            [(radius, radius) if ax == axis else (0, 0) for ax in range(2)],
            mode="edge",
        )
        out = np.zeros_like(arr)
        for k, wgt in enumerate(kernel):
            sl = [slice(None)] * 2
            sl[axis] = slice(k, k + arr.shape[axis])
            out += wgt * padded[tuple(sl)]
        return out

    return pass1d(pass1d(m, 0), 1)


def sobel_gradients(img: np.ndarray):
    """3x3 Sobel derivatives (g_rows, g_cols) with replicated borders."""
    m = np.asarray(img, dtype=np.float64)
    p = np.pad(m, 1, mode="edge")
    c = lambda dy, dx: p[1 + dy:p.shape[0] - 1 + dy, 1 + dx:p.shape[1] - 1 + dx]
    gx = (c(-1, 1) + 2 * c(0, 1) + c(1, 1)) - (c(-1, -1) + 2 * c(0, -1) + c(1, -1))
    gy = (c(1, -1) + 2 * c(1, 0) + c(1, 1)) - (c(-1, -1) + 2 * c(-1, 0) + c(-1, 1))
    return gy, gx


def nonmax_suppress(mag: np.ndarray, gy: np.ndarray, gx: np.ndarray) -> np.ndarray:
    """Keep magnitudes that are >= both neighbors along the gradient
    direction (quantized to 4 sectors); out-of-image neighbors count 0."""
    mag = np.asarray(mag, dtype=np.float64)
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0

    padded = np.pad(mag, 1, mode="constant")
    c = lambda dy, dx: padded[1 + dy:padded.shape[0] - 1 + dy, 1 + dx:padded.shape[1] - 1 + dx]

    horiz = (angle < 22.5) | (angle >= 157.5)
    diag1 = (angle >= 22.5) & (angle < 67.5)
    vert = (angle >= 67.5) & (angle < 112.5)
    diag2 = (angle >= 112.5) & (angle < 157.5)

    n1 = np.zeros_like(mag)
    n2 = np.zeros_like(mag)
    for sector, (dy, dx) in (
        (horiz, (0, 1)),
        (diag1, (1, 1)),
        (vert, (1, 0)),
        (diag2, (1, -1)),
    ):
        n1[sector] = c(dy, dx)[sector]
        n2[sector] = c(-dy, -dx)[sector]

    keep = (mag >= n1) & (mag >= n2)
    out = np.where(keep, mag, 0.0)
    return out


def hysteresis(nms: np.ndarray, low: float, high: float) -> np.ndarray:
    """Double threshold and edge linking.

    low/high are fractions of the suppressed magnitude's maximum.
    Strong pixels (>= high) seed a flood over weak pixels (>= low)
    through 8-connectivity; everything else drops. Returns uint8 {0, 1}.
    """
    if not (0 <= low <= high <= 1):
        raise ValueError("thresholds must satisfy 0 <= low <= high <= 1")
    m = np.asarray(nms, dtype=np.float64)
    peak = m.max()
    if peak == 0:
        return np.zeros(m.shape, dtype=np.uint8)
    strong = m >= high * peak
    weak = m >= low * peak

    rows, cols = m.shape
    out = strong.copy()
    queue = deque(zip(*np.nonzero(strong)))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < rows and 0 <= nx < cols and weak[ny, nx] and not out[ny, nx]:
                    out[ny, nx] = True
                    queue.append((ny, nx))
    return out.astype(np.uint8)


def canny(img: np.ndarray, sigma: float = 2.0, low: float = 0.1, high: float = 0.3) -> np.ndarray:
    """Full pipeline: blur, Sobel, non-maximum suppression, hysteresis.

    Returns a thin binary edge map (uint8 {0, 1}).
    """
    blurred = gaussian_blur(img, sigma)
    gy, gx = sobel_gradients(blurred)
    mag = np.hypot(gy, gx)
    nms = nonmax_suppress(mag, gy, gx)
    return hysteresis(nms, low, high)
