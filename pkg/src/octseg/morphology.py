"""Binary morphology: two-subiteration thinning, hole fill, contour.

Masks are 2D arrays where nonzero means foreground. Everything outside
the image counts as background.
"""

from collections import deque

import numpy as np


def _as_mask(img: np.ndarray) -> np.ndarray:
    m = np.asarray(img)
    if m.ndim != 2:
        raise ValueError("expected a 2D mask")
    return (m != 0)


def _neighbors8(mask: np.ndarray):
    """P2..P9: clockwise ring starting north, zero-padded borders."""
    p = np.pad(mask, 1, mode="constant").astype(np.uint8)
    c = lambda dy, dx: p[1 + dy:p.shape[0] - 1 + dy, 1 + dx:p.shape[1] - 1 + dx]
    return (
        c(-1, 0), c(-1, 1), c(0, 1), c(1, 1),
        c(1, 0), c(1, -1), c(0, -1), c(-1, -1),
    )


def _thin_subpass(mask: np.ndarray, second: bool) -> np.ndarray:
    """One directional deletion pass; returns the pixels to remove."""
    p2, p3, p4, p5, p6, p7, p8, p9 = _neighbors8(mask)
    ring = (p2, p3, p4, p5, p6, p7, p8, p9)
    b = sum(n.astype(np.int8) for n in ring)
    a = np.zeros_like(b)
    for cur, nxt in zip(ring, ring[1:] + ring[:1]):
        a += ((cur == 0) & (nxt == 1)).astype(np.int8)
    if not second:
        dir_a = (p2 * p4 * p6) == 0
        dir_b = (p4 * p6 * p8) == 0
    else:
        dir_a = (p2 * p4 * p8) == 0
        dir_b = (p2 * p6 * p8) == 0
    return mask & (b >= 2) & (b <= 6) & (a == 1) & dir_a & dir_b


def zhang_suen_thin(img: np.ndarray) -> np.ndarray:
    """Thin a mask to a 1-pixel skeleton.

    Alternates the two directional subiterations until neither removes
    a pixel. Deletion conditions per pixel: 2 <= B(p) <= 6 neighbors,
    exactly one 0-to-1 transition around the ring, and the directional
    neighbor products vanish. Never adds foreground; applying the
    result again changes nothing.
    """
    mask = _as_mask(img).copy()
    while True:
        removed = False
        for second in (False, True):
            kill = _thin_subpass(mask, second)
            if kill.any():
                mask &= ~kill
                removed = True
        if not removed:
            return mask.astype(np.uint8)


def fill(img: np.ndarray) -> np.ndarray:
    """Set background regions not 4-connected to the border to foreground."""
    mask = _as_mask(img)
    rows, cols = mask.shape
    outside = np.zeros_like(mask)
    queue = deque()
    for x in range(cols):
        for y in (0, rows - 1):
            if not mask[y, x] and not outside[y, x]:
                outside[y, x] = True
                queue.append((y, x))
    for y in range(rows):
        for x in (0, cols - 1):
            if not mask[y, x] and not outside[y, x]:
                outside[y, x] = True
                queue.append((y, x))
    while queue:
        y, x = queue.popleft()
        for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
            if 0 <= ny < rows and 0 <= nx < cols and not mask[ny, nx] and not outside[ny, nx]:
                outside[ny, nx] = True
                queue.append((ny, nx))
    return (mask | ~outside).astype(np.uint8)


def contour(img: np.ndarray) -> np.ndarray:
    """Keep foreground pixels that touch background 4-adjacently or lie
    on the image border; clear the interior."""
    mask = _as_mask(img)
    p = np.pad(mask, 1, mode="constant")
    up = p[:-2, 1:-1]
    down = p[2:, 1:-1]
    left = p[1:-1, :-2]
    right = p[1:-1, 2:]
    interior = up & down & left & right
    return (mask & ~interior).astype(np.uint8)


def thin_volume(volume_mask: np.ndarray, prune_slices: bool = False) -> np.ndarray:
    """Per-slice thinning of an (N, M, W) mask stack.

    With prune_slices=True a second pass removes single-pixel islands
    (no in-slice 8-neighbors) that also have no foreground at the same
    (z, x) in either adjacent slice; such specks are almost always
    noise rather than structure that continues through the stack. Off
    by default.
    """
    stack = np.asarray(volume_mask)
    if stack.ndim != 3:
        raise ValueError("expected an (N, M, W) mask stack")
    thinned = np.stack([zhang_suen_thin(stack[y]) for y in range(stack.shape[0])])
    if not prune_slices:
        return thinned

    n = thinned.shape[0]
    out = thinned.copy()
    for y in range(n):
        mask = thinned[y] != 0
        neigh = sum(arr.astype(np.int8) for arr in _neighbors8(mask))
        isolated = mask & (neigh == 0)
        if not isolated.any():
            continue
        supported = np.zeros_like(mask)
        if y > 0:
            supported |= thinned[y - 1] != 0
        if y + 1 < n:
            supported |= thinned[y + 1] != 0
        out[y][isolated & ~supported] = 0
    return out
