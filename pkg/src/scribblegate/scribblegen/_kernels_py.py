"""Pure-Python reference kernels (fallback when the compiled extension is absent).

Both backends consume pregenerated RNG arrays and must produce bitwise-identical
results; keep any change here in lockstep with _kernels.pyx.
"""
import numpy as np

# sequential border passes: north, south, east, west
_DIRECTIONS = ((-1, 0), (1, 0), (0, 1), (0, -1))


def _neighborhood(img, i, j):
    """Clockwise 8-neighborhood starting north: p2..p9."""
    h, w = img.shape

    def at(r, c):
        if 0 <= r < h and 0 <= c < w:
            return int(img[r, c])
        return 0

    return (at(i - 1, j), at(i - 1, j + 1), at(i, j + 1), at(i + 1, j + 1),
            at(i + 1, j), at(i + 1, j - 1), at(i, j - 1), at(i - 1, j - 1))


def thin(mask):
    """Sequential directional thinning of a 0/1 uint8 mask.

    Per pass, border pixels in one cardinal direction are collected up front
    (raster order) and deleted one by one iff the crossing number is 1 and the
    pixel has 2..6 foreground neighbors. Keeps endpoints, isolated pixels and
    width-1 lines; preserves 8-connected component count.
    """
    img = np.ascontiguousarray(mask, dtype=np.uint8).copy()
    h, w = img.shape
    changed = True
    while changed:
        changed = False
        for di, dj in _DIRECTIONS:
            cands = []
            for i in range(h):
                for j in range(w):
                    if img[i, j] == 0:
                        continue
                    ni, nj = i + di, j + dj
                    if 0 <= ni < h and 0 <= nj < w:
                        if img[ni, nj] != 0:
                            continue
                    cands.append((i, j))
            for i, j in cands:
                if img[i, j] == 0:
                    continue
                nb = _neighborhood(img, i, j)
                b = sum(nb)
                if b < 2 or b > 6:
                    continue
                a = 0
                for k in range(8):
                    if nb[k] == 0 and nb[(k + 1) % 8] == 1:
                        a += 1
                if a != 1:
                    continue
                img[i, j] = 0
                changed = True
    return img


def random_walk(mask, deltas, start_r, start_c):
    """Walk over a 0/1 mask, marking visited pixels.

    deltas: (n_iter, 2) int8 array of per-step coordinate perturbations in
    {-1,0,1}; moves leaving the canvas or the mask are rejected (the walker
    stays put). Returns the visited-pixel mask.
    """
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    h, w = mask.shape
    out = np.zeros((h, w), dtype=np.uint8)
    r, c = int(start_r), int(start_c)
    out[r, c] = 1
    for t in range(deltas.shape[0]):
        nr = r + int(deltas[t, 0])
        nc = c + int(deltas[t, 1])
        if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] != 0:
            r, c = nr, nc
        out[r, c] = 1
    return out
