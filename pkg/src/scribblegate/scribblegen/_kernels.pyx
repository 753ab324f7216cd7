# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled scribble-synthesis kernels; mirrors _kernels_py.py bit for bit."""
import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline int _at(cnp.uint8_t[:, ::1] img, int h, int w, int r, int c) nogil:
    if 0 <= r < h and 0 <= c < w:
        return img[r, c]
    return 0


def thin(mask):
    """Sequential directional thinning; see _kernels_py.thin for the contract."""
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] arr = \
        np.ascontiguousarray(mask, dtype=np.uint8).copy()
    cdef cnp.uint8_t[:, ::1] img = arr
    cdef int h = arr.shape[0], w = arr.shape[1]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cand_r = np.empty(h * w, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] cand_c = np.empty(h * w, dtype=np.int32)
    cdef cnp.int32_t[:] cr = cand_r
    cdef cnp.int32_t[:] cc = cand_c
    cdef int di[4]
    cdef int dj[4]
    di[0] = -1; dj[0] = 0   # north
    di[1] = 1;  dj[1] = 0   # south
    di[2] = 0;  dj[2] = 1   # east
    di[3] = 0;  dj[3] = -1  # west
    cdef int changed = 1
    cdef int d, i, j, ni, nj, n_cand, k, b, a, t
    cdef int nb[8]
    while changed:
        changed = 0
        for d in range(4):
            n_cand = 0
            for i in range(h):
                for j in range(w):
                    if img[i, j] == 0:
                        continue
                    ni = i + di[d]
                    nj = j + dj[d]
                    if 0 <= ni < h and 0 <= nj < w:
                        if img[ni, nj] != 0:
                            continue
                    cr[n_cand] = i
                    cc[n_cand] = j
                    n_cand += 1
            for k in range(n_cand):
                i = cr[k]
                j = cc[k]
                if img[i, j] == 0:
                    continue
                nb[0] = _at(img, h, w, i - 1, j)
                nb[1] = _at(img, h, w, i - 1, j + 1)
                nb[2] = _at(img, h, w, i, j + 1)
                nb[3] = _at(img, h, w, i + 1, j + 1)
                nb[4] = _at(img, h, w, i + 1, j)
                nb[5] = _at(img, h, w, i + 1, j - 1)
                nb[6] = _at(img, h, w, i, j - 1)
                nb[7] = _at(img, h, w, i - 1, j - 1)
                b = 0
                for t in range(8):
                    b += nb[t]
                if b < 2 or b > 6:
                    continue
                a = 0
                for t in range(8):
                    if nb[t] == 0 and nb[(t + 1) % 8] == 1:
                        a += 1
                if a != 1:
                    continue
                img[i, j] = 0
                changed = 1
    return arr


def random_walk(mask, deltas, start_r, start_c):
    """Masked random walk; see _kernels_py.random_walk for the contract."""
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] m = \
        np.ascontiguousarray(mask, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int8_t, ndim=2, mode="c"] dl = \
        np.ascontiguousarray(deltas, dtype=np.int8)
    cdef int h = m.shape[0], w = m.shape[1]
    cdef cnp.ndarray[cnp.uint8_t, ndim=2, mode="c"] out = \
        np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] mv = m
    cdef cnp.uint8_t[:, ::1] ov = out
    cdef cnp.int8_t[:, ::1] dv = dl
    cdef int r = start_r, c = start_c
    cdef int t, nr, nc, n = dl.shape[0]
    ov[r, c] = 1
    for t in range(n):
        nr = r + dv[t, 0]
        nc = c + dv[t, 1]
        if 0 <= nr < h and 0 <= nc < w and mv[nr, nc] != 0:
            r = nr
            c = nc
        ov[r, c] = 1
    return out
