# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled grid search kernels. Same contract as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef int[4] DR = [-1, 1, 0, 0]
cdef int[4] DC = [0, 0, 1, -1]


def bfs_distances(passable, Py_ssize_t row, Py_ssize_t col):
    cdef cnp.uint8_t[:, ::1] mask = np.ascontiguousarray(passable, dtype=np.uint8)
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    out = np.full((h, w), -1, dtype=np.int32)
    cdef cnp.int32_t[:, ::1] d = out
    if row < 0 or row >= h or col < 0 or col >= w or not mask[row, col]:
        return out
    cdef Py_ssize_t n = h * w
    cdef Py_ssize_t *queue = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    if queue == NULL:
        raise MemoryError()
    cdef Py_ssize_t head = 0, tail = 0, r, c, rr, cc, idx
    cdef int k
    cdef cnp.int32_t nd
    try:
        d[row, col] = 0
        queue[tail] = row * w + col
        tail += 1
        while head < tail:
            idx = queue[head]
            head += 1
            r = idx // w
            c = idx - r * w
            nd = d[r, c] + 1
            for k in range(4):
                rr = r + DR[k]
                cc = c + DC[k]
                if rr >= 0 and rr < h and cc >= 0 and cc < w and mask[rr, cc] and d[rr, cc] < 0:
                    d[rr, cc] = nd
                    queue[tail] = rr * w + cc
                    tail += 1
    finally:
        free(queue)
    return out


def trace_path(dist, Py_ssize_t row, Py_ssize_t col):
    cdef cnp.int32_t[:, ::1] d = np.ascontiguousarray(dist, dtype=np.int32)
    cdef Py_ssize_t h = d.shape[0], w = d.shape[1]
    cdef Py_ssize_t r = row, c = col, rr, cc
    cdef cnp.int32_t cur = d[row, col]
    cdef int k
    cdef bint found
    if cur < 0:
        return []
    path = [(row, col)]
    while cur > 0:
        found = False
        for k in range(4):
            rr = r + DR[k]
            cc = c + DC[k]
            if rr >= 0 and rr < h and cc >= 0 and cc < w and d[rr, cc] == cur - 1:
                r = rr
                c = cc
                found = True
                break
        if not found:
            raise ValueError("distance map is not a BFS tree")
        cur -= 1
        path.append((r, c))
    path.reverse()
    return path
