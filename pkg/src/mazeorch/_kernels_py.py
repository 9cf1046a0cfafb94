"""Pure-Python grid search kernels.

Reference implementation of the functions in ``_kernels.pyx``. Used when the
compiled extension is unavailable or ``MAZEORCH_PURE_PYTHON`` is set.
"""
from collections import deque

import numpy as np

# N, S, E, W in matrix coordinates
_STEPS = ((-1, 0), (1, 0), (0, 1), (0, -1))


def bfs_distances(passable, row, col):
    """4-connected BFS distances from ``(row, col)`` over a boolean mask.

    Unreachable cells (and every cell when the source is not passable) get -1.
    """
    mask = np.asarray(passable, dtype=np.uint8)
    h, w = mask.shape
    dist = np.full((h, w), -1, dtype=np.int32)
    if not (0 <= row < h and 0 <= col < w) or not mask[row, col]:
        return dist
    m = mask.tolist()
    d = dist.tolist()
    d[row][col] = 0
    queue = deque([(row, col)])
    while queue:
        r, c = queue.popleft()
        nd = d[r][c] + 1
        for dr, dc in _STEPS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and m[rr][cc] and d[rr][cc] < 0:
                d[rr][cc] = nd
                queue.append((rr, cc))
    return np.array(d, dtype=np.int32)


def trace_path(dist, row, col):
    """Walk a BFS distance map back from ``(row, col)`` to its source.

    Returns the cells from source to target. At each step the first neighbour
    in N, S, E, W order whose distance is one less is taken, so the result is
    deterministic. Returns an empty list if the target is unreachable.
    """
    d = np.asarray(dist)
    h, w = d.shape
    cur = int(d[row, col])
    if cur < 0:
        return []
    path = [(row, col)]
    r, c = row, col
    while cur > 0:
        for dr, dc in _STEPS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and d[rr, cc] == cur - 1:
                r, c = rr, cc
                break
        else:  # pragma: no cover - only on a corrupt distance map
            raise ValueError("distance map is not a BFS tree")
        cur -= 1
        path.append((r, c))
    path.reverse()
    return path
