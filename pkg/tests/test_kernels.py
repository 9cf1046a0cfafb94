import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mazeorch import _kernels_py, kernels
from oracles import grid_graph

import networkx as nx

try:
    from mazeorch import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKENDS = [pytest.param(_kernels_py, id="python")]
BACKENDS.append(pytest.param(_kernels_c, id="cython",
                             marks=pytest.mark.skipif(_kernels_c is None, reason="extension not built")))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def test_backend_selection_reports_a_known_name():
    assert kernels.BACKEND in ("cython", "python")


def test_bfs_corridor(backend):
    mask = np.zeros((3, 7), dtype=np.uint8)
    mask[1, 1:6] = 1
    dist = backend.bfs_distances(mask, 1, 1)
    assert list(dist[1, 1:6]) == [0, 1, 2, 3, 4]
    assert dist[0, 0] == -1
    assert backend.trace_path(dist, 1, 5) == [(1, c) for c in range(1, 6)]


def test_bfs_from_blocked_source_is_all_unreachable(backend):
    mask = np.ones((4, 4), dtype=np.uint8)
    mask[2, 2] = 0
    assert (backend.bfs_distances(mask, 2, 2) == -1).all()


def test_trace_unreachable_is_empty(backend):
    mask = np.array([[1, 0, 1]], dtype=np.uint8)
    dist = backend.bfs_distances(mask, 0, 0)
    assert backend.trace_path(dist, 0, 2) == []


def test_trace_prefers_north_then_south_east_west(backend):
    mask = np.ones((3, 3), dtype=np.uint8)
    dist = backend.bfs_distances(mask, 0, 0)
    # from (1,1) both (0,1) and (1,0) are one closer; NORTH is tried first
    assert backend.trace_path(dist, 1, 1) == [(0, 0), (0, 1), (1, 1)]


@settings(max_examples=150, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.integers(0, 1)),
       st.data())
def test_backends_agree_with_networkx(mask, data):
    h, w = mask.shape
    r = data.draw(st.integers(0, h - 1))
    c = data.draw(st.integers(0, w - 1))
    ref = _kernels_py.bfs_distances(mask, r, c)
    if _kernels_c is not None:
        assert np.array_equal(ref, _kernels_c.bfs_distances(mask, r, c))
    if mask[r, c]:
        g = grid_graph(mask)
        lengths = nx.single_source_shortest_path_length(g, (r, c))
        for (rr, cc), d in lengths.items():
            assert ref[rr, cc] == d
        assert (ref >= 0).sum() == len(lengths)
        for (rr, cc) in lengths:
            path = _kernels_py.trace_path(ref, rr, cc)
            assert len(path) == lengths[(rr, cc)] + 1
            if _kernels_c is not None:
                assert path == _kernels_c.trace_path(ref, rr, cc)
