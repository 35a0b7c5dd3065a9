"""Compiled move kernels on a mutable array representation of a cladogram.

State arrays (vertex ids index rows directly, row 0 unused):

``edges``  ``(2N-3, 2)`` endpoints of each edge, smaller id first.
``nbr``    ``(2N-1, 3)`` neighbours of each vertex, ``-1`` in unused slots.
``nbr_e``  ``(2N-1, 3)`` edge index of each neighbour slot.

A move of leaf ``u`` into edge ``ei`` reuses ``u``'s old branch point ``b``
and rewrites three edge slots so that the result matches
:func:`cladoflow.chain.aldous_move` exactly, including vertex ids and edge
order:

* the lower-indexed other edge at ``b`` becomes the joined edge ``(a, w)``,
* edge ``ei = (x, y)`` becomes ``(x, b)``,
* the higher-indexed other edge at ``b`` becomes ``(b, y)``.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def state_arrays(n: int, edges) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ne = 2 * n - 3
    e_arr = np.empty((ne, 2), dtype=np.int64)
    nbr = np.full((2 * n - 1, 3), -1, dtype=np.int64)
    nbr_e = np.full((2 * n - 1, 3), -1, dtype=np.int64)
    fill = np.zeros(2 * n - 1, dtype=np.int64)
    for i, (a, b) in enumerate(edges):
        if a > b:
            a, b = b, a
        e_arr[i, 0] = a
        e_arr[i, 1] = b
        nbr[a, fill[a]] = b
        nbr_e[a, fill[a]] = i
        fill[a] += 1
        nbr[b, fill[b]] = a
        nbr_e[b, fill[b]] = i
        fill[b] += 1
    return e_arr, nbr, nbr_e


@njit(cache=True)
def _slot(nbr, v, target):
    for k in range(3):
        if nbr[v, k] == target:
            return k
    return -1


@njit(cache=True)
def other_edges(nbr, nbr_e, u):
    """Branch point ``b`` of leaf ``u`` and the two edges at ``b`` not leading to ``u``, ordered."""
    b = nbr[u, 0]
    e1 = -1
    e2 = -1
    for k in range(3):
        if nbr[b, k] != u:
            if e1 < 0:
                e1 = nbr_e[b, k]
            else:
                e2 = nbr_e[b, k]
    if e1 > e2:
        e1, e2 = e2, e1
    return b, e1, e2


@njit(cache=True)
def is_noop(nbr, nbr_e, u, ei):
    b, e1, e2 = other_edges(nbr, nbr_e, u)
    return ei == nbr_e[u, 0] or ei == e1 or ei == e2


@njit(cache=True)
def _set_edge(edges, i, p, q):
    if p < q:
        edges[i, 0] = p
        edges[i, 1] = q
    else:
        edges[i, 0] = q
        edges[i, 1] = p


@njit(cache=True)
def apply_move(edges, nbr, nbr_e, u, ei):
    """Apply move ``(u, ei)`` in place; return False (and change nothing) for a no-op."""
    b, ea, ew = other_edges(nbr, nbr_e, u)
    if ei == nbr_e[u, 0] or ei == ea or ei == ew:
        return False
    a = edges[ea, 0] if edges[ea, 1] == b else edges[ea, 1]
    w = edges[ew, 0] if edges[ew, 1] == b else edges[ew, 1]
    x = edges[ei, 0]
    y = edges[ei, 1]
    ka = _slot(nbr, b, a)
    kw = _slot(nbr, b, w)
    # join a and w through edge ea
    k = _slot(nbr, a, b)
    nbr[a, k] = w
    k = _slot(nbr, w, b)
    nbr[w, k] = a
    nbr_e[w, k] = ea
    _set_edge(edges, ea, a, w)
    # split (x, y) at b
    k = _slot(nbr, x, y)
    nbr[x, k] = b
    k = _slot(nbr, y, x)
    nbr[y, k] = b
    nbr_e[y, k] = ew
    _set_edge(edges, ei, x, b)
    _set_edge(edges, ew, b, y)
    nbr[b, ka] = x
    nbr_e[b, ka] = ei
    nbr[b, kw] = y
    nbr_e[b, kw] = ew
    return True


@njit(cache=True)
def run_jumps(edges, nbr, nbr_e, n, n_jumps, seed):
    """Perform ``n_jumps`` state-changing moves drawn uniformly from all such moves.

    ``u`` is uniform over leaves and ``ei`` uniform over the ``2N-6`` edges
    whose use is not a no-op (rejection sampling), which is the uniform law
    on the ``N(2N-6)`` jump pairs.  Seeds numba's generator with ``seed``
    when ``seed >= 0``.
    """
    if seed >= 0:
        np.random.seed(seed)
    ne = 2 * n - 3
    for _ in range(n_jumps):
        u = np.random.randint(1, n + 1)
        b, e1, e2 = other_edges(nbr, nbr_e, u)
        eu = nbr_e[u, 0]
        while True:
            ei = np.random.randint(0, ne)
            if ei != eu and ei != e1 and ei != e2:
                break
        apply_move(edges, nbr, nbr_e, u, ei)
