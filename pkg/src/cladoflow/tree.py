"""Binary cladograms viewed as finite algebraic measure trees.

A cladogram on ``N`` leaves has vertices ``1..N`` (the leaves) and
``N+1..2N-2`` (the internal vertices, all of degree 3).  The sampling
measure is uniform on the leaves, so every mass is an integer leaf count
divided by ``N``; exact quantities are returned as
:class:`fractions.Fraction`.

Rooted bookkeeping (parents, subtree leaf counts, preorder positions) is
computed lazily with leaf 1 as the root and cached on the instance.
"""

from __future__ import annotations

from fractions import Fraction
from math import prod
from typing import Iterable, Sequence

import numpy as np

from .errors import (BadDegree, BadLabels, InternalInconsistency, InvalidVertex,
                     NotATree, SameVertex, WrongEdgeCount)
from .rng import as_generator

Edge = tuple[int, int]


class _Rooted:
    """Rooted view of a cladogram (root = leaf 1)."""

    __slots__ = ("parent", "depth", "order", "pos", "size", "sub", "children")

    def __init__(self, n: int, nbrs: Sequence[Sequence[int]]):
        nv = 2 * n - 2
        parent = [0] * (nv + 1)
        depth = [0] * (nv + 1)
        children: list[list[int]] = [[] for _ in range(nv + 1)]
        order = []
        stack = [1]
        while stack:
            v = stack.pop()
            order.append(v)
            pv = parent[v]
            for w in nbrs[v]:
                if w != pv:
                    parent[w] = v
                    depth[w] = depth[v] + 1
                    children[v].append(w)
                    stack.append(w)
        pos = [0] * (nv + 1)
        for i, v in enumerate(order):
            pos[v] = i
        size = [1] * (nv + 1)
        sub = [0] * (nv + 1)
        for v in reversed(order):
            if v <= n:
                sub[v] += 1
            p = parent[v]
            if p:
                size[p] += size[v]
                sub[p] += sub[v]
        self.parent = parent
        self.depth = depth
        self.order = order
        self.pos = pos
        self.size = size
        self.sub = sub
        self.children = children


class Cladogram:
    """An unrooted binary tree with leaves labelled ``1..N``.

    Instances are immutable.  Use :func:`validate_cladogram` (or the
    constructor, which calls it) for untrusted input.

    Parameters
    ----------
    n_leaves : int
        Number of leaves ``N >= 3``.
    edges : iterable of pairs
        The ``2N-3`` undirected edges.

    Notes
    -----
    Equality and hashing use :meth:`canonical_key`, so two cladograms that
    differ only in the ids of internal vertices compare equal.
    """

    __slots__ = ("n_leaves", "edges", "_nbrs", "_rooted", "_cache")

    def __init__(self, n_leaves: int, edges: Iterable[Sequence[int]]):
        n, es, nbrs = _check(n_leaves, edges)
        self._init(n, es, nbrs)

    def _init(self, n, es, nbrs):
        self.n_leaves = n
        self.edges = es
        self._nbrs = nbrs
        self._rooted = None
        self._cache = {}

    @classmethod
    def _trusted(cls, n_leaves: int, edges: Sequence[Edge]) -> "Cladogram":
        """Build without validation (for edge lists produced internally)."""
        n = int(n_leaves)
        es = tuple((a, b) if a < b else (b, a) for a, b in edges)
        nbrs: list[list[int]] = [[] for _ in range(2 * n - 1)]
        for a, b in es:
            nbrs[a].append(b)
            nbrs[b].append(a)
        obj = cls.__new__(cls)
        obj._init(n, es, tuple(tuple(x) for x in nbrs))
        return obj

    # basic structure

    @property
    def n_vertices(self) -> int:
        return 2 * self.n_leaves - 2

    @property
    def leaves(self) -> range:
        return range(1, self.n_leaves + 1)

    @property
    def internal_vertices(self) -> range:
        return range(self.n_leaves + 1, 2 * self.n_leaves - 1)

    @property
    def vertices(self) -> range:
        return range(1, 2 * self.n_leaves - 1)

    def neighbors(self, v: int) -> tuple[int, ...]:
        self.check_vertex(v)
        return self._nbrs[v]

    def degree(self, v: int) -> int:
        return len(self.neighbors(v))

    def is_leaf(self, v: int) -> bool:
        return 1 <= v <= self.n_leaves

    def check_vertex(self, v) -> None:
        if not isinstance(v, (int, np.integer)) or not 1 <= v <= 2 * self.n_leaves - 2:
            raise InvalidVertex(f"{v!r} is not a vertex of this {self.n_leaves}-cladogram")

    def has_edge(self, a: int, b: int) -> bool:
        return 1 <= a <= self.n_vertices and b in self._nbrs[a]

    @property
    def rooted(self) -> _Rooted:
        if self._rooted is None:
            self._rooted = _Rooted(self.n_leaves, self._nbrs)
        return self._rooted

    # paths and branch points

    def lca(self, x: int, y: int) -> int:
        """Lowest common ancestor for the rooting at leaf 1."""
        r = self.rooted
        par, dep = r.parent, r.depth
        while dep[x] > dep[y]:
            x = par[x]
        while dep[y] > dep[x]:
            y = par[y]
        while x != y:
            x = par[x]
            y = par[y]
        return x

    def path(self, x: int, y: int) -> list[int]:
        """Vertices of the path from ``x`` to ``y``, both ends included."""
        self.check_vertex(x)
        self.check_vertex(y)
        a = self.lca(x, y)
        par = self.rooted.parent
        left = [x]
        while left[-1] != a:
            left.append(par[left[-1]])
        right = [y]
        while right[-1] != a:
            right.append(par[right[-1]])
        return left + right[-2::-1]

    def _in_subtree(self, u: int, v: int) -> bool:
        r = self.rooted
        return r.pos[v] <= r.pos[u] < r.pos[v] + r.size[v]

    def direction(self, v: int, u: int) -> int:
        """The neighbour of ``v`` on the path towards ``u``."""
        if u == v:
            raise SameVertex(f"vertex {v} has no direction towards itself")
        r = self.rooted
        if self._in_subtree(u, v):
            for c in r.children[v]:
                if self._in_subtree(u, c):
                    return c
        return r.parent[v]

    def component_count(self, v: int, u: int) -> int:
        """Number of leaves in the component of ``t - {v}`` containing ``u``."""
        self.check_vertex(v)
        self.check_vertex(u)
        w = self.direction(v, u)
        r = self.rooted
        if r.parent[w] == v:
            return r.sub[w]
        return self.n_leaves - r.sub[v]

    def component_counts(self, v: int) -> tuple[int, ...]:
        """Leaf counts of the components at ``v``, one per neighbour of ``v``.

        The order follows :meth:`neighbors`.
        """
        r = self.rooted
        n = self.n_leaves
        out = []
        for w in self.neighbors(v):
            out.append(r.sub[w] if r.parent[w] == v else n - r.sub[v])
        return tuple(out)

    def internal_count_table(self) -> np.ndarray:
        """``(N-2, 3)`` int64 array of component leaf counts, one row per internal vertex.

        Row ``i`` belongs to vertex ``N+1+i`` and is sorted decreasingly.
        """
        tab = self._cache.get("counts")
        if tab is None:
            r = self.rooted
            n = self.n_leaves
            sub, children = r.sub, r.children
            rows = []
            for v in self.internal_vertices:
                c1, c2 = children[v]
                rows.append(sorted((sub[c1], sub[c2], n - sub[v]), reverse=True))
            tab = np.array(rows, dtype=np.int64).reshape(-1, 3)
            tab.setflags(write=False)
            self._cache["counts"] = tab
        return tab

    def edge_sides(self) -> list[tuple[int, int]]:
        """For each edge ``(a, b)`` in :attr:`edges`, the leaf counts on the ``a`` and ``b`` sides."""
        r = self.rooted
        n = self.n_leaves
        out = []
        for a, b in self.edges:
            if r.parent[b] == a:
                out.append((n - r.sub[b], r.sub[b]))
            else:
                out.append((r.sub[a], n - r.sub[a]))
        return out

    # identity

    def canonical_key(self) -> bytes:
        """Label-preserving isomorphism invariant (see :mod:`cladoflow.shapes`)."""
        key = self._cache.get("key")
        if key is None:
            from .shapes import LabelledShape
            key = LabelledShape.from_cladogram(self).canonical_key
            self._cache["key"] = key
        return key

    def __eq__(self, other):
        if not isinstance(other, Cladogram):
            return NotImplemented
        return self.n_leaves == other.n_leaves and self.canonical_key() == other.canonical_key()

    def __hash__(self):
        return hash(self.canonical_key())

    def __repr__(self):
        from .serialize import to_newick
        return f"Cladogram({to_newick(self)!r})"


def _check(n_leaves, edges) -> tuple[int, tuple[Edge, ...], tuple[tuple[int, ...], ...]]:
    if isinstance(n_leaves, bool) or not isinstance(n_leaves, (int, np.integer)):
        raise BadLabels(f"n_leaves must be an integer, got {n_leaves!r}")
    n = int(n_leaves)
    if n < 3:
        raise BadLabels(f"a cladogram needs at least 3 leaves, got {n}")
    es = []
    for e in edges:
        if len(e) != 2:
            raise NotATree(f"edge {e!r} does not have two endpoints")
        a, b = int(e[0]), int(e[1])
        es.append((a, b) if a < b else (b, a))
    if len(es) != 2 * n - 3:
        raise WrongEdgeCount(f"expected {2 * n - 3} edges for N={n}, got {len(es)}")
    nv = 2 * n - 2
    for a, b in es:
        if not (1 <= a <= nv and 1 <= b <= nv):
            raise BadLabels(f"edge {(a, b)} uses a vertex outside 1..{nv}")
        if a == b:
            raise NotATree(f"self loop at vertex {a}")
    # union-find: with 2N-3 edges on 2N-2 vertices, acyclic iff connected
    root = list(range(nv + 1))

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    for a, b in es:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise NotATree(f"edge {(a, b)} closes a cycle")
        root[ra] = rb
    nbrs: list[list[int]] = [[] for _ in range(nv + 1)]
    for a, b in es:
        nbrs[a].append(b)
        nbrs[b].append(a)
    for v in range(1, nv + 1):
        d = len(nbrs[v])
        if d not in (1, 3):
            raise BadDegree(f"vertex {v} has degree {d}")
    leaves = [v for v in range(1, nv + 1) if len(nbrs[v]) == 1]
    if leaves != list(range(1, n + 1)):
        raise BadLabels(f"degree-1 vertices must be exactly 1..{n}")
    return n, tuple(es), tuple(tuple(x) for x in nbrs)


def validate_cladogram(n_leaves: int, edges: Iterable[Sequence[int]]) -> Cladogram:
    """Validate a raw edge list and return the :class:`Cladogram`.

    Raises
    ------
    WrongEdgeCount, NotATree, BadDegree, BadLabels
    """
    return Cladogram(n_leaves, edges)


# branch points, masses, metric


def branch_point(t: Cladogram, x: int, y: int, z: int) -> int:
    """The unique vertex lying on all three paths between ``x``, ``y`` and ``z``."""
    for v in (x, y, z):
        t.check_vertex(v)
    cands = (t.lca(x, y), t.lca(x, z), t.lca(y, z))
    dep = t.rooted.depth
    return max(cands, key=lambda v: dep[v])


def component_mass(t: Cladogram, v: int, u: int) -> Fraction:
    """Uniform leaf mass of the component of ``t - {v}`` that contains ``u``."""
    return Fraction(t.component_count(v, u), t.n_leaves)


def leaf_atom_numerator(n: int) -> int:
    """``N**3`` times the branch-point mass of a leaf: ``1 + 3(N-1)``."""
    return 3 * n - 2


def nu_atom(t: Cladogram, v: int) -> Fraction:
    """Branch-point distribution mass of vertex ``v``.

    Internal vertices with component masses ``a, b, c`` get ``6abc``; a leaf
    with mass ``w = 1/N`` gets ``w**3 + 3 w**2 (1-w)``, the probability that
    at least two of three uniform leaves coincide with it.
    """
    t.check_vertex(v)
    n = t.n_leaves
    if t.is_leaf(v):
        return Fraction(leaf_atom_numerator(n), n**3)
    a, b, c = t.component_counts(v)
    return Fraction(6 * a * b * c, n**3)


def nu_numerators(t: Cladogram) -> list[int]:
    """``N**3 * nu_atom(t, v)`` for every vertex, indexed by vertex id (index 0 unused)."""
    n = t.n_leaves
    out = [0] + [leaf_atom_numerator(n)] * n
    tab = t.internal_count_table()
    out.extend((6 * tab[:, 0] * tab[:, 1] * tab[:, 2]).tolist())
    return out


def r_mu(t: Cladogram, x: int, y: int) -> Fraction:
    """Intrinsic distance: ``nu([x, y]) - nu{x}/2 - nu{y}/2``."""
    if x == y:
        t.check_vertex(x)
        return Fraction(0)
    nu = nu_numerators(t)
    p = t.path(x, y)
    num = 2 * sum(nu[v] for v in p) - nu[x] - nu[y]
    return Fraction(num, 2 * t.n_leaves**3)


def total_length(t: Cladogram) -> Fraction:
    """Total length ``(1/2) sum_v deg(v) nu{v}``, checked against the edge sum of ``r_mu``.

    Raises
    ------
    InternalInconsistency
        If the degree-weighted sum and the sum of edge lengths differ.
    """
    n = t.n_leaves
    nu = nu_numerators(t)
    by_degree = Fraction(sum(len(t._nbrs[v]) * nu[v] for v in t.vertices), 2 * n**3)
    by_edges = sum((r_mu(t, a, b) for a, b in t.edges), Fraction(0))
    if by_degree != by_edges:
        raise InternalInconsistency(f"total length {by_degree} != edge sum {by_edges}")
    return by_degree


def leaf_distance_numerators(t: Cladogram) -> np.ndarray:
    """Exact leaf-to-leaf intrinsic distances scaled by ``2 N**3``.

    Returns an ``(N, N)`` int64 array ``D`` with ``D[i, j] = 2 N**3 r_mu(i+1, j+1)``.
    One traversal per source leaf, ``O(N**2)`` overall.
    """
    n = t.n_leaves
    nu = nu_numerators(t)
    nbrs = t._nbrs
    out = np.zeros((n, n), dtype=np.int64)
    for x in range(1, n + 1):
        acc = {x: nu[x]}
        stack = [x]
        row = out[x - 1]
        while stack:
            v = stack.pop()
            for w in nbrs[v]:
                if w not in acc:
                    acc[w] = acc[v] + nu[w]
                    stack.append(w)
                    if w <= n:
                        row[w - 1] = 2 * acc[w] - nu[x] - nu[w]
    return out


# extended tree and the edge-midpoint count


def extended_tree(t: Cladogram) -> tuple[Cladogram, dict[int, int], list[int]]:
    """Subdivide every edge of ``t`` at a midpoint and hang a new leaf there.

    Returns
    -------
    tbar : Cladogram
        Tree with ``3N-3`` leaves: the original leaves keep their ids, the
        new leaf of edge ``i`` (in ``t.edges`` order) is ``N+1+i``.
    vmap : dict
        Original vertex id to its id in ``tbar``.
    new_leaves : list of int
        Id in ``tbar`` of the leaf hung from each edge of ``t``.
    """
    n = t.n_leaves
    ne = len(t.edges)
    nb = n + ne
    vmap = {v: v for v in t.leaves}
    for i, v in enumerate(t.internal_vertices):
        vmap[v] = nb + 1 + i
    next_id = nb + 1 + (n - 2)
    edges = []
    new_leaves = []
    for i, (a, b) in enumerate(t.edges):
        mid = next_id
        next_id += 1
        y = n + 1 + i
        new_leaves.append(y)
        edges += [(vmap[a], mid), (mid, vmap[b]), (mid, y)]
    return Cladogram._trusted(nb, edges), vmap, new_leaves


def midpoint_identity(t: Cladogram, z: int, z2: int) -> tuple[int, int]:
    """Both sides of the edge-midpoint counting identity for ``z != z2``.

    The left side counts edges whose hung leaf in the extended tree branches
    off strictly inside the path from ``z`` to ``z2``.  The right side is
    ``2 * #{leaves x : c(x, z, z2) strictly inside the path} + 1``,
    computed in ``t`` itself.
    """
    if z == z2:
        raise SameVertex("the identity needs two distinct vertices")
    tbar, vmap, hung = extended_tree(t)
    zb, z2b = vmap[z], vmap[z2]
    lhs = sum(1 for y in hung if branch_point(tbar, y, zb, z2b) not in (zb, z2b))
    inner = sum(1 for x in t.leaves if branch_point(t, x, z, z2) not in (z, z2))
    return lhs, 2 * inner + 1


# counting and generation


def count_cladograms(m: int) -> int:
    """Number of labelled binary cladograms on ``m`` leaves, ``(2m-5)!!`` (1 for ``m = 2``)."""
    if m < 2:
        raise ValueError("count_cladograms needs m >= 2")
    return prod(range(1, 2 * m - 4, 2))


def _insertion_edges(n: int, choices: Sequence[int]) -> list[Edge]:
    """Edge list built by inserting leaves ``4..n`` at the given edge indices."""
    edges: list[Edge] = [(1, n + 1), (2, n + 1), (3, n + 1)]
    for k, idx in zip(range(4, n + 1), choices):
        a, b = edges[idx]
        w = n + k - 2
        edges[idx] = (a, w)
        edges.append((w, b))
        edges.append((w, k))
    return edges


def uniform_cladogram(n: int, rng=None) -> Cladogram:
    """Draw a uniformly random labelled ``n``-cladogram.

    Leaves ``4..n`` are inserted one at a time into a uniformly chosen edge of
    the current tree, which has ``2k-5`` edges before leaf ``k`` arrives; the
    product of these counts is ``(2n-5)!!`` so every outcome is equally likely.
    """
    if n < 3:
        raise ValueError("uniform_cladogram needs n >= 3")
    g = as_generator(rng)
    highs = 2 * np.arange(4, n + 1) - 5
    choices = g.integers(0, highs).tolist() if n > 3 else []
    return Cladogram._trusted(n, _insertion_edges(n, choices))


def all_cladograms(n: int) -> Iterable[Cladogram]:
    """Every labelled ``n``-cladogram once, by exhaustive insertion (``n <= 9``)."""
    if n > 9:
        from .errors import CapExceeded
        raise CapExceeded(f"all_cladograms is capped at n = 9, got {n}")
    import itertools
    ranges = [range(2 * k - 5) for k in range(4, n + 1)]
    for choices in itertools.product(*ranges):
        yield Cladogram._trusted(n, _insertion_edges(n, choices))


def comb_cladogram(n: int) -> Cladogram:
    """Caterpillar: leaves ``1..n`` hang in order from a path of internal vertices."""
    if n < 3:
        raise ValueError("comb_cladogram needs n >= 3")
    spine = list(range(n + 1, 2 * n - 1))
    edges = [(1, spine[0]), (2, spine[0])]
    for i in range(1, len(spine)):
        edges.append((spine[i - 1], spine[i]))
        edges.append((i + 2, spine[i]))
    edges.append((n, spine[-1]))
    return Cladogram._trusted(n, edges)


def balanced_cladogram(n: int) -> Cladogram:
    """Recursively balanced tree: split the leaf range in halves, then unroot."""
    if n < 3:
        raise ValueError("balanced_cladogram needs n >= 3")
    edges: list[Edge] = []
    counter = [n]

    def build(lo: int, hi: int) -> int:
        if lo == hi:
            return lo
        mid = (lo + hi) // 2
        left, right = build(lo, mid), build(mid + 1, hi)
        counter[0] += 1
        v = counter[0]
        edges.append((v, left))
        edges.append((v, right))
        return v

    top = build(1, n)
    # the root has degree 2; splice it out
    ends = [b for a, b in edges if a == top]
    edges = [e for e in edges if e[0] != top]
    edges.append((ends[0], ends[1]))
    return Cladogram._trusted(n, edges)


def start_tree(name: str, n: int, rng=None) -> Cladogram:
    """Named starting states: ``"comb"``, ``"balanced"`` or ``"uniform"``."""
    if name == "comb":
        return comb_cladogram(n)
    if name == "balanced":
        return balanced_cladogram(n)
    if name == "uniform":
        return uniform_cladogram(n, rng)
    raise ValueError(f"unknown start {name!r}")
