"""Labelled shapes: the small trees spanned by sampled leaves.

A :class:`LabelledShape` is a binary tree whose leaves carry non-empty,
disjoint label sets covering ``{1..m}``.  When every leaf carries exactly one
label it is an ``m``-cladogram.  The canonical key roots the tree at the leaf
carrying label 1 and orders siblings by (smallest label below, encoding).
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable, Sequence

from .errors import BadEdge, BadLeaf, CapExceeded, NotACladogram, TooSmall
from .tree import Cladogram, all_cladograms, count_cladograms

ENUMERATION_CAP = 8


def _encode_rooted(root: int, adj, leaf_labels) -> str:
    """Canonical string of the tree hanging from ``root`` (a leaf node)."""
    n_leaf = len(leaf_labels)
    order = []
    parent = {root: -1}
    stack = [root]
    while stack:
        v = stack.pop()
        order.append(v)
        for w in adj[v]:
            if w != parent[v]:
                parent[w] = v
                stack.append(w)
    enc: dict[int, tuple[int, str]] = {}
    for v in reversed(order):
        if v < n_leaf and v != root:
            labs = sorted(leaf_labels[v])
            enc[v] = (labs[0], "+".join(map(str, labs)))
        elif v != root:
            kids = sorted(enc.pop(w) for w in adj[v] if w != parent[v])
            enc[v] = (kids[0][0], "(" + ",".join(s for _, s in kids) + ")")
    head = "+".join(map(str, sorted(leaf_labels[root])))
    if not adj[root]:
        return head
    (child,) = adj[root]
    return head + ":" + enc[child][1]


def _unlabelled_key(adj, n_leaf: int) -> str:
    """Isomorphism invariant of the unlabelled tree (leaves are nodes ``< n_leaf``)."""
    best = None
    for root in range(n_leaf):
        order = []
        parent = {root: -1}
        stack = [root]
        while stack:
            v = stack.pop()
            order.append(v)
            for w in adj[v]:
                if w != parent[v]:
                    parent[w] = v
                    stack.append(w)
        enc: dict[int, str] = {}
        for v in reversed(order):
            if v == root:
                continue
            if v < n_leaf:
                enc[v] = "L"
            else:
                enc[v] = "(" + "".join(sorted(enc.pop(w) for w in adj[v] if w != parent[v])) + ")"
        key = enc[adj[root][0]] if adj[root] else ""
        if best is None or key < best:
            best = key
    return best or ""


class LabelledShape:
    """An isomorphism class of a leaf-labelled binary tree.

    Parameters
    ----------
    leaf_labels : sequence of iterables of int
        Label set of each leaf node; leaf nodes are ``0..L-1``.
    edges : sequence of pairs
        Edges over nodes ``0..L+I-1``; nodes ``>= L`` are branch points.

    Attributes
    ----------
    m : int
        Number of labels.
    canonical_key : bytes
        Equal for two shapes iff they are label-preserving isomorphic.
    is_cladogram : bool
        True when every leaf carries a single label.
    """

    __slots__ = ("m", "leaf_labels", "edges", "_adj", "canonical_key", "_splits")

    def __init__(self, leaf_labels: Sequence[Iterable[int]], edges: Sequence[Sequence[int]]):
        labs = tuple(frozenset(int(x) for x in ls) for ls in leaf_labels)
        n_leaf = len(labs)
        n_int = len(edges) + 1 - n_leaf
        if n_leaf == 0 or n_int < 0 or any(not ls for ls in labs):
            raise ValueError("every leaf must carry at least one label")
        allv = sorted(x for ls in labs for x in ls)
        if allv != list(range(1, len(allv) + 1)):
            raise ValueError("labels must partition 1..m")
        adj: list[list[int]] = [[] for _ in range(n_leaf + n_int)]
        for a, b in edges:
            adj[a].append(b)
            adj[b].append(a)
        if n_leaf == 1:
            if edges:
                raise ValueError("a single-leaf shape has no edges")
        else:
            for v, nb in enumerate(adj):
                if len(nb) != (1 if v < n_leaf else 3):
                    raise ValueError(f"node {v} has degree {len(nb)}")
        self.m = len(allv)
        self.leaf_labels = labs
        self.edges = tuple((int(a), int(b)) for a, b in edges)
        self._adj = tuple(tuple(x) for x in adj)
        root = next(i for i, ls in enumerate(labs) if 1 in ls)
        self.canonical_key = _encode_rooted(root, self._adj, labs).encode()
        self._splits = None

    # constructors

    @classmethod
    def from_cladogram(cls, t: Cladogram) -> "LabelledShape":
        """Shape of a cladogram with leaf ``i`` carrying label ``i``."""
        n = t.n_leaves
        return cls([(i,) for i in range(1, n + 1)], [(a - 1, b - 1) for a, b in t.edges])

    @classmethod
    def two_leaf(cls) -> "LabelledShape":
        return cls([(1,), (2,)], [(0, 1)])

    def to_cladogram(self) -> Cladogram:
        """The :class:`Cladogram` with leaf ``k`` carrying label ``k`` (``m >= 3``)."""
        self._require_cladogram()
        if self.m < 3:
            raise TooSmall("a Cladogram needs at least 3 leaves")
        vid = {}
        for i, ls in enumerate(self.leaf_labels):
            (vid[i],) = ls
        n_leaf = len(self.leaf_labels)
        for j in range(n_leaf, len(self._adj)):
            vid[j] = self.m + 1 + (j - n_leaf)
        return Cladogram._trusted(self.m, [(vid[a], vid[b]) for a, b in self.edges])

    # properties

    @property
    def is_cladogram(self) -> bool:
        return all(len(ls) == 1 for ls in self.leaf_labels)

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_labels)

    def _require_cladogram(self):
        if not self.is_cladogram:
            raise NotACladogram("operation needs an injectively labelled shape")

    def label_leaf(self, k: int) -> int:
        for i, ls in enumerate(self.leaf_labels):
            if k in ls:
                return i
        raise BadLeaf(f"label {k} not present")

    def splits(self) -> list[frozenset[int]]:
        """Each edge as the label set on its side away from label 1 (order of :attr:`edges`)."""
        if self._splits is None:
            out = []
            for a, b in self.edges:
                side = self._side(b, a)
                if 1 in side:
                    side = frozenset(range(1, self.m + 1)) - side
                out.append(side)
            self._splits = out
        return list(self._splits)

    def _side(self, start: int, blocked: int) -> frozenset[int]:
        seen = {start, blocked}
        stack = [start]
        labs = set()
        n_leaf = len(self.leaf_labels)
        while stack:
            v = stack.pop()
            if v < n_leaf:
                labs |= self.leaf_labels[v]
            for w in self._adj[v]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return frozenset(labs)

    def is_external(self, split: frozenset[int]) -> bool:
        return len(split) == 1 or len(split) == self.m - 1

    def unlabelled_key(self) -> str:
        """Invariant of the shape with labels forgotten."""
        return _unlabelled_key(self._adj, len(self.leaf_labels))

    def __eq__(self, other):
        if not isinstance(other, LabelledShape):
            return NotImplemented
        return self.canonical_key == other.canonical_key

    def __hash__(self):
        return hash(self.canonical_key)

    def __repr__(self):
        return f"LabelledShape({self.canonical_key.decode()})"


def _contract(adj: dict[int, list[int]], keep: set[int]) -> list[tuple[int, int]]:
    """Edges between kept nodes after suppressing every chain of other nodes."""
    out = []
    for v in keep:
        for w in adj[v]:
            prev, cur = v, w
            while cur not in keep:
                a, b = adj[cur]
                prev, cur = cur, (b if a == prev else a)
            if v < cur:
                out.append((v, cur))
    return out


def shape(t: Cladogram, sample: Sequence[int]) -> LabelledShape:
    """The labelled shape spanned by a tuple of leaves.

    Label ``i`` (1-based) is carried by the leaf ``sample[i-1]``; repeated
    leaves give one shape leaf carrying several labels.
    """
    n = t.n_leaves
    for u in sample:
        if not (isinstance(u, int) or hasattr(u, "__index__")) or not 1 <= u <= n:
            raise BadLeaf(f"{u!r} is not a leaf")
    groups: dict[int, list[int]] = {}
    for i, u in enumerate(sample, start=1):
        groups.setdefault(int(u), []).append(i)
    marked = list(groups)
    if len(marked) == 1:
        return LabelledShape([groups[marked[0]]], [])
    r = t.rooted
    cnt = [0] * (2 * n - 1)
    for u in marked:
        cnt[u] = 1
    total = len(marked)
    steiner = set()
    for v in reversed(r.order):
        c = cnt[v]
        p = r.parent[v]
        if c:
            busy = sum(1 for w in r.children[v] if cnt[w])
            if v in groups or busy >= 2 or c < total:
                steiner.add(v)
            if p:
                cnt[p] += c
    adj = {v: [w for w in t._nbrs[v] if w in steiner] for v in steiner}
    keep = {v for v in steiner if len(adj[v]) != 2}
    edges = _contract(adj, keep)
    node_id = {}
    leaf_labels = []
    for u in sorted(marked):
        node_id[u] = len(leaf_labels)
        leaf_labels.append(groups[u])
    for v in sorted(keep - set(marked)):
        node_id[v] = len(node_id)
    return LabelledShape(leaf_labels, [(node_id[a], node_id[b]) for a, b in edges])


@lru_cache(maxsize=None)
def _enumerate(m: int) -> tuple[LabelledShape, ...]:
    if m == 2:
        return (LabelledShape.two_leaf(),)
    return tuple(LabelledShape.from_cladogram(t) for t in all_cladograms(m))


def enumerate_cladograms(m: int, cap: int = ENUMERATION_CAP) -> list[LabelledShape]:
    """All ``(2m-5)!!`` labelled ``m``-cladograms, in a fixed order.

    Raises
    ------
    CapExceeded
        If ``m`` exceeds ``cap`` (default 8).
    """
    if m < 2:
        raise TooSmall("m must be at least 2")
    if m > min(cap, 9):
        raise CapExceeded(f"enumeration capped at m = {min(cap, 9)}, got {m}")
    return list(_enumerate(m))


@lru_cache(maxsize=None)
def automorphism_counts(m: int) -> dict[str, int]:
    """Unlabelled ``m``-cladogram key mapped to the size of its automorphism group.

    Uses ``|Aut(U)| = m! / #(labelled cladograms of type U)``.
    """
    from math import factorial
    classes: dict[str, int] = {}
    for s in _enumerate(m):
        k = s.unlabelled_key()
        classes[k] = classes.get(k, 0) + 1
    assert sum(classes.values()) == count_cladograms(m)
    return {k: factorial(m) // c for k, c in classes.items()}


def _rebuild(leaf_labels, edges, drop: set[int], n_nodes: int) -> LabelledShape:
    keep = [v for v in range(n_nodes) if v not in drop]
    n_leaf = len(leaf_labels)
    leaves = [v for v in keep if v < n_leaf]
    inner = [v for v in keep if v >= n_leaf]
    ids = {v: i for i, v in enumerate(leaves + inner)}
    return LabelledShape([leaf_labels[v] for v in leaves],
                         [(ids[a], ids[b]) for a, b in edges if a not in drop and b not in drop])


def delete_leaf_label(s: LabelledShape, k: int) -> LabelledShape:
    """Remove the leaf labelled ``k``, suppress its branch point, shift larger labels down."""
    s._require_cladogram()
    if s.m < 3:
        raise TooSmall("deleting a leaf needs m >= 3")
    if not 1 <= k <= s.m:
        raise BadLeaf(f"label {k} not in 1..{s.m}")
    x = s.label_leaf(k)
    (b,) = s._adj[x]
    a, w = (v for v in s._adj[b] if v != x)
    edges = [e for e in s.edges if x not in e and b not in e] + [(a, w)]
    labels = [frozenset(j - 1 if j > k else j for j in ls) for ls in s.leaf_labels]
    return _rebuild(labels, edges, {x, b}, len(s._adj))


def insert_leaf(s: LabelledShape, k: int, e) -> LabelledShape:
    """Insert a new leaf labelled ``k`` into edge ``e`` of ``s``.

    Labels ``>= k`` of ``s`` are shifted up by one first.  ``e`` is either an
    index into ``s.edges`` or an edge split as returned by
    :meth:`LabelledShape.splits` (labels of ``s`` before shifting).
    """
    s._require_cladogram()
    if not 1 <= k <= s.m + 1:
        raise BadLeaf(f"label {k} not in 1..{s.m + 1}")
    if isinstance(e, (frozenset, set)):
        sp = s.splits()
        try:
            idx = sp.index(frozenset(e))
        except ValueError:
            raise BadEdge(f"{sorted(e)} is not an edge split of {s}") from None
    else:
        idx = int(e)
        if not 0 <= idx < len(s.edges):
            raise BadEdge(f"edge index {e} out of range")
    n_leaf = len(s.leaf_labels)
    n_nodes = len(s._adj)
    shift = {v: v + 1 if v >= n_leaf else v for v in range(n_nodes)}
    new_leaf = n_leaf
    mid = n_nodes + 1
    labels = [frozenset(j + 1 if j >= k else j for j in ls) for ls in s.leaf_labels] + [frozenset([k])]
    edges = []
    for i, (a, b) in enumerate(s.edges):
        if i == idx:
            edges += [(shift[a], mid), (mid, shift[b])]
        else:
            edges.append((shift[a], shift[b]))
    edges.append((new_leaf, mid))
    return LabelledShape(labels, edges)
