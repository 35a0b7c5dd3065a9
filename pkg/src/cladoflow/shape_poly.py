"""Shape polynomials and the generators acting on them.

``Phi^{m,s}(t)`` is the probability that ``m`` i.i.d. uniform leaves of ``t``
are distinct and span the labelled ``m``-cladogram ``s``.  Sampling is
exchangeable, so the number of ordered tuples spanning ``s`` equals the
number of ``m``-leaf subsets whose spanned tree has the unlabelled type of
``s`` times the automorphism count of that type.  Subsets are counted by
type with a dynamic programme over rooted subtrees.

All evaluations are carried out in exact rational arithmetic and converted
to float at the public boundary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .chain import aldous_move, rate_matrix, RATE_MATRIX_CAP
from .errors import CapExceeded, TooSmall
from .rng import as_generator
from .shapes import (LabelledShape, _unlabelled_key, automorphism_counts,
                     delete_leaf_label, enumerate_cladograms, shape)
from .tree import Cladogram, count_cladograms, uniform_cladogram

PHI_CAP = 7


# counting subsets by unlabelled type


@dataclass(frozen=True)
class _Catalogue:
    size: tuple[int, ...]
    merge: dict
    key_top: dict       # rooted id -> unrooted key once the root is suppressed
    key_attach: dict    # rooted id -> unrooted key after hanging one more leaf at the root


def _expand(parts, rid, adj, leaves, inner):
    """Add the rooted shape ``rid`` to an adjacency map; return its top node."""
    if parts[rid] is None:
        node = ("l", len(leaves))
        leaves.append(node)
        adj[node] = []
        return node
    node = ("i", len(inner))
    inner.append(node)
    adj[node] = []
    for c in parts[rid]:
        sub = _expand(parts, c, adj, leaves, inner)
        adj[node].append(sub)
        adj[sub].append(node)
    return node


def _key_of(adj, leaves, inner) -> str:
    ids = {v: i for i, v in enumerate(leaves + inner)}
    a = [[ids[w] for w in adj[v]] for v in leaves + inner]
    return _unlabelled_key(a, len(leaves))


@lru_cache(maxsize=None)
def _catalogue(m: int) -> _Catalogue:
    parts: list = [None]
    size = [1]
    merge = {}
    for k in range(2, m + 1):
        n_old = len(parts)
        for i in range(n_old):
            for j in range(i, n_old):
                if size[i] + size[j] == k:
                    merge[(i, j)] = len(parts)
                    parts.append((i, j))
                    size.append(k)
    key_top = {}
    key_attach = {}
    for rid in range(len(parts)):
        if parts[rid] is not None:
            adj, leaves, inner = {}, [], []
            i, j = parts[rid]
            a = _expand(parts, i, adj, leaves, inner)
            b = _expand(parts, j, adj, leaves, inner)
            adj[a].append(b)
            adj[b].append(a)
            key_top[rid] = _key_of(adj, leaves, inner)
        if size[rid] < m:
            adj, leaves, inner = {}, [], []
            top = _expand(parts, rid, adj, leaves, inner)
            extra = ("l", len(leaves))
            leaves.append(extra)
            adj[extra] = [top]
            adj[top].append(extra)
            key_attach[rid] = _key_of(adj, leaves, inner)
    return _Catalogue(tuple(size), merge, key_top, key_attach)


def subset_type_counts(t: Cladogram, m: int) -> dict[int, dict[str, int]]:
    """Number of leaf subsets of each size ``2..m`` by unlabelled spanned type.

    Returns ``{k: {unlabelled_key: count}}``.  Cached on ``t``.
    """
    if m > PHI_CAP:
        raise CapExceeded(f"exact shape counting is capped at m = {PHI_CAP}")
    cache_key = ("subset_counts", m)
    hit = t._cache.get(cache_key)
    if hit is not None:
        return hit
    cat = _catalogue(m)
    size, merge = cat.size, cat.merge
    r = t.rooted
    n = t.n_leaves
    out: dict[int, dict[str, int]] = {k: {} for k in range(2, m + 1)}
    tables: dict[int, dict[int, int]] = {}
    for v in reversed(r.order):
        if v == 1:
            continue
        if v <= n:
            tables[v] = {0: 1}
            continue
        c1, c2 = r.children[v]
        d1 = tables.pop(c1)
        d2 = tables.pop(c2)
        d = dict(d1)
        for key, c in d2.items():
            d[key] = d.get(key, 0) + c
        for i, ci in d1.items():
            si = size[i]
            for j, cj in d2.items():
                if si + size[j] > m:
                    continue
                rid = merge[(i, j) if i <= j else (j, i)]
                cnt = ci * cj
                d[rid] = d.get(rid, 0) + cnt
                bucket = out[size[rid]]
                uk = cat.key_top[rid]
                bucket[uk] = bucket.get(uk, 0) + cnt
        tables[v] = d
    (c,) = r.children[1]
    for rid, cnt in tables.pop(c).items():
        k = size[rid] + 1
        if k <= m:
            uk = cat.key_attach[rid]
            out[k][uk] = out[k].get(uk, 0) + cnt
    t._cache[cache_key] = out
    return out


def _falling(n: int, m: int) -> int:
    return math.prod(range(n - m + 1, n + 1))


def distinct_probability(n: int, m: int) -> Fraction:
    """Probability that ``m`` uniform draws from ``n`` leaves are distinct."""
    return Fraction(_falling(n, m), n**m)


def phi_fraction(t: Cladogram, m: int, s: LabelledShape, method: str = "auto") -> Fraction:
    """Exact ``Phi^{m,s}(t)`` as a fraction.

    Parameters
    ----------
    method : {"auto", "dp", "enumerate"}
        ``"dp"`` counts subsets by type.  ``"enumerate"`` loops over all
        ordered distinct leaf tuples (small trees only).  ``"auto"`` uses the
        closed value ``N!/((N-m)! N^m (2m-5)!!)`` when ``m`` has a single
        unlabelled type (``m <= 5``) and the dynamic programme otherwise.
    """
    if s.m != m:
        raise ValueError(f"shape has {s.m} labels, expected {m}")
    if not s.is_cladogram:
        return Fraction(0)
    if m < 2:
        raise TooSmall("shape polynomials need m >= 2")
    n = t.n_leaves
    if m > n:
        return Fraction(0)
    if m > PHI_CAP and method != "enumerate":
        raise CapExceeded(f"phi is capped at m = {PHI_CAP}, got {m}")
    if method == "enumerate":
        target = s.canonical_key
        hits = sum(1 for tup in itertools.permutations(t.leaves, m)
                   if shape(t, tup).canonical_key == target)
        return Fraction(hits, n**m)
    aut = automorphism_counts(m)
    if method == "auto" and len(aut) == 1:
        return Fraction(_falling(n, m), n**m * count_cladograms(m))
    if method not in ("auto", "dp"):
        raise ValueError(f"unknown method {method!r}")
    uk = s.unlabelled_key()
    if m == 2:
        cnt = n * (n - 1) // 2
    else:
        cnt = subset_type_counts(t, m)[m].get(uk, 0)
    return Fraction(cnt * aut[uk], n**m)


def phi_exact(t: Cladogram, m: int, s: LabelledShape, method: str = "auto") -> float:
    """Exact ``Phi^{m,s}(t)`` rounded to float (see :func:`phi_fraction`)."""
    return float(phi_fraction(t, m, s, method))


def phi_mc(t: Cladogram, m: int, s: LabelledShape, n_samples: int, rng=None) -> tuple[float, float]:
    """Monte Carlo estimate of ``Phi^{m,s}(t)`` with its standard error."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    g = as_generator(rng)
    draws = g.integers(1, t.n_leaves + 1, size=(n_samples, m))
    target = s.canonical_key
    hits = np.array([shape(t, tuple(int(x) for x in row)).canonical_key == target for row in draws],
                    dtype=float)
    est = float(hits.mean())
    se = float(hits.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else float("nan")
    return est, se


# shape polynomials


class ShapePolynomial:
    """Finite linear combination of shape indicators ``sum c_i Phi^{m_i, s_i}``."""

    def __init__(self, terms: Iterable[tuple[object, int, LabelledShape]] = ()):
        merged: dict[tuple[int, bytes], list] = {}
        for c, m, s in terms:
            if not s.is_cladogram or s.m != m:
                raise ValueError("terms need an m-cladogram with m labels")
            key = (m, s.canonical_key)
            if key in merged:
                merged[key][0] += c
            else:
                merged[key] = [c, s]
        self.terms = tuple((c, m, s) for (m, _), (c, s) in merged.items() if c != 0)

    @classmethod
    def indicator(cls, s: LabelledShape) -> "ShapePolynomial":
        return cls([(1, s.m, s)])

    def __add__(self, other: "ShapePolynomial") -> "ShapePolynomial":
        return ShapePolynomial(self.terms + other.terms)

    def __rmul__(self, c) -> "ShapePolynomial":
        return ShapePolynomial((c * a, m, s) for a, m, s in self.terms)

    def evaluate_fraction(self, t: Cladogram, method: str = "auto"):
        return sum((c * phi_fraction(t, m, s, method) for c, m, s in self.terms), Fraction(0))

    def evaluate(self, t: Cladogram, method: str = "auto") -> float:
        return float(self.evaluate_fraction(t, method))

    def __repr__(self):
        return "ShapePolynomial(" + " + ".join(f"{c}*[{s.canonical_key.decode()}]"
                                                for c, _, s in self.terms) + ")"


def _as_poly(p) -> ShapePolynomial:
    return p if isinstance(p, ShapePolynomial) else ShapePolynomial.indicator(p)


# generators


def omega_N_bruteforce(t: Cladogram, P, method: str = "dp") -> float:
    """Discrete generator by summing over every move: ``sum_(u,e) P(t^(u,e)) - P(t)``.

    Each moved tree is evaluated from scratch (by default with the subset
    dynamic programme, never the single-type shortcut), in exact arithmetic.
    """
    P = _as_poly(P)
    base = P.evaluate_fraction(t, method)
    total = Fraction(0)
    for u in t.leaves:
        for e in t.edges:
            t2 = aldous_move(t, u, e)
            if t2 is not t:
                total += P.evaluate_fraction(t2, method) - base
    return float(total)


def _deletion_sum(t: Cladogram, m: int, s: LabelledShape, method: str) -> Fraction:
    return sum((phi_fraction(t, m - 1, delete_leaf_label(s, k), method) for k in range(1, m + 1)),
               Fraction(0))


def omega_N_closedform_fraction(t: Cladogram, m: int, s: LabelledShape, method: str = "auto") -> Fraction:
    """Exact closed form of the discrete generator on ``Phi^{m,s}``.

    ``(1 - (m-1)/N) * sum_k Phi^{m-1, s^k} - m(2m-5) Phi^{m,s}`` where ``s^k``
    deletes label ``k``.
    """
    if m < 3:
        raise TooSmall("the closed form needs m >= 3")
    n = t.n_leaves
    dsum = _deletion_sum(t, m, s, method)
    return (1 - Fraction(m - 1, n)) * dsum - m * (2 * m - 5) * phi_fraction(t, m, s, method)


def omega_N_closedform(t: Cladogram, m: int, s: LabelledShape, method: str = "auto") -> float:
    return float(omega_N_closedform_fraction(t, m, s, method))


def omega_ald_fraction(t: Cladogram, m: int, s: LabelledShape, route: str = "deletion",
                       method: str = "auto") -> Fraction:
    """Limit generator applied to ``Phi^{m,s}`` and evaluated at ``t``.

    Parameters
    ----------
    route : {"deletion", "sampled"}
        ``"deletion"``: ``sum_k Phi^{m-1, s^k} - m(2m-5) Phi^{m,s}``.
        ``"sampled"``: the expectation over ``m`` sampled leaves of the
        ``m``-leaf chain generator applied to the indicator of ``s``, with
        tuples that repeat a leaf contributing 0, i.e.
        ``sum_r Phi^{m,r}(t) Q_m[r, s]``.
    """
    if m < 3:
        raise TooSmall("omega_ald needs m >= 3")
    if route == "deletion":
        return _deletion_sum(t, m, s, method) - m * (2 * m - 5) * phi_fraction(t, m, s, method)
    if route == "sampled":
        if m == 3:
            return Fraction(0)
        if m > RATE_MATRIX_CAP:
            raise CapExceeded(f"sampled route capped at m = {RATE_MATRIX_CAP}")
        q = rate_matrix(m)
        j = q.index(s)
        col = q.rates[:, j]
        return sum((int(col[i]) * phi_fraction(t, m, r, method) for i, r in enumerate(q.states)
                    if col[i]), Fraction(0))
    raise ValueError(f"unknown route {route!r}")


def omega_ald(t: Cladogram, m: int, s: LabelledShape, route: str = "deletion") -> float:
    return float(omega_ald_fraction(t, m, s, route))


def omega_ald_terms(P) -> ShapePolynomial:
    """The limit generator of ``P`` written again as a shape polynomial."""
    P = _as_poly(P)
    out = []
    for c, m, s in P.terms:
        if m < 3:
            continue
        out.extend((c, m - 1, delete_leaf_label(s, k)) for k in range(1, m + 1))
        out.append((-c * m * (2 * m - 5), m, s))
    return ShapePolynomial(out)


def gap_bound(m: int, n: int) -> Fraction:
    return Fraction(7 * m * (m - 1), n)


def generator_gap(N_list: Sequence[int], m: int, s: LabelledShape | None = None,
                  trees_per_N: int = 20, rng=None) -> list[dict]:
    """Largest ``|closed form - limit generator|`` over random trees, per ``N`` and shape.

    Returns one row per ``(N, shape)`` with keys ``N, m, shape_key, gap,
    mean_gap, bound, pass``.  All shapes of ``Clad_m`` are used when ``s`` is None.
    """
    g = as_generator(rng)
    shapes = [s] if s is not None else enumerate_cladograms(m)
    rows = []
    for n in N_list:
        gaps = {x.canonical_key: [] for x in shapes}
        for _ in range(trees_per_N):
            t = uniform_cladogram(n, g)
            for x in shapes:
                d = omega_N_closedform_fraction(t, m, x) - omega_ald_fraction(t, m, x)
                gaps[x.canonical_key].append(abs(d))
        bound = gap_bound(m, n)
        for x in shapes:
            gl = gaps[x.canonical_key]
            worst = max(gl)
            rows.append({"N": n, "m": m, "shape_key": x.canonical_key.decode(),
                         "gap": float(worst), "mean_gap": float(sum(gl) / len(gl)),
                         "bound": float(bound), "pass": worst <= bound})
    return rows
