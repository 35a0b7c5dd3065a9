"""Degree-3 mass polynomials and the generators acting on them.

For three sampled leaves with branch point ``v`` the mass vector ``eta``
lists, for each sampled leaf, the leaf mass of the component of ``t - {v}``
containing it.  ``Phi^f(t)`` is the average of ``f(eta)`` over the ``N**3``
ordered leaf triples.

Degenerate triples
    When two or three sampled leaves coincide, the branch point is that
    leaf.  The coordinates sitting at the branch point get mass 0 and the
    remaining one gets its component mass ``(N-1)/N``.  So ``(w, w, y)``
    gives ``(0, 0, (N-1)/N)`` and ``(w, w, w)`` gives ``(0, 0, 0)``.  These
    triples have total weight ``(3N-2)/N**2`` and their contribution does
    not depend on the tree.

Every integral over triples is grouped: triples of distinct leaves are
collected by their branch point (weight ``abc/N**3`` per ordering for an
internal vertex with component leaf counts ``a, b, c``), and degenerate
triples are added in closed form.  ``exact=True`` keeps everything in
:class:`fractions.Fraction` (polynomial ``f`` only).
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .chain import aldous_move
from .errors import InvalidVertex, NotSymmetric, SameVertex
from .rng import as_generator
from .tree import Cladogram, branch_point, leaf_atom_numerator

PERMS = tuple(itertools.permutations(range(3)))


# mass functions


@dataclass(frozen=True)
class MassFunction:
    """A twice differentiable ``f`` on ``[0, 1]**3`` with its derivatives.

    ``value(x)``, ``gradient(x)`` (three partials) and ``hessian(x)``
    (3x3 nested lists) take a length-3 sequence.  When ``exact`` is True they
    work on :class:`fractions.Fraction` inputs without rounding.
    """

    name: str
    value: Callable
    gradient: Callable
    hessian: Callable
    is_symmetric: bool
    exact: bool = False

    def __call__(self, x):
        return self.value(x)

    def symmetrized(self, x):
        """``f~(x)``: the average of ``f`` over the six coordinate orders."""
        return sum(self.value((x[p[0]], x[p[1]], x[p[2]])) for p in PERMS) / 6


def polynomial(terms: Sequence[tuple[object, Sequence[int]]], name: str | None = None) -> MassFunction:
    """Mass function from ``[(coef, (a, b, c)), ...]`` meaning ``sum coef x1^a x2^b x3^c``.

    Total degree of each monomial must be at most 4.
    """
    mons = []
    for coef, expo in terms:
        a, b, c = (int(e) for e in expo)
        if min(a, b, c) < 0 or a + b + c > 4:
            raise ValueError(f"monomial exponents {expo} must be >= 0 with total degree <= 4")
        if isinstance(coef, float) and coef.is_integer():
            coef = int(coef)
        mons.append((coef if isinstance(coef, (int, Fraction)) else Fraction(str(coef)), (a, b, c)))

    def mono(x, expo, d=None):
        # monomial value, optionally differentiated once in each index of d
        e = list(expo)
        k = 1
        for i in d or ():
            k *= e[i]
            e[i] -= 1
            if e[i] < 0:
                return 0
        return k * x[0] ** e[0] * x[1] ** e[1] * x[2] ** e[2]

    def value(x):
        return sum(c * mono(x, e) for c, e in mons)

    def gradient(x):
        return [sum(c * mono(x, e, (i,)) for c, e in mons) for i in range(3)]

    def hessian(x):
        return [[sum(c * mono(x, e, (i, j)) for c, e in mons) for j in range(3)] for i in range(3)]

    coeffs: dict = {}
    for c, e in mons:
        coeffs[e] = coeffs.get(e, 0) + c
    sym = all(coeffs.get(tuple(e[p] for p in perm), 0) == c
              for e, c in coeffs.items() for perm in PERMS)
    label = name or "poly:" + json.dumps([[str(c), list(e)] for c, e in mons])
    return MassFunction(label, value, gradient, hessian, sym, exact=True)


def _entropy_like() -> MassFunction:
    a = 1e-9

    def value(x):
        return -sum(float(xi) * math.log(float(xi) + a) for xi in x)

    def gradient(x):
        return [-(math.log(float(xi) + a) + float(xi) / (float(xi) + a)) for xi in x]

    def hessian(x):
        h = [[0.0] * 3 for _ in range(3)]
        for i, xi in enumerate(x):
            xi = float(xi)
            h[i][i] = -(1 / (xi + a) + a / (xi + a) ** 2)
        return h

    return MassFunction("entropy_like", value, gradient, hessian, True, exact=False)


REGISTRY: dict[str, Callable[[], MassFunction]] = {
    "sym_pairs": lambda: polynomial([(1, (1, 1, 0)), (1, (0, 1, 1)), (1, (1, 0, 1))], "sym_pairs"),
    "one": lambda: polynomial([(1, (0, 0, 0))], "one"),
    "coord_mean": lambda: polynomial([(Fraction(1, 3), (1, 0, 0)), (Fraction(1, 3), (0, 1, 0)),
                                      (Fraction(1, 3), (0, 0, 1))], "coord_mean"),
    "entropy_like": _entropy_like,
    "first_coord": lambda: polynomial([(1, (1, 0, 0))], "first_coord"),
}


def get_mass_function(spec) -> MassFunction:
    """Look up a registered name, or build a polynomial from a coefficient list.

    ``spec`` may be a :class:`MassFunction`, a registry name, a list of
    ``[coef, [a, b, c]]`` pairs, or a JSON string of such a list.
    """
    if isinstance(spec, MassFunction):
        return spec
    if isinstance(spec, str):
        if spec in REGISTRY:
            return REGISTRY[spec]()
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError:
            raise KeyError(f"unknown mass function {spec!r}; known: {sorted(REGISTRY)}") from None
    return polynomial([(c if not isinstance(c, str) else Fraction(c), e) for c, e in spec])


def check_derivatives(f: MassFunction, rng=None, n_points: int = 20, step: float = 1e-4,
                      tol: float = 1e-5, lo: float = 0.1, hi: float = 0.9) -> float:
    """Largest central-difference mismatch of gradient and Hessian at random points."""
    g = as_generator(rng)
    worst = 0.0
    for x in g.uniform(lo, hi, size=(n_points, 3)):
        grad = f.gradient(list(x))
        hess = f.hessian(list(x))
        for i in range(3):
            e = np.zeros(3)
            e[i] = step
            fd = (f.value(list(x + e)) - f.value(list(x - e))) / (2 * step)
            worst = max(worst, abs(fd - float(grad[i])))
            gp, gm = f.gradient(list(x + e)), f.gradient(list(x - e))
            for j in range(3):
                worst = max(worst, abs((float(gp[j]) - float(gm[j])) / (2 * step) - float(hess[i][j])))
        if f.is_symmetric:
            v0 = f.value(list(x))
            for p in PERMS:
                worst = max(worst, abs(f.value([x[p[0]], x[p[1]], x[p[2]]]) - v0))
    return worst


def theta_migration(f: MassFunction, i: int, j: int, x):
    """Migration operator ``Theta_{i,j} f`` at ``x`` (indices 1-based).

    Moves all mass of coordinate ``i`` onto coordinate ``j``:
    ``(f(x with x_i -> 0, x_j -> x_j + x_i) - f(x)) / x_i`` when ``x_i > 0``,
    and ``d_j f(x) - d_i f(x)`` when ``x_i = 0``.
    """
    if i == j or not (1 <= i <= 3 and 1 <= j <= 3):
        raise ValueError("theta_migration needs distinct indices in 1..3")
    i -= 1
    j -= 1
    if x[i] > 0:
        y = list(x)
        y[j] = y[j] + y[i]
        y[i] = 0 * y[i]
        return (f.value(y) - f.value(x)) / x[i]
    grad = f.gradient(x)
    return grad[j] - grad[i]


# mass vectors


def eta(t: Cladogram, u1: int, u2: int, u3: int) -> tuple[Fraction, Fraction, Fraction]:
    """Mass vector of a leaf triple, in sample order (degenerate convention in the module notes)."""
    for u in (u1, u2, u3):
        if not t.is_leaf(u):
            raise InvalidVertex(f"{u!r} is not a leaf")
    v = branch_point(t, u1, u2, u3)
    n = t.n_leaves
    return tuple(Fraction(0) if u == v else Fraction(t.component_count(v, u), n)
                 for u in (u1, u2, u3))


def vertex_eta(t: Cladogram, v: int) -> tuple[Fraction, ...]:
    """Component masses at internal vertex ``v`` in decreasing order."""
    if t.is_leaf(v):
        raise InvalidVertex("vertex_eta needs an internal vertex")
    n = t.n_leaves
    return tuple(Fraction(c, n) for c in sorted(t.component_counts(v), reverse=True))


def _triples(t: Cladogram) -> Counter:
    return Counter(map(tuple, t.internal_count_table().tolist()))


def _sum(values, exact):
    return sum(values, Fraction(0)) if exact else math.fsum(values)


def _integrate(t: Cladogram, h: Callable, exact: bool, part: str) -> object:
    """Average of ``h(eta)`` over ordered leaf triples (see module notes).

    ``part`` selects ``"full"``, ``"nondegenerate"`` or ``"degenerate"``
    triples.
    """
    if part not in ("full", "nondegenerate", "degenerate"):
        raise ValueError(f"unknown part {part!r}")
    n = t.n_leaves
    num = (lambda k: Fraction(k, n)) if exact else (lambda k: k / n)
    terms = []
    if part != "degenerate":
        n3 = n**3
        for (a, b, c), mult in _triples(t).items():
            x = (num(a), num(b), num(c))
            w = Fraction(a * b * c * mult, n3) if exact else a * b * c * mult / n3
            terms.append(w * _sum([h((x[p[0]], x[p[1]], x[p[2]])) for p in PERMS], exact))
    if part != "nondegenerate":
        z = num(0)
        big = num(n - 1)
        w0 = Fraction(1, n * n) if exact else 1 / (n * n)
        w1 = Fraction(n - 1, n * n) if exact else (n - 1) / (n * n)
        terms.append(w0 * h((z, z, z)))
        terms.append(w1 * _sum([h((z, z, big)), h((z, big, z)), h((big, z, z))], exact))
    return _sum(terms, exact)


def _want_exact(f: MassFunction, exact: bool) -> bool:
    if exact and not f.exact:
        raise ValueError(f"{f.name} does not support exact arithmetic")
    return exact


def phi_f_exact(t: Cladogram, f, part: str = "full", exact: bool = False):
    """``Phi^f(t)``: average of ``f(eta)`` over all ``N**3`` ordered leaf triples."""
    f = get_mass_function(f)
    return _integrate(t, f.value, _want_exact(f, exact), part)


def phi_f_bruteforce(t: Cladogram, f, exact: bool = False):
    """``Phi^f(t)`` by looping over every ordered leaf triple (oracle, small ``N``)."""
    f = get_mass_function(f)
    n = t.n_leaves
    vals = [f.value(eta(t, a, b, c) if exact else tuple(float(x) for x in eta(t, a, b, c)))
            for a in t.leaves for b in t.leaves for c in t.leaves]
    return _sum(vals, exact) / (n**3)


def generator_integrand(f: MassFunction, x):
    """Integrand of the limit generator on ``Phi^f`` at mass vector ``x``."""
    grad = f.gradient(x)
    hess = f.hessian(x)
    fx = f.value(x)
    out = 0
    for i in range(3):
        for j in range(3):
            out += 2 * x[i] * ((1 if i == j else 0) - x[j]) * hess[i][j]
        out += 3 * (1 - 3 * x[i]) * grad[i]
    for i in range(3):
        for j in range(3):
            if i != j:
                out += theta_migration(f, i + 1, j + 1, x) / 2
    unit = [[1 if k == i else 0 for k in range(3)] for i in range(3)]
    for e in unit:
        out += f.value([x[0] * 0 + e[0], x[1] * 0 + e[1], x[2] * 0 + e[2]]) - fx
    return out


def symmetric_integrand(f: MassFunction, x):
    """Reduced integrand for symmetric ``f``; integrates to the same value under exchangeable sampling."""
    grad = f.gradient(x)
    hess = f.hessian(x)
    one = x[0] * 0 + 1
    zero = x[0] * 0
    out = (2 * x[0] * (1 - x[0]) * hess[0][0] - 4 * x[0] * x[1] * hess[0][1]
           + 3 * (1 - 3 * x[0]) * grad[0] + theta_migration(f, 1, 2, x)
           + f.value([one, zero, zero]) - f.value(x))
    return 3 * out


def omega_ald_mass(t: Cladogram, f, part: str = "full", route: str = "auto", exact: bool = False):
    """Limit generator applied to ``Phi^f`` and evaluated at ``t``.

    Parameters
    ----------
    route : {"auto", "general", "symmetric"}
        ``"symmetric"`` uses the reduced integrand and requires a symmetric
        ``f``; ``"auto"`` picks it whenever ``f`` is symmetric.
    part : {"full", "nondegenerate", "degenerate"}
    """
    f = get_mass_function(f)
    exact = _want_exact(f, exact)
    if route == "auto":
        route = "symmetric" if f.is_symmetric else "general"
    if route == "symmetric":
        if not f.is_symmetric:
            raise NotSymmetric(f"{f.name} is not symmetric")
        return _integrate(t, lambda x: symmetric_integrand(f, x), exact, part)
    if route == "general":
        return _integrate(t, lambda x: generator_integrand(f, x), exact, part)
    raise ValueError(f"unknown route {route!r}")


def _vertex_weight(f: MassFunction, n: int, exact: bool):
    """``F(k) = 6 k1 k2 k3 / N**3 * f~(k / N)`` on leaf-count triples."""
    n3 = n**3
    cache = {}

    def F(k):
        a, b, c = k
        if a <= 0 or b <= 0 or c <= 0:
            return 0
        key = tuple(sorted(k))
        if key not in cache:
            if exact:
                x = (Fraction(a, n), Fraction(b, n), Fraction(c, n))
                cache[key] = Fraction(6 * a * b * c, n3) * f.symmetrized(x)
            else:
                cache[key] = 6 * a * b * c / n3 * f.symmetrized((a / n, b / n, c / n))
        return cache[key]

    return F


def omega_N_mass(t: Cladogram, f, exact: bool = False):
    """Discrete generator ``sum over moves of Phi^f(after) - Phi^f(before)``.

    Computed in ``O(N)`` from the per-move mass changes.  A move of leaf
    ``u`` into edge ``e`` changes ``Phi^f`` in three ways: every internal
    vertex ``v`` that separates ``u`` from ``e`` sees ``u`` switch between two
    of its components (if ``v`` is ``u``'s branch point the vertex vanishes,
    which the formula captures because one component count drops to 0); and
    ``e`` gains a new branch point whose components are the two sides of
    ``e`` minus ``u`` and ``u`` itself.  Direction ``j`` of ``v`` holding
    ``n_j`` leaves contains ``2 n_j - 1`` edges.  Degenerate triples do not
    depend on the tree and drop out.
    """
    f = get_mass_function(f)
    exact = _want_exact(f, exact)
    F = _vertex_weight(f, t.n_leaves, exact)
    terms = []
    for k, mult in _triples(t).items():
        base = F(k)
        for i in range(3):
            for j in range(3):
                if i != j:
                    k2 = list(k)
                    k2[i] -= 1
                    k2[j] += 1
                    terms.append(mult * k[i] * (2 * k[j] - 1) * (F(k2) - base))
    for (p, q), mult in Counter(tuple(sorted(s)) for s in t.edge_sides()).items():
        terms.append(mult * (p * F((p - 1, q, 1)) + q * F((p, q - 1, 1))))
    return _sum(terms, exact)


def omega_N_mass_bruteforce(t: Cladogram, f, exact: bool = False):
    """Discrete generator by applying every move and recomputing ``Phi^f`` (oracle)."""
    f = get_mass_function(f)
    base = phi_f_exact(t, f, exact=exact)
    vals = []
    for u in t.leaves:
        for e in t.edges:
            t2 = aldous_move(t, u, e)
            if t2 is not t:
                vals.append(phi_f_exact(t2, f, exact=exact) - base)
    return _sum(vals, exact)


def wright_fisher_check(t: Cladogram, f, exact: bool = False):
    """Resampling part of the move sum against its diffusion limit.

    Returns ``(move_sum, integral, gap)`` where ``move_sum`` collects, with
    the branch-point weights held fixed, the change of ``f`` at every
    existing branch point over all moves, and ``integral`` is the
    Wright-Fisher operator with drift ``-(1 - 3 eta_i)`` integrated over
    leaf triples.
    """
    f = get_mass_function(f)
    exact = _want_exact(f, exact)
    n = t.n_leaves
    frac = (lambda k: Fraction(k, n)) if exact else (lambda k: k / n)
    terms = []
    for k, mult in _triples(t).items():
        w = Fraction(6 * k[0] * k[1] * k[2] * mult, n**3) if exact else 6 * k[0] * k[1] * k[2] * mult / n**3
        base = f.symmetrized(tuple(frac(c) for c in k))
        for i in range(3):
            for j in range(3):
                if i != j:
                    k2 = list(k)
                    k2[i] -= 1
                    k2[j] += 1
                    terms.append(w * k[i] * (2 * k[j] - 1) * (f.symmetrized(tuple(frac(c) for c in k2)) - base))
    move_sum = _sum(terms, exact)

    def h(x):
        grad = f.gradient(x)
        hess = f.hessian(x)
        out = 0
        for i in range(3):
            for j in range(3):
                out += 2 * x[i] * ((1 if i == j else 0) - x[j]) * hess[i][j]
            out -= (1 - 3 * x[i]) * grad[i]
        return out

    integral = _integrate(t, h, exact, "full")
    return move_sum, integral, abs(move_sum - integral)


# distances


def mean_distance(t: Cladogram) -> Fraction:
    """Average intrinsic distance between two uniform leaves, via branch points.

    ``2 sum_v nu{v} (eta1 eta2 + eta2 eta3 + eta1 eta3)(v)`` over internal
    vertices, plus the endpoint half-atoms of ordered pairs of distinct
    leaves, ``(1 - 1/N) nu{leaf}``.
    """
    n = t.n_leaves
    tab = t.internal_count_table()
    a, b, c = tab[:, 0], tab[:, 1], tab[:, 2]
    inner = sum((a * b * c * (a * b + b * c + a * c)).tolist())
    return Fraction(12 * inner + (n - 1) * leaf_atom_numerator(n) * n, n**5)


def mean_distance_pairs(t: Cladogram) -> Fraction:
    """Average intrinsic distance by summing ``r_mu`` over all ``N**2`` leaf pairs."""
    from .tree import leaf_distance_numerators
    n = t.n_leaves
    d = leaf_distance_numerators(t)
    return Fraction(sum(int(x) for x in d.sum(axis=1)), 2 * n**5)


# exact lemmas


def lemma_lambda_check(t: Cladogram, v: int, u: int) -> tuple[Fraction, Fraction, bool]:
    """Edge share of a component against ``mu(S) (1 + 3 delta) - delta``.

    ``lhs`` counts the edges of the component of ``t - {v}`` containing ``u``
    plus the edge joining it to ``v``, over ``2N - 3``; ``delta = 1/(2N-3)``.
    """
    t.check_vertex(v)
    t.check_vertex(u)
    if t.is_leaf(v):
        raise InvalidVertex("lemma_lambda_check needs an internal vertex v")
    if u == v:
        raise SameVertex("u must differ from v")
    n = t.n_leaves
    start = t.direction(v, u)
    seen = {v, start}
    stack = [start]
    leaves = 0
    while stack:
        x = stack.pop()
        leaves += t.is_leaf(x)
        for y in t._nbrs[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    n_edges = len(seen) - 1  # component vertices, i.e. edges inside plus the joining edge
    delta = Fraction(1, 2 * n - 3)
    lhs = n_edges * delta
    rhs = Fraction(leaves, n) * (1 + 3 * delta) - delta
    return lhs, rhs, lhs == rhs


def matching_lemma_check(t: Cladogram, g: Callable, exact: bool = True):
    """Edge sum of ``g`` over side masses against its branch-point form.

    Returns ``(lhs, rhs, gap)`` with ``lhs = sum_e g(eta1(e), eta2(e))`` and
    ``rhs = 1/2 sum_v sum_i g(eta_i(v), 1 - eta_i(v)) + N/2 g(1 - 1/N, 1/N)``.
    """
    n = t.n_leaves
    frac = (lambda k: Fraction(k, n)) if exact else (lambda k: k / n)
    lhs = _sum([g(frac(p), frac(q)) for p, q in t.edge_sides()], exact)
    inner = []
    for row in t.internal_count_table().tolist():
        for k in row:
            inner.append(g(frac(k), frac(n - k)))
    rhs = _sum(inner, exact) / 2 + n * g(frac(n - 1), frac(1)) / 2
    return lhs, rhs, abs(lhs - rhs)
