"""Statistics of uniform cladograms and of the chain started far from equilibrium.

Edge mass profiles
    Leaves ``1..m`` of an ``N``-cladogram span a subtree whose shape ``s`` is
    an ``m``-cladogram.  Every other leaf hangs off exactly one edge of ``s``.
    The profile assigns to each edge of ``s`` (keyed by its split, the label
    set on the side away from label 1) the number of leaves attached to it,
    where an external edge also counts its own labelled leaf.  External
    counts are ``>= 1``, internal counts ``>= 0`` and all counts sum to ``N``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy import integrate, linalg, stats

from .chain import ChainState, advance, jump_rate, rate_matrix
from .errors import BadProfile, CapExceeded
from .rng import as_generator, draw_master_seed, replicate_seed
from .shape_poly import distinct_probability, omega_N_closedform_fraction, phi_fraction
from .shapes import LabelledShape, enumerate_cladograms, shape
from .tree import Cladogram, count_cladograms, leaf_distance_numerators, uniform_cladogram

EdgeMassProfile = Mapping[frozenset, int]


# exact subtree-mass law


def edge_mass_profile(t: Cladogram, m: int) -> tuple[LabelledShape, dict[frozenset, int]]:
    """Shape spanned by leaves ``1..m`` and the leaf count on each of its edges."""
    n = t.n_leaves
    if not 3 <= m <= n:
        raise ValueError(f"need 3 <= m <= N, got m={m}, N={n}")
    s = shape(t, tuple(range(1, m + 1)))
    r = t.rooted  # rooted at leaf 1
    mask = [0] * (t.n_vertices + 1)
    for v in reversed(r.order):
        if 2 <= v <= m:
            mask[v] |= 1 << v
        p = r.parent[v]
        if p > 0:
            mask[p] |= mask[v]
    edge_of = [0] * (t.n_vertices + 1)
    full = sum(1 << k for k in range(2, m + 1))
    for v in r.order:
        if v == 1:
            edge_of[v] = full
        elif mask[v]:
            edge_of[v] = mask[v]
        else:
            edge_of[v] = edge_of[r.parent[v]]
    counts: dict[int, int] = {}
    for leaf in t.leaves:
        counts[edge_of[leaf]] = counts.get(edge_of[leaf], 0) + 1
    profile = {split: 0 for split in s.splits()}
    for bits, c in counts.items():
        profile[frozenset(k for k in range(2, m + 1) if bits >> k & 1)] = c
    return s, profile


def _aligned(s: LabelledShape, profile) -> list[tuple[bool, int]]:
    splits = s.splits()
    if isinstance(profile, Mapping):
        keys = {frozenset(k) for k in profile}
        if keys != set(splits) or len(profile) != len(splits):
            raise BadProfile("profile keys must be exactly the splits of the shape")
        values = [profile[sp] for sp in splits]
    else:
        values = list(profile)
        if len(values) != len(splits):
            raise BadProfile(f"profile needs {len(splits)} entries, got {len(values)}")
    out = []
    for sp, k in zip(splits, values):
        if not isinstance(k, (int, np.integer)):
            raise BadProfile(f"profile entry {k!r} is not an integer")
        ext = s.is_external(sp)
        if k < (1 if ext else 0):
            raise BadProfile(f"edge {sorted(sp)} needs at least {1 if ext else 0} leaves, got {k}")
        out.append((ext, int(k)))
    return out


def q_N_exact(n: int, s: LabelledShape, profile) -> Fraction:
    """Probability that a uniform ``N``-cladogram has first-``m`` shape ``s`` and the given profile.

    Parameters
    ----------
    n : int
        Number of leaves ``N``.
    s : LabelledShape
        An ``m``-cladogram.
    profile : mapping split -> count, or sequence aligned with ``s.splits()``

    Raises
    ------
    BadProfile
        Wrong keys, negative or zero counts where not allowed, or counts not
        summing to ``N``.
    """
    m = s.m
    edges = _aligned(s, profile)
    if sum(k for _, k in edges) != n:
        raise BadProfile(f"profile sums to {sum(k for _, k in edges)}, expected N = {n}")
    num = math.factorial(n - m)
    den = count_cladograms(n)
    for ext, k in edges:
        if ext:
            num *= count_cladograms(k + 1)
            den *= math.factorial(k - 1)
        else:
            num *= count_cladograms(k + 2)
            den *= math.factorial(k)
    return Fraction(num, den)


def enumerate_profiles(n: int, s: LabelledShape):
    """Every admissible profile of ``s`` with total ``N``, as tuples aligned with ``s.splits()``."""
    ext = [s.is_external(sp) for sp in s.splits()]
    free = n - sum(ext)
    if free < 0:
        return
    k = len(ext)
    # stars and bars over the surplus above the minimum counts
    for bars in itertools.combinations(range(free + k - 1), k - 1):
        prev = -1
        parts = []
        for b in bars + (free + k - 1,):
            parts.append(b - prev - 1)
            prev = b
        yield tuple(p + e for p, e in zip(parts, ext))


def q_N_total(n: int, s: LabelledShape) -> Fraction:
    """``sum of q_N`` over all profiles of ``s`` (equals ``1/#Clad_m``)."""
    return sum((q_N_exact(n, s, p) for p in enumerate_profiles(n, s)), Fraction(0))


def dirichlet_moments(exponents: Sequence[int], alpha: Sequence | None = None) -> Fraction:
    """Exact mixed moment ``E[prod eta_i^k_i]`` of a Dirichlet vector (default all ``alpha_i = 1/2``)."""
    if any(int(k) != k or k < 0 for k in exponents):
        raise ValueError("exponents must be nonnegative integers")
    alpha = [Fraction(1, 2)] * len(exponents) if alpha is None else [Fraction(a) for a in alpha]
    if len(alpha) != len(exponents):
        raise ValueError("alpha and exponents differ in length")

    def rising(a, k):
        out = Fraction(1)
        for j in range(int(k)):
            out *= a + j
        return out

    num = Fraction(1)
    for a, k in zip(alpha, exponents):
        num *= rising(a, k)
    return num / rising(sum(alpha), sum(int(k) for k in exponents))


def dirichlet_half_density(x: Sequence[float]) -> float:
    """Density of ``Dir(1/2, ..., 1/2)`` at a point of the open simplex."""
    k = len(x)
    logc = math.lgamma(k / 2) - k * math.lgamma(0.5)
    return math.exp(logc - 0.5 * sum(math.log(v) for v in x))


def local_limit_check(n: int, s: LabelledShape, eta: Sequence[float]) -> tuple[float, float, float]:
    """Rescaled ``q_N`` at the lattice point nearest ``N eta`` against its Dirichlet limit.

    Returns ``(N^(2m-4) q_N(n), density / #Clad_m, relative error)``.  Counts
    are ``floor(N eta_e)`` (raised to the edge minimum) with the last edge
    absorbing the remainder.
    """
    splits = s.splits()
    if len(eta) != len(splits) or abs(sum(eta) - 1) > 1e-9 or min(eta) <= 0:
        raise ValueError("eta must be a positive probability vector aligned with the splits")
    counts = [max(int(math.floor(n * e)), 1 if s.is_external(sp) else 0) for e, sp in zip(eta[:-1], splits)]
    counts.append(n - sum(counts))
    q = q_N_exact(n, s, counts)
    scaled = float(q * Fraction(n) ** (2 * s.m - 4))
    target = dirichlet_half_density([c / n for c in counts]) / count_cladograms(s.m)
    return scaled, target, abs(scaled - target) / target


# sampling subtree masses


def sample_edge_counts(n: int, m: int, replicates: int, rng=None, method: str = "urn") -> np.ndarray:
    """Leaf counts on the ``2m - 3`` edges of the first-``m`` shape of uniform ``N``-cladograms.

    Columns follow ``shape.splits()`` order for the tree method, and for the
    urn method list the ``m`` external edges first.

    Parameters
    ----------
    method : {"urn", "tree"}
        ``"tree"`` draws whole cladograms and reads off the profile.
        ``"urn"`` uses the equivalent growth urn: leaves ``m+1..N`` join
        edges with probability proportional to edge weights, which start at
        1 and grow by 2, so the added counts are Dirichlet-multinomial with
        all parameters 1/2.
    """
    if n < m:
        raise ValueError("need N >= m")
    g = as_generator(rng)
    k = 2 * m - 3
    if method == "urn":
        p = g.dirichlet([0.5] * k, size=replicates)
        draws = np.stack([g.multinomial(n - m, row) for row in p]) if replicates else np.zeros((0, k), int)
        draws[:, :m] += 1
        return draws.astype(np.int64)
    if method == "tree":
        out = np.empty((replicates, k), dtype=np.int64)
        for r in range(replicates):
            s, prof = edge_mass_profile(uniform_cladogram(n, g), m)
            out[r] = [prof[sp] for sp in s.splits()]
        return out
    raise ValueError(f"unknown method {method!r}")


def _cell_probability(a, b, c, d, margin, rest):
    """``P(x1 in [a,b], x2 in [c,d], all three parts >= margin)`` under ``Dir(1/2, 1/2, rest)``."""
    lo, hi = max(a, margin), min(b, 1 - 2 * margin)
    if lo >= hi:
        return 0.0
    x1 = stats.beta(0.5, 0.5 + rest)
    x2 = stats.beta(0.5, rest)

    def inner(u):
        top = min(d, 1 - u - margin)
        bot = max(c, margin)
        if top <= bot:
            return 0.0
        return x1.pdf(u) * (x2.cdf(top / (1 - u)) - x2.cdf(bot / (1 - u)))

    return integrate.quad(inner, lo, hi, limit=200)[0]


@lru_cache(maxsize=8)
def _grid_probabilities(m: int, bins: int, margin: float) -> np.ndarray:
    rest = (2 * m - 5) / 2
    w = 1.0 / bins
    p = np.zeros((bins, bins))
    for i in range(bins):
        for j in range(bins - i):
            p[i, j] = _cell_probability(i * w, (i + 1) * w, j * w, (j + 1) * w, margin, rest)
    return p / p.sum()


def dirichlet_chi_square(x: np.ndarray, m: int, bins: int = 20, margin: float = 0.01,
                         min_expected: float = 5.0) -> tuple[float, int, float]:
    """Chi-square of the first two mass fractions against the ``Dir(1/2, ...)`` law.

    Points closer than ``margin`` to the simplex boundary are dropped (the
    density is unbounded there) and the target is conditioned accordingly.
    Cells with small expected counts are pooled.  Returns ``(statistic,
    degrees of freedom, p-value)``.
    """
    x = np.asarray(x, dtype=float)
    x3 = 1 - x[:, 0] - x[:, 1]
    keep = (x[:, 0] >= margin) & (x[:, 1] >= margin) & (x3 >= margin)
    pts = x[keep]
    total = len(pts)
    p = _grid_probabilities(m, bins, margin)
    idx = np.minimum((pts * bins).astype(int), bins - 1)
    obs = np.zeros((bins, bins))
    np.add.at(obs, (idx[:, 0], idx[:, 1]), 1)
    exp = p * total
    big = exp >= min_expected
    o = list(obs[big])
    e = list(exp[big])
    if (~big).any() and exp[~big].sum() > 0:
        o.append(obs[~big].sum())
        e.append(exp[~big].sum())
    o, e = np.array(o), np.array(e)
    stat = float(((o - e) ** 2 / e).sum())
    df = len(o) - 1
    return stat, df, float(stats.chi2.sf(stat, df))


def ks_critical(n: int, alpha: float = 0.001) -> float:
    """Asymptotic one-sample Kolmogorov-Smirnov critical value ``c(alpha)/sqrt(n)``."""
    return float(stats.kstwobign.isf(alpha) / math.sqrt(n))


@dataclass
class MassSummary:
    """Empirical summary of subtree-mass fractions for uniform ``N``-cladograms.

    ``ks_raw`` compares the lattice values ``n_1/N`` with the continuous
    marginal directly; near 0 the marginal CDF grows like ``sqrt(x)``, so
    the atom at ``1/N`` alone gives a floor of order ``1/sqrt(N)``.
    ``ks`` is the randomized probability integral transform for lattice
    data: the count ``n_1`` owns the cell ``[(n_1 - 1)/N, n_1/N)`` and is
    mapped to ``F(a) + U (F(b) - F(a))`` for the cell ``[a, b)`` and ``U``
    uniform, then compared with the uniform law.  This measures the
    difference of cell probabilities, which is what a lattice sample can
    resolve.
    """

    n: int
    m: int
    replicates: int
    mean_pair: float
    pair_target: Fraction
    pair_se: float
    moment_errors: dict
    chi2: float
    chi2_df: int
    chi2_p: float
    ks: float
    ks_raw: float
    ks_critical: float
    fractions: np.ndarray = field(repr=False)


def subtree_mass_histogram(n: int, m: int, replicates: int, rng=None, method: str = "urn") -> MassSummary:
    """Sample subtree masses and compare them with ``Dir(1/2, ..., 1/2)``.

    Reports the mean of ``eta_1 eta_2`` (target ``1/((2m-3)(2m-1))``, which
    is 1/15 for ``m = 3``), the errors of a few low moments, a 20x20 grid
    chi-square on ``(eta_1, eta_2)`` and the KS distance of ``eta_1`` to
    ``Beta(1/2, (2m-4)/2)``.
    """
    g = as_generator(rng)
    counts = sample_edge_counts(n, m, replicates, g, method)
    x = counts / n
    k = 2 * m - 3
    prod = x[:, 0] * x[:, 1]
    pair_target = dirichlet_moments([1, 1] + [0] * (k - 2))
    moments = {}
    for expo in ([1] + [0] * (k - 1), [2] + [0] * (k - 1), [1, 1] + [0] * (k - 2), [3] + [0] * (k - 1),
                 [1, 1, 1] + [0] * (k - 3) if k >= 3 else None):
        if expo is None:
            continue
        emp = float(np.mean(np.prod(x ** np.array(expo), axis=1)))
        moments[tuple(expo)] = emp - float(dirichlet_moments(expo))
    marginal = stats.beta(0.5, (k - 1) / 2)
    lo = marginal.cdf((counts[:, 0] - 1) / n)
    pit = lo + g.random(replicates) * (marginal.cdf(counts[:, 0] / n) - lo)
    chi2, df, p = dirichlet_chi_square(x[:, :2], m)
    return MassSummary(
        n=n, m=m, replicates=replicates,
        mean_pair=float(prod.mean()), pair_target=pair_target,
        pair_se=float(prod.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else float("nan"),
        moment_errors=moments, chi2=chi2, chi2_df=df, chi2_p=p,
        ks=float(stats.kstest(pit, "uniform").statistic),
        ks_raw=float(stats.kstest(x[:, 0], marginal.cdf).statistic),
        ks_critical=ks_critical(replicates), fractions=x)


# chain experiments


def _mean_se(values: Sequence[Fraction]) -> tuple[Fraction, float]:
    """Exact mean and standard error of the mean of rational samples."""
    r = len(values)
    mean = sum(values, Fraction(0)) / r
    if r < 2:
        return mean, float("nan")
    var = sum(((v - mean) ** 2 for v in values), Fraction(0)) / (r - 1)
    return mean, math.sqrt(var / r)


def _phi_vector(t: Cladogram, m: int, shapes) -> list[Fraction]:
    return [phi_fraction(t, m, s) for s in shapes]


def stationary_phi(n: int, m: int) -> Fraction:
    """``E[Phi^{m,s}]`` under the uniform law on ``N``-cladograms, the same for every ``s``."""
    return distinct_probability(n, m) / count_cladograms(m)


@dataclass
class MixingTable:
    """Per-time estimates of ``E[Phi^{m,s}(X_t)]`` for every ``m``-cladogram ``s``.

    ``rows`` holds dicts with keys ``t, shape_key, mean, se, target, z``.
    """

    n: int
    m: int
    start: str
    replicates: int
    target: Fraction
    rows: list[dict]

    def at(self, t: float) -> list[dict]:
        return [r for r in self.rows if r["t"] == t]


def mixing_experiment(n: int, start, m: int, horizons: Sequence[float], replicates: int,
                      rng=None) -> MixingTable:
    """Run the chain from ``start`` and average exact shape polynomials at each horizon.

    Parameters
    ----------
    start : {"comb", "balanced", "uniform"} or Cladogram
    horizons : increasing times ``>= 0``

    Notes
    -----
    For ``m <= 5`` every labelled ``m``-cladogram has the same unlabelled
    type, so ``Phi^{m,s}`` takes the stationary value on every tree and the
    curves are flat.  ``m = 6`` separates caterpillar and snowflake shapes
    and gives a non-trivial approach to the target.
    """
    from .tree import start_tree
    g = as_generator(rng)
    x0 = start if isinstance(start, Cladogram) else start_tree(start, n, g)
    n = x0.n_leaves
    hs = [float(h) for h in horizons]
    if any(b < a for a, b in zip(hs, hs[1:])) or (hs and hs[0] < 0):
        raise ValueError("horizons must be increasing and >= 0")
    shapes = enumerate_cladograms(m)
    master = draw_master_seed(g)
    samples = [[[] for _ in shapes] for _ in hs]
    for r in range(replicates):
        ss = replicate_seed(master, r)
        segs = ss.spawn(len(hs))
        st = ChainState(x0)
        now = 0.0
        for k, h in enumerate(hs):
            advance(st, h - now, segs[k])
            now = h
            vec = _phi_vector(st.to_cladogram(), m, shapes)
            for i, v in enumerate(vec):
                samples[k][i].append(v)
    target = stationary_phi(n, m)
    rows = []
    for k, h in enumerate(hs):
        for i, s in enumerate(shapes):
            mean, se = _mean_se(samples[k][i])
            z = float((mean - target) / Fraction(se)) if se and se > 0 else (0.0 if mean == target else math.inf)
            rows.append({"t": h, "shape_key": s.canonical_key.decode(), "mean": mean, "se": se,
                         "target": target, "z": z})
    name = start if isinstance(start, str) else "tree"
    return MixingTable(n, m, name, replicates, target, rows)


@dataclass
class DualityReport:
    """Both sides of the shape duality at one horizon.

    ``lhs`` estimates ``E_x[Phi^{m,s}(X_t)]`` by running the ``N``-chain from
    ``x``; ``rhs`` estimates ``E_s[Phi^{m,Y_t}(x)]`` by running the chain on
    ``m``-cladograms from ``s``.  ``rhs_exact`` evaluates the right side with
    the matrix exponential of the ``m``-chain generator.
    """

    n: int
    m: int
    start_shape: str
    horizon: float
    lhs: tuple[float, float]
    rhs: tuple[float, float]
    replicates: int
    rhs_exact: float = float("nan")

    @property
    def gap(self) -> float:
        return abs(self.lhs[0] - self.rhs[0])

    @property
    def gap_se(self) -> float:
        return math.hypot(self.lhs[1], self.rhs[1])


DUALITY_CAP = 6


def duality_check(x: Cladogram, m: int, s: LabelledShape, horizon: float, replicates: int,
                  rng=None) -> DualityReport:
    """Estimate both sides of the duality between the ``N``-chain and the ``m``-chain.

    Raises
    ------
    CapExceeded
        For ``m > 6``.
    """
    if m > DUALITY_CAP:
        raise CapExceeded(f"duality_check supports m <= {DUALITY_CAP}")
    if s.m != m:
        raise ValueError("shape size differs from m")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    g = as_generator(rng)
    q = rate_matrix(m)
    i0 = q.index(s)
    phis = _phi_vector(x, m, q.states)
    master = draw_master_seed(g)
    left, right = [], []
    rates = q.rates
    for r in range(replicates):
        ss_left, ss_right = replicate_seed(master, r).spawn(2)
        st = ChainState(x)
        advance(st, horizon, ss_left)
        left.append(phi_fraction(st.to_cladogram(), m, s))
        # Gillespie run of the m-chain
        gr = as_generator(ss_right)
        state, now = i0, 0.0
        while True:
            out = -rates[state, state]
            now += gr.exponential(1.0 / out)
            if now > horizon:
                break
            row = rates[state].astype(float)
            row[state] = 0.0
            state = int(gr.choice(len(row), p=row / out))
        right.append(phis[state])
    lm, ls = _mean_se(left)
    rm, rs = _mean_se(right)
    p = linalg.expm(horizon * rates.astype(float))[i0]
    exact = float(sum(pi * float(v) for pi, v in zip(p, phis)))
    return DualityReport(x.n_leaves, m, s.canonical_key.decode(), float(horizon), (float(lm), ls),
                         (float(rm), rs), replicates, exact)


@dataclass
class DynkinReport:
    """Monte Carlo estimate of ``E[Phi(X_t)] - Phi(x0) - int_0^t E[Omega_N Phi(X_u)] du``."""

    n: int
    m: int
    shape_key: str
    horizon: float
    estimate: float
    se: float
    replicates: int
    strata: int

    @property
    def z(self) -> float:
        if self.se > 0:
            return self.estimate / self.se
        return 0.0 if self.estimate == 0 else math.inf


def dynkin_check(x0: Cladogram, m: int, s: LabelledShape, horizon: float, replicates: int,
                 rng=None, strata: int = 8) -> DynkinReport:
    """Check the martingale identity of the chain on a shape polynomial.

    Each replicate estimates the time integral with one uniform time in each
    of ``strata`` equal slices of ``[0, horizon]`` (an unbiased stratified
    estimate), evaluating the exact closed-form generator there.
    """
    g = as_generator(rng)
    master = draw_master_seed(g)
    phi0 = phi_fraction(x0, m, s)
    width = Fraction(horizon) / strata
    vals = []
    for r in range(replicates):
        ss = replicate_seed(master, r)
        gen_ss, *segs = ss.spawn(strata + 2)
        u = as_generator(gen_ss).random(strata)
        times = [(k + float(u[k])) * float(width) for k in range(strata)]
        st = ChainState(x0)
        now = 0.0
        integral = Fraction(0)
        for k, tk in enumerate(times):
            advance(st, tk - now, segs[k])
            now = tk
            integral += omega_N_closedform_fraction(st.to_cladogram(), m, s)
        advance(st, horizon - now, segs[strata])
        vals.append(phi_fraction(st.to_cladogram(), m, s) - phi0 - width * integral)
    mean, se = _mean_se(vals)
    return DynkinReport(x0.n_leaves, m, s.canonical_key.decode(), float(horizon), float(mean), se,
                        replicates, strata)


# distance matrices


def distance_matrix_mc(t: Cladogram, m: int, n_samples: int, rng=None, exact: bool = False) -> np.ndarray:
    """I.i.d. matrices ``(r_mu(U_i, U_j))`` for uniform leaf ``m``-tuples.

    With ``exact=True`` the integer numerators ``2 N**3 r_mu`` are returned
    instead of floats.
    """
    g = as_generator(rng)
    d = leaf_distance_numerators(t)
    idx = g.integers(0, t.n_leaves, size=(n_samples, m))
    out = d[idx[:, :, None], idx[:, None, :]]
    if exact:
        return out
    return out / (2 * t.n_leaves**3)


def four_point_violation(d: np.ndarray) -> float:
    """Largest four-point defect of a distance matrix (0 for a tree metric).

    For each quadruple the two largest of ``d_ij + d_kl``, ``d_ik + d_jl``,
    ``d_il + d_jk`` must be equal.
    """
    d = np.asarray(d)
    m = d.shape[0]
    worst = 0
    for i, j, k, l in itertools.combinations(range(m), 4):
        sums = sorted((d[i, j] + d[k, l], d[i, k] + d[j, l], d[i, l] + d[j, k]))
        worst = max(worst, sums[2] - sums[1])
    return worst


def jump_count_mean(n: int, horizon: float) -> float:
    """Expected number of state changes of the ``N``-chain on ``[0, horizon]``."""
    return jump_rate(n) * horizon
