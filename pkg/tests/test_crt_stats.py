import itertools
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from cladoflow.crt_stats import (dirichlet_moments, distance_matrix_mc, duality_check,
                                 dynkin_check, edge_mass_profile, enumerate_profiles,
                                 four_point_violation, jump_count_mean, ks_critical,
                                 local_limit_check, mixing_experiment, q_N_exact, q_N_total,
                                 sample_edge_counts, stationary_phi, subtree_mass_histogram)
from cladoflow.errors import BadProfile, CapExceeded
from cladoflow.shape_poly import phi_fraction
from cladoflow.shapes import enumerate_cladograms
from cladoflow.tree import Cladogram, all_cladograms, comb_cladogram, count_cladograms, r_mu, uniform_cladogram

STAR3 = enumerate_cladograms(3)[0]


@pytest.mark.parametrize("n, m", [(5, 3), (6, 3), (6, 4), (7, 4), (7, 5)])
def test_q_N_matches_enumeration(n, m):
    # oracle: tabulate (shape, profile) over every n-cladogram
    freq = Counter()
    trees = list(all_cladograms(n))
    for t in trees:
        s, prof = edge_mass_profile(t, m)
        freq[(s.canonical_key, frozenset(prof.items()))] += 1
    for s in enumerate_cladograms(m):
        for p in enumerate_profiles(n, s):
            key = (s.canonical_key, frozenset(zip(s.splits(), p)))
            assert q_N_exact(n, s, p) == Fraction(freq[key], len(trees))
        assert q_N_total(n, s) == Fraction(1, count_cladograms(m))


def test_q_N_examples():
    # N = m: every edge carries its own leaf only
    s = enumerate_cladograms(4)[0]
    ones = [1 if s.is_external(sp) else 0 for sp in s.splits()]
    assert q_N_exact(4, s, ones) == Fraction(1, 3)
    assert q_N_exact(3, STAR3, [1, 1, 1]) == 1
    assert q_N_exact(4, STAR3, [2, 1, 1]) == Fraction(1, 3)


@pytest.mark.parametrize("profile", [[1, 1], [0, 2, 2], [1, 1, 1.5], [5, 1, 1]])
def test_bad_profiles(profile):
    with pytest.raises(BadProfile):
        q_N_exact(4, STAR3, profile)


def test_q_N_sums_over_profiles_large():
    assert q_N_total(30, enumerate_cladograms(4)[1]) == Fraction(1, 3)


def test_dirichlet_moments():
    assert dirichlet_moments([1, 1, 0]) == Fraction(1, 15)
    assert dirichlet_moments([1, 0, 0]) == Fraction(1, 3)
    assert dirichlet_moments([2, 0, 0]) == Fraction(1, 5)
    assert dirichlet_moments([1, 0], alpha=[1, 1]) == Fraction(1, 2)
    with pytest.raises(ValueError):
        dirichlet_moments([-1, 0])


@pytest.mark.parametrize("eta", [(0.2, 0.3, 0.5), (0.45, 0.35, 0.2)])
def test_local_limit(eta):
    _, _, err = local_limit_check(2000, STAR3, eta)
    assert err < 0.05


def test_local_limit_improves():
    s = enumerate_cladograms(4)[0]
    eta = [0.15, 0.2, 0.25, 0.3, 0.1]
    errs = [local_limit_check(n, s, eta)[2] for n in (100, 400, 1600)]
    assert errs[0] > errs[1] > errs[2]


def test_urn_matches_tree_method():
    g = np.random.default_rng(0)
    a = sample_edge_counts(40, 3, 4000, g, "urn")
    b = sample_edge_counts(40, 3, 4000, g, "tree")
    assert a.shape == b.shape == (4000, 3)
    assert (a.sum(axis=1) == 40).all() and (b.sum(axis=1) == 40).all()
    for k in range(3):
        ma, mb = a[:, k].mean(), b[:, k].mean()
        se = np.hypot(a[:, k].std(), b[:, k].std()) / np.sqrt(4000)
        assert abs(ma - mb) < 4 * se


def test_histogram_summary():
    summ = subtree_mass_histogram(2000, 3, 20000, 1)
    assert summ.pair_target == Fraction(1, 15)
    assert abs(summ.mean_pair - 1 / 15) < 4 * summ.pair_se
    assert summ.chi2_p > 1e-3
    assert summ.ks < summ.ks_critical
    assert ks_critical(20000) == pytest.approx(1.9495 / np.sqrt(20000), rel=1e-3)


def test_stationary_target_by_enumeration():
    for n in (5, 6):
        trees = list(all_cladograms(n))
        for s in enumerate_cladograms(4):
            avg = sum((phi_fraction(t, 4, s, "dp") for t in trees), Fraction(0)) / len(trees)
            assert avg == stationary_phi(n, 4)
    trees = list(all_cladograms(7))
    for s in enumerate_cladograms(6)[:20]:
        avg = sum((phi_fraction(t, 6, s) for t in trees), Fraction(0)) / len(trees)
        assert avg == stationary_phi(7, 6)


def test_mixing_flat_for_four():
    tab = mixing_experiment(30, "comb", 4, [0.0, 0.5], 5, 1)
    assert all(r["mean"] == tab.target and r["se"] == 0 for r in tab.rows)


def test_mixing_six_approaches_target():
    tab = mixing_experiment(24, "comb", 6, [0.0, 2.0], 150, 2)
    start = max(abs(float(r["mean"] - r["target"])) for r in tab.at(0.0))
    assert start > 0
    late = tab.at(2.0)
    assert max(abs(float(r["mean"] - r["target"])) for r in late) < start
    assert max(abs(r["z"]) for r in late) < 5


def test_mixing_rejects_bad_horizons():
    with pytest.raises(ValueError):
        mixing_experiment(10, "comb", 4, [1.0, 0.5], 2, 0)


def test_duality_horizon_zero_is_exact():
    x = comb_cladogram(20)
    for s in enumerate_cladograms(6)[:6]:
        rep = duality_check(x, 6, s, 0.0, 3, 1)
        assert rep.gap == 0 and rep.rhs_exact == pytest.approx(rep.lhs[0])


def test_duality_six():
    x = comb_cladogram(20)
    s = enumerate_cladograms(6)[0]
    rep = duality_check(x, 6, s, 0.05, 400, 3)
    assert rep.gap < 4 * rep.gap_se
    assert abs(rep.lhs[0] - rep.rhs_exact) < 4 * rep.lhs[1]


def test_duality_cap():
    with pytest.raises(CapExceeded):
        duality_check(comb_cladogram(10), 7, enumerate_cladograms(6)[0], 1.0, 1)


def test_dynkin_four_is_exact():
    rep = dynkin_check(uniform_cladogram(20, 0), 4, enumerate_cladograms(4)[0], 1.0, 5, 0)
    assert rep.estimate == 0 and rep.z == 0


def test_dynkin_six():
    s = enumerate_cladograms(6)[0]
    rep = dynkin_check(comb_cladogram(16), 6, s, 0.1, 200, 4)
    assert abs(rep.z) < 4


def test_distance_matrices():
    t = uniform_cladogram(15, 2)
    d = distance_matrix_mc(t, 6, 30, 1)
    num = distance_matrix_mc(t, 6, 30, 1, exact=True)
    assert d.shape == (30, 6, 6)
    for mat, nm in zip(d, num):
        assert np.allclose(mat, mat.T) and not np.diag(mat).any()
        assert four_point_violation(nm) == 0
    # star, two samples: off-diagonal values are 0 or 13/27
    star = Cladogram(3, [(1, 4), (2, 4), (3, 4)])
    vals = set(distance_matrix_mc(star, 2, 200, 0, exact=True)[:, 0, 1].tolist())
    assert vals == {0, int(Fraction(13, 27) * 54)}


def test_four_point_detects_non_tree():
    d = np.array([[0, 1, 1, 1], [1, 0, 1, 1], [1, 1, 0, 5], [1, 1, 5, 0]])
    assert four_point_violation(d) > 0
    t = uniform_cladogram(8, 1)
    leaves = list(itertools.islice(t.leaves, 5))
    exact = np.array([[r_mu(t, a, b) for b in leaves] for a in leaves], dtype=object)
    assert four_point_violation(exact) == 0


def test_jump_count_mean():
    assert jump_count_mean(10, 2.0) == 10 * 14 * 2
