from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cladoflow.errors import NotSymmetric
from cladoflow.mass_poly import (REGISTRY, check_derivatives, eta, get_mass_function,
                                 lemma_lambda_check, matching_lemma_check, mean_distance,
                                 mean_distance_pairs, omega_ald_mass, omega_N_mass,
                                 omega_N_mass_bruteforce, phi_f_bruteforce, phi_f_exact, polynomial,
                                 theta_migration, vertex_eta, wright_fisher_check)
from cladoflow.tree import Cladogram, all_cladograms, balanced_cladogram, comb_cladogram, uniform_cladogram

STAR = Cladogram(3, [(1, 4), (2, 4), (3, 4)])
CHERRY = Cladogram(4, [(1, 5), (2, 5), (5, 6), (3, 6), (4, 6)])
POLYS = ["sym_pairs", "one", "coord_mean", "first_coord"]


def test_eta_examples():
    assert eta(CHERRY, 1, 2, 3) == (Fraction(1, 4), Fraction(1, 4), Fraction(1, 2))
    assert eta(CHERRY, 3, 1, 4) == (Fraction(1, 4), Fraction(2, 4), Fraction(1, 4))
    assert eta(CHERRY, 2, 2, 4) == (0, 0, Fraction(3, 4))
    assert eta(CHERRY, 4, 4, 4) == (0, 0, 0)
    assert vertex_eta(CHERRY, 6) == (Fraction(1, 2), Fraction(1, 4), Fraction(1, 4))


@pytest.mark.parametrize("name", list(REGISTRY))
def test_derivatives(name):
    f = get_mass_function(name)
    assert check_derivatives(f, rng=1) < 1e-4


def test_get_mass_function_forms():
    a = get_mass_function([[1, [1, 1, 0]], [1, [0, 1, 1]], [1, [1, 0, 1]]])
    b = get_mass_function('[["1/2", [2, 0, 0]]]')
    assert a.is_symmetric and not b.is_symmetric
    assert b((Fraction(1, 2), 0, 0)) == Fraction(1, 8)
    with pytest.raises(KeyError):
        get_mass_function("nope")
    with pytest.raises(ValueError):
        polynomial([(1, (5, 0, 0))])


def test_theta_examples():
    f = get_mass_function("sym_pairs")
    x = (Fraction(1, 5), Fraction(3, 10), Fraction(1, 2))
    # moving x1 onto x2: (0, x1+x2, x3) gives (x1+x2) x3
    expect = ((x[0] + x[1]) * x[2] - f(x)) / x[0]
    assert theta_migration(f, 1, 2, x) == expect
    z = (Fraction(0), Fraction(1, 3), Fraction(2, 3))
    g = f.gradient(z)
    assert theta_migration(f, 1, 2, z) == g[1] - g[0]
    with pytest.raises(ValueError):
        theta_migration(f, 1, 1, x)


@pytest.mark.parametrize("name", POLYS)
def test_phi_matches_bruteforce(name):
    for t in (STAR, CHERRY, uniform_cladogram(9, 3)):
        assert phi_f_exact(t, name, exact=True) == phi_f_bruteforce(t, name, exact=True)


@pytest.mark.parametrize("name", POLYS)
def test_omega_N_matches_bruteforce(name):
    for t in all_cladograms(6):
        assert omega_N_mass(t, name, exact=True) == omega_N_mass_bruteforce(t, name, exact=True)
    for seed in range(3):
        t = uniform_cladogram(9, seed)
        assert omega_N_mass(t, name, exact=True) == omega_N_mass_bruteforce(t, name, exact=True)


def test_omega_N_float_route():
    t = uniform_cladogram(8, 1)
    f = get_mass_function("entropy_like")
    assert omega_N_mass(t, f) == pytest.approx(omega_N_mass_bruteforce(t, f), abs=1e-9)


@pytest.mark.parametrize("name", ["sym_pairs", "coord_mean", "one"])
def test_symmetric_route_equals_general(name):
    t = uniform_cladogram(15, 7)
    for part in ("full", "nondegenerate", "degenerate"):
        a = omega_ald_mass(t, name, part, "general", exact=True)
        b = omega_ald_mass(t, name, part, "symmetric", exact=True)
        assert a == b


def test_symmetric_route_needs_symmetry():
    with pytest.raises(NotSymmetric):
        omega_ald_mass(CHERRY, "first_coord", route="symmetric")


def test_constant_has_zero_generators():
    t = uniform_cladogram(12, 0)
    assert omega_N_mass(t, "one", exact=True) == 0
    assert omega_ald_mass(t, "one", exact=True) == 0


def test_first_coord_matches_its_symmetrization():
    t = uniform_cladogram(12, 2)
    assert phi_f_exact(t, "first_coord", exact=True) == phi_f_exact(t, "coord_mean", exact=True)
    assert omega_N_mass(t, "first_coord", exact=True) == omega_N_mass(t, "coord_mean", exact=True)
    a = omega_ald_mass(t, "first_coord", "nondegenerate", exact=True)
    b = omega_ald_mass(t, "coord_mean", "nondegenerate", exact=True)
    assert a == b


def test_sym_pairs_is_tree_independent():
    vals = {phi_f_exact(t, "sym_pairs", exact=True) for t in all_cladograms(7)}
    assert len(vals) == 1
    assert omega_N_mass(uniform_cladogram(20, 3), "sym_pairs", exact=True) == 0


def test_mean_distance_star():
    assert mean_distance(STAR) == Fraction(26, 81) == mean_distance_pairs(STAR)


@given(st.integers(3, 25), st.integers(0, 2**32))
@settings(max_examples=30, deadline=None)
def test_mean_distance_routes_agree(n, seed):
    t = uniform_cladogram(n, seed)
    assert mean_distance(t) == mean_distance_pairs(t)


def test_mean_distance_shape_free():
    for n in (16, 64):
        assert mean_distance(comb_cladogram(n)) == mean_distance(balanced_cladogram(n))


def test_lemma_lambda():
    g = np.random.default_rng(1)
    for _ in range(30):
        t = uniform_cladogram(int(g.integers(3, 30)), g)
        for v in t.internal_vertices:
            for u in t.neighbors(v):
                assert lemma_lambda_check(t, v, u)[2]


def test_matching_lemma():
    # g symmetric in its two sides, as each edge is seen from both ends
    t = uniform_cladogram(25, 4)
    lhs, rhs, gap = matching_lemma_check(t, lambda a, b: a * b * (a * a + b * b) + 3)
    assert gap == 0 and lhs == rhs


def test_wright_fisher_gap_shrinks():
    gaps = [wright_fisher_check(uniform_cladogram(n, 0), "coord_mean")[2] for n in (20, 80, 320)]
    assert gaps[0] > gaps[1] > gaps[2]
