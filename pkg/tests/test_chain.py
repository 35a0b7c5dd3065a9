import json
import math

import numpy as np
import pytest

from cladoflow.chain import (ChainState, Move, aldous_move, enumerate_moves, is_noop, jump_rate,
                             rate_matrix, simulate, spectral_gap)
from cladoflow.errors import BadEdge, BadLeaf, CapExceeded, NotSymmetric
from cladoflow.rng import kernel_seed
from cladoflow.shapes import shape
from cladoflow.tree import Cladogram, all_cladograms, uniform_cladogram, validate_cladogram

CHERRY = Cladogram(4, [(1, 5), (2, 5), (5, 6), (3, 6), (4, 6)])


def test_move_examples():
    t = CHERRY
    assert aldous_move(t, 1, (1, 5)) is t
    out = aldous_move(t, 1, (3, 6))
    assert out == Cladogram(4, [(1, 5), (3, 5), (5, 6), (2, 6), (4, 6)])
    with pytest.raises(BadLeaf):
        aldous_move(t, 5, (3, 6))
    with pytest.raises(BadEdge):
        aldous_move(t, 1, (1, 2))


def test_noops_per_leaf():
    t = uniform_cladogram(12, 3)
    for u in t.leaves:
        assert sum(is_noop(t, u, e) for e in t.edges) == 3


@pytest.mark.parametrize("n, pairs, jumps", [(3, 9, 0), (4, 20, 8), (7, 77, 56)])
def test_enumerate_moves_counts(n, pairs, jumps):
    t = uniform_cladogram(n, 0)
    moves = list(enumerate_moves(t))
    assert len(moves) == pairs
    assert sum(out != t for _, out in moves) == jumps == jump_rate(n)
    assert len({m for m, _ in moves}) == pairs
    for _, out in moves:
        validate_cladogram(n, out.edges)


def test_reversal_exhaustive():
    for n in (4, 5, 6):
        for t in all_cladograms(n):
            for mv, out in enumerate_moves(t):
                if out != t:
                    assert any(back == t for _, back in enumerate_moves(out) if _.leaf == mv.leaf)


def test_kernel_matches_python_moves():
    g = np.random.default_rng(5)
    for _ in range(100):
        n = int(g.integers(4, 25))
        t = uniform_cladogram(n, g)
        st = ChainState(t)
        for _ in range(20):
            u = int(g.integers(1, n + 1))
            ei = int(g.integers(0, 2 * n - 3))
            x, y = (int(v) for v in st.edges[ei])
            changed = st.move(u, ei)
            t2 = aldous_move(t, u, (x, y))
            assert changed == (t2 is not t)
            assert st.to_cladogram().edges == t2.edges
            t = t2


def test_kernel_jumps_never_noop():
    t = uniform_cladogram(30, 1)
    st = ChainState(t)
    st.jumps(5000, 7)
    validate_cladogram(30, st.to_cladogram().edges)
    a, b = ChainState(t), ChainState(t)
    a.jumps(1000, kernel_seed(np.random.SeedSequence(3)))
    b.jumps(1000, kernel_seed(np.random.SeedSequence(3)))
    assert np.array_equal(a.edges, b.edges)


def test_simulate_star_is_constant():
    t = Cladogram(3, [(1, 4), (2, 4), (3, 4)])
    traj = simulate(t, 5.0, 1)
    assert len(traj) == 0 and traj.final == t
    traj = simulate(t, 1.0, 1, record_noops=True)
    assert len(traj) > 0 and traj.final == t


def test_event_count_literal_clock():
    n = 6
    t = uniform_cladogram(n, 2)
    counts = [len(simulate(t, 1.0, r, record_noops=True)) for r in range(200)]
    rate = n * (2 * n - 3)
    assert abs(np.mean(counts) - rate) < 4 * math.sqrt(rate / 200)


def test_trajectory_consistency():
    t = uniform_cladogram(10, 4)
    traj = simulate(t, 2.0, 9, snapshot_every=16)
    assert all(a < b for a, b in zip(traj.times, traj.times[1:]))
    state = t
    for i, mv in enumerate(traj.moves):
        state = aldous_move(state, mv.leaf, mv.edge)
        assert state != traj.state_after(i - 1)
        if i in traj.snapshots:
            assert traj.snapshots[i] == state
    assert traj.final == state
    assert traj.state_at(traj.times[5]) == traj.state_after(5)
    lines = traj.to_jsonl().splitlines()
    assert len(lines) == len(traj) + 1
    assert json.loads(lines[0])["leaf"] is None


def test_simulate_deterministic():
    t = uniform_cladogram(15, 1)
    a, b = simulate(t, 1.0, 42), simulate(t, 1.0, 42)
    assert a.times == b.times and a.moves == b.moves


def test_rate_matrix_four():
    q = rate_matrix(4)
    assert q.rates.tolist() == [[-8, 4, 4], [4, -8, 4], [4, 4, -8]]
    assert spectral_gap(q) == pytest.approx(12)
    # integer eigenvectors certify the eigenvalue -12 exactly
    for v in ([1, -1, 0], [1, 0, -1]):
        assert (q.rates @ np.array(v)).tolist() == [-12 * x for x in v]


@pytest.mark.parametrize("m", [4, 5, 6])
def test_rate_matrix_properties(m):
    q = rate_matrix(m)
    r = q.rates
    assert np.array_equal(r, r.T)
    assert not r.sum(axis=1).any()
    assert (np.diag(r) == -m * (2 * m - 6)).all()
    assert spectral_gap(q) > 0


def test_rate_matrix_gaps_trend():
    # recorded values: the gap equals 4(m-1) for m = 4..6
    assert [round(spectral_gap(rate_matrix(m)), 9) for m in (4, 5, 6)] == [12, 16, 20]


def test_rate_matrix_errors():
    with pytest.raises(CapExceeded):
        rate_matrix(8)
    with pytest.raises(NotSymmetric):
        spectral_gap(np.array([[-1, 1], [2, -2]]))


def test_shape_frequencies_approach_uniform():
    # long-run 4-sample shape of leaves 1..4 is uniform over the three shapes
    t = uniform_cladogram(12, 0)
    st = ChainState(t)
    counts = {}
    for r in range(3000):
        st.jumps(200, r)
        key = shape(st.to_cladogram(), (1, 2, 3, 4)).canonical_key
        counts[key] = counts.get(key, 0) + 1
    from scipy import stats
    assert len(counts) == 3
    assert stats.chisquare(list(counts.values())).pvalue > 0.001


def test_move_dataclass():
    assert Move(1, (2, 3)) == Move(1, (2, 3))
