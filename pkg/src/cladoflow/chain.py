"""The Aldous chain on labelled cladograms.

A move ``(u, e)`` detaches leaf ``u``, splices out its branch point ``b`` and
regrafts ``u`` by splitting edge ``e``.  It leaves the tree unchanged when
``e`` is one of the three edges at ``b``, so each leaf has ``2N-6`` moves that
change the state and the chain jumps at total rate ``N(2N-6)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import _kernels as K
from .errors import BadEdge, BadLeaf, CapExceeded, NotSymmetric
from .rng import as_generator, kernel_seed
from .shapes import LabelledShape, enumerate_cladograms
from .tree import Cladogram, Edge


@dataclass(frozen=True)
class Move:
    leaf: int
    edge: Edge


def _edge_index(t: Cladogram, e) -> int:
    try:
        a, b = int(e[0]), int(e[1])
    except (TypeError, ValueError, IndexError):
        raise BadEdge(f"{e!r} is not an edge") from None
    key = (a, b) if a < b else (b, a)
    idx = t._cache.get("edge_index")
    if idx is None:
        idx = {ed: i for i, ed in enumerate(t.edges)}
        t._cache["edge_index"] = idx
    if key not in idx:
        raise BadEdge(f"{key} is not an edge of the tree")
    return idx[key]


def _check_leaf(t: Cladogram, u) -> int:
    if not isinstance(u, (int, np.integer)) or not 1 <= u <= t.n_leaves:
        raise BadLeaf(f"{u!r} is not a leaf")
    return int(u)


def _other_edges(t: Cladogram, u: int) -> tuple[int, int, int]:
    (b,) = t._nbrs[u]
    i1, i2 = sorted(_edge_index(t, (b, w)) for w in t._nbrs[b] if w != u)
    return b, i1, i2


def is_noop(t: Cladogram, u: int, e) -> bool:
    """True when the move ``(u, e)`` leaves ``t`` unchanged."""
    u = _check_leaf(t, u)
    ei = _edge_index(t, e)
    b, i1, i2 = _other_edges(t, u)
    return ei in (i1, i2, _edge_index(t, (u, b)))


def aldous_move(t: Cladogram, u: int, e) -> Cladogram:
    """Apply the move ``(u, e)``.

    Parameters
    ----------
    t : Cladogram
    u : int
        Leaf to move.
    e : pair of int
        Edge of ``t`` (as its two endpoints) into which ``u`` is regrafted.

    Returns
    -------
    Cladogram
        ``t`` itself for a no-op, otherwise the new tree.  The branch point of
        ``u`` keeps its vertex id.

    Raises
    ------
    BadLeaf, BadEdge
    """
    u = _check_leaf(t, u)
    ei = _edge_index(t, e)
    b, ea, ew = _other_edges(t, u)
    if ei in (ea, ew, _edge_index(t, (u, b))):
        return t
    edges = list(t.edges)
    a = edges[ea][0] if edges[ea][1] == b else edges[ea][1]
    w = edges[ew][0] if edges[ew][1] == b else edges[ew][1]
    x, y = edges[ei]
    edges[ea] = (a, w)
    edges[ei] = (x, b)
    edges[ew] = (b, y)
    return Cladogram._trusted(t.n_leaves, edges)


def enumerate_moves(t: Cladogram) -> Iterator[tuple[Move, Cladogram]]:
    """Yield every pair ``(u, e)`` once with its result, ``N(2N-3)`` pairs in all."""
    for u in t.leaves:
        for e in t.edges:
            yield Move(u, e), aldous_move(t, u, e)


# fast mutable state


class ChainState:
    """Mutable array form of a cladogram, driven by the compiled kernels."""

    __slots__ = ("n", "edges", "nbr", "nbr_e")

    def __init__(self, t: Cladogram):
        self.n = t.n_leaves
        self.edges, self.nbr, self.nbr_e = K.state_arrays(t.n_leaves, t.edges)

    def to_cladogram(self) -> Cladogram:
        return Cladogram._trusted(self.n, [tuple(r) for r in self.edges.tolist()])

    def move(self, u: int, ei: int) -> bool:
        return bool(K.apply_move(self.edges, self.nbr, self.nbr_e, u, ei))

    def jumps(self, n_jumps: int, seed: int) -> None:
        K.run_jumps(self.edges, self.nbr, self.nbr_e, self.n, int(n_jumps), int(seed))


def jump_rate(n: int) -> int:
    return n * (2 * n - 6)


def advance(state: ChainState, duration: float, ss: np.random.SeedSequence) -> int:
    """Run the chain for ``duration`` time units in place; return the number of jumps.

    The jump count is Poisson with mean ``N(2N-6) * duration`` (drawn from a
    PCG64 stream of ``ss``); the jumps themselves use the compiled kernel
    seeded from the same sequence.
    """
    g = as_generator(ss)
    count = int(g.poisson(jump_rate(state.n) * duration)) if duration > 0 else 0
    if count:
        state.jumps(count, kernel_seed(ss.spawn(1)[0]))
    return count


def simulate_final(t0: Cladogram, horizon: float, rng=None) -> Cladogram:
    """State at time ``horizon`` of the chain started from ``t0`` (event path not kept)."""
    ss = rng if isinstance(rng, np.random.SeedSequence) else np.random.SeedSequence(
        int(as_generator(rng).integers(0, 2**63 - 1)))
    st = ChainState(t0)
    advance(st, horizon, ss)
    return st.to_cladogram()


# trajectories


@dataclass
class Trajectory:
    """A sampled path of the chain on ``[0, horizon]``.

    States are stored as the sequence of applied moves with full snapshots
    after every ``snapshot_every`` events.
    """

    initial: Cladogram
    horizon: float
    times: list[float] = field(default_factory=list)
    moves: list[Move] = field(default_factory=list)
    snapshot_every: int = 1024
    snapshots: dict[int, Cladogram] = field(default_factory=dict)
    seed: object = None
    record_noops: bool = False

    def __len__(self) -> int:
        return len(self.moves)

    def state_after(self, i: int) -> Cladogram:
        """State after event ``i`` (``i = -1`` gives the initial state)."""
        if i < -1 or i >= len(self.moves):
            raise IndexError(i)
        base, t = -1, self.initial
        for j in sorted(self.snapshots):
            if j <= i:
                base, t = j, self.snapshots[j]
        for j in range(base + 1, i + 1):
            mv = self.moves[j]
            t = aldous_move(t, mv.leaf, mv.edge)
        return t

    def state_at(self, time: float) -> Cladogram:
        i = int(np.searchsorted(np.asarray(self.times), time, side="right")) - 1
        return self.state_after(i)

    @property
    def final(self) -> Cladogram:
        return self.state_after(len(self.moves) - 1)

    def to_jsonl(self) -> str:
        """One JSON object per line.

        The first line holds the initial state (``leaf`` and ``edge`` null);
        each following line is an event ``{t, leaf, edge}`` and carries a
        Newick ``snapshot`` of the post-event state every ``snapshot_every``
        events.
        """
        from .serialize import to_newick
        lines = [json.dumps({"t": 0.0, "leaf": None, "edge": None,
                             "snapshot": to_newick(self.initial)})]
        for i, (tm, mv) in enumerate(zip(self.times, self.moves)):
            rec = {"t": tm, "leaf": mv.leaf, "edge": list(mv.edge)}
            if i in self.snapshots:
                rec["snapshot"] = to_newick(self.snapshots[i])
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"


def simulate(t0: Cladogram, horizon: float, rng=None, *, record_noops: bool = False,
             snapshot_every: int = 1024) -> Trajectory:
    """Simulate the continuous-time chain on ``[0, horizon]``.

    Parameters
    ----------
    t0 : Cladogram
        Initial state.
    horizon : float
        Final time, ``>= 0``.
    rng : seed-like
    record_noops : bool
        If True, run the literal clock: events at rate ``N(2N-3)`` with the
        pair ``(u, e)`` uniform, no-ops included.  Otherwise only state
        changes are drawn, at rate ``N(2N-6)``.  The state process has the
        same law either way.
    snapshot_every : int
        Snapshot period in events.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    g = as_generator(rng)
    n = t0.n_leaves
    ne = 2 * n - 3
    rate = n * ne if record_noops else jump_rate(n)
    traj = Trajectory(t0, float(horizon), snapshot_every=snapshot_every, seed=rng,
                      record_noops=record_noops)
    if rate == 0:
        return traj
    st = ChainState(t0)
    now = 0.0
    while True:
        now += g.exponential(1.0 / rate)
        if now > horizon:
            break
        u = int(g.integers(1, n + 1))
        ei = int(g.integers(0, ne))
        if not record_noops:
            while K.is_noop(st.nbr, st.nbr_e, u, ei):
                ei = int(g.integers(0, ne))
        x, y = (int(v) for v in st.edges[ei])
        st.move(u, ei)
        traj.times.append(now)
        traj.moves.append(Move(u, (x, y)))
        if len(traj.moves) % snapshot_every == 0:
            traj.snapshots[len(traj.moves) - 1] = st.to_cladogram()
    return traj


# exact rate matrices


@dataclass(frozen=True)
class RateMatrix:
    """Generator of the chain on the labelled ``m``-cladograms.

    ``rates[i, j]`` counts moves from ``states[i]`` to ``states[j]``; the
    diagonal makes rows sum to zero.
    """

    m: int
    states: tuple[LabelledShape, ...]
    rates: np.ndarray

    def index(self, s: LabelledShape) -> int:
        return {x.canonical_key: i for i, x in enumerate(self.states)}[s.canonical_key]


RATE_MATRIX_CAP = 7


def rate_matrix(m: int) -> RateMatrix:
    """Exact integer generator on ``Clad_m`` for ``4 <= m <= 7``."""
    if not 4 <= m <= RATE_MATRIX_CAP:
        raise CapExceeded(f"rate_matrix supports 4 <= m <= {RATE_MATRIX_CAP}, got {m}")
    states = tuple(enumerate_cladograms(m))
    index = {s.canonical_key: i for i, s in enumerate(states)}
    q = np.zeros((len(states), len(states)), dtype=np.int64)
    for i, s in enumerate(states):
        t = s.to_cladogram()
        for _, t2 in enumerate_moves(t):
            if t2 is not t:
                q[i, index[t2.canonical_key()]] += 1
        q[i, i] = -q[i].sum()
    q.setflags(write=False)
    return RateMatrix(m, states, q)


def spectral_gap(q) -> float:
    """Smallest nonzero eigenvalue of ``-Q`` for a symmetric generator ``Q``.

    Raises
    ------
    NotSymmetric
    """
    a = np.asarray(q.rates if isinstance(q, RateMatrix) else q)
    if a.shape[0] != a.shape[1] or not np.array_equal(a, a.T):
        raise NotSymmetric("spectral_gap needs a symmetric matrix")
    ev = np.sort(np.linalg.eigvalsh(-a.astype(float)))
    return float(ev[1])
