"""Weighted power-grid graphs and their Laplacians.

Buses are 1-indexed in :class:`WeightedGraph` (matching case files) and
0-indexed in every matrix. Bus 1 is the reference bus: the reduced
Laplacian drops its row and column.
"""

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    DisconnectedGraph,
    GenerationFailed,
    InvalidBranch,
    ParseError,
    ShapeMismatch,
)
from .numerics import pinv

EDGE_TOL = 1e-6


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph with positive branch susceptances.

    ``branches`` holds ``(from_bus, to_bus, b)`` triples, 1-indexed with
    ``from_bus < to_bus``, sorted and free of duplicates.
    """

    bus_count: int
    branches: tuple

    def __post_init__(self):
        M = self.bus_count
        if M < 1:
            raise ValueError("bus_count must be positive")
        seen = set()
        clean = []
        for f, t, b in self.branches:
            f, t, b = int(f), int(t), float(b)
            if f == t:
                raise InvalidBranch(f"self-loop at bus {f}")
            if f > t:
                f, t = t, f
            if not (1 <= f and t <= M):
                raise InvalidBranch(f"branch ({f}, {t}) outside buses 1..{M}")
            if not b > 0:
                raise InvalidBranch(f"branch ({f}, {t}) has non-positive susceptance {b}")
            if (f, t) in seen:
                raise InvalidBranch(f"duplicate branch ({f}, {t})")
            seen.add((f, t))
            clean.append((f, t, b))
        object.__setattr__(self, "branches", tuple(sorted(clean)))

    @property
    def edge_count(self):
        return len(self.branches)

    def is_connected(self):
        return is_connected(self.bus_count, [(f - 1, t - 1) for f, t, _ in self.branches])


def is_connected(n, edges):
    """Union-find connectivity test on ``n`` nodes and 0-indexed ``edges``."""
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    components = n
    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            components -= 1
    return components <= 1


def reduction_operator(M):
    """The M x (M-1) matrix U with ``L = U @ L_reduced @ U.T``."""
    return np.vstack([-np.ones((1, M - 1)), np.eye(M - 1)])


@dataclass(frozen=True)
class LaplacianPair:
    L: np.ndarray
    L_reduced: np.ndarray
    U: np.ndarray = field(repr=False)
    U_pinv: np.ndarray = field(repr=False)

    @classmethod
    def from_laplacian(cls, L):
        L = np.asarray(L, dtype=float)
        M = L.shape[0]
        U = reduction_operator(M)
        return cls(L, reduce_laplacian(L), U, pinv(U))

    @classmethod
    def from_reduced(cls, L_reduced):
        return cls.from_laplacian(expand_laplacian(L_reduced))

    @property
    def M(self):
        return self.L.shape[0]

    @property
    def noise_shape(self):
        """``U_pinv @ U_pinv.T``: covariance of reduced noise per unit variance."""
        return self.U_pinv @ self.U_pinv.T


def laplacian_from_graph(g):
    """Build ``L = B diag(b) B^T`` and its reduction for a connected graph."""
    if not g.is_connected():
        raise DisconnectedGraph(f"graph with {g.bus_count} buses is not connected")
    M = g.bus_count
    L = np.zeros((M, M))
    for f, t, b in g.branches:
        i, j = f - 1, t - 1
        L[i, j] -= b
        L[j, i] -= b
        L[i, i] += b
        L[j, j] += b
    return LaplacianPair.from_laplacian(L)


def reduce_laplacian(L):
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] < 2:
        raise ShapeMismatch(f"expected a square matrix of size >= 2, got {L.shape}")
    return L[1:, 1:].copy()


def expand_laplacian(L_reduced):
    """Inverse of :func:`reduce_laplacian` on zero-row-sum matrices: ``U L~ U^T``."""
    Lr = np.atleast_2d(np.asarray(L_reduced, dtype=float))
    if Lr.shape[0] != Lr.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got {Lr.shape}")
    n = Lr.shape[0]
    L = np.empty((n + 1, n + 1))
    L[1:, 1:] = Lr
    L[0, 1:] = -Lr.sum(axis=0)
    L[1:, 0] = -Lr.sum(axis=1)
    L[0, 0] = Lr.sum()
    return L


@dataclass
class LaplacianReport:
    """Outcome of :func:`validate_laplacian`.

    ``P1``..``P4`` follow the reduced-Laplacian property list (full rank,
    PSD, nonpositive off-diagonals, diagonal dominance); ``null_space`` is
    the zero-row-sum check on the full matrix. ``P5`` is true when the
    off-diagonal support of the reduced matrix covers at most half of its
    ``(M-1)(M-2)`` off-diagonal slots.
    """

    P1: bool
    P2: bool
    P3: bool
    P4: bool
    P5: bool
    null_space: bool
    offdiag_nonzeros: int
    offdiag_slots: int
    violations: list

    @property
    def is_laplacian(self):
        return self.P1 and self.P2 and self.P3 and self.P4 and self.null_space

    def as_dict(self):
        return {
            "P1": self.P1,
            "P2": self.P2,
            "P3": self.P3,
            "P4": self.P4,
            "P5": self.P5,
            "null_space": self.null_space,
            "offdiag_nonzeros": self.offdiag_nonzeros,
            "offdiag_slots": self.offdiag_slots,
            "violations": list(self.violations),
        }


def validate_laplacian(L, tol=1e-9):
    """Check a full M x M matrix against the Laplacian properties.

    Tolerances are relative to ``max(1, ||L||_2)``.
    """
    L = np.asarray(L, dtype=float)
    M = L.shape[0]
    scale = max(1.0, np.linalg.norm(L, 2))
    thr = tol * scale
    violations = []

    rows = L.sum(axis=1)
    null_space = bool(np.all(np.abs(rows) <= thr))
    for i in np.flatnonzero(np.abs(rows) > thr):
        violations.append(f"null_space: row {i + 1} sums to {rows[i]:.3e}")

    off = L - np.diag(np.diag(L))
    bad = np.argwhere(np.triu(off > thr, 1))
    P3 = bad.size == 0
    for i, j in bad:
        violations.append(f"P3: L[{i + 1},{j + 1}] = {L[i, j]:.3e} > 0")

    Lr = L[1:, 1:]
    if M > 1:
        lam = np.linalg.eigvalsh(0.5 * (Lr + Lr.T))
        P1 = bool(lam[0] > thr)
        P2 = bool(lam[0] >= -thr)
        if not P1:
            violations.append(f"P1: reduced Laplacian is singular (lambda_min={lam[0]:.3e})")
        if not P2:
            violations.append(f"P2: reduced Laplacian not PSD (lambda_min={lam[0]:.3e})")
        offr = np.abs(Lr - np.diag(np.diag(Lr))).sum(axis=1)
        dd = np.abs(np.diag(Lr)) - offr
        P4 = bool(np.all(dd >= -thr))
        for i in np.flatnonzero(dd < -thr):
            violations.append(f"P4: reduced row {i + 1} not diagonally dominant ({dd[i]:.3e})")
        nnz = int(np.count_nonzero(np.abs(Lr - np.diag(np.diag(Lr))) > thr))
    else:
        P1 = P2 = P4 = True
        nnz = 0
    slots = (M - 1) * (M - 2)
    P5 = nnz <= slots / 2
    return LaplacianReport(P1, P2, bool(P3), P4, bool(P5), null_space, nnz, slots, violations)


def graph_from_laplacian(L, edge_tol=EDGE_TOL):
    """Read back the weighted edge list of a Laplacian-like matrix."""
    L = np.asarray(L, dtype=float)
    M = L.shape[0]
    i, j = np.nonzero(np.triu(-L, 1) > edge_tol)
    return WeightedGraph(M, tuple((a + 1, b + 1, -L[a, b]) for a, b in zip(i, j)))


def edge_set(L, edge_tol=EDGE_TOL):
    L = np.asarray(L)
    i, j = np.nonzero(np.triu(np.abs(L) > edge_tol, 1))
    return set(zip(i.tolist(), j.tolist()))


def fscore(L_hat, L_true, edge_tol=EDGE_TOL):
    """F-score ``2tp / (2tp + fn + fp)`` of the estimated edge set.

    An edge is present when the off-diagonal magnitude exceeds
    ``edge_tol``. Two empty edge sets score 1.
    """
    L_hat = np.asarray(L_hat)
    L_true = np.asarray(L_true)
    if L_hat.shape != L_true.shape:
        raise ShapeMismatch(f"{L_hat.shape} vs {L_true.shape}")
    est = edge_set(L_hat, edge_tol)
    true = edge_set(L_true, edge_tol)
    tp = len(est & true)
    fp = len(est - true)
    fn = len(true - est)
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fn + fp)


def ring_lattice_edges(M, mean_degree):
    half = mean_degree // 2
    return [(i, (i + j) % M) for i in range(M) for j in range(1, half + 1)]


def watts_strogatz(
    M,
    mean_degree=4,
    rewire_prob=0.1,
    weight_range=(0.5, 1.5),
    target_frobenius=None,
    seed=0,
    max_attempts=100,
):
    """Connected Watts-Strogatz small-world graph with random susceptances.

    Starts from a ring lattice where every bus links to its
    ``mean_degree / 2`` clockwise neighbours, then rewires each lattice
    edge with probability ``rewire_prob`` to a uniformly chosen bus that
    is neither itself nor an existing neighbour. Susceptances are uniform
    on ``weight_range``; when ``target_frobenius`` is set they are scaled
    so that ``||L||_F`` equals it. Disconnected draws are retried with the
    next sub-seed.
    """
    if mean_degree % 2 or mean_degree <= 0 or mean_degree >= M:
        raise ValueError("mean_degree must be even, positive and below M")
    if not 0.0 <= rewire_prob <= 1.0:
        raise ValueError("rewire_prob must lie in [0, 1]")
    lo, hi = weight_range
    for attempt in range(max_attempts):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt,)))
        adj = [set() for _ in range(M)]
        lattice = ring_lattice_edges(M, mean_degree)
        for a, b in lattice:
            adj[a].add(b)
            adj[b].add(a)
        for a, b in lattice:
            if rng.random() >= rewire_prob:
                continue
            choices = [k for k in range(M) if k != a and k not in adj[a]]
            if not choices:
                continue
            c = choices[rng.integers(len(choices))]
            adj[a].discard(b)
            adj[b].discard(a)
            adj[a].add(c)
            adj[c].add(a)
        edges = sorted({(min(a, b), max(a, b)) for a in range(M) for b in adj[a]})
        if not is_connected(M, edges):
            continue
        weights = rng.uniform(lo, hi, size=len(edges))
        g = WeightedGraph(M, tuple((a + 1, b + 1, w) for (a, b), w in zip(edges, weights)))
        if target_frobenius is not None:
            norm = np.linalg.norm(laplacian_from_graph(g).L)
            scale = target_frobenius / norm
            g = WeightedGraph(M, tuple((f, t, b * scale) for f, t, b in g.branches))
        return g
    raise GenerationFailed(f"no connected graph after {max_attempts} attempts")


def load_case(path):
    """Parse a case file into a :class:`WeightedGraph`.

    The format is line oriented::

        # comment
        buses: 14
        branch:
        1 2 0.01938 0.05917
        ...

    Each branch row is ``fbus tbus r x``; the DC susceptance is ``1/x``
    and parallel branches are merged by adding susceptances.
    """
    text = Path(path).read_text()
    return parse_case(text)


def parse_case(text):
    M = None
    in_branch = False
    merged = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key.startswith("buses:"):
            try:
                M = int(line.split(":", 1)[1])
            except ValueError:
                raise ParseError(f"bad bus count {line!r}", lineno) from None
            if M < 1:
                raise ParseError("bus count must be positive", lineno)
            in_branch = False
            continue
        if key.startswith("branch:"):
            in_branch = True
            continue
        if not in_branch:
            raise ParseError(f"unexpected content {line!r}", lineno)
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"expected 'fbus tbus r x', got {line!r}", lineno)
        try:
            f, t = int(parts[0]), int(parts[1])
            float(parts[2])
            x = float(parts[3])
        except ValueError:
            raise ParseError(f"non-numeric field in {line!r}", lineno) from None
        if M is None:
            raise ParseError("'buses:' header must precede branch rows", lineno)
        if not (1 <= f <= M and 1 <= t <= M) or f == t:
            raise InvalidBranch(f"bad bus pair ({f}, {t})", lineno)
        if not x > 0:
            raise InvalidBranch(f"reactance must be positive, got {x}", lineno)
        pair = (min(f, t), max(f, t))
        merged[pair] = merged.get(pair, 0.0) + 1.0 / x
    if M is None:
        raise ParseError("missing 'buses:' header")
    return WeightedGraph(M, tuple((f, t, b) for (f, t), b in sorted(merged.items())))


def ieee14():
    """The IEEE 14-bus test system shipped with the package."""
    ref = resources.files("mlbest") / "cases" / "ieee14.case"
    return parse_case(ref.read_text())


def case_path(name="ieee14"):
    return Path(str(resources.files("mlbest") / "cases" / f"{name}.case"))
