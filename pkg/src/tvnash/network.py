"""Communication graphs, switching schedules and spectral certificates.

Weights follow the receive convention: ``W[i, j] > 0`` means agent ``i``
receives from agent ``j``.  Graphs are validated once, at construction, and
are immutable afterwards.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DimensionError, GraphError

DEFAULT_TOL = 1e-12


def _strongly_connected(W: np.ndarray) -> bool:
    pattern = (W > 0).astype(np.int8)
    np.fill_diagonal(pattern, 0)
    ncomp, _ = connected_components(pattern, directed=True, connection="strong")
    return ncomp == 1


@dataclass(frozen=True, eq=False)
class WeightedDigraph:
    """A validated, strongly connected weighted digraph."""

    weights: np.ndarray
    has_self_loops: bool
    doubly_stochastic: bool
    balanced: bool
    tol: float = DEFAULT_TOL

    @classmethod
    def from_weights(cls, W, tol: float = DEFAULT_TOL) -> "WeightedDigraph":
        W = np.array(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError(f"weight matrix must be square, got shape {W.shape}")
        if W.shape[0] < 2:
            raise GraphError("a communication graph needs at least two agents")
        if np.any(W < 0) or not np.all(np.isfinite(W)):
            raise GraphError("weights must be finite and nonnegative")
        if not _strongly_connected(W):
            raise GraphError("graph is not strongly connected")
        ones = np.ones(W.shape[0])
        rows, cols = W @ ones, W.T @ ones
        ds = bool(np.max(np.abs(rows - 1)) <= tol and np.max(np.abs(cols - 1)) <= tol)
        balanced = bool(np.max(np.abs(rows - cols)) <= tol)
        W.setflags(write=False)
        return cls(W, bool(np.all(np.diag(W) > 0)), ds, balanced, tol)

    @property
    def num_agents(self) -> int:
        return self.weights.shape[0]

    @property
    def flags(self) -> dict:
        return {
            "has_self_loops": self.has_self_loops,
            "doubly_stochastic": self.doubly_stochastic,
            "balanced": self.balanced,
        }

    def in_neighbors(self, i: int) -> list[int]:
        return [j for j in np.flatnonzero(self.weights[i]) if j != i]


# -- constructors -----------------------------------------------------------

def metropolis_weights(adjacency) -> WeightedDigraph:
    """Doubly stochastic Metropolis weights of an undirected graph.

    Off-diagonal weights are ``1 / (max(d_i, d_j) + 1)`` on edges, with
    ``d_i`` the degree of node ``i``; the diagonal absorbs the remainder.
    """
    A = np.asarray(adjacency, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphError(f"adjacency must be square, got shape {A.shape}")
    if not np.array_equal(A, A.T):
        raise GraphError("adjacency must be symmetric")
    if np.any(np.diag(A) != 0):
        raise GraphError("adjacency must have a zero diagonal")
    A = (A != 0).astype(float)
    deg = A.sum(axis=1)
    W = A / (np.maximum.outer(deg, deg) + 1.0)
    np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return WeightedDigraph.from_weights(W)


def complete_graph(N: int) -> WeightedDigraph:
    return metropolis_weights(np.ones((N, N)) - np.eye(N))


def path_graph(N: int) -> WeightedDigraph:
    A = np.zeros((N, N))
    idx = np.arange(N - 1)
    A[idx, idx + 1] = A[idx + 1, idx] = 1
    return metropolis_weights(A)


def directed_ring(N: int, skip: bool = False) -> WeightedDigraph:
    """Unweighted directed ring ``i -> i+1`` (optionally also ``i -> i+2``).

    Node ``i+1`` receives from ``i``, so ``W[i+1, i] = 1``.  Both variants
    are weight balanced; the plain ring is a permutation matrix (hence also
    doubly stochastic), the skip variant has row sums 2.
    """
    W = np.zeros((N, N))
    i = np.arange(N)
    W[(i + 1) % N, i] = 1.0
    if skip:
        W[(i + 2) % N, i] = 1.0
    return WeightedDigraph.from_weights(W)


def random_connected_graph(N: int, p: float, rng: np.random.Generator,
                           max_tries: int = 10_000) -> WeightedDigraph:
    """Erdos-Renyi ``G(N, p)`` sample, resampled until connected, with Metropolis weights."""
    if not 0 < p <= 1:
        raise GraphError(f"edge probability must lie in (0, 1], got {p}")
    for _ in range(max_tries):
        upper = np.triu(rng.random((N, N)) < p, k=1)
        A = (upper | upper.T).astype(float)
        if _strongly_connected(A):
            return metropolis_weights(A)
    raise GraphError(f"no connected G({N}, {p}) sample in {max_tries} tries")


# -- schedules --------------------------------------------------------------

SCHEDULES = ("fixed", "round_robin", "random")


@dataclass(frozen=True, eq=False)
class GraphSequence:
    """A finite family of graphs and a rule mapping iteration ``k`` to a member.

    The structural flags of the sequence hold when they hold for every member.

    The ``random`` schedule draws uniformly with a counter-based generator, so
    the member used at iteration ``k`` depends only on ``(seed, k)``.
    """

    family: tuple
    schedule: str = "fixed"
    seed: int = 0
    fixed_index: int = 0

    def __post_init__(self):
        family = tuple(self.family)
        object.__setattr__(self, "family", family)
        if not family:
            raise GraphError("graph family is empty")
        if self.schedule not in SCHEDULES:
            raise GraphError(f"unknown schedule {self.schedule!r}; expected one of {SCHEDULES}")
        N = family[0].num_agents
        for g in family[1:]:
            if g.num_agents != N:
                raise GraphError("all family members must have the same number of agents")
        if not 0 <= self.fixed_index < len(family):
            raise GraphError("fixed_index out of range")

    @property
    def num_agents(self) -> int:
        return self.family[0].num_agents

    @property
    def doubly_stochastic(self) -> bool:
        return all(g.doubly_stochastic for g in self.family)

    @property
    def balanced(self) -> bool:
        return all(g.balanced for g in self.family)

    def index(self, k: int) -> int:
        m = len(self.family)
        if self.schedule == "fixed":
            return self.fixed_index
        if self.schedule == "round_robin":
            return k % m
        raw = np.random.Philox(key=self.seed, counter=k).random_raw()
        return int(raw % np.uint64(m))

    def indices(self, start: int, count: int) -> np.ndarray:
        """Member indices for iterations ``start, ..., start + count - 1``."""
        m = len(self.family)
        if self.schedule == "fixed":
            return np.full(count, self.fixed_index, dtype=np.intp)
        if self.schedule == "round_robin":
            return (np.arange(start, start + count) % m).astype(np.intp)
        # one Philox block per counter value; the first word of each block
        raw = np.random.Philox(key=self.seed, counter=start).random_raw(4 * count)[::4]
        return (raw % np.uint64(m)).astype(np.intp)

    def graph(self, k: int) -> WeightedDigraph:
        return self.family[self.index(k)]

    def weight_array(self) -> np.ndarray:
        return np.stack([g.weights for g in self.family])


# -- spectral quantities ----------------------------------------------------

@dataclass(frozen=True)
class SpectralCert:
    """Extremal spectral quantities of a graph family (``None`` when undefined)."""

    sigma_bar: float | None
    sigma_tilde: float | None
    lambda_bar: float | None
    members: list = field(default_factory=list)


def second_singular_value(g: WeightedDigraph) -> float:
    """Second largest singular value of a doubly stochastic weight matrix."""
    if not g.doubly_stochastic:
        raise GraphError("second singular value bound needs a doubly stochastic graph")
    s = np.linalg.svd(g.weights, compute_uv=False)
    return float(s[1])


@dataclass(frozen=True)
class LaplacianQuantities:
    L: np.ndarray
    L_sym: np.ndarray
    sigma_max_L: float
    lambda2_Lsym: float


def laplacian(W: np.ndarray) -> np.ndarray:
    return np.diag(W.sum(axis=1)) - W


def laplacian_quantities(g: WeightedDigraph) -> LaplacianQuantities:
    """In-degree Laplacian, its symmetric part, ``sigma_max(L)`` and ``lambda_2(L_sym)``."""
    if not g.balanced:
        raise GraphError("Laplacian certificate needs a weight-balanced graph")
    L = laplacian(g.weights)
    L_sym = 0.5 * (L + L.T)
    sigma = float(np.linalg.norm(L, 2))
    lam2 = float(np.linalg.eigvalsh(L_sym)[1])
    return LaplacianQuantities(L, L_sym, sigma, lam2)


def spectral_certificate(seq: GraphSequence | Sequence[WeightedDigraph]) -> SpectralCert:
    family = seq.family if isinstance(seq, GraphSequence) else tuple(seq)
    if not family:
        raise GraphError("graph family is empty")
    sigmas, tildes, lambdas, members = [], [], [], []
    for g in family:
        row = {}
        if g.doubly_stochastic:
            row["sigma"] = second_singular_value(g)
            sigmas.append(row["sigma"])
        if g.balanced:
            lq = laplacian_quantities(g)
            row["sigma_max_L"], row["lambda2"] = lq.sigma_max_L, lq.lambda2_Lsym
            tildes.append(lq.sigma_max_L)
            lambdas.append(lq.lambda2_Lsym)
        members.append(row)
    return SpectralCert(
        sigma_bar=max(sigmas) if len(sigmas) == len(family) else None,
        sigma_tilde=max(tildes) if len(tildes) == len(family) else None,
        lambda_bar=min(lambdas) if len(lambdas) == len(family) else None,
        members=members,
    )


# -- stack primitives -------------------------------------------------------

def _stack(xb, N: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(xb, dtype=float)
    if arr.ndim == 1:
        if arr.size % N:
            raise DimensionError(f"stack length {arr.size} is not a multiple of N={N}")
        return arr.reshape(N, -1), True
    if arr.ndim != 2 or arr.shape[0] != N:
        raise DimensionError(f"stack has shape {arr.shape}, expected ({N}, n)")
    return arr, False


def mix(g: WeightedDigraph | np.ndarray, xb) -> np.ndarray:
    """Apply ``W (x) I_n`` blockwise: row ``i`` becomes ``sum_j w_ij x_j``."""
    W = g.weights if isinstance(g, WeightedDigraph) else np.asarray(g, float)
    X, flat = _stack(xb, W.shape[0])
    out = W @ X
    return out.reshape(-1) if flat else out


def consensus_split(xb, num_agents: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal split of a stack into its consensual part and disagreement."""
    arr = np.asarray(xb, dtype=float)
    if arr.ndim == 1:
        if num_agents is None:
            raise DimensionError("num_agents is required for flat stacks")
        X, flat = _stack(arr, num_agents)
    else:
        X, flat = arr, False
    par = np.broadcast_to(X.mean(axis=0), X.shape).copy()
    perp = X - par
    if flat:
        return par.reshape(-1), perp.reshape(-1)
    return par, perp


# -- serialization ----------------------------------------------------------

def sequence_to_dict(seq: GraphSequence) -> dict:
    return {
        "n_agents": seq.num_agents,
        "members": [{"weights": g.weights.tolist(), "flags": g.flags} for g in seq.family],
        "schedule": {"kind": seq.schedule, "seed": seq.seed, "fixed_index": seq.fixed_index},
    }


def sequence_from_dict(doc: dict) -> GraphSequence:
    family = [WeightedDigraph.from_weights(m["weights"]) for m in doc["members"]]
    for g, m in zip(family, doc["members"]):
        for name, value in m.get("flags", {}).items():
            if value and not getattr(g, name):
                raise GraphError(f"member declares {name} but fails validation")
    if family[0].num_agents != doc.get("n_agents", family[0].num_agents):
        raise GraphError("n_agents does not match member size")
    sched = doc.get("schedule", {})
    return GraphSequence(tuple(family), sched.get("kind", "fixed"), int(sched.get("seed", 0)),
                         int(sched.get("fixed_index", 0)))


def save_sequence(seq: GraphSequence, path) -> None:
    Path(path).write_text(json.dumps(sequence_to_dict(seq)))


def load_sequence(path) -> GraphSequence:
    return sequence_from_dict(json.loads(Path(path).read_text()))


def parse_graph_spec(spec: str, N: int, family_size: int = 1, seed: int = 0,
                     schedule: str | None = None) -> GraphSequence:
    """Build a sequence from a CLI graph spec ``ring|ring-skip|complete|er:<p>|file:<path>``.

    ``ring`` yields the two-member family {directed ring, ring with skip
    links}; ``er:<p>`` draws ``family_size`` connected Erdos-Renyi graphs.
    """
    if spec.startswith("file:"):
        return load_sequence(spec[5:])
    if spec == "ring":
        fam = (directed_ring(N), directed_ring(N, skip=True))
        return GraphSequence(fam, schedule or "random", seed)
    if spec == "ring-skip":
        return GraphSequence((directed_ring(N, skip=True),), "fixed", seed)
    if spec == "complete":
        return GraphSequence((complete_graph(N),), "fixed", seed)
    if spec.startswith("er:"):
        p = float(spec[3:])
        rng = np.random.default_rng([seed, 0x6772])
        fam = tuple(random_connected_graph(N, p, rng) for _ in range(family_size))
        return GraphSequence(fam, schedule or ("fixed" if family_size == 1 else "random"), seed)
    raise GraphError(f"unrecognised graph spec {spec!r}")
