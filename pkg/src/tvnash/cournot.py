"""Nash-Cournot market games.

``N`` firms ship a commodity to ``m`` markets.  Firm ``i`` serves ``n_i``
markets, chosen by the 0/1 matrix ``A_i`` (``m x n_i``, one 1 per column),
and minimizes

    J_i(x) = x_i' Q_i x_i + q_i' x_i - p(A x)' A_i x_i,
    p(y)_k = Pbar_k - chi_k y_k,

subject to ``0 <= x_i <= X_i``.  The pseudo-gradient is affine:

    grad_i J_i = 2 Q_i x_i + q_i - A_i' Pbar + A_i' diag(chi) (A x + A_i x_i).

Random draws use independent streams keyed by (seed, field, index), so the
values for one agent do not depend on how many other agents are drawn.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, MonotonicityError
from .game import GameConstants, GameInstance, estimate_constants

_FIELDS = {"Q": 1, "q": 2, "P_bar": 3, "chi": 4, "X": 5, "structure": 6, "counts": 7}


@dataclass(frozen=True)
class CournotRanges:
    """Uniform sampling ranges of the market parameters."""

    Q: tuple = (14.0, 16.0)
    q: tuple = (1.0, 2.0)
    P_bar: tuple = (10.0, 20.0)
    chi: tuple = (1.0, 3.0)
    X: tuple = (5.0, 10.0)

    def __post_init__(self):
        for name in ("Q", "q", "P_bar", "chi", "X"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"range {name} must satisfy 0 < lo <= hi, got {(lo, hi)}")


@dataclass(frozen=True)
class MarketStructure:
    num_markets: int
    participation: tuple  # A_i matrices

    def __post_init__(self):
        m = self.num_markets
        for i, A in enumerate(self.participation):
            A = np.asarray(A)
            if A.ndim != 2 or A.shape[0] != m:
                raise DimensionError(f"A_{i} must have {m} rows", agent=i)
            if A.shape[1] > m:
                raise DimensionError(f"firm {i} serves {A.shape[1]} > {m} markets", agent=i)
            if not (np.all((A == 0) | (A == 1)) and np.all(A.sum(axis=0) == 1)):
                raise DimensionError(f"A_{i} must have exactly one 1 per column", agent=i)
            if np.any(A.sum(axis=1) > 1):
                raise DimensionError(f"firm {i} lists a market twice", agent=i)

    @classmethod
    def from_markets(cls, m: int, markets: list) -> "MarketStructure":
        """Structure from per-firm lists of served market indices."""
        mats = []
        for served in markets:
            A = np.zeros((m, len(served)))
            A[list(served), np.arange(len(served))] = 1.0
            mats.append(A)
        return cls(m, tuple(mats))

    @property
    def dims(self) -> tuple:
        return tuple(np.asarray(A).shape[1] for A in self.participation)

    @property
    def combined(self) -> np.ndarray:
        return np.hstack([np.asarray(A, float) for A in self.participation])


@dataclass(frozen=True)
class CournotParams:
    Q: tuple        # diagonal entries per firm
    q: tuple
    P_bar: np.ndarray
    chi: np.ndarray
    X: tuple        # capacity per firm
    ranges: CournotRanges = field(default_factory=CournotRanges)
    seed: int | None = None


@dataclass(frozen=True, eq=False)
class CournotInstance:
    game: GameInstance
    structure: MarketStructure
    params: CournotParams

    def price(self, x: np.ndarray) -> np.ndarray:
        return self.params.P_bar - self.params.chi * (self.structure.combined @ x)

    def analytic_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        """Partial gradient of firm ``i``'s cost, from the market formulas."""
        xi = x[self.game.slices[i]]
        Ai = np.asarray(self.structure.participation[i], float)
        chi = self.params.chi
        return (2 * self.params.Q[i] * xi + self.params.q[i] - Ai.T @ self.price(x)
                + Ai.T @ (chi * (Ai @ xi)))

    def cost(self, i: int, x: np.ndarray) -> float:
        """Cost of firm ``i`` at the joint action ``x``."""
        sl = self.game.slices[i]
        xi = x[sl]
        Ai = np.asarray(self.structure.participation[i], float)
        p = self.price(x)
        return float(xi @ (self.params.Q[i] * xi) + self.params.q[i] @ xi - p @ (Ai @ xi))


def _stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), _FIELDS[name], int(index)])


def random_structure(N: int, m: int, n_total: int, seed: int) -> MarketStructure:
    """Each firm serves ``n_i`` distinct random markets with ``sum n_i = n_total``."""
    if not N <= n_total <= N * m:
        raise DimensionError(f"n_total={n_total} must lie in [N, N*m] = [{N}, {N * m}]")
    counts = np.ones(N, dtype=int)
    rng = _stream(seed, "counts")
    for _ in range(n_total - N):
        open_firms = np.flatnonzero(counts < m)
        counts[rng.choice(open_firms)] += 1
    markets = [
        sorted(_stream(seed, "structure", i).choice(m, size=counts[i], replace=False).tolist())
        for i in range(N)
    ]
    return MarketStructure.from_markets(m, markets)


def cournot_game(structure: MarketStructure, params: CournotParams,
                 meta: dict | None = None) -> CournotInstance:
    """Assemble the affine game of a market structure and parameter draw."""
    A_list = [np.asarray(A, float) for A in structure.participation]
    A = structure.combined
    dims = structure.dims
    n = sum(dims)
    chi = np.asarray(params.chi, float)
    P_bar = np.asarray(params.P_bar, float)
    gamma = A.T @ (chi[:, None] * A)
    c = np.empty(n)
    offsets = np.concatenate([[0], np.cumsum(dims)])
    for i, Ai in enumerate(A_list):
        sl = slice(offsets[i], offsets[i + 1])
        gamma[sl, sl] += 2 * np.diag(params.Q[i]) + Ai.T @ (chi[:, None] * Ai)
        c[sl] = params.q[i] - Ai.T @ P_bar
    boxes = [(np.zeros(d), np.asarray(params.X[i], float)) for i, d in enumerate(dims)]
    game = GameInstance(dims, boxes=boxes, affine=(gamma, c),
                        meta={"kind": "cournot", "num_markets": structure.num_markets,
                              "seed": params.seed, **(meta or {})})
    return CournotInstance(game, structure, params)


def draw_params(structure: MarketStructure, ranges: CournotRanges, seed: int) -> CournotParams:
    dims = structure.dims
    m = structure.num_markets
    Q = tuple(_stream(seed, "Q", i).uniform(*ranges.Q, size=d) for i, d in enumerate(dims))
    q = tuple(_stream(seed, "q", i).uniform(*ranges.q, size=d) for i, d in enumerate(dims))
    X = tuple(_stream(seed, "X", i).uniform(*ranges.X, size=d) for i, d in enumerate(dims))
    P_bar = np.array([_stream(seed, "P_bar", k).uniform(*ranges.P_bar) for k in range(m)])
    chi = np.array([_stream(seed, "chi", k).uniform(*ranges.chi) for k in range(m)])
    return CournotParams(Q, q, P_bar, chi, X, ranges, seed)


def generate_instance(N: int = 20, m: int = 7, structure: MarketStructure | None = None,
                      n_total: int | None = None, ranges: CournotRanges | None = None,
                      seed: int = 0) -> CournotInstance:
    """Random Nash-Cournot instance.

    Without an explicit ``structure`` a random one with ``n_total`` decision
    variables is drawn (default ``round(1.6 N)``, i.e. 32 for ``N = 20``).
    The random structure is a stand-in: it is not a specific published
    market topology.
    """
    if N < 2:
        raise DimensionError("a game needs at least two firms")
    ranges = ranges or CournotRanges()
    if structure is None:
        n_total = int(round(1.6 * N)) if n_total is None else int(n_total)
        structure = random_structure(N, m, n_total, seed)
    elif len(structure.participation) != N or structure.num_markets != m:
        raise DimensionError("structure does not match N and m")
    params = draw_params(structure, ranges, seed)
    return cournot_game(structure, params)


def verify_monotonicity(instance: CournotInstance | GameInstance) -> GameConstants:
    """Exact constants of the instance; raises if it is not strongly monotone."""
    game = instance.game if isinstance(instance, CournotInstance) else instance
    if not game.is_affine:
        raise ValueError("verify_monotonicity needs an affine game")
    try:
        return estimate_constants(game)
    except MonotonicityError as exc:
        raise MonotonicityError(f"generated instance is not strongly monotone: {exc}") from exc


def summary(instance: CournotInstance) -> dict:
    k = verify_monotonicity(instance)
    g = instance.game
    return {
        "N": g.num_agents, "m": instance.structure.num_markets, "n": g.n,
        "mu": k.mu, "ell0": k.ell0, "ell": k.ell,
        "condition_ell0_over_mu": k.ell0 / k.mu, "condition_ell_over_mu": k.ell / k.mu,
    }
