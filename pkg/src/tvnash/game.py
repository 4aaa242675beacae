"""Games, pseudo-gradients, projections and regularity constants.

A game with ``N`` agents is described by the agents' action dimensions
``n_1, ..., n_N`` (``n = sum n_i``), the partial gradients of their costs and
their box-shaped feasible sets.  Quadratic games additionally carry the affine
form ``F(x) = Gamma @ x + c`` of their pseudo-gradient.

Estimate stacks hold one copy of the full joint action per agent.  They are
accepted either flat (length ``N * n``, agent blocks concatenated) or as an
``(N, n)`` array whose row ``i`` is agent ``i``'s copy; functions return the
same layout they were given.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, MonotonicityError

GradientFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GameConstants:
    """Strong monotonicity modulus and Lipschitz constants of a game.

    ``mu`` bounds the pseudo-gradient ``F`` from below in the monotonicity
    sense, ``ell0`` is the Lipschitz constant of ``F`` and ``ell`` the one of
    the extended pseudo-gradient.  ``exact`` is False when the values were
    estimated from samples; ``samples`` records how many pairs were drawn.
    """

    mu: float
    ell0: float
    ell: float
    exact: bool
    samples: int = 0


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class GameInstance:
    """An N-agent game with box constraints.

    Parameters
    ----------
    dims : sequence of int
        Action dimension of every agent.
    cost_gradients : sequence of callables, optional
        ``cost_gradients[i](x)`` returns the partial gradient of agent ``i``'s
        cost with respect to its own action, evaluated at the joint action
        ``x`` (length ``n``).  May be omitted when ``affine`` is given.
    boxes : sequence of (lo, hi) pairs, optional
        Per-agent bounds; entries may be infinite.  ``None`` means unbounded.
    affine : (Gamma, c), optional
        Affine form of the pseudo-gradient.
    meta : dict, optional
        Free-form metadata (seed, generator parameters, ...).
    """

    def __init__(
        self,
        dims: Sequence[int],
        cost_gradients: Sequence[GradientFn] | None = None,
        boxes: Sequence[tuple] | None = None,
        affine: tuple | None = None,
        meta: dict | None = None,
    ):
        dims = tuple(int(d) for d in dims)
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise DimensionError(f"dims must be positive integers, got {dims}")
        self.dims = dims
        self.num_agents = len(dims)
        self.n = int(sum(dims))
        offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)
        self.offsets = offsets
        self.slices = tuple(slice(offsets[i], offsets[i + 1]) for i in range(self.num_agents))
        owner = np.repeat(np.arange(self.num_agents), dims)
        owner.setflags(write=False)
        self.owner = owner
        self.meta = dict(meta or {})

        lo = np.full(self.n, -np.inf)
        hi = np.full(self.n, np.inf)
        if boxes is not None:
            if len(boxes) != self.num_agents:
                raise DimensionError(f"expected {self.num_agents} boxes, got {len(boxes)}")
            for i, (blo, bhi) in enumerate(boxes):
                sl = self.slices[i]
                blo = np.broadcast_to(np.asarray(-np.inf if blo is None else blo, float), (dims[i],))
                bhi = np.broadcast_to(np.asarray(np.inf if bhi is None else bhi, float), (dims[i],))
                if np.any(blo > bhi):
                    raise DimensionError(f"empty box for agent {i}: lo > hi", agent=i)
                lo[sl] = blo
                hi[sl] = bhi
        self.lo = _frozen(lo)
        self.hi = _frozen(hi)

        if affine is not None:
            gamma, c = affine
            gamma = _frozen(gamma)
            c = _frozen(c)
            if gamma.shape != (self.n, self.n) or c.shape != (self.n,):
                raise DimensionError(
                    f"affine form must be ({self.n},{self.n}) and ({self.n},), "
                    f"got {gamma.shape} and {c.shape}"
                )
            self.gamma, self.c = gamma, c
        else:
            self.gamma = self.c = None

        if cost_gradients is None:
            if affine is None:
                raise ValueError("either cost_gradients or affine must be given")
            self._grads = None
        else:
            if len(cost_gradients) != self.num_agents:
                raise DimensionError(
                    f"expected {self.num_agents} gradient functions, got {len(cost_gradients)}"
                )
            self._grads = tuple(cost_gradients)
            if affine is not None:
                self._check_affine_consistency()

    @property
    def is_affine(self) -> bool:
        return self.gamma is not None

    @property
    def is_unbounded(self) -> bool:
        return bool(np.all(np.isneginf(self.lo)) and np.all(np.isposinf(self.hi)))

    def boxes(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(self.lo[sl].copy(), self.hi[sl].copy()) for sl in self.slices]

    def agent_gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        """Partial gradient of agent ``i``'s cost at the joint action ``x``."""
        sl = self.slices[i]
        if self._grads is None:
            return self.gamma[sl] @ x + self.c[sl]
        g = np.asarray(self._grads[i](x), dtype=float).reshape(-1)
        if g.shape != (self.dims[i],):
            raise DimensionError(
                f"gradient of agent {i} has length {g.size}, expected {self.dims[i]}", agent=i
            )
        return g

    def _check_affine_consistency(self, points: int = 3) -> None:
        rng = np.random.default_rng(0)
        for _ in range(points):
            x = rng.standard_normal(self.n)
            ref = self.gamma @ x + self.c
            for i, sl in enumerate(self.slices):
                g = self.agent_gradient(i, x)
                scale = max(1.0, float(np.max(np.abs(ref[sl]))))
                if np.max(np.abs(g - ref[sl])) > 1e-10 * scale:
                    raise ValueError(f"cost gradient of agent {i} disagrees with the affine form")

    def without_boxes(self) -> "GameInstance":
        """Same costs with all feasible sets replaced by the whole space."""
        return GameInstance(
            self.dims,
            cost_gradients=self._grads,
            affine=(self.gamma, self.c) if self.is_affine else None,
            meta={**self.meta, "unboxed": True},
        )

    def __repr__(self) -> str:
        kind = "affine" if self.is_affine else "generic"
        return f"GameInstance(N={self.num_agents}, n={self.n}, {kind})"


# -- stack helpers ----------------------------------------------------------

def as_stack(game: GameInstance, xb) -> tuple[np.ndarray, bool]:
    """Return ``xb`` as an ``(N, n)`` array and whether it was given flat."""
    arr = np.asarray(xb, dtype=float)
    N, n = game.num_agents, game.n
    if arr.ndim == 1:
        if arr.size != N * n:
            raise DimensionError(f"estimate stack has length {arr.size}, expected {N * n}")
        return arr.reshape(N, n), True
    if arr.shape != (N, n):
        raise DimensionError(f"estimate stack has shape {arr.shape}, expected {(N, n)}")
    return arr, False


def _restore(arr: np.ndarray, flat: bool) -> np.ndarray:
    return arr.reshape(-1) if flat else arr


def _check_vector(game: GameInstance, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (game.n,):
        raise DimensionError(f"joint action has shape {x.shape}, expected ({game.n},)")
    return x


def consensual_stack(game: GameInstance, x) -> np.ndarray:
    """``1_N (x) x`` as an ``(N, n)`` array."""
    x = _check_vector(game, x)
    return np.tile(x, (game.num_agents, 1))


# -- operators --------------------------------------------------------------

def pseudo_gradient(game: GameInstance, x) -> np.ndarray:
    """Stack of every agent's partial gradient at the joint action ``x``."""
    x = _check_vector(game, x)
    if game._grads is None:
        return game.gamma @ x + game.c
    return np.concatenate([game.agent_gradient(i, x) for i in range(game.num_agents)])


def extended_pseudo_gradient(game: GameInstance, xb) -> np.ndarray:
    """Each agent's partial gradient evaluated on its own estimate row."""
    X, _ = as_stack(game, xb)
    if game._grads is None:
        # row j of Gamma acts on the estimate held by the owner of coordinate j
        return np.einsum("jk,jk->j", game.gamma, X[game.owner]) + game.c
    return np.concatenate([game.agent_gradient(i, X[i]) for i in range(game.num_agents)])


def extended_jacobian(game: GameInstance) -> np.ndarray:
    """Jacobian (``n x Nn``) of the extended pseudo-gradient of an affine game."""
    if not game.is_affine:
        raise ValueError("extended Jacobian requires an affine game")
    N, n = game.num_agents, game.n
    J = np.zeros((n, N * n))
    for i, sl in enumerate(game.slices):
        J[sl, i * n:(i + 1) * n] = game.gamma[sl]
    return J


def project_feasible(game: GameInstance, x) -> np.ndarray:
    """Clamp a joint action into the product of boxes."""
    x = _check_vector(game, x)
    return np.clip(x, game.lo, game.hi)


def project_extended(game: GameInstance, xb) -> np.ndarray:
    """Euclidean projection of a stack onto the set whose own-action part is feasible.

    Only the own-action entries are constrained, so only they are clamped.
    """
    X, flat = as_stack(game, xb)
    out = X.copy()
    rows, cols = game.owner, np.arange(game.n)
    out[rows, cols] = np.clip(X[rows, cols], game.lo, game.hi)
    return _restore(out, flat)


def select_own(game: GameInstance, xb) -> np.ndarray:
    """Concatenate the own-action entries of every agent's estimate row."""
    X, _ = as_stack(game, xb)
    return X[game.owner, np.arange(game.n)].copy()


# -- constants --------------------------------------------------------------

def _sample_points(game: GameInstance, rng: np.random.Generator, size: int) -> np.ndarray:
    lo = np.where(np.isfinite(game.lo), game.lo, np.minimum(game.hi, 0.0) - 1.0)
    hi = np.where(np.isfinite(game.hi), game.hi, np.maximum(game.lo, 0.0) + 1.0)
    lo = np.where(np.isfinite(lo), lo, -1.0)
    hi = np.where(np.isfinite(hi), hi, 1.0)
    return rng.uniform(lo, hi, size=(size, game.n))


def estimate_constants(game: GameInstance, sample_budget: int = 2000, seed: int = 0) -> GameConstants:
    """Compute (affine games) or estimate (generic games) ``mu``, ``ell0``, ``ell``.

    For affine games ``mu`` is the smallest eigenvalue of the symmetric part of
    ``Gamma``, ``ell0`` its spectral norm and ``ell`` the spectral norm of the
    extended Jacobian.  Otherwise the constants are sampled from random pairs
    drawn in the feasible boxes: ``mu`` is then an upper estimate and the
    Lipschitz constants lower estimates, reported with ``exact=False``.

    Raises
    ------
    MonotonicityError
        If the (computed or sampled) modulus is not positive.
    """
    if sample_budget < 1:
        raise ValueError("sample_budget must be >= 1")
    if game.is_affine:
        G = game.gamma
        mu = float(np.linalg.eigvalsh(0.5 * (G + G.T))[0])
        ell0 = float(np.linalg.norm(G, 2))
        # the extended Jacobian is block diagonal with the agents' row blocks
        ell = max(float(np.linalg.norm(G[sl], 2)) for sl in game.slices)
        if mu <= 0:
            raise MonotonicityError(f"pseudo-gradient is not strongly monotone: mu = {mu:.3e}")
        return GameConstants(mu=mu, ell0=ell0, ell=ell, exact=True)

    rng = np.random.default_rng(seed)
    xs = _sample_points(game, rng, sample_budget)
    ys = _sample_points(game, rng, sample_budget)
    mu, ell0 = np.inf, 0.0
    for x, y in zip(xs, ys):
        d = x - y
        dd = float(d @ d)
        if dd == 0.0:
            continue
        dF = pseudo_gradient(game, x) - pseudo_gradient(game, y)
        mu = min(mu, float(d @ dF) / dd)
        ell0 = max(ell0, float(np.linalg.norm(dF)) / np.sqrt(dd))
    N = game.num_agents
    ell = 0.0
    for _ in range(sample_budget):
        Xa = _sample_points(game, rng, N)
        Xb = _sample_points(game, rng, N)
        d = float(np.linalg.norm(Xa - Xb))
        if d == 0.0:
            continue
        dF = extended_pseudo_gradient(game, Xa) - extended_pseudo_gradient(game, Xb)
        ell = max(ell, float(np.linalg.norm(dF)) / d)
    if not mu > 0:
        raise MonotonicityError(f"sampled monotonicity modulus is not positive: mu = {mu:.3e}")
    ell = max(ell, mu)
    ell0 = max(ell0, ell)
    return GameConstants(mu=float(mu), ell0=float(ell0), ell=float(ell), exact=False,
                         samples=sample_budget)


# -- serialization ----------------------------------------------------------

def _bound_list(a: np.ndarray) -> list:
    return [None if not np.isfinite(v) else float(v) for v in a]


def _bound_array(values, default: float) -> np.ndarray:
    return np.array([default if v is None else float(v) for v in values], dtype=float)


def game_to_dict(game: GameInstance) -> dict:
    """JSON-ready document of an affine game (unbounded entries become null)."""
    if not game.is_affine:
        raise ValueError("only affine games can be serialized")
    return {
        "dims": list(game.dims),
        "boxes": [{"lo": _bound_list(lo), "hi": _bound_list(hi)} for lo, hi in game.boxes()],
        "affine": {"gamma": game.gamma.tolist(), "c": game.c.tolist()},
        "meta": {k: v for k, v in game.meta.items() if _jsonable(v)},
    }


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
    except TypeError:
        return False
    return True


def game_from_dict(doc: dict) -> GameInstance:
    boxes = [
        (_bound_array(b["lo"], -np.inf), _bound_array(b["hi"], np.inf)) for b in doc["boxes"]
    ]
    aff = doc["affine"]
    return GameInstance(
        doc["dims"],
        boxes=boxes,
        affine=(np.array(aff["gamma"], float), np.array(aff["c"], float)),
        meta=doc.get("meta", {}),
    )


def save_game(game: GameInstance, path) -> None:
    Path(path).write_text(json.dumps(game_to_dict(game), indent=1))


def load_game(path) -> GameInstance:
    """Read a game file; the ``{"game": ..., "summary": ...}`` wrapper is accepted."""
    doc = json.loads(Path(path).read_text())
    if "game" in doc and "dims" not in doc:
        doc = doc["game"]
    return game_from_dict(doc)


def random_affine_game(dims: Sequence[int], seed: int = 0, monotone_margin: float = 0.5,
                       skew: float = 1.0, box: float | None = 2.0) -> GameInstance:
    """Random strongly monotone quadratic game.

    ``Gamma`` is a symmetric positive definite matrix whose smallest
    eigenvalue is at least ``monotone_margin`` plus a random skew-symmetric
    part of scale ``skew``; boxes are ``[-box, box]`` shifted at random, or
    absent when ``box`` is None.
    """
    rng = np.random.default_rng(seed)
    n = int(sum(dims))
    B = rng.standard_normal((n, n))
    S = B @ B.T / n + monotone_margin * np.eye(n)
    K = rng.standard_normal((n, n))
    gamma = S + skew * 0.5 * (K - K.T)
    c = rng.standard_normal(n) * 2.0
    boxes = None
    if box is not None:
        shift = rng.uniform(-0.5 * box, 0.5 * box, size=n)
        offs = np.concatenate([[0], np.cumsum(dims)])
        boxes = [(shift[offs[i]:offs[i + 1]] - box, shift[offs[i]:offs[i + 1]] + box)
                 for i in range(len(dims))]
    return GameInstance(dims, boxes=boxes, affine=(gamma, c), meta={"seed": seed})
