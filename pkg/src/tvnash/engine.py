"""Distributed equilibrium seeking iterations, equilibrium oracle and audits.

Three stack iterations are provided:

``alg1``
    mix the estimates with a doubly stochastic matrix, then take a projected
    gradient step on the own action using the mixed estimates;
``alg2``
    forward-backward step on ``gamma R^T F(x) + (L_k (x) I) x`` for weight
    balanced digraphs, projecting only the own actions;
``unconstrained``
    ``(W (x) I) x - alpha R^T F(x)``, the gradient taken at the unmixed stack.

Affine games run through the compiled kernels when available
(:mod:`tvnash.kernels`); generic games use the numpy steppers below.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import CertificateError, DimensionError, GraphError, OracleError
from .game import (
    GameConstants,
    GameInstance,
    as_stack,
    estimate_constants,
    extended_pseudo_gradient,
    project_extended,
    project_feasible,
    pseudo_gradient,
)
from .network import GraphSequence, WeightedDigraph, laplacian
from .tuning import Alg1Certificate, Alg2Certificate

ALGORITHMS = ("alg1", "alg2", "unconstrained")
DIVERGENCE_LIMIT = 1e12
AUDIT_RTOL = 1e-9

CONVERGED, MAX_ITERS, DIVERGED = "Converged", "MaxIters", "Diverged"
_STATUS = {kernels.CONVERGED: CONVERGED, kernels.MAX_ITERS: MAX_ITERS, kernels.DIVERGED: DIVERGED}
_KIND = {"alg1": kernels.ALG1, "alg2": kernels.ALG2, "unconstrained": kernels.UNCONSTRAINED}


def _weights(g) -> np.ndarray:
    return g.weights if isinstance(g, WeightedDigraph) else np.asarray(g, float)


def _own_index(game: GameInstance):
    return game.owner, np.arange(game.n)


# -- steppers ---------------------------------------------------------------

def step_alg1(game: GameInstance, graph: WeightedDigraph, xb, alpha: float) -> np.ndarray:
    """One round of mixing followed by projected gradient steps on the own actions."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if isinstance(graph, WeightedDigraph) and not graph.doubly_stochastic:
        raise GraphError("this iteration needs a doubly stochastic graph")
    X, flat = as_stack(game, xb)
    W = _weights(graph)
    if W.shape != (game.num_agents,) * 2:
        raise DimensionError(f"graph has {W.shape[0]} nodes, game has {game.num_agents} agents")
    Xh = W @ X
    g = extended_pseudo_gradient(game, Xh)
    rows, cols = _own_index(game)
    out = Xh.copy()
    out[rows, cols] = np.clip(Xh[rows, cols] - alpha * g, game.lo, game.hi)
    return out.reshape(-1) if flat else out


def step_alg2(game: GameInstance, graph: WeightedDigraph, xb, gamma: float, tau: float) -> np.ndarray:
    """Forward-backward step with the Laplacian of a weight-balanced digraph.

    Own actions: ``proj(x_ii - tau (gamma grad_i J_i(x_i) + (Lx)_ii))``;
    estimates: ``x_ij - tau (Lx)_ij`` without projection.
    """
    if gamma <= 0 or tau <= 0:
        raise ValueError("gamma and tau must be positive")
    if isinstance(graph, WeightedDigraph) and not graph.balanced:
        raise GraphError("this iteration needs a weight-balanced graph")
    X, flat = as_stack(game, xb)
    W = _weights(graph)
    if W.shape != (game.num_agents,) * 2:
        raise DimensionError(f"graph has {W.shape[0]} nodes, game has {game.num_agents} agents")
    LX = laplacian(W) @ X
    g = extended_pseudo_gradient(game, X)
    rows, cols = _own_index(game)
    out = X - tau * LX
    out[rows, cols] = np.clip(X[rows, cols] - tau * (gamma * g + LX[rows, cols]), game.lo, game.hi)
    return out.reshape(-1) if flat else out


def step_unconstrained(game: GameInstance, graph: WeightedDigraph, xb, alpha: float) -> np.ndarray:
    """Gradient play without projections, gradient evaluated before mixing."""
    if not game.is_unbounded:
        raise ValueError("the unconstrained iteration requires unbounded feasible sets")
    if isinstance(graph, WeightedDigraph) and not graph.doubly_stochastic:
        raise GraphError("this iteration needs a doubly stochastic graph")
    X, flat = as_stack(game, xb)
    W = _weights(graph)
    g = extended_pseudo_gradient(game, X)
    rows, cols = _own_index(game)
    out = W @ X
    out[rows, cols] -= alpha * g
    return out.reshape(-1) if flat else out


# -- equilibrium oracle -----------------------------------------------------

@dataclass(frozen=True)
class NashEquilibrium:
    x: np.ndarray
    residual: float
    iterations: int
    step: float

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.x, dtype=dtype)


def fixed_point_residual(game: GameInstance, x, step: float) -> float:
    """``|| x - proj(x - step F(x)) ||``, zero exactly at the equilibrium."""
    x = np.asarray(x, float)
    return float(np.linalg.norm(x - project_feasible(game, x - step * pseudo_gradient(game, x))))


def _polish_affine(game: GameInstance, x: np.ndarray, step: float) -> np.ndarray:
    """Solve the linear system on the coordinates that are not at a bound."""
    scale = 1e-9 * (1 + np.abs(x))
    at_lo = np.abs(x - game.lo) <= scale
    at_hi = np.abs(x - game.hi) <= scale
    free = ~(at_lo | at_hi)
    if not free.any():
        return x
    cand = x.copy()
    cand[at_lo] = game.lo[at_lo]
    cand[at_hi] = game.hi[at_hi]
    G, c = game.gamma, game.c
    rhs = -c[free] - G[np.ix_(free, ~free)] @ cand[~free]
    try:
        cand[free] = np.linalg.solve(G[np.ix_(free, free)], rhs)
    except np.linalg.LinAlgError:
        return x
    if np.any(cand < game.lo) or np.any(cand > game.hi):
        return x
    if fixed_point_residual(game, cand, step) <= fixed_point_residual(game, x, step):
        return cand
    return x


def centralized_ne(game: GameInstance, tol: float = 1e-12, max_iters: int = 1_000_000,
                   constants: GameConstants | None = None, polish: bool = True) -> NashEquilibrium:
    """Unique Nash equilibrium by centralized projected gradient iteration.

    Uses the step ``mu / ell0**2`` (a contraction for strongly monotone,
    Lipschitz pseudo-gradients) from the box midpoint (0 where unbounded).
    For affine games the result is refined by solving the linear system on
    the inactive coordinates.

    Raises
    ------
    OracleError
        When ``max_iters`` iterations do not bring the step below ``tol``.
    """
    if constants is None:
        constants = estimate_constants(game)
    step = constants.mu / constants.ell0**2
    lo, hi = game.lo, game.hi
    both = np.isfinite(lo) & np.isfinite(hi)
    x = np.clip(np.where(both, 0.5 * (np.where(both, lo, 0) + np.where(both, hi, 0)), 0.0), lo, hi)
    res = math.inf
    for k in range(1, max_iters + 1):
        xn = project_feasible(game, x - step * pseudo_gradient(game, x))
        res = float(np.linalg.norm(xn - x))
        x = xn
        if res <= tol:
            break
    else:
        raise OracleError(f"no convergence in {max_iters} iterations", residual=res)
    if polish and game.is_affine:
        x = _polish_affine(game, x, step)
    res = fixed_point_residual(game, x, step)
    if res > tol:
        raise OracleError(f"residual {res:.3e} above tolerance {tol:.3e}", residual=res)
    return NashEquilibrium(x, res, k, step)


# -- runs -------------------------------------------------------------------

@dataclass
class RunConfig:
    """Configuration of one iteration run.

    Exactly the step sizes of the chosen algorithm must be set: ``alpha`` for
    ``alg1`` and ``unconstrained``; ``gamma`` and ``tau`` for ``alg2``.  A run
    needs a valid ``certificate`` matching those steps unless ``uncertified``
    is set.
    """

    algorithm: str
    alpha: float | None = None
    gamma: float | None = None
    tau: float | None = None
    max_iters: int = 1000
    stop_tol: float = 1e-10
    init: str | np.ndarray = "zeros"
    init_seed: int = 0
    audit_contraction: bool = False
    certificate: Alg1Certificate | Alg2Certificate | None = None
    uncertified: bool = False
    backend: str = "auto"
    noise_std: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        if self.algorithm == "alg2":
            if self.gamma is None or self.tau is None or self.alpha is not None:
                raise ValueError("alg2 takes gamma and tau (and no alpha)")
        elif self.alpha is None or self.gamma is not None or self.tau is not None:
            raise ValueError(f"{self.algorithm} takes alpha only")
        if self.backend not in ("auto", "python", "kernel"):
            raise ValueError("backend must be auto, python or kernel")

    @property
    def rho(self) -> float | None:
        return None if self.certificate is None else self.certificate.rho

    def check_certificate(self) -> None:
        if self.uncertified:
            return
        cert = self.certificate
        if self.algorithm == "unconstrained":
            raise CertificateError("the unconstrained iteration has no certificate here; "
                                   "set uncertified to run it", bound="unconstrained")
        if cert is None:
            raise CertificateError("no certificate given; set uncertified to run anyway",
                                   bound="missing")
        if self.algorithm == "alg1":
            if not isinstance(cert, Alg1Certificate) or not math.isclose(cert.alpha, self.alpha):
                raise CertificateError("certificate does not match alpha", bound="alpha")
            if not cert.valid:
                raise CertificateError(f"rho_alpha = {cert.rho:.6f} >= 1", bound="rho_alpha")
        else:
            if not isinstance(cert, Alg2Certificate) or not (
                math.isclose(cert.gamma, self.gamma) and math.isclose(cert.tau, self.tau)
            ):
                raise CertificateError("certificate does not match gamma/tau", bound="gamma,tau")
            if not cert.valid:
                raise CertificateError(f"certificate fails: {', '.join(cert.failures)}",
                                       bound=cert.failures[0])

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("algorithm", "alpha", "gamma", "tau", "max_iters",
                                           "stop_tol", "init_seed", "audit_contraction",
                                           "uncertified", "backend", "noise_std", "noise_seed")}
        d["init"] = self.init if isinstance(self.init, str) else "user"
        d["rho"] = self.rho
        return d


TRACE_HEADER = ("iter", "dist_to_ne", "action_dist", "consensus_residual", "empirical_factor",
                "graph_index")


@dataclass
class Trace:
    """Per-iteration record of a run; row 0 is the initial stack."""

    dist: np.ndarray
    action_dist: np.ndarray
    consensus: np.ndarray
    graph_index: np.ndarray
    status: str
    x_final: np.ndarray
    rho: float | None = None
    diverged_at: int | None = None
    audit_violations: list = field(default_factory=list)

    @property
    def iters(self) -> int:
        return len(self.dist) - 1

    @property
    def factors(self) -> np.ndarray:
        """``dist_k / dist_{k-1}`` (NaN where the previous distance is zero)."""
        prev, cur = self.dist[:-1], self.dist[1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(prev > 0, cur / prev, np.nan)
        return np.concatenate([[np.nan], f])

    @property
    def max_empirical_factor(self) -> float:
        f = self.factors[1:]
        f = f[np.isfinite(f)]
        return float(f.max()) if f.size else math.nan

    @property
    def final_dist(self) -> float:
        return float(self.dist[-1])

    def iterations_to(self, threshold: float, column: str = "action_dist") -> int | None:
        """First iteration at which ``column`` is at or below ``threshold``."""
        vals = getattr(self, column)
        hit = np.flatnonzero(vals <= threshold)
        return int(hit[0]) if hit.size else None

    def rows(self):
        f = self.factors
        for k in range(len(self.dist)):
            yield (k, self.dist[k], self.action_dist[k], self.consensus[k], f[k],
                   int(self.graph_index[k]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            for row in self.rows():
                w.writerow([row[0], *(repr(float(v)) for v in row[1:5]), row[5]])

    def summary(self) -> dict:
        return {
            "status": self.status,
            "iters": self.iters,
            "final_dist": self.final_dist,
            "rho_theoretical": self.rho,
            "max_empirical_factor": self.max_empirical_factor,
            "diverged_at": self.diverged_at,
            "audit_violations": len(self.audit_violations),
        }

    def write(self, directory, stem: str = "trace") -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.to_csv(directory / f"{stem}.csv")
        (directory / f"{stem}.summary.json").write_text(json.dumps(self.summary(), indent=1))


def initial_stack(game: GameInstance, init, seed: int = 0) -> np.ndarray:
    """Initial ``(N, n)`` stack: ``zeros`` (own actions projected), ``random`` or an array."""
    N, n = game.num_agents, game.n
    if isinstance(init, str):
        if init == "zeros":
            return project_extended(game, np.zeros((N, n)))
        if init == "random":
            rng = np.random.default_rng(seed)
            lo = np.where(np.isfinite(game.lo), game.lo, np.nan)
            hi = np.where(np.isfinite(game.hi), game.hi, np.nan)
            both = np.isfinite(lo) & np.isfinite(hi)
            X = rng.standard_normal((N, n))
            U = rng.uniform(size=(N, n))
            X = np.where(both, lo + U * (hi - lo), X)
            X = np.where(~both & np.isfinite(lo), lo + np.abs(X), X)
            X = np.where(~both & np.isfinite(hi), hi - np.abs(X), X)
            return project_extended(game, X)
        raise ValueError(f"unknown init policy {init!r}")
    X, _ = as_stack(game, init)
    return project_extended(game, X) if not game.is_unbounded else X.copy()


def run(game: GameInstance, seq: GraphSequence, cfg: RunConfig, x_star=None) -> Trace:
    """Execute a configured run against a scheduled graph sequence.

    ``x_star`` (the equilibrium, e.g. from :func:`centralized_ne`) enables the
    distance columns and the stopping rule on ``||x^k - 1 (x) x*||``;
    without it the run stops when successive iterates are within
    ``stop_tol`` and the distance columns hold that step length.
    """
    cfg.check_certificate()
    if seq.num_agents != game.num_agents:
        raise DimensionError("graph sequence and game disagree on the number of agents")
    if cfg.algorithm in ("alg1", "unconstrained") and not seq.doubly_stochastic:
        raise GraphError(f"{cfg.algorithm} needs doubly stochastic graphs")
    if cfg.algorithm == "alg2" and not seq.balanced:
        raise GraphError("alg2 needs weight-balanced graphs")
    if cfg.algorithm == "unconstrained" and not game.is_unbounded:
        raise ValueError("the unconstrained iteration requires unbounded feasible sets")

    has_oracle = x_star is not None
    xs = np.asarray(x_star, float) if has_oracle else None
    X0 = initial_stack(game, cfg.init, cfg.init_seed)
    sched = seq.indices(0, cfg.max_iters)
    use_kernel = (game.is_affine and cfg.noise_std == 0 and cfg.backend != "python")
    if cfg.backend == "kernel" and not use_kernel:
        raise ValueError("kernel backend needs an affine game and no noise")

    if use_kernel:
        p1 = cfg.gamma if cfg.algorithm == "alg2" else cfg.alpha
        p2 = cfg.tau if cfg.algorithm == "alg2" else 0.0
        X, dist, action, cons, steps, code = kernels.backend.run_affine(
            _KIND[cfg.algorithm], seq.weight_array(), sched, X0, game.gamma, game.c,
            game.owner.astype(np.intp), game.lo, game.hi, float(p1), float(p2),
            xs if has_oracle else np.zeros(game.n), has_oracle, cfg.stop_tol, DIVERGENCE_LIMIT,
        )
        status = _STATUS[code]
        dist, action, cons = dist[:steps + 1], action[:steps + 1], cons[:steps + 1]
    else:
        X, dist, action, cons, steps, status = _run_python(game, seq, cfg, X0, sched, xs)

    if cfg.max_iters == 0:
        status = MAX_ITERS
    gidx = np.concatenate([[-1], sched[:steps]]).astype(int)
    trace = Trace(dist, action, cons, gidx, status, X, rho=cfg.rho,
                  diverged_at=steps if status == DIVERGED else None)
    if cfg.audit_contraction and cfg.rho is not None and has_oracle:
        trace.audit_violations = contraction_violations(trace.dist, cfg.rho)
    return trace


def contraction_violations(dist: np.ndarray, rho: float, rtol: float = AUDIT_RTOL) -> list:
    """Iterations ``k`` with ``dist_k > (sqrt(rho) + rtol) dist_{k-1}``."""
    bound = (math.sqrt(rho) + rtol) * dist[:-1]
    return [int(k) + 1 for k in np.flatnonzero(dist[1:] > bound)]


def _run_python(game, seq, cfg, X0, sched, xs):
    from .network import consensus_split

    has_oracle = xs is not None
    rows, cols = _own_index(game)
    iters = len(sched)
    dist = np.full(iters + 1, np.nan)
    action = np.full(iters + 1, np.nan)
    cons = np.full(iters + 1, np.nan)
    rng = np.random.default_rng(cfg.noise_seed) if cfg.noise_std > 0 else None

    def metrics(X):
        _, perp = consensus_split(X)
        if has_oracle:
            return (float(np.linalg.norm(X - xs)), float(np.linalg.norm(X[rows, cols] - xs)),
                    float(np.linalg.norm(perp)))
        return math.nan, math.nan, float(np.linalg.norm(perp))

    X = X0.copy()
    dist[0], action[0], cons[0] = metrics(X)
    if has_oracle and dist[0] <= cfg.stop_tol:
        return X, dist[:1], action[:1], cons[:1], 0, CONVERGED
    for k in range(iters):
        g = seq.family[sched[k]]
        if cfg.algorithm == "alg1":
            Xn = step_alg1(game, g, X, cfg.alpha)
        elif cfg.algorithm == "alg2":
            Xn = step_alg2(game, g, X, cfg.gamma, cfg.tau)
        else:
            Xn = step_unconstrained(game, g, X, cfg.alpha)
        if rng is not None:
            Xn = Xn + cfg.noise_std * rng.standard_normal(Xn.shape)
        d, a, s = metrics(Xn)
        if not has_oracle:
            d = float(np.linalg.norm(Xn - X))
        X = Xn
        dist[k + 1], action[k + 1], cons[k + 1] = d, a, s
        if not np.all(np.isfinite(X)) or not math.isfinite(d) or d > DIVERGENCE_LIMIT:
            return X, dist[:k + 2], action[:k + 2], cons[:k + 2], k + 1, DIVERGED
        if d <= cfg.stop_tol:
            return X, dist[:k + 2], action[:k + 2], cons[:k + 2], k + 1, CONVERGED
    return X, dist, action, cons, iters, MAX_ITERS


# -- restricted monotonicity audit -------------------------------------------

@dataclass(frozen=True)
class MonotonicityAudit:
    min_ratio: float
    mu_bar: float
    samples: int
    violations: int

    @property
    def passed(self) -> bool:
        return self.violations == 0


def augmented_operator(game: GameInstance, W: np.ndarray, gamma: float, X: np.ndarray) -> np.ndarray:
    """``gamma R^T F(x) + (L (x) I_n) x`` as an ``(N, n)`` array."""
    out = laplacian(W) @ X
    rows, cols = _own_index(game)
    out[rows, cols] += gamma * extended_pseudo_gradient(game, X)
    return out


def audit_restricted_monotonicity(game: GameInstance, graph: WeightedDigraph, gamma: float,
                                  x_star, mu_bar: float, samples: int = 500,
                                  seed: int = 0) -> MonotonicityAudit:
    """Empirically check ``(x - x*)^T (Fa(x) - Fa(x*)) >= mu_bar ||x - x*||^2``.

    Directions mix consensual and disagreement components with random
    weights; for affine games the eigenvector of the smallest eigenvalue of
    the symmetric Jacobian part is added as an adversarial direction.
    """
    if not graph.balanced:
        raise GraphError("the audit needs a weight-balanced graph")
    W = graph.weights
    N, n = game.num_agents, game.n
    xs = np.asarray(x_star, float)
    Xs = np.tile(xs, (N, 1))
    Fs = augmented_operator(game, W, gamma, Xs)
    rng = np.random.default_rng(seed)

    dirs = []
    for _ in range(samples):
        par = np.tile(rng.standard_normal(n), (N, 1))
        perp = rng.standard_normal((N, n))
        perp -= perp.mean(axis=0)
        a, b = rng.uniform(size=2) ** 2
        D = a * par + b * perp
        D *= rng.uniform(0.1, 10.0) / max(np.linalg.norm(D), 1e-300)
        dirs.append(D)
    if game.is_affine:
        from .tuning import augmented_operator_matrix

        A = augmented_operator_matrix(game, laplacian(W), gamma)
        _, vecs = np.linalg.eigh(0.5 * (A + A.T))
        dirs.append(vecs[:, 0].reshape(N, n))

    min_ratio, violations = math.inf, 0
    for D in dirs:
        lhs = float(np.sum(D * (augmented_operator(game, W, gamma, Xs + D) - Fs)))
        dd = float(np.sum(D * D))
        min_ratio = min(min_ratio, lhs / dd)
        if lhs < mu_bar * dd - 1e-9:
            violations += 1
    return MonotonicityAudit(min_ratio, mu_bar, len(dirs), violations)
