"""Randomised property suites backing the ``verify`` subcommand.

Each suite returns a :class:`SuiteResult`; a suite passes only with zero
failures.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cournot import generate_instance
from .engine import centralized_ne, step_alg1, step_alg2, step_unconstrained
from .game import estimate_constants, random_affine_game
from .network import (
    consensus_split,
    directed_ring,
    metropolis_weights,
    mix,
    random_connected_graph,
    second_singular_value,
)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    checks: int
    failures: int
    worst: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0 and self.checks > 0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"{tag} {self.name}: {self.checks} checks, {self.failures} failures, "
                f"worst {self.worst:.3e}{' (' + self.detail + ')' if self.detail else ''}")


def _graphs(rng, count, sizes=(3, 4, 6, 8, 12)):
    for _ in range(count):
        N = int(rng.choice(sizes))
        yield random_connected_graph(N, float(rng.uniform(0.2, 0.9)), rng)


def mixing_contractivity(seed: int = 0, graphs: int = 40, stacks: int = 25) -> SuiteResult:
    """``||(W (x) I) x_perp|| <= sigma_2(W) ||x_perp||`` on the disagreement space."""
    rng = np.random.default_rng([seed, 1])
    checks = fails = 0
    worst = -np.inf
    for g in _graphs(rng, graphs):
        s2 = second_singular_value(g)
        N = g.num_agents
        for _ in range(stacks):
            n = int(rng.integers(1, 5))
            X = rng.standard_normal((N, n)) * rng.uniform(0.1, 100)
            _, perp = consensus_split(X)
            lhs = np.linalg.norm(mix(g, perp))
            rhs = s2 * np.linalg.norm(perp)
            worst = max(worst, lhs - rhs)
            checks += 1
            fails += lhs > rhs * (1 + 1e-12) + 1e-12
    return SuiteResult("mixing contractivity on disagreement", checks, int(fails), worst)


def metropolis_stochasticity(seed: int = 0, graphs: int = 200) -> SuiteResult:
    rng = np.random.default_rng([seed, 2])
    checks = fails = 0
    worst = 0.0
    for _ in range(graphs):
        N = int(rng.integers(2, 30))
        A = np.triu(rng.uniform(size=(N, N)) < rng.uniform(0.1, 1.0), 1)
        A = A | A.T
        A[np.arange(N - 1), np.arange(1, N)] = A[np.arange(1, N), np.arange(N - 1)] = True
        W = metropolis_weights(A).weights
        err = max(np.abs(W.sum(axis=0) - 1).max(), np.abs(W.sum(axis=1) - 1).max())
        worst = max(worst, err)
        checks += 1
        fails += err > 1e-12 or W.min() < 0
    return SuiteResult("Metropolis double stochasticity", checks, int(fails), worst)


def constants_ordering(seed: int = 0, instances: int = 30) -> SuiteResult:
    """``0 < mu <= ell <= ell0`` on market games and random quadratic games."""
    checks = fails = 0
    worst = -np.inf
    rng = np.random.default_rng([seed, 3])
    for i in range(instances):
        if i % 2:
            N = int(rng.integers(2, 25))
            m = int(rng.integers(2, 8))
            n_total = int(rng.integers(N, 2 * N + 1))
            game = generate_instance(N=N, m=m, n_total=n_total, seed=seed * 1000 + i).game
        else:
            dims = rng.integers(1, 4, size=int(rng.integers(2, 7))).tolist()
            game = random_affine_game(dims, seed=seed * 1000 + i)
        k = estimate_constants(game)
        slack = max(k.mu - k.ell, k.ell - k.ell0, -k.mu)
        worst = max(worst, slack)
        checks += 1
        fails += slack > 1e-9 * k.ell0
    return SuiteResult("constant ordering mu <= ell <= ell0", checks, int(fails), worst)


def fixed_point_invariance(seed: int = 0, games: int = 6, steps: int = 100,
                           tol: float = 1e-12) -> SuiteResult:
    """Every stepper started at the equilibrium stack stays within ``10 tol``."""
    checks = fails = 0
    worst = 0.0
    for i in range(games):
        N = 3 + i % 3
        boxed = random_affine_game([1 + (j % 2) for j in range(N)], seed=seed * 100 + i)
        free = boxed.without_boxes()
        rng = np.random.default_rng([seed, 4, i])
        ds = random_connected_graph(N, 0.6, rng)
        ring = directed_ring(N, skip=bool(i % 2))
        runs = []
        for game in (boxed, free):
            x = centralized_ne(game, tol=tol).x
            X0 = np.tile(x, (N, 1))
            runs.append(("alg1", game, lambda X, g=game: step_alg1(g, ds, X, 0.05), X0))
            runs.append(("alg2", game,
                         lambda X, g=game: step_alg2(g, ring, X, 0.05, 0.05), X0))
        x = centralized_ne(free, tol=tol).x
        X0 = np.tile(x, (N, 1))
        runs.append(("unconstrained", free,
                     lambda X: step_unconstrained(free, ds, X, 0.05), X0))
        for _, game, step, X0 in runs:
            X = X0.copy()
            drift = 0.0
            for _ in range(steps):
                X = step(X)
                drift = max(drift, float(np.abs(X - X0).max()))
            worst = max(worst, drift)
            checks += 1
            fails += drift > 10 * tol * max(1.0, float(np.abs(X0).max()))
    return SuiteResult("fixed-point invariance of the steppers", checks, int(fails), worst)


def pythagoras(seed: int = 0, samples: int = 500) -> SuiteResult:
    """``||x||^2 = ||x_par||^2 + ||x_perp||^2`` and ``<x_par, x_perp> = 0``."""
    rng = np.random.default_rng([seed, 5])
    checks = fails = 0
    worst = 0.0
    for _ in range(samples):
        N, n = int(rng.integers(2, 20)), int(rng.integers(1, 10))
        X = rng.standard_normal((N, n)) * 10 ** rng.uniform(-3, 3)
        par, perp = consensus_split(X)
        total = float(np.sum(X * X))
        gap = abs(total - np.sum(par * par) - np.sum(perp * perp)) / max(total, 1e-300)
        inner = abs(float(np.sum(par * perp))) / max(total, 1e-300)
        worst = max(worst, gap, inner)
        checks += 1
        fails += gap > 1e-12 or inner > 1e-12
    return SuiteResult("orthogonal decomposition identity", checks, int(fails), worst)


SUITES = {
    "mixing": mixing_contractivity,
    "metropolis": metropolis_stochasticity,
    "constants": constants_ordering,
    "fixed_point": fixed_point_invariance,
    "pythagoras": pythagoras,
}


def run_all(seed: int = 0, only=None) -> list[SuiteResult]:
    names = list(SUITES) if not only else list(only)
    return [SUITES[name](seed=seed) for name in names]
