"""Step-size certificates for the two distributed iterations.

All 2x2 eigenvalues are computed in closed form from trace and determinant,
so the certification path involves no iterative eigensolver.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import CertificateError, ConstantsOrderError

_ORDER_RTOL = 1e-9


def _sym2_eigs(a: float, b: float, d: float) -> tuple[float, float]:
    """Eigenvalues (min, max) of the symmetric matrix [[a, b], [b, d]]."""
    mid = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), b)
    return mid - rad, mid + rad


def check_constants(mu: float, ell: float, ell0: float) -> None:
    if not mu > 0:
        raise ConstantsOrderError(f"mu must be positive, got {mu}")
    if mu > ell * (1 + _ORDER_RTOL) or ell > ell0 * (1 + _ORDER_RTOL):
        raise ConstantsOrderError(
            f"constants must satisfy mu <= ell <= ell0, got mu={mu}, ell={ell}, ell0={ell0}"
        )


def _check_sigma(sigma_bar: float) -> None:
    if not 0 <= sigma_bar < 1:
        raise ValueError(f"sigma_bar must lie in [0, 1), got {sigma_bar}")


# -- doubly stochastic case -------------------------------------------------

@dataclass(frozen=True)
class Alg1Certificate:
    alpha: float
    m_alpha: np.ndarray
    rho: float
    inputs: dict

    @property
    def valid(self) -> bool:
        return self.alpha > 0 and self.rho < 1

    @property
    def rate(self) -> float:
        """Per-step contraction factor of the distance to the equilibrium stack."""
        return math.sqrt(self.rho)


def _alg1_entries(alpha, mu, ell, ell0, sigma_bar, N):
    a = 1 - 2 * alpha * mu / N + alpha**2 * ell0**2 / N
    b = (alpha * (ell + ell0) + alpha**2 * ell0 * ell) * sigma_bar / math.sqrt(N)
    d = (1 + 2 * alpha * ell + alpha**2 * ell**2) * sigma_bar**2
    return a, b, d


def _alg1_rho(alpha, mu, ell, ell0, sigma_bar, N) -> float:
    return _sym2_eigs(*_alg1_entries(alpha, mu, ell, ell0, sigma_bar, N))[1]


def alg1_matrix(alpha: float, mu: float, ell: float, ell0: float, sigma_bar: float,
                N: int) -> Alg1Certificate:
    """Contraction matrix of the projected gradient iteration with mixing first.

    Returns the 2x2 matrix bounding the squared distance to equilibrium in
    terms of the consensual error and the disagreement, together with its
    largest eigenvalue ``rho``.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if N < 2:
        raise ValueError("N must be at least 2")
    check_constants(mu, ell, ell0)
    _check_sigma(sigma_bar)
    a, b, d = _alg1_entries(alpha, mu, ell, ell0, sigma_bar, N)
    m = np.array([[a, b], [b, d]])
    rho = _sym2_eigs(a, b, d)[1]
    inputs = dict(mu=mu, ell=ell, ell0=ell0, sigma_bar=sigma_bar, N=N)
    return Alg1Certificate(float(alpha), m, float(rho), inputs)


def alg1_max_step(mu: float, ell: float, ell0: float, sigma_bar: float, N: int,
                  tol: float = 1e-12) -> float:
    """Largest ``alpha`` (to within ``tol``) with ``rho_alpha < 1``, by bisection."""
    check_constants(mu, ell, ell0)
    _check_sigma(sigma_bar)
    if tol <= 0:
        raise ValueError("tol must be positive")

    def ok(a):
        return _alg1_rho(a, mu, ell, ell0, sigma_bar, N) < 1

    lo = 2 * mu / ell0**2
    while not ok(lo):
        lo *= 0.5
        if lo < 1e-300:
            raise CertificateError("no contracting step size found")
    hi = 2 * lo
    while ok(hi):
        lo, hi = hi, 2 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class Lemma2Bounds:
    a: float
    b: float
    c: float

    @property
    def min(self) -> float:
        return min(self.a, self.b, self.c)

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "min": self.min}


def lemma2_cubic(alpha: float, mu: float, ell: float, ell0: float, sigma_bar: float) -> float:
    s2 = sigma_bar**2
    return (
        2 * mu * (1 - s2)
        - alpha * (s2 * (2 * ell0 * ell + ell**2 + 4 * mu * ell + 2 * ell0**2) - ell0**2)
        - alpha**2 * (ell0 * ell**2 + mu * ell**2 + 2 * ell0**2 * ell) * 2 * s2
        - alpha**3 * 2 * ell0**2 * ell**2 * s2
    )


def lemma2_bounds(mu: float, ell: float, ell0: float, sigma_bar: float,
                  tol: float = 1e-14) -> Lemma2Bounds:
    """Closed-form sufficient step-size bounds, independent of the number of agents.

    ``a = sigma_bar / (3 ell0)``, ``b = 2 mu / ell0**2`` and ``c`` is the
    positive root of the cubic in :func:`lemma2_cubic` (``inf`` when the cubic
    has no positive root, which only happens for ``sigma_bar == 0``).
    """
    check_constants(mu, ell, ell0)
    _check_sigma(sigma_bar)
    bound_a = sigma_bar / (3 * ell0)
    bound_b = 2 * mu / ell0**2

    def p(x):
        return lemma2_cubic(x, mu, ell, ell0, sigma_bar)

    if sigma_bar == 0:
        return Lemma2Bounds(bound_a, bound_b, math.inf)
    lo, hi = 0.0, bound_b
    while p(hi) > 0:
        lo, hi = hi, 2 * hi
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if p(mid) > 0:
            lo = mid
        else:
            hi = mid
    return Lemma2Bounds(bound_a, bound_b, lo)


def choose_alg1_step(mu: float, ell: float, ell0: float, sigma_bar: float, N: int,
                     fraction: float = 0.99) -> Alg1Certificate:
    """Certificate at ``fraction`` of the largest contracting step."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    alpha = fraction * alg1_max_step(mu, ell, ell0, sigma_bar, N)
    return alg1_matrix(alpha, mu, ell, ell0, sigma_bar, N)


# -- weight-balanced case ---------------------------------------------------

@dataclass(frozen=True)
class Alg2Certificate:
    gamma: float
    tau: float
    m_matrix: np.ndarray
    mu_bar: float
    gamma_max: float
    ell_bar: float
    tau_max: float
    rho: float
    theta: float
    failures: tuple = field(default_factory=tuple)

    @property
    def valid(self) -> bool:
        return not self.failures

    @property
    def rate(self) -> float:
        return math.sqrt(max(self.rho, 0.0))


def _alg2_mu_bar(gamma, mu, ell, ell0, lambda_bar, N, theta) -> float:
    off = -gamma * (ell0 + ell) / (2 * math.sqrt(N))
    return _sym2_eigs(gamma * mu / N, off, lambda_bar - gamma * theta)[0]


def alg2_certificate(gamma: float, tau: float, mu: float, ell: float, ell0: float,
                     lambda_bar: float, sigma_tilde: float, N: int,
                     theta: float | None = None) -> Alg2Certificate:
    """Certificate for the forward-backward iteration on balanced digraphs.

    ``theta`` weights the disagreement penalty in the restricted monotonicity
    matrix; it defaults to ``ell``, the Lipschitz constant of the extended
    pseudo-gradient, which is the value that makes ``mu_bar`` a valid modulus.
    ``ell_bar = ell + sigma_tilde`` bounds the Lipschitz constant of the
    augmented operator only when ``gamma <= 1``, so larger ``gamma`` values
    are flagged.
    """
    check_constants(mu, ell, ell0)
    if N < 2:
        raise ValueError("N must be at least 2")
    if lambda_bar <= 0 or sigma_tilde <= 0:
        raise ValueError("lambda_bar and sigma_tilde must be positive")
    theta = ell if theta is None else float(theta)
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    off = -(ell0 + ell) / (2 * math.sqrt(N))
    m = gamma * np.array([[mu / N, off], [off, lambda_bar / gamma - theta]]) if gamma > 0 \
        else np.array([[0.0, 0.0], [0.0, lambda_bar]])
    mu_bar = _alg2_mu_bar(gamma, mu, ell, ell0, lambda_bar, N, theta)
    gamma_max = 4 * mu * lambda_bar / ((ell0 + ell) ** 2 + 4 * mu * theta)
    ell_bar = ell + sigma_tilde
    tau_max = 2 * mu_bar / ell_bar**2
    rho = 1 - 2 * tau * mu_bar + tau**2 * ell_bar**2

    failures = []
    if not 0 < gamma < gamma_max:
        failures.append("gamma_max")
    if mu_bar <= 0:
        if 0 < gamma < gamma_max * (1 - 1e-12):
            raise CertificateError(
                f"mu_bar={mu_bar:.3e} <= 0 although gamma < gamma_max; check theta",
                bound="mu_bar",
            )
        failures.append("mu_bar")
    if not 0 < tau < tau_max:
        failures.append("tau_max")
    if gamma > 1:
        failures.append("gamma<=1")
    return Alg2Certificate(float(gamma), float(tau), m, float(mu_bar), float(gamma_max),
                           float(ell_bar), float(tau_max), float(rho), theta, tuple(failures))


def best_alg2_gamma(mu: float, ell: float, ell0: float, lambda_bar: float, N: int,
                    theta: float | None = None) -> float:
    """``gamma`` in ``(0, min(gamma_max, 1)]`` maximising ``mu_bar``.

    ``mu_bar`` is the smallest eigenvalue of a matrix affine in ``gamma``,
    hence concave, so a bounded scalar search finds the maximiser.
    """
    theta = ell if theta is None else float(theta)
    gamma_max = 4 * mu * lambda_bar / ((ell0 + ell) ** 2 + 4 * mu * theta)
    upper = min(gamma_max, 1.0)
    res = minimize_scalar(
        lambda g: -_alg2_mu_bar(g, mu, ell, ell0, lambda_bar, N, theta),
        bounds=(0.0, upper), method="bounded", options={"xatol": 1e-12 * upper},
    )
    g = float(res.x)
    return min(g, upper * (1 - 1e-9))


def choose_alg2_steps(mu: float, ell: float, ell0: float, lambda_bar: float,
                      sigma_tilde: float, N: int, theta: float | None = None,
                      fraction: float = 0.99, gamma: float | None = None) -> Alg2Certificate:
    """Certificate with ``gamma`` maximising ``mu_bar`` and ``tau = fraction * tau_max``."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    if gamma is None:
        gamma = best_alg2_gamma(mu, ell, ell0, lambda_bar, N, theta)
    probe = alg2_certificate(gamma, 0.0, mu, ell, ell0, lambda_bar, sigma_tilde, N, theta)
    return alg2_certificate(gamma, fraction * probe.tau_max, mu, ell, ell0, lambda_bar,
                            sigma_tilde, N, theta)


def augmented_operator_matrix(game, L: np.ndarray, gamma: float) -> np.ndarray:
    """Jacobian of ``gamma R^T F(x) + (L (x) I_n) x`` for an affine game."""
    from .game import extended_jacobian

    N, n = game.num_agents, game.n
    RtJ = np.zeros((N * n, N * n))
    J = extended_jacobian(game)
    own = np.arange(n) + n * game.owner  # flat index of each own-action entry
    RtJ[own] = J
    return gamma * RtJ + np.kron(L, np.eye(n))


def numeric_alg2_certificate(game, seq, gamma: float, fraction: float = 0.99) -> Alg2Certificate:
    """Alg. 2 certificate with ``mu_bar`` and ``ell_bar`` computed from the matrices.

    For an affine game the augmented operator is affine, so its restricted
    monotonicity modulus is bounded below by the smallest eigenvalue of the
    symmetric part of its Jacobian and its Lipschitz constant equals the
    Jacobian norm; both are taken as extremes over the graph family.
    """
    from .network import laplacian

    mu_bar, ell_bar = math.inf, 0.0
    for g in seq.family:
        A = augmented_operator_matrix(game, laplacian(g.weights), gamma)
        mu_bar = min(mu_bar, float(np.linalg.eigvalsh(0.5 * (A + A.T))[0]))
        ell_bar = max(ell_bar, float(np.linalg.norm(A, 2)))
    tau_max = 2 * mu_bar / ell_bar**2
    tau = fraction * tau_max
    rho = 1 - 2 * tau * mu_bar + tau**2 * ell_bar**2
    failures = () if mu_bar > 0 else ("mu_bar",)
    return Alg2Certificate(float(gamma), float(tau), np.full((2, 2), np.nan), mu_bar, math.nan,
                           ell_bar, tau_max, rho, math.nan, failures)
