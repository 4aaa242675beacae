import math

import numpy as np
import pytest

from tvnash.errors import CertificateError, ConstantsOrderError
from tvnash.tuning import (
    alg1_matrix,
    alg1_max_step,
    alg2_certificate,
    best_alg2_gamma,
    choose_alg1_step,
    choose_alg2_steps,
    lemma2_bounds,
    lemma2_cubic,
)


def exact_alg1_limit(mu, ell, ell0, s):
    """Largest step with det(I - M_alpha) > 0 and alpha < 2 mu / ell0^2 (N-free form)."""
    s2 = s * s
    a2 = 2 * s2 * (mu * ell**2 + ell0 * ell**2)
    a1 = ell0**2 + s2 * (ell**2 + 2 * ell * ell0 + 4 * mu * ell)
    a0 = 2 * mu * (1 - s2)
    root = (-a1 + math.sqrt(a1 * a1 + 4 * a2 * a0)) / (2 * a2) if a2 > 0 else a0 / a1
    return min(2 * mu / ell0**2, root)


def test_alpha_zero():
    c = alg1_matrix(0.0, 1.0, 1.0, 1.0, 0.4, 3)
    np.testing.assert_allclose(c.m_alpha, [[1, 0], [0, 0.16]])
    assert c.rho == pytest.approx(1.0) and not c.valid


def test_sigma_zero_centralised_case():
    for a in (0.1, 0.5, 1.0, 1.9):
        c = alg1_matrix(a, 1, 1, 1, 0.0, 2)
        np.testing.assert_allclose(c.m_alpha, np.diag([1 - a + a * a / 2, 0]), atol=1e-15)
        assert c.rho == pytest.approx(1 - a + a * a / 2) and c.rho < 1


def test_rho_matches_dense_eigensolver():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        mu, ell, ell0 = np.sort(rng.uniform(0.1, 10, 3))
        c = alg1_matrix(rng.uniform(0, 0.5), mu, ell, ell0, rng.uniform(0, 0.99),
                        int(rng.integers(2, 50)))
        worst = max(worst, abs(c.rho - np.linalg.eigvalsh(c.m_alpha)[-1]))
    assert worst <= 1e-12


def test_constant_order_checked():
    with pytest.raises(ConstantsOrderError):
        alg1_matrix(0.1, 2.0, 1.0, 3.0, 0.5, 2)
    with pytest.raises(ConstantsOrderError):
        lemma2_bounds(1.0, 3.0, 2.0, 0.5)


def test_max_step_sigma_zero():
    assert alg1_max_step(1, 1, 1, 0.0, 2) == pytest.approx(2, abs=1e-10)


def test_max_step_bracket():
    rng = np.random.default_rng(1)
    tol = 1e-12
    for _ in range(50):
        mu, ell, ell0 = np.sort(rng.uniform(0.5, 5, 3))
        s, N = rng.uniform(0.05, 0.95), int(rng.integers(2, 30))
        a = alg1_max_step(mu, ell, ell0, s, N, tol)
        assert alg1_matrix(a - tol, mu, ell, ell0, s, N).rho < 1
        assert alg1_matrix(a + 10 * tol, mu, ell, ell0, s, N).rho >= 1 - 1e-15


def test_max_step_matches_exact_boundary():
    rng = np.random.default_rng(2)
    for _ in range(100):
        mu, ell, ell0 = np.sort(rng.uniform(0.5, 5, 3))
        s = rng.uniform(0.05, 0.95)
        for N in (2, 7, 40):
            assert alg1_max_step(mu, ell, ell0, s, N) == pytest.approx(
                exact_alg1_limit(mu, ell, ell0, s), rel=1e-8)


def test_closed_form_bounds_worked_example():
    b = lemma2_bounds(1, 1, 1, 0.5)
    assert b.a == pytest.approx(1 / 6) and b.b == pytest.approx(2)
    assert lemma2_cubic(1 / 6, 1, 1, 1, 0.5) > 0
    assert b.min == pytest.approx(1 / 6)
    assert set(b.as_dict()) == {"a", "b", "c", "min"}


def test_closed_form_cubic_coefficients():
    # 1.5 - 1.25 a - 2 a^2 - 0.5 a^3 for mu = ell = ell0 = 1, sigma = 0.5
    for a in (0.0, 0.3, 1.0):
        assert lemma2_cubic(a, 1, 1, 1, 0.5) == pytest.approx(1.5 - 1.25 * a - 2 * a**2 - 0.5 * a**3)


def test_closed_form_root_is_sign_change():
    b = lemma2_bounds(2.0, 3.0, 5.0, 0.7)
    assert lemma2_cubic(b.c * (1 - 1e-9), 2, 3, 5, 0.7) > 0
    assert lemma2_cubic(b.c * (1 + 1e-9), 2, 3, 5, 0.7) < 0


def test_closed_form_grid_on_worked_example():
    b = lemma2_bounds(1, 1, 1, 0.5)
    for a in np.linspace(0, b.min, 52)[1:-1]:
        assert alg1_matrix(a, 1, 1, 1, 0.5, 2).rho < 1


def test_closed_form_bounds_have_no_N_parameter():
    import inspect

    assert "N" not in inspect.signature(lemma2_bounds).parameters


def test_rho_nondecreasing_in_sigma():
    for a in (1e-3, 1e-2, 0.05):
        rhos = [alg1_matrix(a, 1, 2, 3, s, 5).rho for s in np.linspace(0, 0.99, 60)]
        assert np.all(np.diff(rhos) >= -1e-15)


def test_choose_alg1_step():
    c = choose_alg1_step(1, 2, 3, 0.6, 4)
    assert c.valid and c.alpha == pytest.approx(0.99 * alg1_max_step(1, 2, 3, 0.6, 4))
    assert np.all(np.linalg.eigvalsh(c.m_alpha) > 0)


def test_alg2_gamma_max_example():
    c = alg2_certificate(0.5, 1e-3, 1, 1, 1, 1, 2.0, 2, theta=0.0)
    assert c.gamma_max == pytest.approx(1.0)


def test_alg2_matrix_example():
    c = alg2_certificate(0.5, 1e-3, 1, 1, 1, 1, 2.0, 2, theta=0.0)
    r = 1 / math.sqrt(2)
    np.testing.assert_allclose(c.m_matrix, 0.5 * np.array([[0.5, -r], [-r, 2]]))
    assert c.mu_bar == pytest.approx(0.5 * (2.5 - math.sqrt(4.25)) / 2)
    assert c.mu_bar == pytest.approx(0.1096, abs=1e-4)


def test_alg2_identities():
    c = alg2_certificate(0.01, 1e-4, 1.0, 2.0, 3.0, 0.5, 2.5, 5)
    assert c.ell_bar == 2.0 + 2.5
    assert c.tau_max * c.ell_bar**2 == pytest.approx(2 * c.mu_bar, rel=1e-15)
    assert c.rho == pytest.approx(1 - 2 * c.tau * c.mu_bar + c.tau**2 * c.ell_bar**2)
    assert c.valid and 0 < c.rho < 1


def test_alg2_invalid_flags():
    base = dict(mu=1, ell=1, ell0=1, lambda_bar=1, sigma_tilde=2.0, N=2, theta=0.0)
    assert "gamma_max" in alg2_certificate(1.0, 1e-3, **base).failures
    assert "gamma_max" in alg2_certificate(1.5, 1e-3, **base).failures
    c = alg2_certificate(0.5, 1.0, **base)
    assert "tau_max" in c.failures and not c.valid


def test_alg2_default_theta_is_ell():
    c = alg2_certificate(0.01, 1e-3, 1.0, 2.0, 3.0, 0.5, 2.5, 5)
    assert c.theta == 2.0


def test_alg2_negative_mu_bar_below_gamma_max_is_an_error(monkeypatch):
    import tvnash.tuning as t

    monkeypatch.setattr(t, "_alg2_mu_bar", lambda *a: -1.0)
    with pytest.raises(CertificateError):
        t.alg2_certificate(0.01, 1e-3, 1.0, 2.0, 3.0, 0.5, 2.5, 5)


def test_choose_alg2_steps_maximises_mu_bar():
    c = choose_alg2_steps(1.0, 2.0, 3.0, 0.5, 2.5, 5)
    assert c.valid
    g = best_alg2_gamma(1.0, 2.0, 3.0, 0.5, 5)
    for other in (0.5 * g, 0.9 * g, min(1.1 * g, c.gamma_max * 0.999)):
        assert alg2_certificate(other, 1e-6, 1.0, 2.0, 3.0, 0.5, 2.5, 5).mu_bar <= c.mu_bar + 1e-15


def test_m_alpha_positive_definite_below_first_bound():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        mu, ell, ell0 = np.sort(rng.uniform(0.1, 10, 3))
        s = rng.uniform(0.05, 0.95)
        a = rng.uniform(0, 1) * lemma2_bounds(mu, ell, ell0, s).a
        assert np.linalg.eigvalsh(alg1_matrix(a, mu, ell, ell0, s, int(rng.integers(2, 60))).m_alpha)[0] > 0
