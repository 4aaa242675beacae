import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import two_player
from tvnash.cournot import generate_instance
from tvnash.errors import DimensionError, MonotonicityError
from tvnash.game import (
    GameInstance,
    consensual_stack,
    estimate_constants,
    extended_jacobian,
    extended_pseudo_gradient,
    game_from_dict,
    game_to_dict,
    load_game,
    project_extended,
    project_feasible,
    pseudo_gradient,
    random_affine_game,
    save_game,
    select_own,
)


def test_pseudo_gradient_hand_value(game2):
    np.testing.assert_allclose(pseudo_gradient(game2, [0.0, 0.0]), [-2.0, -2.0])


def test_identity_affine_game():
    g = GameInstance([2, 1], affine=(np.eye(3), np.zeros(3)))
    x = np.array([0.3, -1.2, 4.0])
    np.testing.assert_allclose(pseudo_gradient(g, x), x)


def test_market_gradient_at_zero_is_constant_term():
    inst = generate_instance(N=6, m=3, seed=4)
    A = inst.structure.combined
    x0 = np.zeros(inst.game.n)
    expected = np.concatenate([inst.params.q[i] - np.asarray(inst.structure.participation[i]).T
                               @ inst.params.P_bar for i in range(6)])
    np.testing.assert_allclose(pseudo_gradient(inst.game, x0), expected)
    assert A.shape == (3, inst.game.n)


def test_dimension_error_names_agent():
    g = two_player()
    with pytest.raises(DimensionError):
        pseudo_gradient(g, np.zeros(3))
    bad = GameInstance([1, 1], [lambda x: np.zeros(1), lambda x: np.zeros(2)])
    with pytest.raises(DimensionError) as err:
        pseudo_gradient(bad, np.zeros(2))
    assert err.value.agent == 1


def test_affine_form_must_match_gradients():
    with pytest.raises(ValueError):
        GameInstance([1, 1], [lambda x: x[:1], lambda x: x[1:]],
                     affine=(2 * np.eye(2), np.zeros(2)))


def test_extended_gradient_consensual(game2):
    x = np.array([0.7, -0.2])
    np.testing.assert_allclose(extended_pseudo_gradient(game2, consensual_stack(game2, x)),
                               pseudo_gradient(game2, x), atol=1e-12)


def test_extended_gradient_own_blocks(game2):
    xb = np.array([0.0, 5.0, 7.0, 0.0])
    np.testing.assert_allclose(extended_pseudo_gradient(game2, xb), [3.0, 5.0])


def test_extended_gradient_matches_jacobian():
    g = random_affine_game([2, 1, 3], seed=3)
    X = np.random.default_rng(0).standard_normal((3, 6))
    np.testing.assert_allclose(extended_pseudo_gradient(g, X),
                               extended_jacobian(g) @ X.reshape(-1) + g.c, atol=1e-12)


def test_consensus_restriction_many_games():
    rng = np.random.default_rng(1)
    worst = 0.0
    for s in range(20):
        g = random_affine_game(rng.integers(1, 3, size=4).tolist(), seed=s)
        for _ in range(100):
            x = rng.standard_normal(g.n)
            worst = max(worst, np.linalg.norm(
                extended_pseudo_gradient(g, consensual_stack(g, x)) - pseudo_gradient(g, x)))
    assert worst <= 1e-12


def test_projection_clamps_and_is_idempotent():
    g = two_player((0.0, 5.0))
    np.testing.assert_allclose(project_feasible(g, [7.0, 2.0]), [5.0, 2.0])
    x = np.array([1.0, 4.0])
    np.testing.assert_allclose(project_feasible(g, x), x)


def test_project_extended_only_touches_own_entries():
    g = two_player((0.0, 1.0))
    xb = np.array([0.5, 100.0, -50.0, 0.25])
    np.testing.assert_allclose(project_extended(g, xb), xb)
    out = project_extended(g, np.array([2.0, 100.0, -50.0, -1.0]))
    np.testing.assert_allclose(out, [1.0, 100.0, -50.0, 0.0])


def test_project_extended_is_euclidean_projection():
    # brute-force minimiser of ||y - xb|| over {y : own entries in boxes}
    from scipy.optimize import minimize

    g = GameInstance([1, 1], affine=(np.eye(2), np.zeros(2)), boxes=[(0, 1), (-1, 0.5)])
    rng = np.random.default_rng(2)
    lo = np.array([0, -np.inf, -np.inf, -1])
    hi = np.array([1, np.inf, np.inf, 0.5])
    for _ in range(5):
        xb = rng.standard_normal(4) * 3
        res = minimize(lambda y: np.sum((y - xb) ** 2), np.zeros(4), method="L-BFGS-B",
                       bounds=list(zip(lo, hi)), options={"ftol": 1e-15, "gtol": 1e-12})
        np.testing.assert_allclose(project_extended(g, xb), res.x, atol=1e-6)


def test_select_own_examples():
    g = two_player()
    np.testing.assert_allclose(select_own(g, [1.0, 2.0, 3.0, 4.0]), [1.0, 4.0])
    x = np.array([0.1, 0.2])
    np.testing.assert_allclose(select_own(g, consensual_stack(g, x)), x)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_select_commutes_with_projection(seed):
    g = random_affine_game([1, 2, 2], seed=seed % 7)
    X = np.random.default_rng(seed).standard_normal((3, 5)) * 5
    np.testing.assert_allclose(select_own(g, project_extended(g, X)),
                               project_feasible(g, select_own(g, X)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_projections_are_nonexpansive(seed):
    g = random_affine_game([2, 1], seed=1)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(3) * 4, rng.standard_normal(3) * 4
    assert np.linalg.norm(project_feasible(g, x) - project_feasible(g, y)) <= \
        np.linalg.norm(x - y) + 1e-12
    X, Y = rng.standard_normal((2, 3)) * 4, rng.standard_normal((2, 3)) * 4
    assert np.linalg.norm(project_extended(g, X) - project_extended(g, Y)) <= \
        np.linalg.norm(X - Y) + 1e-12


def test_constants_scaled_identity():
    k = estimate_constants(GameInstance([1, 1], affine=(2 * np.eye(2), np.zeros(2))))
    assert k.mu == pytest.approx(2) and k.ell0 == pytest.approx(2) and k.exact


def test_constants_two_player(game2):
    k = estimate_constants(game2)
    assert k.mu == pytest.approx(1) and k.ell0 == pytest.approx(3)
    assert k.mu <= k.ell <= k.ell0


def test_constants_ordering_on_generated_games():
    for s in range(10):
        for g in (random_affine_game([1, 2, 1, 3], seed=s), generate_instance(8, 4, seed=s).game):
            k = estimate_constants(g)
            assert k.mu <= k.ell * (1 + 1e-9) and k.ell <= k.ell0 * (1 + 1e-9)


def test_sampled_constants_flagged_inexact():
    plain = GameInstance([1, 1], [lambda x: np.array([2 * (x[0] - 1) + x[1]]),
                                  lambda x: np.array([2 * (x[1] - 1) + x[0]])])
    k = estimate_constants(plain, sample_budget=500)
    assert not k.exact and k.samples > 0
    assert 0 < k.mu <= k.ell <= k.ell0
    assert k.mu >= 1 - 1e-9 and k.ell0 <= 3 + 1e-9


def test_not_monotone_raises():
    with pytest.raises(MonotonicityError):
        estimate_constants(GameInstance([1, 1], affine=(np.diag([1.0, -1.0]), np.zeros(2))))


def test_market_gradients_match_finite_differences():
    inst = generate_instance(N=5, m=3, seed=2)
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 5, inst.game.n)
    h = 1e-6
    for i in range(5):
        sl = inst.game.slices[i]
        fd = []
        for j in range(sl.start, sl.stop):
            e = np.zeros(inst.game.n)
            e[j] = h
            fd.append((inst.cost(i, x + e) - inst.cost(i, x - e)) / (2 * h))
        np.testing.assert_allclose(inst.analytic_gradient(i, x), fd, rtol=1e-6)
        np.testing.assert_allclose(pseudo_gradient(inst.game, x)[sl], fd, rtol=1e-6)


def test_json_roundtrip(tmp_path):
    g = generate_instance(N=4, m=3, seed=1).game
    doc = game_to_dict(g)
    assert set(doc) >= {"dims", "boxes", "affine", "meta"}
    h = game_from_dict(doc)
    np.testing.assert_array_equal(h.gamma, g.gamma)
    np.testing.assert_array_equal(h.hi, g.hi)
    free = g.without_boxes()
    save_game(free, tmp_path / "g.json")
    back = load_game(tmp_path / "g.json")
    assert back.is_unbounded and back.dims == g.dims
