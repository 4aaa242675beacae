import numpy as np
import pytest

from tvnash.game import GameInstance

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def two_player(box=None):
    """J_i = (x_i - 1)^2 + x_1 x_2, so F(x) = (2(x_1 - 1) + x_2, 2(x_2 - 1) + x_1)."""
    grads = [lambda x: np.array([2 * (x[0] - 1) + x[1]]),
             lambda x: np.array([2 * (x[1] - 1) + x[0]])]
    boxes = None if box is None else [box, box]
    return GameInstance([1, 1], grads, boxes=boxes,
                        affine=(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([-2.0, -2.0])))


@pytest.fixture
def game2():
    return two_player()


@pytest.fixture
def game2_box():
    return two_player((0.0, 0.5))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
