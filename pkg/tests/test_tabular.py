import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdcfr.evaluation import exploitability
from sdcfr.games import make_game
from sdcfr.tabular import (
    AvgStrategyTable,
    EmptyActionSet,
    TabularCFR,
    average_strategy,
    cfr_iteration,
    read_snapshot,
    regret_matching,
    write_snapshot,
)


def test_regret_matching_examples():
    assert np.allclose(regret_matching([1.0, 3.0, -2.0]), [0.25, 0.75, 0.0])
    assert np.allclose(regret_matching([-1.0, 0.0, -5.0]), [1 / 3] * 3)
    assert np.allclose(regret_matching([-1.0, -3.0], fallback="argmax"), [1.0, 0.0])
    with pytest.raises(EmptyActionSet):
        regret_matching([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=6))
def test_regret_matching_is_a_distribution(r):
    p = regret_matching(r)
    assert p.min() >= 0.0
    assert p.sum() == pytest.approx(1.0)
    pos = np.maximum(r, 0.0)
    if pos.sum() > 0:
        assert np.all(p[pos == 0] == 0)


def test_average_strategy_zero_reach_is_uniform():
    table = AvgStrategyTable()
    assert np.allclose(average_strategy(table, b"x", 3), [1 / 3] * 3)
    table.add(b"x", 2.0, 0.0, np.array([1.0, 0.0]))
    assert np.allclose(average_strategy(table, b"x", 2), [0.5, 0.5])
    table.add(b"x", 1.0, 0.5, np.array([1.0, 0.0]))
    table.add(b"x", 3.0, 0.5, np.array([0.0, 1.0]))
    assert np.allclose(average_strategy(table, b"x", 2), [0.25, 0.75])


def test_modes_validated():
    game = make_game("kuhn")
    with pytest.raises(ValueError):
        TabularCFR(game, mode="plus")
    with pytest.raises(ValueError):
        TabularCFR(game, updates="sometimes")
    with pytest.raises(ValueError):
        TabularCFR(game, fallback="random")


def test_weights():
    game = make_game("kuhn")
    assert TabularCFR(game, "vanilla").weight(7) == 1.0
    assert TabularCFR(game, "linear").weight(7) == 7.0


def test_alternating_update_order():
    game = make_game("kuhn")
    solver = TabularCFR(game, "linear", "alternating", snapshots=True)
    cfr_iteration(solver)
    # iteration 1 updates player 1 and averages player 0
    assert all(k[0] == 1 for k in solver.regrets)
    assert list(solver.snapshots[0].strategies) == [0]
    cfr_iteration(solver)
    assert list(solver.snapshots[1].strategies) == [1]


@pytest.mark.parametrize(
    "mode,updates,iters,bound",
    [
        ("vanilla", "alternating", 1000, 5.0),
        ("vanilla", "simultaneous", 1000, 25.0),
        ("linear", "alternating", 1000, 5.0),
        ("linear", "simultaneous", 1000, 25.0),
    ],
)
def test_kuhn_convergence(mode, updates, iters, bound):
    game = make_game("kuhn")
    solver = TabularCFR(game, mode, updates).run(iters)
    pol = solver.average_policy()
    assert exploitability(game, (pol, pol)).value < bound


def test_exploitability_decreases_on_leduc():
    game = make_game("leduc")
    solver = TabularCFR(game, "linear")
    values = []
    for _ in range(3):
        solver.run(50)
        pol = solver.average_policy()
        values.append(exploitability(game, (pol, pol)).value)
    assert values[0] > values[1] > values[2]


def test_snapshot_round_trip(tmp_path):
    game = make_game("leduc")
    solver = TabularCFR(game).run(5)
    table = solver.average_table()
    write_snapshot(tmp_path / "avg.bin", table)
    back = read_snapshot(tmp_path / "avg.bin")
    assert list(back) == list(table)
    for k in table:
        assert np.array_equal(back[k], table[k])


def test_argmax_fallback_waits_for_first_update():
    game = make_game("kuhn")
    solver = TabularCFR(game, fallback="argmax")
    # player 0 has had no update yet: uniform despite zero regrets
    assert np.allclose(solver.iteration_strategy(b"\x00\x00", 2, 0), [0.5, 0.5])
    solver.run(2)
    assert np.allclose(solver.iteration_strategy(b"\x00\x00-unseen", 2, 0), [1.0, 0.0])
