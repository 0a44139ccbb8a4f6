import numpy as np
import pytest

from oracles import value_iteration
from symrm import logic
from symrm.envs import (labeled_factory, make_labeled, make_task, office_continuous, office_discrete,
                        task_factory, task_srm)
from symrm.learn import (Hyperparameters, PlainModel, QTable, SrmModel, TabularAgent, TrainingFault,
                         epsilon_greedy, q_learning, qsrm)
from symrm.learn.crossproduct import ProductMdp, cross_product_check, perturb_output
from symrm.learn.deep import (FrameStack, Replay, Scaler, deep_hyperparameters, deep_q, dqn_framestack,
                              dqrm, dqsrm)
from symrm.learn.nn import Adam, Mlp, gradient_check, train_step
from symrm.srm import Srm, Transition


class Chain:
    """Deterministic corridor 0..n-1; reaching the right end pays 1 and terminates."""

    variables = ("x",)
    n_actions = 2

    def __init__(self, n=5, cap=50):
        self.n, self.cap = n, cap

    def reset(self):
        self.s, self.t = (0,), 0
        return self.s, {}

    def next(self, s, a):
        return (min(max(s[0] + (1 if a else -1), 0), self.n - 1),)

    def step(self, a):
        self.s = self.next(self.s, a)
        self.t += 1
        done = self.s[0] == self.n - 1
        return self.s, float(done), done, (not done and self.t >= self.cap), {}


class Corridor:
    """Base environment (3-tuple step) for the cross-product check."""

    variables = ("x",)
    n_actions = 2

    def reset(self):
        self.s = (0,)
        return self.s

    def step(self, a):
        self.s = (min(max(self.s[0] + (1 if a else -1), 0), 4),)
        return self.s, 0.0, False


def corridor_machine():
    right, left = (logic.Cmp(">=", logic.Var("x"), logic.Num(4.0)),
                   logic.Cmp("<=", logic.Var("x"), logic.Num(0.0)))
    return Srm(("x",), (0, 1), 0, (
        Transition(0, right, 1, 1.0), Transition(0, logic.Not(right), 0, 0.0),
        Transition(1, left, 0, 3.0), Transition(1, logic.Not(left), 1, 0.0)))


def test_epsilon_greedy_draw_order_and_ties():
    vals = np.array([0.0, 2.0, 2.0])
    rng = np.random.default_rng(0)
    assert epsilon_greedy(vals, 0.0, rng) == 1
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    for _ in range(200):
        got = epsilon_greedy(vals, 0.3, a)
        explore = b.random() < 0.3
        want = int(b.integers(3)) if explore else 1
        assert got == want


def test_qtable_defaults_to_one_and_peek_does_not_insert():
    q = QTable(4)
    assert np.array_equal(q.peek((3, 3)), np.ones(4)) and len(q) == 0
    q[(3, 3)][2] = 5
    assert len(q) == 1 and q.peek((3, 3))[2] == 5


def test_q_learning_converges_to_value_iteration():
    env = Chain()
    hp = Hyperparameters(alpha=0.5, gamma=0.9, epsilon=1.0, total_steps=20_000, seed=0)
    res = q_learning(env, hp)
    states = [(i,) for i in range(env.n - 1)]
    oracle = value_iteration(states + [(env.n - 1,)], [0, 1], env.next,
                             lambda s, a, s2: float(s2[0] == env.n - 1), 0.9,
                             terminal=lambda s: s[0] == env.n - 1)
    table = res.values[0]
    for s in states:
        np.testing.assert_allclose(table[s], oracle[s], atol=1e-9)


def test_zero_discount_learns_immediate_reward():
    env = Chain(n=3)
    res = q_learning(env, Hyperparameters(alpha=0.5, gamma=0.0001, epsilon=1.0, total_steps=5000))
    t = res.values[0]
    assert t[(1,)][1] == pytest.approx(1.0, abs=1e-3)
    assert t[(1,)][0] == pytest.approx(0.0, abs=1e-3)
    assert t[(0,)][1] == pytest.approx(0.0, abs=1e-3)


def test_single_state_qsrm_equals_q_learning():
    env_a, env_b = Chain(), Chain()
    goal = logic.Cmp(">=", logic.Var("x"), logic.Num(4.0))
    machine = Srm(("x",), (0,), 0, (Transition(0, goal, 0, 1.0),
                                    Transition(0, logic.Not(goal), 0, 0.0)))
    hp = Hyperparameters(total_steps=3000, seed=4)
    a = q_learning(env_a, hp)
    b = qsrm(env_b, machine, hp)
    assert a.values[0].equals(b.values[0])
    assert [e.ret for e in a.episodes] == [e.ret for e in b.episodes]


def test_multi_update_touches_every_machine_state():
    env = make_task(office_discrete(), "post_inner_offices")
    res = qsrm(env, task_srm("post_inner_offices"), Hyperparameters(total_steps=777))
    assert res.extra["updates"] == 777 * 4


def test_value_bound_guard_trips_on_divergence():
    agent = TabularAgent(PlainModel(), 2, Hyperparameters(alpha=0.9, gamma=0.5))
    agent.tables[0][(0,)][0] = 1e6
    with pytest.raises(TrainingFault):
        agent.observe((1,), 0, (0,), 0.0, {}, False, 0)


def test_termination_and_terminal_rewards():
    hp = Hyperparameters(alpha=0.5, gamma=0.5)
    agent = TabularAgent(SrmModel(corridor_machine()), 2, hp)
    agent.observe((3,), 1, (4,), 1.0, {}, True, 0)
    # live state 0: target 1 (terminal)  -> 1 + 0.5 * (1 - 1) = 1
    assert agent.tables[0].peek((3,))[1] == 1.0
    # state 1 pays 0, which is not a terminal reward, so it bootstraps:
    # target 0 + 0.5 * 1 -> 1 + 0.5 * (0.5 - 1)
    assert agent.tables[1].peek((3,))[1] == 0.75

    pays = Srm(("x",), (0, 1), 0, (Transition(0, logic.TRUE, 0, 0.0),
                                   Transition(1, logic.TRUE, 1, 2.0)))
    agent = TabularAgent(SrmModel(pays), 2, hp)
    agent.tables[1][(4,)][:] = 9.0
    agent.observe((3,), 0, (4,), 0.0, {}, False, 0)
    # 2 has not been seen ending an episode yet: state 1 bootstraps from the 9s
    assert agent.tables[1].peek((3,))[0] == 1 + 0.5 * (2.0 + 0.5 * 9.0 - 1)
    agent.terminal.record(2.0, True)
    agent.observe((5,), 0, (4,), 0.0, {}, False, 0)
    # now paying 2 is terminal even on a counterfactual, non-terminating step
    assert agent.tables[1].peek((5,))[0] == 1.5
    agent.terminal.record(2.0, False)
    agent.observe((6,), 0, (4,), 0.0, {}, False, 0)
    assert agent.tables[1].peek((6,))[0] == 1 + 0.5 * (2.0 + 0.5 * 9.0 - 1)


def test_cross_product_equivalence_and_negative_control():
    hp = Hyperparameters(seed=3, episode_cap=60)
    rep = cross_product_check(Corridor, corridor_machine(), hp, steps=10_000)
    assert rep.equal and rep.updates == 20_000
    bad = cross_product_check(Corridor, corridor_machine(), hp, steps=10_000,
                              product_machine=perturb_output(corridor_machine(), 2))
    assert not bad.equal and bad.first_divergence is not None


def test_cross_product_on_office_task():
    rep = cross_product_check(office_discrete, task_srm("post_inner_offices"),
                              Hyperparameters(seed=0), steps=10_000)
    assert rep.equal and rep.updates == 40_000


def test_cross_product_single_state_machine():
    one = Srm(("x", "y"), (0,), 0, (Transition(0, logic.TRUE, 0, 0.0),))
    assert cross_product_check(office_discrete, one, Hyperparameters(seed=1), steps=2000).equal


def test_product_reward_is_iverson_sum():
    p = ProductMdp(Corridor(), corridor_machine())
    assert p.reward_and_next(0, (4,)) == (1.0, 1)
    assert p.reward_and_next(1, (0,)) == (3.0, 0)
    assert p.reward_and_next(1, (2,)) == (0.0, 1)


# -- networks -------------------------------------------------------------

def test_zero_weights_output_biases():
    net = Mlp((3, 5, 2), np.random.default_rng(0))
    net.flat[:] = 0
    net.biases[-1][:] = [1.5, -2.0]
    np.testing.assert_array_equal(net.predict(np.ones((4, 3))), np.tile([1.5, -2.0], (4, 1)))


def test_views_share_storage():
    net = Mlp((2, 4, 3), np.random.default_rng(1))
    net.weights[0][0, 0] = 7.0
    assert net.flat[0] == 7.0
    c = net.clone()
    c.flat[0] = 0.0
    assert net.weights[0][0, 0] == 7.0
    assert net.n_params == 2 * 4 + 4 + 4 * 3 + 3


@pytest.mark.parametrize("seed", range(20))
def test_gradient_check(seed):
    rng = np.random.default_rng(seed)
    sizes = (int(rng.integers(1, 5)), int(rng.integers(2, 8)), int(rng.integers(2, 6)),
             int(rng.integers(1, 4)))
    net = Mlp(sizes, rng)
    # nonzero biases keep pre-activations off the ReLU kink at exactly 0
    for b in net.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=(6, sizes[0]))
    a = rng.integers(sizes[-1], size=6)
    y = rng.normal(size=6)
    assert gradient_check(net, x, a, y) < 1e-4


def test_network_overfits_small_batch():
    rng = np.random.default_rng(0)
    net = Mlp((2, 32, 3), rng)
    opt = Adam(net.flat, lr=1e-2)
    x = rng.uniform(-1, 1, size=(16, 2))
    a = rng.integers(3, size=16)
    y = rng.normal(size=16)
    for _ in range(2000):
        loss = train_step(net, opt, x, a, y)
    assert loss < 1e-3


def test_single_sample_overfit():
    rng = np.random.default_rng(1)
    net = Mlp((4, 64, 64, 3), rng)
    opt = Adam(net.flat, lr=1e-3)
    x, a, y = rng.uniform(-1, 1, size=(1, 4)), np.array([2]), np.array([7.5])
    for step in range(1, 5001):
        loss = train_step(net, opt, x, a, y)
        if loss < 1e-6:
            break
    assert loss < 1e-6 and step <= 5000


def test_adam_clips_gradient_norm():
    p = np.zeros(2)
    opt = Adam(p, lr=1.0, clip_norm=1.0)
    opt.step(np.array([300.0, 400.0]))
    # first Adam step moves each coordinate by about lr regardless of scale
    np.testing.assert_allclose(p, [-1.0, -1.0], atol=1e-6)


def test_frame_stack_pads_and_shifts():
    fs = FrameStack(3, Scaler([0.0], [2.0]))
    np.testing.assert_array_equal(fs.reset((2.0,)), [1, 1, 1])
    np.testing.assert_array_equal(fs.push((0.0,)), [1, 1, -1])
    np.testing.assert_array_equal(fs.push((1.0,)), [1, -1, 0])


def test_replay_ring_buffer():
    rb = Replay(3, 1, 2)
    for i in range(5):
        rb.add([i], 0, [i + 1], [0, 1], [0, 1], [0, 0])
    assert rb.size == 3 and sorted(rb.obs[:, 0]) == [2, 3, 4]


def small_deep(**kw):
    return deep_hyperparameters(total_steps=1500, eval_interval=500, eval_runs=2, eval_cap=100,
                                learn_start=200, hidden=(16,), replay_size=2000, seed=7, **kw)


def test_single_frame_stack_equals_plain_deep_q():
    hp = small_deep()
    mk = lambda: make_task(office_continuous(), "post_inner_offices")
    a = deep_q(mk(), hp)
    b = dqn_framestack(mk(), hp, stack=1)
    np.testing.assert_array_equal(a.values[0].flat, b.values[0].flat)
    assert [e.ret for e in a.episodes] == [e.ret for e in b.episodes]


def test_dqrm_equals_dqsrm_seed_matched():
    hp = small_deep()
    labeled, rm = make_labeled(office_continuous(), "post_inner_offices")
    hidden = make_task(office_continuous(), "post_inner_offices")
    a = dqrm(labeled, rm, hp, labeled_factory("office-continuous", "post_inner_offices"))
    b = dqsrm(hidden, task_srm("post_inner_offices"), hp,
              task_factory("office-continuous", "post_inner_offices"))
    assert a.performance == b.performance
    for u in rm.states:
        np.testing.assert_array_equal(a.values[u].flat, b.values[u].flat)
