import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg
from scipy.signal import lfilter

from utils import imitation
from utils.imitation import (AbortEpoch, IladConfig, RolloutBatch, Trajectory, ValueDataset, bc_loss, bc_pretrain,
                             bc_update, collect_rollouts, dapg_gradient, demo_advantage, demo_l_values,
                             discounted_returns, fit_value_functions, gae_advantages, ilad_gradient,
                             normalized_weights, parse_mode, run_episode, train, traj_neg_log_likelihood, trpo_step,
                             value_features)
from utils.nets import GradientVector, ObsBatch, PolicyParams, ValueParams, batch_log_prob, load_checkpoint
from utils.parse import read_csv, read_json
from utils.planner import Demonstration, DemoSet, GraspTarget
from utils.shapes import PointCloud, generate_category_instances
from utils.sim import Observation, reset

HERE = os.path.dirname(__file__)
TINY = dict(epochs=2, n_traj_per_epoch=2, horizon=8, cloud_points=16, encoder_widths=[8], post_pool_widths=[8],
            mlp_widths=[8], value_widths=[8], bc_minibatch=16, bc_epochs_per_update=1, value_epochs=1, T=1,
            checkpoint_every=1)


def make_obs(rng, cloud=None):
    cloud = PointCloud(rng.uniform(-0.2, 0.2, size=(16, 2))) if cloud is None else cloud
    return Observation(cloud, rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 7), rng.uniform(-1, 1, 2))


def small_policy(seed=0, use_encoder=True):
    return PolicyParams.create(seed, use_encoder, (8, 12), (10, 6), (9, 9), -0.5)


def fake_batch(params, lengths, seed=0, k=0):
    """Rollouts with random observations whose log-probs match ``params``."""
    rng = np.random.default_rng(seed)
    trajectories = []
    for i, n in enumerate(lengths):
        cloud = PointCloud(rng.uniform(-0.2, 0.2, size=(16, 2)))
        observations = [make_obs(rng, cloud) for _ in range(n)]
        actions = rng.normal(0, 0.5, size=(n, 7))
        log_probs, _ = batch_log_prob(params, ObsBatch.from_observations(observations), actions)
        trajectories.append(Trajectory(i, observations, actions, rng.normal(size=n), log_probs, False))
    return RolloutBatch(trajectories, k)


def fake_demos(lengths, seed=1):
    rng = np.random.default_rng(seed)
    demos = []
    for i, n in enumerate(lengths):
        cloud = PointCloud(rng.uniform(-0.2, 0.2, size=(16, 2)))
        pairs = [(make_obs(rng, cloud), rng.normal(0, 0.05, 7)) for _ in range(n)]
        demos.append(Demonstration(100 + i, pairs, 0.01, GraspTarget.palm_only()))
    return DemoSet(demos)


def reward_batch(rewards_per_traj):
    rng = np.random.default_rng(0)
    trajectories = []
    for i, rewards in enumerate(rewards_per_traj):
        n = len(rewards)
        trajectories.append(Trajectory(i, [make_obs(rng) for _ in range(n)], np.zeros((n, 7)), rewards,
                                       np.zeros(n), False))
    return RolloutBatch(trajectories, 0)


def test_config_defaults():
    cfg = IladConfig()
    assert cfg.lambda0 == 0.1
    assert cfg.lambda1 == 0.99
    assert cfg.T == 50
    assert cfg.kl_limit == 0.01
    assert cfg.resolved_lambda0_prime == pytest.approx(0.01)
    assert cfg.mlp_widths == [32, 32]


@pytest.mark.parametrize("filename", ["test_config.txt", "test_config.json"])
def test_config_from_file(filename):
    cfg = IladConfig.from_file(os.path.join(HERE, filename))
    assert cfg.lambda0 == 0.2
    assert cfg.lambda1 == 0.9
    assert cfg.T == 5
    assert isinstance(cfg.T, int)
    assert cfg.epochs == 3
    assert cfg.n_traj_per_epoch == 4
    assert cfg.joint_learning is True
    assert cfg.mlp_widths == [16, 16]
    assert cfg.lambda0_prime is None
    assert cfg.resolved_lambda0_prime == pytest.approx(0.02)


def test_config_text_and_json_agree():
    assert IladConfig.from_file(os.path.join(HERE, "test_config.txt")) == \
        IladConfig.from_file(os.path.join(HERE, "test_config.json"))


def test_config_template_loads():
    cfg = IladConfig.from_file(os.path.join(HERE, "..", "data", "template_config.txt"))
    assert cfg == IladConfig.from_dict(cfg.to_dict())


@pytest.mark.parametrize("params", [
    {"no_such_field": 1},
    {"lambda1": 1.0},
    {"lambda1": 0.0},
    {"T": 0}])
def test_config_rejects(params):
    with pytest.raises(ValueError):
        IladConfig.from_dict(params)


def test_config_copy():
    cfg = IladConfig()
    other = cfg.copy(seed=5)
    assert other.seed == 5
    assert cfg.seed == 0
    assert other != cfg
    assert "seed=5" in repr(other)


def test_coefficient_schedules():
    cfg = IladConfig(lambda0=0.5, lambda1=0.5, lambda0_prime=0.2)
    assert cfg.demo_coefficient(0) == 0.5
    assert cfg.demo_coefficient(2) == 0.125
    assert cfg.advantage_coefficient(0) == 0.0
    assert cfg.advantage_coefficient(1) == pytest.approx(0.1)


@pytest.mark.parametrize("mode, joint, expected", [
    ("RL", None, False),
    ("RL", True, False),
    ("rl-pc", None, True),
    ("DAPG_PC", None, False),
    ("dapg-pc", True, True),
    ("ilad", None, True),
    ("ILAD", False, False)])
def test_resolved_joint_learning(mode, joint, expected):
    assert IladConfig(joint_learning=joint).resolved_joint_learning(mode) is expected


@pytest.mark.parametrize("name, expected", [
    ("rl", "RL"),
    ("rl-pc", "RL_PC"),
    ("DAPG_PC", "DAPG_PC"),
    ("Ilad", "ILAD")])
def test_parse_mode(name, expected):
    assert parse_mode(name) == expected


def test_parse_mode_unknown():
    with pytest.raises(ValueError):
        parse_mode("ppo")


def test_discounted_returns_stop_at_episode_ends():
    batch = reward_batch([[1.0, 1.0, 1.0], [2.0]])
    assert np.allclose(discounted_returns(batch, 0.5), [1.75, 1.5, 1.0, 2.0])


def test_gae_with_unit_lambda_and_zero_values_is_the_return():
    batch = reward_batch([[0.3, -1.0, 2.0, 0.5], [1.0, 1.0]])
    values = np.zeros(batch.n_pairs)
    assert np.allclose(gae_advantages(batch, values, 0.9, 1.0, normalize=False), discounted_returns(batch, 0.9))


def test_gae_with_zero_lambda_is_the_td_residual():
    batch = reward_batch([[1.0, 2.0, 3.0]])
    values = np.array([0.5, -0.5, 1.0])
    expected = [1.0 + 0.9 * -0.5 - 0.5, 2.0 + 0.9 * 1.0 + 0.5, 3.0 - 1.0]
    assert np.allclose(gae_advantages(batch, values, 0.9, 0.0, normalize=False), expected)


@settings(max_examples=25)
@given(st.integers(min_value=0, max_value=2 ** 16), st.floats(0.5, 0.999), st.floats(0.0, 1.0))
def test_gae_matches_filtered_residuals(seed, gamma, lam):
    rng = np.random.default_rng(seed)
    lengths = rng.integers(1, 6, size=3)
    batch = reward_batch([rng.normal(size=n) for n in lengths])
    values = rng.normal(size=batch.n_pairs)
    expected = []
    start = 0
    for traj in batch.trajectories:
        v = np.append(values[start:start + len(traj)], 0.0)
        deltas = traj.rewards + gamma * v[1:] - v[:-1]
        expected.append(lfilter([1.0], [1.0, -gamma * lam], deltas[::-1])[::-1])
        start += len(traj)
    assert np.allclose(gae_advantages(batch, values, gamma, lam, normalize=False), np.concatenate(expected))


def test_gae_normalized():
    batch = reward_batch([[1.0, 0.0, 3.0], [2.0, 5.0]])
    advantages = gae_advantages(batch, np.zeros(5), 0.99, 0.97)
    assert np.isclose(advantages.mean(), 0.0, atol=1e-12)
    assert np.isclose(advantages.std(), 1.0, atol=1e-6)


def test_two_state_advantages_match_dynamic_programming():
    gamma = 0.5
    rewards = np.array([[1.0, 3.0], [0.0, 0.5]])          # (state, action)
    next_state = np.array([[1, 0], [0, 1]])
    transitions = np.zeros((2, 2, 2))
    transitions[[0, 0, 1, 1], [0, 1, 0, 1], next_state.ravel()] = 1.0
    # Uniform behavior policy evaluated exactly.
    v_exact = linalg.solve(np.eye(2) - gamma * transitions.mean(axis=1), rewards.mean(axis=1))
    q_exact = rewards + gamma * transitions.dot(v_exact)
    states = np.eye(2)
    action_vectors = np.stack([np.zeros(7), np.ones(7)])
    rows = [(s, a) for s in range(2) for a in range(2) for _ in range(20)]
    features = np.array([states[s] for s, _ in rows])
    actions = np.array([action_vectors[a] for _, a in rows])
    returns = np.array([q_exact[s, a] for s, a in rows])

    values = ValueParams(2, (16,), seed=0)
    dataset = ValueDataset(features, actions, returns)
    cfg = IladConfig(value_minibatch=256)
    fit_value_functions(values, dataset, cfg, epochs=1500, lr=0.02)
    v_loss, q_loss = fit_value_functions(values, dataset, cfg, epochs=1000, lr=0.002)
    assert q_loss < 2.5e-3
    assert v_loss == pytest.approx(np.mean((returns - v_exact[[s for s, _ in rows]]) ** 2), abs=0.01)
    for s in range(2):
        adv = demo_advantage(values, np.stack([states[s], states[s]]), action_vectors)
        assert np.allclose(adv, q_exact[s] - v_exact[s], atol=0.05)


def constant_output_values(input_dim, q_value, v_value):
    values = ValueParams(input_dim, (4,), seed=0)
    for net, value in ((values.q_net, q_value), (values.v_net, v_value)):
        flat = np.zeros(net.n_params)
        flat[-1] = value  # output bias
        net.set_flat(flat)
    return values


def test_demo_advantage_arithmetic():
    values = constant_output_values(3, 2.0, 0.5)
    assert demo_advantage(values, np.ones(3), np.zeros(7)) == pytest.approx(1.5)
    rows = demo_advantage(values, np.ones((4, 3)), np.zeros((4, 7)))
    assert rows.shape == (4,)
    assert np.allclose(rows, 1.5)


def test_demo_advantage_zero_when_q_equals_v():
    values = constant_output_values(3, -0.7, -0.7)
    assert demo_advantage(values, np.zeros(3), np.ones(7)) == 0.0


def test_value_fit_on_constant_rewards():
    batch = reward_batch([[2.0]] * 32)  # single-step episodes
    returns = discounted_returns(batch, 0.99)
    assert np.allclose(returns, 2.0)
    features = np.random.default_rng(5).normal(size=(32, 4))
    dataset = ValueDataset(features, batch.actions, returns)
    values = ValueParams(4, (16,), seed=0)
    cfg = IladConfig(value_minibatch=32)
    start = np.mean((values.v_net.forward(features)[0][:, 0] - 2.0) ** 2)
    v_loss, q_loss = fit_value_functions(values, dataset, cfg, epochs=200, lr=0.02)
    assert v_loss < 0.01 < start
    assert q_loss < 0.01
    assert np.allclose(demo_advantage(values, features, batch.actions), 0.0, atol=0.3)


def test_value_fit_on_zero_rewards():
    batch = reward_batch([np.zeros(5)] * 8)
    returns = discounted_returns(batch, 0.99)
    assert not np.any(returns)
    features = np.random.default_rng(6).normal(size=(40, 4))
    dataset = ValueDataset(features, batch.actions, returns)
    values = ValueParams(4, (16,), seed=1)
    cfg = IladConfig(value_minibatch=40)
    losses = [fit_value_functions(values, dataset, cfg, epochs=1, lr=0.01)[0] for _ in range(60)]
    assert all(np.isfinite(losses))
    assert np.mean(losses[-5:]) < np.mean(losses[:5])


def test_value_dataset_rejects_empty():
    with pytest.raises(ValueError):
        ValueDataset(np.zeros((0, 3)), np.zeros((0, 7)), np.zeros(0))


def test_value_features_shape():
    params = small_policy()
    batch = fake_batch(params, [3, 2])
    assert value_features(params, batch.obs).shape == (5, 6 + 12)
    flat = small_policy(use_encoder=False)
    assert value_features(flat, batch.obs).shape == (5, 12)


@pytest.mark.parametrize("l_values, expected", [
    ([1.0, 3.0, 2.0], [0.0, 1.0, 0.5]),
    ([2.0, 2.0], [1.0, 1.0]),
    ([-4.0], [1.0])])
def test_normalized_weights(l_values, expected):
    assert np.allclose(normalized_weights(l_values), expected)


@pytest.mark.parametrize("l_values", [[], [1.0, np.nan], [np.inf, 0.0]])
def test_normalized_weights_rejects(l_values):
    with pytest.raises(ValueError):
        normalized_weights(l_values)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=20))
def test_normalized_weights_range(l_values):
    weights = normalized_weights(l_values)
    assert np.all(weights >= 0) and np.all(weights <= 1)
    if max(l_values) > min(l_values):
        assert weights[int(np.argmax(l_values))] == 1.0
        assert weights[int(np.argmin(l_values))] == 0.0


def test_demo_l_values_match_per_trajectory_likelihood():
    params = small_policy()
    demos = fake_demos([3, 0, 5])
    l_values = demo_l_values(params, demos)
    assert l_values.shape == (3,)
    assert l_values[1] == 0.0
    assert l_values[0] == pytest.approx(traj_neg_log_likelihood(params, demos[0]))
    assert l_values[2] == pytest.approx(traj_neg_log_likelihood(params, demos[2]))
    with pytest.raises(ValueError):
        traj_neg_log_likelihood(params, demos[1])


def test_demo_l_values_without_pairs():
    assert np.array_equal(demo_l_values(small_policy(), fake_demos([0, 0])), np.zeros(2))


def test_ilad_reduces_to_dapg_with_unit_weights_at_epoch_zero():
    params = small_policy()
    batch = fake_batch(params, [4, 3])
    demos = fake_demos([3, 4])
    advantages = np.random.default_rng(5).normal(size=batch.n_pairs)
    values = ValueParams(params.input_dim, (8,), seed=0)
    cfg = IladConfig(unit_weights=True, lambda0_prime=0.5)
    dapg = dapg_gradient(params, batch, demos, cfg, 0, advantages)
    ilad = ilad_gradient(params, batch, demos, values, cfg, 0, advantages)
    assert dapg.layout == ilad.layout
    assert np.array_equal(dapg.flat(), ilad.flat())


def test_ilad_reduces_to_dapg_without_advantage_term():
    params = small_policy()
    batch = fake_batch(params, [4])
    demos = fake_demos([2, 6])
    advantages = np.random.default_rng(6).normal(size=batch.n_pairs)
    values = ValueParams(params.input_dim, (8,), seed=0)
    cfg = IladConfig(unit_weights=True, lambda0_prime=0.0)
    dapg = dapg_gradient(params, batch, demos, cfg, 7, advantages)
    ilad = ilad_gradient(params, batch, demos, values, cfg, 7, advantages)
    assert np.array_equal(dapg.flat(), ilad.flat())


def test_ilad_gradient_weights_and_routing():
    params = small_policy()
    batch = fake_batch(params, [3, 3])
    demos = fake_demos([2, 3, 4])
    values = ValueParams(params.input_dim, (8,), seed=0)
    gradient = ilad_gradient(params, batch, demos, values, IladConfig(), 3, np.ones(batch.n_pairs))
    assert [name for name, _ in gradient.layout] == ["p", "log_std"]
    assert gradient.info["w_min"] == 0.0
    assert gradient.info["w_max"] == 1.0
    assert demos.l_values is not None and len(demos.l_values) == 3
    assert gradient.info["demo_term_norm"] > 0
    assert gradient.info["adv_term_norm"] > 0


def test_dapg_without_demos_is_the_policy_gradient():
    params = small_policy()
    batch = fake_batch(params, [5, 2])
    advantages = np.random.default_rng(2).normal(size=batch.n_pairs)
    gradient = dapg_gradient(params, batch, None, IladConfig(), 0, advantages)
    _, expected = batch_log_prob(params, batch.obs, batch.actions, coef=advantages / batch.n_pairs, route="p")
    assert np.allclose(gradient.flat(), expected.flat())
    assert gradient.info["demo_term_norm"] == 0.0


def test_bc_update_encoder_only():
    params = small_policy()
    batch = fake_batch(params, [6, 6])
    before = {name: params.checksum(name) for name in params.block_names()}
    losses = bc_update(params, batch.obs, batch.actions, IladConfig(bc_minibatch=4), "theta_pc_only", steps=5)
    assert len(losses) == 5
    assert params.checksum("pc") != before["pc"]
    assert params.checksum("p") == before["p"]
    assert params.checksum("log_std") == before["log_std"]


def test_bc_update_all_keeps_log_std():
    params = small_policy()
    batch = fake_batch(params, [6])
    before = {name: params.checksum(name) for name in params.block_names()}
    bc_update(params, batch.obs, batch.actions, IladConfig(bc_minibatch=4), "all", steps=3)
    assert params.checksum("pc") != before["pc"]
    assert params.checksum("p") != before["p"]
    assert params.checksum("log_std") == before["log_std"]


def test_bc_update_reduces_loss():
    params = small_policy()
    batch = fake_batch(params, [10, 10])
    start = bc_loss(params, batch.obs, batch.actions)
    bc_update(params, batch.obs, batch.actions, IladConfig(bc_lr=1e-2, bc_minibatch=20), "all", steps=200)
    assert bc_loss(params, batch.obs, batch.actions) < start


def test_bc_update_default_step_count():
    params = small_policy()
    batch = fake_batch(params, [10])
    losses = bc_update(params, batch.obs, batch.actions, IladConfig(bc_minibatch=4, bc_epochs_per_update=2))
    assert len(losses) == 2 * 3


def test_bc_update_without_encoder_is_a_no_op():
    params = small_policy(use_encoder=False)
    batch = fake_batch(params, [4])
    before = params.get_flat()
    assert bc_update(params, batch.obs, batch.actions, IladConfig(), "theta_pc_only") == []
    assert np.array_equal(params.get_flat(), before)


@pytest.mark.parametrize("target, n", [("encoder", 3), ("all", 0)])
def test_bc_update_rejects(target, n):
    params = small_policy()
    batch = fake_batch(params, [3])
    with pytest.raises(ValueError):
        bc_update(params, batch.obs, batch.actions[:n], IladConfig(), target)


def test_trpo_step_respects_kl_limit():
    params = small_policy()
    batch = fake_batch(params, [8, 8])
    advantages = np.random.default_rng(3).normal(size=batch.n_pairs)
    cfg = IladConfig(kl_limit=0.01)
    gradient = dapg_gradient(params, batch, fake_demos([4]), cfg, 0, advantages)
    encoder = params.checksum("pc")
    before = params.get_flat("p")
    result = trpo_step(params, gradient, batch, cfg)
    assert result["accepted"]
    assert 0 <= result["kl"] <= cfg.kl_limit
    assert result["improvement"] > 0
    assert params.checksum("pc") == encoder
    assert not np.array_equal(params.get_flat("p"), before)


def test_trpo_step_zero_gradient():
    params = small_policy()
    batch = fake_batch(params, [3])
    before = params.get_flat()
    zero = GradientVector({"p": np.zeros(params.mlp.n_params), "log_std": np.zeros(7)})
    result = trpo_step(params, zero, batch, IladConfig())
    assert not result["accepted"]
    assert np.array_equal(params.get_flat(), before)


def test_trpo_step_aborts_on_non_finite_gradient():
    params = small_policy()
    batch = fake_batch(params, [3])
    bad = np.zeros(params.mlp.n_params)
    bad[0] = np.nan
    with pytest.raises(AbortEpoch):
        trpo_step(params, GradientVector({"p": bad, "log_std": np.zeros(7)}), batch, IladConfig())


def test_run_episode_deterministic_with_mean_actions():
    obj = generate_category_instances("can", 1, 0)[0]
    cfg = IladConfig(**TINY)
    params = PolicyParams.create(0, True, cfg.encoder_widths, cfg.post_pool_widths, cfg.mlp_widths)
    first = run_episode(params, obj, 3, cfg.sim_config())
    second = run_episode(params, obj, 3, cfg.sim_config())
    assert len(first) == cfg.horizon
    assert np.array_equal(first.actions, second.actions)
    assert first.total_reward == second.total_reward


def tiny_demos(objects, cfg):
    rng = np.random.default_rng(0)
    demos = []
    for obj in objects:
        _, obs = reset(obj, 0, cfg.sim_config())
        demos.append(Demonstration(obj.instance_id, [(obs, rng.normal(0, 0.02, 7)) for _ in range(3)], 0.01,
                                   GraspTarget.palm_only()))
    return DemoSet(demos)


@pytest.fixture(scope="module")
def cans():
    return generate_category_instances("can", 2, 0)


def test_train_writes_run_directory(tmpdir, cans):
    cfg = IladConfig(**TINY)
    out = str(tmpdir.join("run"))
    params, metrics = train(cans, tiny_demos(cans, cfg), cfg, "ilad", out_dir=out, workers=1)
    assert len(metrics) == cfg.epochs
    assert params.all_finite()
    rows = read_csv(os.path.join(out, "metrics.csv"))
    assert [int(row["epoch"]) for row in rows] == [0, 1]
    assert all(row["pc_updated"] == "1" for row in rows)
    manifest = read_json(os.path.join(out, "manifest.json"))
    assert manifest["mode"] == "ILAD"
    assert manifest["joint_learning"] is True
    assert manifest["demonstrations"] == 2
    assert os.path.exists(os.path.join(out, "checkpoint_0001.npz"))
    loaded, header = load_checkpoint(os.path.join(out, "policy.npz"))
    assert np.array_equal(loaded.get_flat(), params.get_flat())
    assert header["extra"]["mode"] == "ILAD"


def test_train_is_reproducible(cans):
    cfg = IladConfig(**TINY)
    first, metrics = train(cans, tiny_demos(cans, cfg), cfg, "dapg-pc", workers=1)
    second, again = train(cans, tiny_demos(cans, cfg), cfg, "dapg-pc", workers=1)
    assert np.array_equal(first.get_flat(), second.get_flat())
    assert [m["mean_return"] for m in metrics] == [m["mean_return"] for m in again]
    assert not any(m["pc_updated"] for m in metrics)


def test_rl_gradient_never_reaches_the_encoder(cans):
    cfg = IladConfig(**TINY)
    layouts = []
    train(cans, None, cfg, "rl-pc", workers=1, on_gradient=lambda k, g: layouts.append(g.layout))
    assert len(layouts) == cfg.epochs
    assert all([name for name, _ in layout] == ["p", "log_std"] for layout in layouts)


def test_flat_state_baseline_has_no_encoder(cans):
    params, _ = train(cans, None, IladConfig(**dict(TINY, epochs=1)), "rl", workers=1)
    assert not params.uses_encoder
    assert params.input_dim == 12


@pytest.mark.parametrize("mode", ["dapg-pc", "ilad"])
def test_train_needs_demonstrations(cans, mode):
    with pytest.raises(ValueError):
        train(cans, None, IladConfig(**TINY), mode)
    with pytest.raises(ValueError):
        train(cans, DemoSet(), IladConfig(**TINY), mode)


def test_train_needs_objects():
    with pytest.raises(ValueError):
        train([], None, IladConfig(**TINY), "rl")


def test_ilad_training_reduces_to_dapg_training(cans):
    cfg = IladConfig(**dict(TINY, epochs=5, unit_weights=True, lambda0_prime=0.0, joint_learning=False))
    flats = {"ilad": [], "dapg-pc": []}
    for mode in flats:
        train(cans, tiny_demos(cans, cfg), cfg, mode, workers=1,
              on_gradient=lambda k, g, out=flats[mode]: out.append(g.flat()))
    assert len(flats["ilad"]) == 5
    for ilad, dapg in zip(flats["ilad"], flats["dapg-pc"]):
        assert np.array_equal(ilad, dapg)


def test_encoder_updates_follow_the_interval(cans):
    cfg = IladConfig(**dict(TINY, epochs=4, T=2))
    layouts = []
    _, metrics = train(cans, tiny_demos(cans, cfg), cfg, "ilad", workers=1,
                       on_gradient=lambda k, g: layouts.append(g.layout))
    assert [m["pc_updated"] for m in metrics] == [True, False, True, False]
    assert all([name for name, _ in layout] == ["p", "log_std"] for layout in layouts)


def test_collect_rollouts_counts_and_log_probs(cans):
    cfg = IladConfig(**dict(TINY, n_traj_per_epoch=3))
    params = PolicyParams.create(0, True, cfg.encoder_widths, cfg.post_pool_widths, cfg.mlp_widths)
    batch = collect_rollouts(params, cans, cfg, 0, workers=1)
    assert len(batch) == 3
    assert batch.n_pairs == 3 * cfg.horizon
    assert {t.object_id for t in batch.trajectories} <= {o.instance_id for o in cans}
    recomputed, _ = batch_log_prob(params, batch.obs, batch.actions)
    assert np.max(np.abs(recomputed - batch.log_probs)) < 1e-10


def test_collect_rollouts_is_seeded(cans):
    cfg = IladConfig(**dict(TINY, n_traj_per_epoch=3))
    params = PolicyParams.create(0, True, cfg.encoder_widths, cfg.post_pool_widths, cfg.mlp_widths, -20.0)
    first = collect_rollouts(params, cans, cfg, 2, workers=1)
    second = collect_rollouts(params, cans, cfg, 2, workers=1)
    assert np.array_equal(first.rewards, second.rewards)
    assert np.array_equal(first.actions, second.actions)
    other = collect_rollouts(params, cans, cfg.copy(seed=1), 2, workers=1)
    assert not np.array_equal(first.rewards, other.rewards)


def test_collect_rollouts_needs_objects():
    with pytest.raises(ValueError):
        collect_rollouts(small_policy(), [], IladConfig(**TINY), 0)


def test_refresh_log_probs_follows_the_encoder():
    params = small_policy()
    batch = fake_batch(params, [4, 3])
    params.set_block("pc", params.get_block("pc") + 0.1)
    assert np.max(np.abs(batch_log_prob(params, batch.obs, batch.actions)[0] - batch.log_probs)) > 1e-6
    batch.refresh_log_probs(params)
    assert np.allclose(batch_log_prob(params, batch.obs, batch.actions)[0], batch.log_probs, atol=1e-12)
    assert [len(t.log_probs) for t in batch.trajectories] == [4, 3]


def test_bc_pretrain_reduces_the_demo_loss():
    params = small_policy()
    demos = fake_demos([6, 5, 7])
    obs, actions, _ = demos.pair_arrays()
    before = bc_loss(params, obs, actions)
    log_std = params.log_std.copy()
    assert bc_pretrain(params, demos, IladConfig(bc_lr=0.01, bc_epochs_per_update=50)) is params
    assert bc_loss(params, obs, actions) < before
    assert np.array_equal(params.log_std, log_std)


@pytest.mark.parametrize("demos", [None, DemoSet(), DemoSet([Demonstration(1, [], 0.0, GraspTarget.palm_only())])])
def test_bc_pretrain_needs_demonstrations(demos):
    with pytest.raises(ValueError):
        bc_pretrain(small_policy(), demos, IladConfig())


def test_trust_region_step_starts_from_the_updated_encoder(monkeypatch, cans):
    ratios = []
    trust_region_step = imitation.trpo_step

    def recording_step(params, gradient, batch, cfg, surrogate=None):
        rollout = gradient.surrogate
        current, _ = batch_log_prob(params, rollout.obs, rollout.actions)
        ratios.append(np.max(np.abs(np.exp(current - rollout.old_log_probs) - 1.0)))
        assert rollout(params) == pytest.approx(np.sum(rollout.rollout_coef), abs=1e-10)
        return trust_region_step(params, gradient, batch, cfg, surrogate)

    monkeypatch.setattr(imitation, "trpo_step", recording_step)
    cfg = IladConfig(**dict(TINY, epochs=3, T=1))
    _, metrics = train(cans, None, cfg, "rl-pc", workers=1)
    assert all(m["pc_updated"] for m in metrics)
    assert len(ratios) == 3
    assert max(ratios) < 1e-10


def test_kl_stays_within_the_trust_region(cans):
    cfg = IladConfig(**dict(TINY, epochs=4, n_traj_per_epoch=3, kl_limit=0.005))
    _, metrics = train(cans, tiny_demos(cans, cfg), cfg, "ilad", workers=1)
    assert len(metrics) == 4
    for row in metrics:
        if row["trpo_accepted"]:
            assert 0 <= row["kl"] <= cfg.kl_limit
        else:
            assert np.isnan(row["kl"]) or row["kl"] == 0.0
