"""Policy learning from rollouts and partial demonstrations.

Implements rollout collection, GAE advantages, value and Q fitting, the
demo-augmented policy gradient and its ranked, advantage-weighted variant,
the natural-gradient trust-region step, behavior cloning and the joint
learning training loop.

Gradient sums are means per set: the rollout term averages over rollout
pairs and the demonstration terms average over demonstration pairs.
"""
import logging
import os
from collections import OrderedDict
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from utils.common import parallel_map, rng_for
from utils.nets import (Adam, GradientVector, ObsBatch, PolicyParams, ValueParams, batch_log_prob,
                        conjugate_gradient, embed, fisher_vector_product, gaussian_log_prob, mean_backward,
                        mean_kl, policy_mean, save_checkpoint)
from utils.parse import parse_paramfile, read_json, write_csv, write_json
from utils.planner import DemoSet
from utils.shapes import Polygon
from utils import sim

MODES = ("RL", "RL_PC", "DAPG_PC", "ILAD")
BC_TARGETS = ("theta_pc_only", "all")
METRIC_FIELDS = ["epoch", "mean_return", "success_rate_train", "kl", "bc_loss", "w_min", "w_mean", "w_max",
                 "demo_term_norm", "adv_term_norm", "pc_updated", "trpo_accepted"]


class AbortEpoch(FloatingPointError):
    """Non-finite policy gradient; the epoch makes no policy step."""


def parse_mode(name):
    # type: (str) -> str
    """Accept ``rl-pc`` style command-line names as well as ``RL_PC``."""
    mode = str(name).upper().replace("-", "_")
    if mode not in MODES:
        raise ValueError("Unknown mode '{}', expected one of {}".format(name, MODES))
    return mode


class IladConfig(object):
    """Every hyperparameter of the learning pipeline.

    ``lambda0_prime`` None means 0.1 * lambda0. ``joint_learning`` None means
    the mode default: on for RL_PC and ILAD, off for DAPG_PC.
    """
    _defaults = OrderedDict([
        ("lambda0", 0.1),
        ("lambda1", 0.99),
        ("lambda0_prime", None),
        ("T", 50),
        ("gamma", 0.995),
        ("gae_lambda", 0.97),
        ("kl_limit", 0.01),
        ("cg_iters", 10),
        ("cg_damping", 0.1),
        ("n_traj_per_epoch", 200),
        ("epochs", 300),
        ("bc_lr", 1e-3),
        ("bc_minibatch", 256),
        ("bc_epochs_per_update", 20),
        ("seed", 0),
        ("horizon", 200),
        ("cloud_points", 64),
        ("init_log_std", 0.0),
        ("value_lr", 1e-3),
        ("value_epochs", 10),
        ("value_minibatch", 256),
        ("adv_clip", 10.0),
        ("normalize_advantages", True),
        ("unit_weights", False),
        ("joint_learning", None),
        ("checkpoint_every", 50),
        ("encoder_widths", [64, 128]),
        ("post_pool_widths", [64, 32]),
        ("mlp_widths", [32, 32]),
        ("value_widths", [64, 64]),
        ("reward_reach", 0.1),
        ("reward_grasp", 1.0),
        ("reward_carry", 0.5),
        ("reward_success", 10.0),
        ("reward_action", 0.001),
    ])
    _integers = ("T", "cg_iters", "n_traj_per_epoch", "epochs", "bc_minibatch", "bc_epochs_per_update", "seed",
                 "horizon", "cloud_points", "value_epochs", "value_minibatch", "checkpoint_every")
    _booleans = ("normalize_advantages", "unit_weights", "joint_learning")
    _lists = ("encoder_widths", "post_pool_widths", "mlp_widths", "value_widths")

    def __init__(self, **kwargs):
        for key in kwargs:
            if key not in self._defaults:
                raise ValueError("Unknown IladConfig field '{}'".format(key))
        for key, default in self._defaults.items():
            value = kwargs.get(key)
            setattr(self, key, self._convert(key, default if value is None else value))
        if not 0 < self.lambda1 < 1:
            raise ValueError("lambda1 must be in (0, 1), got {}".format(self.lambda1))
        if self.T < 1:
            raise ValueError("T must be at least 1, got {}".format(self.T))

    def _convert(self, key, value):
        if value is None:
            return None
        if key in self._integers:
            return int(value)
        if key in self._booleans:
            return bool(value)
        if key in self._lists:
            return [int(v) for v in value]
        return float(value)

    @classmethod
    def from_dict(cls, params):
        # type: (Dict[str, Any]) -> IladConfig
        """Build from a mapping; keys match case-insensitively (``t`` is ``T``)."""
        names = {key.lower(): key for key in cls._defaults}
        kwargs = dict()
        for key, value in params.items():
            if key.lower() not in names:
                raise ValueError("Unknown IladConfig field '{}'".format(key))
            if value is None and cls._defaults[names[key.lower()]] is not None:
                logging.warning("IladConfig field '{}' has no value, keeping the default".format(key))
                continue
            kwargs[names[key.lower()]] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, filename):
        # type: (str) -> IladConfig
        """Load a JSON config or a ``key = value`` parameter file."""
        if filename.endswith(".json"):
            return cls.from_dict(read_json(filename))
        return cls.from_dict(parse_paramfile(filename))

    def to_dict(self):
        return OrderedDict((key, getattr(self, key)) for key in self._defaults)

    def copy(self, **changes):
        params = self.to_dict()
        params.update(changes)
        return IladConfig(**params)

    def __eq__(self, other):
        if not isinstance(other, IladConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "IladConfig({})".format(", ".join("{}={}".format(k, v) for k, v in self.to_dict().items()))

    @property
    def resolved_lambda0_prime(self):
        return 0.1 * self.lambda0 if self.lambda0_prime is None else self.lambda0_prime

    def resolved_joint_learning(self, mode):
        # type: (str) -> bool
        mode = parse_mode(mode)
        if mode == "RL":
            return False
        if self.joint_learning is None:
            return mode in ("RL_PC", "ILAD")
        return self.joint_learning

    def demo_coefficient(self, k):
        """lambda0 * lambda1^k, the weight of the demonstration likelihood term."""
        return self.lambda0 * self.lambda1 ** k

    def advantage_coefficient(self, k):
        """lambda0' * (1 - lambda1^k), the weight of the demonstration advantage term."""
        return self.resolved_lambda0_prime * (1.0 - self.lambda1 ** k)

    def sim_config(self):
        # type: () -> sim.SimConfig
        return sim.SimConfig(horizon=self.horizon, cloud_points=self.cloud_points,
                             reward_reach=self.reward_reach, reward_grasp=self.reward_grasp,
                             reward_carry=self.reward_carry, reward_success=self.reward_success,
                             reward_action=self.reward_action)


class Trajectory(object):
    """One episode: observations, actions, rewards and behavior log-probs."""

    def __init__(self, object_id, observations, actions, rewards, log_probs, success, final_distance=float("nan")):
        self.object_id = int(object_id)
        self.observations = list(observations)  # type: List[sim.Observation]
        self.actions = np.asarray(actions, dtype=float).reshape(-1, sim.Q_DIM)
        self.rewards = np.asarray(rewards, dtype=float)
        self.log_probs = np.asarray(log_probs, dtype=float)
        self.success = bool(success)
        self.final_distance = float(final_distance)

    def __len__(self):
        return len(self.rewards)

    @property
    def total_reward(self):
        return float(np.sum(self.rewards))

    def __repr__(self):
        return "Trajectory(object_id={}, steps={}, return={:.3f}, success={})".format(
            self.object_id, len(self), self.total_reward, self.success)


class RolloutBatch(object):
    """Trajectories of one epoch with the pairs concatenated in trajectory order."""

    def __init__(self, trajectories, k):
        self.trajectories = list(trajectories)  # type: List[Trajectory]
        self.k = int(k)
        self._obs = None  # type: Optional[ObsBatch]

    def __len__(self):
        return len(self.trajectories)

    @property
    def n_pairs(self):
        return sum(len(t) for t in self.trajectories)

    @property
    def obs(self):
        # type: () -> ObsBatch
        if self._obs is None:
            self._obs = ObsBatch.from_observations([o for t in self.trajectories for o in t.observations])
        return self._obs

    @property
    def actions(self):
        return np.concatenate([t.actions for t in self.trajectories]) if self.trajectories else np.zeros((0, 7))

    @property
    def rewards(self):
        return np.concatenate([t.rewards for t in self.trajectories]) if self.trajectories else np.zeros(0)

    @property
    def log_probs(self):
        return np.concatenate([t.log_probs for t in self.trajectories]) if self.trajectories else np.zeros(0)

    def refresh_log_probs(self, params):
        # type: (PolicyParams) -> None
        """Recompute the stored behavior log-probs under ``params``."""
        if not self.trajectories:
            return
        values, _ = batch_log_prob(params, self.obs, self.actions)
        start = 0
        for t in self.trajectories:
            t.log_probs = values[start:start + len(t)].copy()
            start += len(t)

    def mean_return(self):
        return float(np.mean([t.total_reward for t in self.trajectories]))

    def success_rate(self):
        return float(np.mean([t.success for t in self.trajectories]))

    def __repr__(self):
        return "RolloutBatch(k={}, trajectories={}, pairs={})".format(self.k, len(self), self.n_pairs)


def run_episode(params, obj, reset_seed, sim_cfg=None, rng=None, trace=None):
    # type: (PolicyParams, Polygon, int, Optional[sim.SimConfig], Optional[np.random.Generator], Optional[list]) -> Trajectory
    """Run one episode with stochastic actions, or mean actions when ``rng`` is None.

    The embedding of the object's cloud is computed once per episode.
    """
    state, obs = sim.reset(obj, reset_seed, sim_cfg)
    if params.uses_encoder:
        embedding = params.encoder.forward(obs.cloud.points[None])[0][0]
    else:
        embedding = np.zeros(0)
    std = np.exp(params.log_std)
    observations, actions, rewards, log_probs = [], [], [], []
    done = False
    while not done:
        mean = params.mlp.forward(np.concatenate([embedding, obs.flat()])[None])[0][0]
        action = mean if rng is None else mean + std * rng.standard_normal(sim.Q_DIM)
        observations.append(obs)
        actions.append(action)
        log_probs.append(float(gaussian_log_prob(mean, params.log_std, action)))
        state, obs, value, done = sim.step(state, action)
        rewards.append(value)
        if trace is not None:
            trace.append(sim.trace_record(state, value))
    distance = float(np.linalg.norm(state.pose[:2] - state.target))
    return Trajectory(obj.instance_id, observations, actions, rewards, log_probs, sim.is_success(state), distance)


def _episode_job(job):
    params, objects, seed, k, index, sim_cfg = job
    rng = rng_for(seed, 1, k, index)
    obj = objects[int(rng.integers(len(objects)))]
    return run_episode(params, obj, int(rng.integers(2 ** 31)), sim_cfg, rng)


def collect_rollouts(params, objects, cfg, k, workers=None):
    # type: (PolicyParams, List[Polygon], IladConfig, int, Optional[int]) -> RolloutBatch
    """Collect ``cfg.n_traj_per_epoch`` stochastic episodes for epoch ``k``.

    Each episode draws its object uniformly and owns the random stream
    ``(seed, k, episode index)``, so results do not depend on ``workers``.
    """
    if not objects:
        raise ValueError("collect_rollouts needs at least one training object")
    sim_cfg = cfg.sim_config()
    jobs = [(params, objects, cfg.seed, k, i, sim_cfg) for i in range(cfg.n_traj_per_epoch)]
    return RolloutBatch(parallel_map(_episode_job, jobs, workers), k)


def discounted_returns(batch, gamma):
    # type: (RolloutBatch, float) -> np.ndarray
    """Discounted reward-to-go per pair; every episode end is terminal."""
    out = []
    for traj in batch.trajectories:
        ret = np.zeros(len(traj))
        running = 0.0
        for t in reversed(range(len(traj))):
            running = traj.rewards[t] + gamma * running
            ret[t] = running
        out.append(ret)
    return np.concatenate(out) if out else np.zeros(0)


def gae_advantages(batch, values, gamma, gae_lambda, normalize=True):
    # type: (RolloutBatch, np.ndarray, float, float, bool) -> np.ndarray
    """Generalized advantage estimates per pair.

    Parameters
    ----------
    batch: RolloutBatch
    values: array (n_pairs,)
        Baseline predictions V(s_t) in batch order.
    normalize: bool
        Rescale to zero mean and unit variance across the batch.
    """
    values = np.asarray(values, dtype=float)
    advantages = np.zeros(batch.n_pairs)
    start = 0
    for traj in batch.trajectories:
        v = values[start:start + len(traj)]
        running = 0.0
        for t in reversed(range(len(traj))):
            v_next = v[t + 1] if t + 1 < len(traj) else 0.0
            delta = traj.rewards[t] + gamma * v_next - v[t]
            running = delta + gamma * gae_lambda * running
            advantages[start + t] = running
        start += len(traj)
    if normalize and len(advantages):
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    return advantages


def value_features(params, obs):
    # type: (PolicyParams, ObsBatch) -> np.ndarray
    """Detached policy embedding concatenated with the flat observation."""
    embedding, _ = embed(params, obs)
    return np.concatenate([embedding, obs.flat], axis=1)


class ValueDataset(object):
    """Regression data for the value networks: features, actions and return targets."""

    def __init__(self, features, actions, returns):
        self.features = np.asarray(features, dtype=float)
        self.actions = np.asarray(actions, dtype=float)
        self.returns = np.asarray(returns, dtype=float).reshape(-1, 1)
        if not len(self.features):
            raise ValueError("Empty value dataset")

    def __len__(self):
        return len(self.features)

    @property
    def q_inputs(self):
        return np.concatenate([self.features, self.actions], axis=1)


def _regress(net, inputs, targets, epochs, lr, minibatch, rng):
    adam = Adam(net.n_params, lr)
    flat = net.get_flat()
    n = len(inputs)
    for _ in range(int(epochs)):
        order = rng.permutation(n)
        for start in range(0, n, int(minibatch)):
            rows = order[start:start + int(minibatch)]
            pred, cache = net.forward(inputs[rows])
            grad, _ = net.backward(cache, 2.0 * (pred - targets[rows]) / len(rows))
            flat = adam.step(flat, grad)
            net.set_flat(flat)
    pred, _ = net.forward(inputs)
    return float(np.mean((pred - targets) ** 2))


def fit_value_functions(values, dataset, cfg, rng=None, epochs=None, lr=None):
    # type: (ValueParams, ValueDataset, IladConfig, Optional[np.random.Generator], Optional[int], Optional[float]) -> Tuple[float, float]
    """Regress V on returns from s and Q on returns from (s, a) with Adam.

    Returns the final mean squared errors of both networks on the dataset.
    """
    rng = rng if rng is not None else rng_for(cfg.seed, 2)
    epochs = cfg.value_epochs if epochs is None else epochs
    lr = cfg.value_lr if lr is None else lr
    v_loss = _regress(values.v_net, dataset.features, dataset.returns, epochs, lr, cfg.value_minibatch, rng)
    q_loss = _regress(values.q_net, dataset.q_inputs, dataset.returns, epochs, lr, cfg.value_minibatch, rng)
    return v_loss, q_loss


def demo_advantage(values, features, actions):
    # type: (ValueParams, np.ndarray, np.ndarray) -> Any
    """Q(s, a) - V(s).

    A single feature vector and action give a float, rows of them an array.
    """
    features, actions = np.asarray(features, dtype=float), np.asarray(actions, dtype=float)
    single = features.ndim == 1
    features, actions = np.atleast_2d(features), np.atleast_2d(actions)
    q, _ = values.q_net.forward(np.concatenate([features, actions], axis=1))
    v, _ = values.v_net.forward(features)
    advantage = (q - v)[:, 0]
    return float(advantage[0]) if single else advantage


def traj_neg_log_likelihood(params, demo):
    """Mean negative action log-likelihood of a demonstration under the policy."""
    if len(demo) < 1:
        raise ValueError("Demonstration {} has no pairs".format(demo.object_id))
    obs = ObsBatch.from_observations([o for o, _ in demo.pairs])
    values, _ = batch_log_prob(params, obs, np.array([a for _, a in demo.pairs]))
    return float(-np.mean(values))


def demo_l_values(params, demos):
    # type: (PolicyParams, DemoSet) -> np.ndarray
    """l_k for every demonstration from one batched evaluation.

    Demonstrations without pairs get l = 0.
    """
    obs, actions, index = demos.pair_arrays()
    if not len(actions):
        return np.zeros(len(demos))
    values, _ = batch_log_prob(params, obs, actions)
    sums = np.bincount(index, weights=-values, minlength=len(demos))
    counts = np.bincount(index, minlength=len(demos))
    return np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)


def normalized_weights(l_values):
    # type: (List[float]) -> np.ndarray
    """Min-max normalized l values; all ones when max equals min."""
    l_values = np.asarray(l_values, dtype=float)
    if not len(l_values):
        raise ValueError("normalized_weights needs at least one trajectory")
    if not np.all(np.isfinite(l_values)):
        raise ValueError("Non-finite l values: {}".format(l_values))
    low, high = l_values.min(), l_values.max()
    if high == low:
        return np.ones_like(l_values)
    return (l_values - low) / (high - low)


def _demo_coefficients(weights, advantages, c_bc, c_adv, n_pairs):
    return (c_bc * weights + c_adv * advantages) / n_pairs


class Surrogate(object):
    """Objective whose gradient at the collecting parameters is the assembled policy gradient."""

    def __init__(self, obs, actions, old_log_probs, rollout_coef, demo_obs=None, demo_actions=None, demo_coef=None):
        self.obs, self.actions = obs, actions
        self.old_log_probs = old_log_probs
        self.rollout_coef = rollout_coef
        self.demo_obs, self.demo_actions, self.demo_coef = demo_obs, demo_actions, demo_coef

    def __call__(self, params):
        # type: (PolicyParams) -> float
        values, _ = batch_log_prob(params, self.obs, self.actions)
        total = float(np.sum(self.rollout_coef * np.exp(values - self.old_log_probs)))
        if self.demo_coef is not None and len(self.demo_coef):
            demo_values, _ = batch_log_prob(params, self.demo_obs, self.demo_actions)
            total += float(np.sum(self.demo_coef * demo_values))
        return total


def _assemble(params, batch, advantages, demos, weights, demo_adv, c_bc, c_adv):
    """Rollout term plus demonstration terms, all with ``p`` routing."""
    advantages = np.asarray(advantages, dtype=float)
    rollout_coef = advantages / max(batch.n_pairs, 1)
    _, gradient = batch_log_prob(params, batch.obs, batch.actions, coef=rollout_coef, route="p")
    info = OrderedDict([("demo_term_norm", 0.0), ("adv_term_norm", 0.0)])
    surrogate = Surrogate(batch.obs, batch.actions, batch.log_probs, rollout_coef)
    if demos is not None and len(demos):
        obs, actions, index = demos.pair_arrays()
        if len(actions):
            pair_w = np.asarray(weights, dtype=float)[index]
            coef = _demo_coefficients(pair_w, demo_adv, c_bc, c_adv, len(actions))
            _, demo_grad = batch_log_prob(params, obs, actions, coef=coef, route="p")
            gradient = gradient + demo_grad
            surrogate = Surrogate(batch.obs, batch.actions, batch.log_probs, rollout_coef, obs, actions, coef)
            bc_only = c_bc * pair_w / len(actions)
            info["demo_term_norm"] = batch_log_prob(params, obs, actions, coef=bc_only, route="p")[1].norm()
            if c_adv != 0:
                adv_only = c_adv * demo_adv / len(actions)
                info["adv_term_norm"] = batch_log_prob(params, obs, actions, coef=adv_only, route="p")[1].norm()
    gradient.info = info
    gradient.surrogate = surrogate
    return gradient


def dapg_gradient(params, batch, demos, cfg, k, advantages):
    # type: (PolicyParams, RolloutBatch, Optional[DemoSet], IladConfig, int, np.ndarray) -> GradientVector
    """Policy gradient plus the decaying demonstration likelihood term (weight 1 per pair)."""
    n_demo = len(demos) if demos is not None else 0
    n_pairs = demos.pair_arrays()[1].shape[0] if n_demo else 0
    return _assemble(params, batch, advantages, demos, np.ones(n_demo), np.zeros(n_pairs),
                     cfg.demo_coefficient(k), 0.0)


def ilad_gradient(params, batch, demos, values, cfg, k, advantages):
    # type: (PolicyParams, RolloutBatch, DemoSet, ValueParams, IladConfig, int, np.ndarray) -> GradientVector
    """Policy gradient with ranked demonstration likelihood and demonstration advantage terms.

    Demonstrations are weighted by their normalized l_k (refreshed here,
    or all ones with ``cfg.unit_weights``) and by the clipped learned
    advantage Q - V, with coefficients lambda0 lambda1^k and
    lambda0' (1 - lambda1^k).
    """
    demos.l_values = demo_l_values(params, demos)
    weights = np.ones(len(demos)) if cfg.unit_weights else normalized_weights(demos.l_values)
    obs, actions, _ = demos.pair_arrays()
    if len(actions):
        demo_adv = np.clip(demo_advantage(values, value_features(params, obs), actions), -cfg.adv_clip, cfg.adv_clip)
    else:
        demo_adv = np.zeros(0)
    gradient = _assemble(params, batch, advantages, demos, weights, demo_adv,
                         cfg.demo_coefficient(k), cfg.advantage_coefficient(k))
    gradient.info.update([("w_min", float(weights.min())), ("w_mean", float(weights.mean())),
                          ("w_max", float(weights.max()))])
    return gradient


def trpo_step(params, gradient, batch, cfg, surrogate=None):
    # type: (PolicyParams, GradientVector, RolloutBatch, IladConfig, Optional[Callable[[PolicyParams], float]]) -> Dict[str, Any]
    """Natural-gradient ascent step on the decision MLP and log std.

    The search direction solves F x = g by conjugate gradient with damped
    Fisher-vector products and is scaled so the quadratic KL model equals
    ``kl_limit``. Backtracking halves the step up to ten times and accepts
    the first step with positive surrogate improvement and mean KL within
    ``kl_limit``. The encoder block is never touched.

    Raises
    ------
    AbortEpoch
        If the gradient has non-finite entries.
    """
    g = np.concatenate([gradient.blocks["p"], gradient.blocks["log_std"]])
    result = OrderedDict([("accepted", False), ("kl", 0.0), ("improvement", 0.0), ("step_fraction", 0.0)])
    if not np.all(np.isfinite(g)):
        raise AbortEpoch("Non-finite policy gradient at epoch {}".format(batch.k))
    if not np.any(g):
        return result
    surrogate = surrogate if surrogate is not None else getattr(gradient, "surrogate", None)
    old = params.get_flat("p")
    mean_old, cache = policy_mean(params, batch.obs)
    log_std_old = params.log_std.copy()

    def fvp(v):
        return fisher_vector_product(params, cache, v, cfg.cg_damping)

    direction = conjugate_gradient(fvp, g, cfg.cg_iters)
    shs = 0.5 * direction.dot(fvp(direction))
    if not np.isfinite(shs) or shs <= 0:
        logging.warning("Degenerate natural gradient at epoch {}, no step".format(batch.k))
        return result
    full_step = np.sqrt(cfg.kl_limit / shs) * direction
    base = surrogate(params) if surrogate is not None else 0.0
    for i in range(10):
        fraction = 0.5 ** i
        params.set_flat(old + fraction * full_step, "p")
        mean_new, _ = policy_mean(params, batch.obs)
        kl = mean_kl(mean_old, log_std_old, mean_new, params.log_std)
        if surrogate is not None:
            improvement = surrogate(params) - base
        else:
            improvement = fraction * g.dot(full_step)
        if np.isfinite(kl) and kl <= cfg.kl_limit and improvement > 0:
            result.update([("accepted", True), ("kl", kl), ("improvement", improvement), ("step_fraction", fraction)])
            return result
    params.set_flat(old, "p")
    logging.warning("Line search failed at epoch {}, parameters unchanged".format(batch.k))
    return result


def bc_update(params, obs, actions, cfg, target="theta_pc_only", steps=None, rng=None):
    # type: (PolicyParams, ObsBatch, np.ndarray, IladConfig, str, Optional[int], Optional[np.random.Generator]) -> List[float]
    """Behavior cloning: Adam on the mean squared error between policy mean and action.

    ``theta_pc_only`` updates the encoder only, ``all`` updates the encoder
    and the decision MLP. The log std is never changed. Without ``steps``
    the update runs ``cfg.bc_epochs_per_update`` passes over the data.
    Returns the minibatch loss of every step.
    """
    if target not in BC_TARGETS:
        raise ValueError("Unknown behavior cloning target '{}'".format(target))
    actions = np.asarray(actions, dtype=float)
    n = len(actions)
    if n == 0:
        raise ValueError("bc_update needs at least one state-action pair")
    rng = rng if rng is not None else rng_for(cfg.seed, 3)
    names = ["pc"] if target == "theta_pc_only" else ["pc", "p"]
    names = [name for name in names if name != "pc" or params.uses_encoder]
    if not names:
        return []
    route = "pc" if target == "theta_pc_only" else "all"
    flat = np.concatenate([params.get_block(name) for name in names])
    adam = Adam(len(flat), cfg.bc_lr)
    minibatch = int(cfg.bc_minibatch)
    if steps is None:
        steps = int(cfg.bc_epochs_per_update) * int(np.ceil(n / float(minibatch)))
    losses = []
    order = rng.permutation(n)
    cursor = 0
    for _ in range(int(steps)):
        if cursor >= n:
            order, cursor = rng.permutation(n), 0
        rows = order[cursor:cursor + minibatch]
        cursor += minibatch
        sub = obs.subset(rows)
        mean, cache = policy_mean(params, sub)
        residual = mean - actions[rows]
        losses.append(float(np.mean(np.sum(residual ** 2, axis=1))))
        blocks = mean_backward(params, cache, 2.0 * residual / len(rows), route)
        grad = np.concatenate([blocks[name] for name in names])
        flat = adam.step(flat, grad)
        i = 0
        for name in names:
            size = len(params.get_block(name))
            params.set_block(name, flat[i:i + size])
            i += size
    return losses


def bc_loss(params, obs, actions):
    """Mean squared error between the policy mean and the actions."""
    mean, _ = policy_mean(params, obs)
    return float(np.mean(np.sum((mean - actions) ** 2, axis=1)))


def bc_pretrain(params, demos, cfg):
    # type: (PolicyParams, DemoSet, IladConfig) -> PolicyParams
    """Pre-train encoder and decision MLP on the demonstrations."""
    if demos is None or not len(demos) or not demos.n_pairs():
        raise ValueError("bc_pretrain needs a non-empty demonstration set")
    obs, actions, _ = demos.pair_arrays()
    losses = bc_update(params, obs, actions, cfg, target="all", rng=rng_for(cfg.seed, 4))
    if losses:
        logging.info("Pre-training BC loss {:.5f} -> {:.5f}".format(losses[0], losses[-1]))
    return params


def create_policy(cfg, mode):
    # type: (IladConfig, str) -> PolicyParams
    return PolicyParams.create(cfg.seed, parse_mode(mode) != "RL", cfg.encoder_widths, cfg.post_pool_widths,
                               cfg.mlp_widths, cfg.init_log_std)


def train(objects, demos, cfg, mode, out_dir=None, workers=None, on_gradient=None):
    # type: (List[Polygon], Optional[DemoSet], IladConfig, str, Optional[str], Optional[int], Optional[Callable[[int, GradientVector], None]]) -> Tuple[PolicyParams, List[Dict[str, Any]]]
    """Pre-train when the mode uses demonstrations, then run the epoch loop.

    Each epoch collects rollouts, runs behavior cloning on the encoder every
    ``T`` epochs when joint learning is on, fits V and Q, computes
    advantages, assembles the mode's gradient and takes a trust-region step.

    Parameters
    ----------
    mode: str
        RL, RL_PC, DAPG_PC or ILAD.
    out_dir: str [optional]
        Receives metrics.csv, manifest.json and checkpoints.
    on_gradient: callable [optional]
        Called with (epoch, gradient) before every policy step.
    """
    mode = parse_mode(mode)
    uses_demos = mode in ("DAPG_PC", "ILAD")
    if uses_demos and (demos is None or not len(demos)):
        raise ValueError("Mode {} needs a non-empty demonstration set".format(mode))
    if not objects:
        raise ValueError("train needs at least one training object")
    params = create_policy(cfg, mode)
    values = ValueParams(params.input_dim, cfg.value_widths, cfg.seed)
    joint = cfg.resolved_joint_learning(mode) and params.uses_encoder
    if uses_demos:
        bc_pretrain(params, demos, cfg)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_json(os.path.join(out_dir, "manifest.json"), OrderedDict([
            ("mode", mode), ("config", cfg.to_dict()), ("seed", cfg.seed),
            ("lambda0_prime", cfg.resolved_lambda0_prime), ("joint_learning", joint),
            ("objects", [o.instance_id for o in objects]), ("demonstrations", len(demos) if demos else 0),
            ("gradient_sums", "mean per set"),
        ]))
    metrics = []
    for epoch in range(cfg.epochs):
        batch = collect_rollouts(params, objects, cfg, epoch, workers)
        row = OrderedDict((field, float("nan")) for field in METRIC_FIELDS)
        row.update([("epoch", epoch), ("mean_return", batch.mean_return()),
                    ("success_rate_train", batch.success_rate()), ("pc_updated", False), ("trpo_accepted", False)])
        if joint and epoch % cfg.T == 0:
            before = params.checksum("pc")
            losses = bc_update(params, batch.obs, batch.actions, cfg, "theta_pc_only", rng=rng_for(cfg.seed, 3, epoch))
            row["bc_loss"] = losses[-1] if losses else float("nan")
            row["pc_updated"] = params.checksum("pc") != before
            if row["pc_updated"]:
                # the trust-region surrogate needs ratios of 1 at the current encoder
                batch.refresh_log_probs(params)
        features = value_features(params, batch.obs)
        baseline = values.v_net.forward(features)[0][:, 0]
        advantages = gae_advantages(batch, baseline, cfg.gamma, cfg.gae_lambda, cfg.normalize_advantages)
        dataset = ValueDataset(features, batch.actions, discounted_returns(batch, cfg.gamma))
        fit_value_functions(values, dataset, cfg, rng_for(cfg.seed, 2, epoch))
        if mode == "ILAD":
            gradient = ilad_gradient(params, batch, demos, values, cfg, epoch, advantages)
        else:
            gradient = dapg_gradient(params, batch, demos if uses_demos else None, cfg, epoch, advantages)
            if uses_demos:
                gradient.info.update([("w_min", 1.0), ("w_mean", 1.0), ("w_max", 1.0)])
        for key, value in gradient.info.items():
            row[key] = value
        if on_gradient is not None:
            on_gradient(epoch, gradient)
        try:
            step = trpo_step(params, gradient, batch, cfg)
            row["kl"], row["trpo_accepted"] = step["kl"], step["accepted"]
        except AbortEpoch as err:
            logging.warning("{}; skipping the policy step".format(err))
        metrics.append(row)
        logging.info("Epoch {} {}: return {:.3f}, success {:.2f}, kl {:.4g}".format(
            epoch, mode, row["mean_return"], row["success_rate_train"], row["kl"]))
        if out_dir is not None and cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(os.path.join(out_dir, "checkpoint_{:04d}.npz".format(epoch + 1)), params,
                            {"epoch": epoch + 1, "mode": mode})
    if out_dir is not None:
        write_csv(os.path.join(out_dir, "metrics.csv"), metrics, METRIC_FIELDS)
        save_checkpoint(os.path.join(out_dir, "policy.npz"), params, {"epoch": cfg.epochs, "mode": mode})
    return params, metrics
