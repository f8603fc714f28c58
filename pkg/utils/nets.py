"""Numpy networks with hand-written gradients.

Batches are row vectors. Every network exposes ``get_flat``/``set_flat`` so
optimizers and the finite-difference checker can treat it as one vector.
The policy parameters are split in three blocks: ``pc`` (point-set
encoder), ``p`` (decision MLP) and ``log_std``.
"""
import json
import logging
from collections import OrderedDict
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from utils.common import checksum, rng_for

LOG_2PI = np.log(2 * np.pi)
ACTION_DIM = 7
EMBED_DIM = 32
FLAT_DIM = 12
BLOCKS = ("pc", "p", "log_std")
ROUTES = {"p": ("p", "log_std"), "pc": ("pc",), "all": BLOCKS}


class MLP(object):
    """Fully connected tanh network.

    Parameters
    ----------
    sizes: list of int
        Input width, hidden widths and output width.
    output_activation: str
        "linear" or "tanh" for the last layer.
    rng: numpy Generator [optional]
        Initialises weights and biases uniformly in +-1/sqrt(fan_in).
        Without it all parameters start at zero.
    """

    def __init__(self, sizes, output_activation="linear", rng=None):
        if output_activation not in ("linear", "tanh"):
            raise ValueError("Unknown output activation '{}'".format(output_activation))
        self.sizes = [int(s) for s in sizes]
        self.output_activation = output_activation
        self.weights = []  # type: List[np.ndarray]
        self.biases = []  # type: List[np.ndarray]
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            if rng is None:
                self.weights.append(np.zeros((fan_in, fan_out)))
                self.biases.append(np.zeros(fan_out))
            else:
                scale = 1.0 / np.sqrt(fan_in)
                self.weights.append(rng.uniform(-scale, scale, size=(fan_in, fan_out)))
                self.biases.append(rng.uniform(-scale, scale, size=fan_out))

    def __repr__(self):
        return "MLP(sizes={}, output_activation={})".format(self.sizes, self.output_activation)

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def set_flat(self, vector):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.n_params,):
            raise ValueError("Expected {} parameters, got shape {}".format(self.n_params, vector.shape))
        i = 0
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[layer] = vector[i:i + w.size].reshape(w.shape).copy()
            i += w.size
            self.biases[layer] = vector[i:i + b.size].copy()
            i += b.size

    def copy(self):
        other = MLP(self.sizes, self.output_activation)
        other.set_flat(self.get_flat())
        return other

    def _is_tanh(self, layer):
        return layer < len(self.weights) - 1 or self.output_activation == "tanh"

    def forward(self, x):
        # type: (np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ValueError("Input width {} does not match network input {}".format(x.shape[-1], self.sizes[0]))
        activations = [x]
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1].dot(w) + b
            activations.append(np.tanh(z) if self._is_tanh(layer) else z)
        return activations[-1], activations

    def backward(self, cache, grad_out):
        # type: (List[np.ndarray], np.ndarray) -> Tuple[np.ndarray, np.ndarray]
        """Parameter gradient (flat) and input gradient for an output gradient."""
        grads = []
        g = grad_out
        for layer in reversed(range(len(self.weights))):
            if self._is_tanh(layer):
                g = g * (1.0 - cache[layer + 1] ** 2)
            grads.append((cache[layer].T.dot(g), g.sum(axis=0)))
            g = g.dot(self.weights[layer].T)
        flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in reversed(grads)])
        return flat, g

    def jvp(self, cache, tangent):
        # type: (List[np.ndarray], np.ndarray) -> np.ndarray
        """Forward-mode derivative of the output along a parameter direction."""
        dh = np.zeros_like(cache[0])
        i = 0
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            dw = tangent[i:i + w.size].reshape(w.shape)
            i += w.size
            db = tangent[i:i + b.size]
            i += b.size
            dz = dh.dot(w) + cache[layer].dot(dw) + db
            dh = dz * (1.0 - cache[layer + 1] ** 2) if self._is_tanh(layer) else dz
        return dh


class PointEncoder(object):
    """Shared per-point tanh layers, feature-wise max pool, post-pool tanh layers."""

    def __init__(self, widths=(64, 128), post_widths=(64, 32), rng=None, point_dim=2):
        self.pre = MLP([point_dim] + list(widths), "tanh", rng)
        self.post = MLP([widths[-1]] + list(post_widths), "tanh", rng)

    @property
    def out_dim(self):
        return self.post.sizes[-1]

    @property
    def n_params(self):
        return self.pre.n_params + self.post.n_params

    def get_flat(self):
        return np.concatenate([self.pre.get_flat(), self.post.get_flat()])

    def set_flat(self, vector):
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (self.n_params,):
            raise ValueError("Expected {} parameters, got shape {}".format(self.n_params, vector.shape))
        self.pre.set_flat(vector[:self.pre.n_params])
        self.post.set_flat(vector[self.pre.n_params:])

    def copy(self):
        other = PointEncoder.__new__(PointEncoder)
        other.pre, other.post = self.pre.copy(), self.post.copy()
        return other

    def forward(self, clouds):
        # type: (np.ndarray) -> Tuple[np.ndarray, Dict[str, object]]
        """Embed a stack of clouds (U, N, 2) into (U, out_dim)."""
        clouds = np.asarray(clouds, dtype=float)
        if clouds.ndim == 2:
            clouds = clouds[None]
        n_clouds, n_points = clouds.shape[:2]
        if n_points == 0:
            raise ValueError("Cannot encode an empty point cloud")
        features, pre_cache = self.pre.forward(clouds.reshape(n_clouds * n_points, -1))
        features = features.reshape(n_clouds, n_points, -1)
        argmax = np.argmax(features, axis=1)  # first index wins ties
        pooled = np.take_along_axis(features, argmax[:, None, :], axis=1)[:, 0]
        embedding, post_cache = self.post.forward(pooled)
        cache = {"pre": pre_cache, "post": post_cache, "argmax": argmax, "shape": features.shape}
        return embedding, cache

    def backward(self, cache, grad_embedding):
        # type: (Dict[str, object], np.ndarray) -> np.ndarray
        grad_post, grad_pooled = self.post.backward(cache["post"], grad_embedding)
        n_clouds, n_points, width = cache["shape"]
        grad_features = np.zeros((n_clouds, n_points, width))
        rows = np.arange(n_clouds)[:, None]
        cols = np.arange(width)[None, :]
        grad_features[rows, cache["argmax"], cols] = grad_pooled
        grad_pre, _ = self.pre.backward(cache["pre"], grad_features.reshape(n_clouds * n_points, width))
        return np.concatenate([grad_pre, grad_post])


class ObsBatch(object):
    """Observations grouped by distinct cloud.

    ``clouds`` holds the U distinct clouds, ``cloud_index`` maps every one of
    the B observations to its cloud and ``flat`` holds the 12 pose, joint and
    target entries per observation.
    """

    def __init__(self, clouds, cloud_index, flat):
        self.clouds = np.asarray(clouds, dtype=float)
        self.cloud_index = np.asarray(cloud_index, dtype=int)
        self.flat = np.asarray(flat, dtype=float).reshape(len(self.cloud_index), -1)

    def __len__(self):
        return len(self.cloud_index)

    @classmethod
    def from_observations(cls, observations):
        keys = OrderedDict()  # type: Dict[bytes, int]
        clouds, index = [], []
        for obs in observations:
            key = obs.cloud.points.tobytes()
            if key not in keys:
                keys[key] = len(clouds)
                clouds.append(obs.cloud.points)
            index.append(keys[key])
        flat = np.array([obs.flat() for obs in observations]).reshape(len(index), FLAT_DIM)
        return cls(np.array(clouds) if clouds else np.zeros((0, 0, 2)), index, flat)

    def subset(self, rows):
        rows = np.asarray(rows, dtype=int)
        used, index = np.unique(self.cloud_index[rows], return_inverse=True)
        return ObsBatch(self.clouds[used], index, self.flat[rows])

    @staticmethod
    def concatenate(batches):
        batches = [b for b in batches if len(b)]
        if not batches:
            return ObsBatch(np.zeros((0, 0, 2)), [], np.zeros((0, FLAT_DIM)))
        offsets = np.cumsum([0] + [len(b.clouds) for b in batches[:-1]])
        return ObsBatch(np.concatenate([b.clouds for b in batches]),
                        np.concatenate([b.cloud_index + o for b, o in zip(batches, offsets)]),
                        np.concatenate([b.flat for b in batches]))


class GradientVector(object):
    """Gradient blocks keyed by parameter block name."""

    def __init__(self, blocks):
        self.blocks = OrderedDict((name, np.asarray(blocks[name], dtype=float))
                                  for name in BLOCKS if name in blocks)
        self.info = OrderedDict()  # type: Dict[str, float]
        self.surrogate = None

    @property
    def layout(self):
        return [(name, len(value)) for name, value in self.blocks.items()]

    def flat(self):
        return np.concatenate(list(self.blocks.values())) if self.blocks else np.zeros(0)

    def norm(self):
        return float(np.linalg.norm(self.flat()))

    def __getitem__(self, name):
        return self.blocks[name]

    def __add__(self, other):
        names = [n for n in BLOCKS if n in self.blocks or n in other.blocks]
        total = OrderedDict()
        for name in names:
            if name in self.blocks and name in other.blocks:
                total[name] = self.blocks[name] + other.blocks[name]
            else:
                total[name] = (self.blocks.get(name) if name in self.blocks else other.blocks[name]).copy()
        return GradientVector(total)

    def __mul__(self, scale):
        return GradientVector(OrderedDict((n, v * scale) for n, v in self.blocks.items()))

    __rmul__ = __mul__

    def __repr__(self):
        return "GradientVector(layout={}, norm={:.4g})".format(self.layout, self.norm())


class PolicyParams(object):
    """Diagonal-Gaussian policy: optional point-set encoder, decision MLP, log std.

    Without an encoder (the flat-state RL baseline) the decision MLP reads the
    12 flat observation entries only.
    """

    def __init__(self, encoder, mlp, log_std, seed=0):
        self.encoder = encoder  # type: Optional[PointEncoder]
        self.mlp = mlp  # type: MLP
        self.log_std = np.array(log_std, dtype=float)
        self.seed = int(seed)

    @classmethod
    def create(cls, seed, use_encoder=True, encoder_widths=(64, 128), post_pool_widths=(64, 32),
               mlp_widths=(32, 32), init_log_std=0.0):
        encoder = None
        in_dim = FLAT_DIM
        if use_encoder:
            encoder = PointEncoder(encoder_widths, post_pool_widths, rng_for(seed, 0))
            in_dim += encoder.out_dim
        mlp = MLP([in_dim] + list(mlp_widths) + [ACTION_DIM], "linear", rng_for(seed, 1))
        return cls(encoder, mlp, np.full(ACTION_DIM, float(init_log_std)), seed)

    def __repr__(self):
        return "PolicyParams(encoder={}, mlp={}, log_std={})".format(
            self.encoder is not None, self.mlp.sizes, np.round(self.log_std, 4).tolist())

    @property
    def uses_encoder(self):
        return self.encoder is not None

    @property
    def input_dim(self):
        return self.mlp.sizes[0]

    def copy(self):
        return PolicyParams(None if self.encoder is None else self.encoder.copy(), self.mlp.copy(),
                            self.log_std.copy(), self.seed)

    def block_names(self):
        return [name for name in BLOCKS if name != "pc" or self.uses_encoder]

    def get_block(self, name):
        if name == "pc":
            return self.encoder.get_flat() if self.uses_encoder else np.zeros(0)
        if name == "p":
            return self.mlp.get_flat()
        if name == "log_std":
            return self.log_std.copy()
        raise ValueError("Unknown parameter block '{}'".format(name))

    def set_block(self, name, vector):
        if name == "pc":
            if self.uses_encoder:
                self.encoder.set_flat(vector)
        elif name == "p":
            self.mlp.set_flat(vector)
        elif name == "log_std":
            vector = np.asarray(vector, dtype=float)
            if vector.shape != self.log_std.shape:
                raise ValueError("Expected log_std of shape {}, got {}".format(self.log_std.shape, vector.shape))
            self.log_std = vector.copy()
        else:
            raise ValueError("Unknown parameter block '{}'".format(name))

    def get_flat(self, route="all"):
        return np.concatenate([self.get_block(name) for name in ROUTES[route]])

    def set_flat(self, vector, route="all"):
        vector = np.asarray(vector, dtype=float)
        i = 0
        for name in ROUTES[route]:
            size = len(self.get_block(name))
            self.set_block(name, vector[i:i + size])
            i += size
        if i != len(vector):
            raise ValueError("Expected {} parameters for route '{}', got {}".format(i, route, len(vector)))

    def checksum(self, name):
        return checksum(self.get_block(name))

    def all_finite(self):
        return bool(np.all(np.isfinite(self.get_flat())))


def _as_batch(obs):
    if isinstance(obs, ObsBatch):
        return obs
    if isinstance(obs, (list, tuple)):
        return ObsBatch.from_observations(obs)
    return ObsBatch.from_observations([obs])


def embed(params, batch):
    # type: (PolicyParams, ObsBatch) -> Tuple[np.ndarray, Optional[Dict[str, object]]]
    """Per-observation embeddings (B, 32), or an empty (B, 0) array without encoder."""
    if not params.uses_encoder:
        return np.zeros((len(batch), 0)), None
    per_cloud, cache = params.encoder.forward(batch.clouds)
    return per_cloud[batch.cloud_index], cache


def encoder_forward(encoder, cloud):
    """Embedding (32,) of a single cloud and the cache for backward."""
    points = cloud.points if hasattr(cloud, "points") else np.asarray(cloud, dtype=float)
    if len(points) == 0:
        raise ValueError("Cannot encode an empty point cloud")
    embedding, cache = encoder.forward(points[None])
    return embedding[0], cache


def policy_inputs(params, batch):
    embedding, enc_cache = embed(params, batch)
    x = np.concatenate([embedding, batch.flat], axis=1)
    if x.shape[1] != params.input_dim:
        raise ValueError("Observation gives {} inputs, policy expects {}".format(x.shape[1], params.input_dim))
    return x, enc_cache


def policy_mean(params, obs):
    # type: (PolicyParams, object) -> Tuple[np.ndarray, Dict[str, object]]
    """Batched policy mean (B, 7) and the cache needed for gradients."""
    batch = _as_batch(obs)
    x, enc_cache = policy_inputs(params, batch)
    mean, mlp_cache = params.mlp.forward(x)
    return mean, {"batch": batch, "enc": enc_cache, "mlp": mlp_cache, "x": x}


def policy_forward(params, obs):
    # type: (PolicyParams, object) -> Tuple[np.ndarray, Dict[str, object]]
    """Mean action of a single observation."""
    mean, cache = policy_mean(params, obs)
    return mean[0], cache


def mean_backward(params, cache, grad_mean, route="all"):
    # type: (PolicyParams, Dict[str, object], np.ndarray, str) -> Dict[str, np.ndarray]
    """Gradients of sum(grad_mean * mean) for the blocks in ``route`` except log_std."""
    names = ROUTES[route]
    blocks = OrderedDict()
    if "p" in names or ("pc" in names and params.uses_encoder):
        grad_p, grad_x = params.mlp.backward(cache["mlp"], grad_mean)
        if "pc" in names:
            if params.uses_encoder:
                batch = cache["batch"]
                grad_emb = np.zeros((len(batch.clouds), params.encoder.out_dim))
                np.add.at(grad_emb, batch.cloud_index, grad_x[:, :params.encoder.out_dim])
                blocks["pc"] = params.encoder.backward(cache["enc"], grad_emb)
            else:
                blocks["pc"] = np.zeros(0)
        if "p" in names:
            blocks["p"] = grad_p
    elif "pc" in names:
        blocks["pc"] = np.zeros(0)
    return blocks


def gaussian_log_prob(mean, log_std, actions):
    """Row-wise diagonal Gaussian log density."""
    z = (np.asarray(actions, dtype=float) - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z ** 2 + 2 * log_std + LOG_2PI, axis=-1)


def batch_log_prob(params, obs, actions, coef=None, route=None):
    # type: (PolicyParams, object, np.ndarray, Optional[np.ndarray], Optional[str]) -> Tuple[np.ndarray, Optional[GradientVector]]
    """Log-probabilities (B,) and the gradient of ``sum(coef * log_prob)``.

    Parameters
    ----------
    coef: array (B,) [optional]
        Per-row weights of the gradient, ones by default.
    route: str [optional]
        "p" (decision MLP and log std), "pc" (encoder) or "all". No gradient
        is computed when None.
    """
    actions = np.atleast_2d(actions)
    mean, cache = policy_mean(params, obs)
    values = gaussian_log_prob(mean, params.log_std, actions)
    if route is None:
        return values, None
    coef = np.ones(len(values)) if coef is None else np.asarray(coef, dtype=float)
    inv_var = np.exp(-2 * params.log_std)
    diff = actions - mean
    blocks = mean_backward(params, cache, coef[:, None] * diff * inv_var, route)
    if "log_std" in ROUTES[route]:
        blocks["log_std"] = np.sum(coef[:, None] * (diff ** 2 * inv_var - 1.0), axis=0)
    return values, GradientVector(blocks)


def log_prob(params, obs, action, route=None):
    # type: (PolicyParams, object, np.ndarray, Optional[str]) -> Tuple[float, Optional[GradientVector]]
    values, grad = batch_log_prob(params, obs, np.asarray(action, dtype=float)[None], route=route)
    return float(values[0]), grad


def sample_actions(params, obs, rng):
    # type: (PolicyParams, object, np.random.Generator) -> Tuple[np.ndarray, np.ndarray]
    """Stochastic actions (B, 7) and their means."""
    mean, _ = policy_mean(params, obs)
    return mean + np.exp(params.log_std) * rng.standard_normal(mean.shape), mean


def sample_action(params, obs, seed):
    # type: (PolicyParams, object, int) -> np.ndarray
    actions, _ = sample_actions(params, obs, rng_for(seed))
    return actions[0]


def mean_kl(mean_old, log_std_old, mean_new, log_std_new):
    # type: (np.ndarray, np.ndarray, np.ndarray, np.ndarray) -> float
    """Mean over rows of KL(old || new) between diagonal Gaussians."""
    var_old, var_new = np.exp(2 * log_std_old), np.exp(2 * log_std_new)
    kl = np.sum(log_std_new - log_std_old + (var_old + (mean_old - mean_new) ** 2) / (2 * var_new) - 0.5, axis=-1)
    return float(np.mean(kl))


def fisher_vector_product(params, cache, vector, damping=0.1):
    # type: (PolicyParams, Dict[str, object], np.ndarray, float) -> np.ndarray
    """Damped Fisher (KL Hessian) product for the ``p`` route.

    ``vector`` is laid out as decision-MLP parameters followed by log std.
    The mean block is the average of J^T Sigma^-1 J over the batch states and
    the log std block is 2 I.
    """
    n_p = params.mlp.n_params
    v_p, v_std = vector[:n_p], vector[n_p:]
    jv = params.mlp.jvp(cache["mlp"], v_p)
    weighted = jv * np.exp(-2 * params.log_std) / len(jv)
    fv_p, _ = params.mlp.backward(cache["mlp"], weighted)
    return np.concatenate([fv_p, 2.0 * v_std]) + damping * vector


def conjugate_gradient(matvec, b, iters=10, tol=1e-10):
    # type: (Callable[[np.ndarray], np.ndarray], np.ndarray, int, float) -> np.ndarray
    """Solve A x = b for symmetric positive definite A given as a product."""
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = r.dot(r)
    for _ in range(int(iters)):
        if rr < tol:
            break
        ap = matvec(p)
        alpha = rr / p.dot(ap)
        x += alpha * p
        r -= alpha * ap
        rr_new = r.dot(r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


class Adam(object):
    """Adam minimizer over a flat parameter vector."""

    def __init__(self, n_params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params, grad):
        # type: (np.ndarray, np.ndarray) -> np.ndarray
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class ValueParams(object):
    """State value and state-action value networks."""

    def __init__(self, input_dim, widths=(64, 64), seed=0, action_dim=ACTION_DIM):
        self.v_net = MLP([input_dim] + list(widths) + [1], "linear", rng_for(seed, 2))
        self.q_net = MLP([input_dim + action_dim] + list(widths) + [1], "linear", rng_for(seed, 3))

    def __repr__(self):
        return "ValueParams(v={}, q={})".format(self.v_net.sizes, self.q_net.sizes)


def finite_difference_check(net, loss_and_grad, epsilon=1e-5, max_checks=200, seed=0):
    # type: (object, Callable[[], Tuple[float, np.ndarray]], float, int, int) -> float
    """Largest relative error between analytic and central-difference gradients.

    Parameters
    ----------
    net: object with get_flat/set_flat
        Network whose parameters are perturbed.
    loss_and_grad: callable
        Returns (loss, flat gradient) at the network's current parameters.
    epsilon: float
        Perturbation size in [1e-7, 1e-3].
    max_checks: int
        Every parameter is checked when there are at most this many,
        otherwise a seeded random subset of this size.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must be in [1e-7, 1e-3], got {}".format(epsilon))
    theta = net.get_flat().copy()
    _, analytic = loss_and_grad()
    n = len(theta)
    if n <= max_checks:
        indices = np.arange(n)
    else:
        indices = np.sort(rng_for(seed).choice(n, size=max_checks, replace=False))
    worst = 0.0
    for i in indices:
        shifted = theta.copy()
        shifted[i] += epsilon
        net.set_flat(shifted)
        plus, _ = loss_and_grad()
        shifted[i] -= 2 * epsilon
        net.set_flat(shifted)
        minus, _ = loss_and_grad()
        numeric = (plus - minus) / (2 * epsilon)
        error = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), 1e-5)
        worst = max(worst, error)
    net.set_flat(theta)
    logging.debug("Checked {} of {} gradient entries, max relative error {:.3g}".format(len(indices), n, worst))
    return worst


def save_checkpoint(filename, params, extra=None):
    """Write a policy as a JSON header plus one flat float64 array."""
    header = OrderedDict([
        ("uses_encoder", params.uses_encoder),
        ("encoder_widths", params.encoder.pre.sizes[1:] if params.uses_encoder else []),
        ("post_pool_widths", params.encoder.post.sizes[1:] if params.uses_encoder else []),
        ("mlp_widths", params.mlp.sizes[1:-1]),
        ("layout", [[name, len(params.get_block(name))] for name in BLOCKS]),
        ("seed", params.seed),
    ])
    if extra:
        header["extra"] = extra
    flat = params.get_flat("all").astype(np.float64)
    with open(filename, "wb") as f:
        np.savez(f, header=np.array(json.dumps(header, sort_keys=True)), flat=flat)


def load_checkpoint(filename):
    # type: (str) -> Tuple[PolicyParams, Dict[str, object]]
    with np.load(filename, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        flat = np.array(data["flat"], dtype=np.float64)
    params = PolicyParams.create(header["seed"], header["uses_encoder"], header["encoder_widths"] or (64, 128),
                                 header["post_pool_widths"] or (64, 32), header["mlp_widths"])
    params.set_flat(flat, "all")
    return params, header
