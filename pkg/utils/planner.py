"""Grasp synthesis and demonstration planning.

Demonstrations are reach-and-grasp trajectories produced by a CEM planner
executed under model predictive control (or by a joint-space RRT baseline)
towards an analytically synthesized antipodal grasp.
"""
import logging
from collections import OrderedDict
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from utils.common import parallel_map, rng_for, rotation, wrap_angle
from utils.nets import ObsBatch
from utils.parse import parse_paramfile, read_json, read_jsonl, write_csv, write_jsonl
from utils.shapes import Polygon
from utils import sim

STANDOFF = 0.18      # palm distance behind the contact midpoint
TIP_OFFSET = 0.005   # fingertip targets sit just outside the boundary
WIDTH_BAND = (0.05, 0.35)
MIN_PALM_SEPARATION = 0.05
MAX_GRASP_SAMPLES = 2000
SIGMA_FLOOR = 1e-4
REPORT_FIELDS = ["object_id", "attempts", "accepted", "mean_cost", "mean_displacement"]


class Unreachable(ValueError):
    """Fingertip target outside the reachable annulus of a finger."""


class NoGraspFound(RuntimeError):
    pass


class PlanningFailed(RuntimeError):
    pass


class GenerationFailed(RuntimeError):
    pass


class CemConfig(object):
    """Planner settings: CEM sampling, MPC budget, acceptance threshold and RRT."""
    _defaults = OrderedDict([
        ("n_samples", 200),
        ("n_elites", 10),
        ("horizon", 5),
        ("max_mpc_steps", 150),
        ("cem_iters", 5),
        ("init_sigma", 0.03),
        ("delta", 0.06),
        ("lambda_obj", 10.0),
        ("grasps_per_object", 8),
        ("rrt_nodes", 10000),
        ("rrt_eps", 0.01),
        ("rrt_beta", 0.5),
    ])
    _integers = ("n_samples", "n_elites", "horizon", "max_mpc_steps", "cem_iters", "grasps_per_object",
                 "rrt_nodes")

    def __init__(self, **kwargs):
        for key in kwargs:
            if key not in self._defaults:
                raise ValueError("Unknown planner setting '{}'".format(key))
        for key, default in self._defaults.items():
            value = kwargs.get(key, default)
            setattr(self, key, int(value) if key in self._integers else float(value))
        if any(v <= 0 for v in self.to_dict().values()):
            raise ValueError("Planner settings must be positive: {}".format(self))
        if self.n_elites > self.n_samples:
            raise ValueError("n_elites ({}) larger than n_samples ({})".format(self.n_elites, self.n_samples))

    @classmethod
    def from_dict(cls, params):
        kwargs = dict()
        for key, value in params.items():
            if value is None:
                logging.warning("Planner setting '{}' has no value, keeping the default".format(key))
                continue
            kwargs[key] = value
        return cls(**kwargs)

    @classmethod
    def from_file(cls, filename):
        # type: (str) -> CemConfig
        """Load planner settings from JSON or a ``key = value`` parameter file."""
        if filename.endswith(".json"):
            return cls.from_dict(read_json(filename))
        return cls.from_dict(parse_paramfile(filename))

    def to_dict(self):
        return OrderedDict((key, getattr(self, key)) for key in self._defaults)

    def __eq__(self, other):
        if not isinstance(other, CemConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "CemConfig({})".format(", ".join("{}={}".format(k, v) for k, v in self.to_dict().items()))


class GraspTarget(object):
    """Target hand configuration ``jh`` with its contact pair.

    A palm-only target has ``jh = None`` and no contacts; planning towards it
    minimises the palm to object distance instead of a joint error.
    """

    def __init__(self, jh, contacts=None, normals=None, width=0.0):
        self.jh = None if jh is None else np.array(jh, dtype=float)
        self.contacts = np.zeros((0, 2)) if contacts is None else np.array(contacts, dtype=float)
        self.normals = np.zeros((0, 2)) if normals is None else np.array(normals, dtype=float)
        self.width = float(width)

    @classmethod
    def palm_only(cls):
        return cls(None)

    @property
    def is_palm_only(self):
        return self.jh is None

    def placed(self, pose):
        # type: (np.ndarray) -> GraspTarget
        """The same grasp for an object at ``pose`` instead of the origin."""
        if self.is_palm_only:
            return self
        pose = np.asarray(pose, dtype=float)
        jh = self.jh.copy()
        jh[:3] = sim.compose(pose[None], self.jh[None, :3])[0]
        rot = rotation(pose[2])
        return GraspTarget(jh, self.contacts.dot(rot.T) + pose[:2], self.normals.dot(rot.T), self.width)

    def to_dict(self):
        return OrderedDict([("jh", None if self.jh is None else self.jh.tolist()),
                            ("contacts", self.contacts.tolist()), ("normals", self.normals.tolist()),
                            ("width", self.width)])

    @classmethod
    def from_dict(cls, record):
        return cls(record["jh"], record["contacts"] or None, record["normals"] or None, record["width"])

    def __repr__(self):
        if self.is_palm_only:
            return "GraspTarget(palm_only)"
        return "GraspTarget(width={:.3f}, palm={})".format(self.width, np.round(self.jh[:3], 3).tolist())


class Demonstration(object):
    """Planned reach-and-grasp trajectory as (Observation, action) pairs."""

    def __init__(self, object_id, pairs, final_cost, grasp, displacement=0.0):
        self.object_id = int(object_id)
        self.pairs = list(pairs)  # type: List[Tuple[sim.Observation, np.ndarray]]
        self.final_cost = float(final_cost)
        self.grasp = grasp  # type: GraspTarget
        self.displacement = float(displacement)

    def __len__(self):
        return len(self.pairs)

    def __repr__(self):
        return "Demonstration(object_id={}, steps={}, final_cost={:.4f})".format(
            self.object_id, len(self.pairs), self.final_cost)

    def to_record(self):
        return OrderedDict([
            ("object_id", self.object_id),
            ("grasp", self.grasp.to_dict()),
            ("final_cost", self.final_cost),
            ("displacement", self.displacement),
            ("pairs", [OrderedDict([("obs", obs.to_dict()), ("act", np.asarray(act).tolist())])
                       for obs, act in self.pairs]),
        ])

    @classmethod
    def from_record(cls, record):
        pairs = [(sim.Observation.from_dict(p["obs"]), np.array(p["act"], dtype=float)) for p in record["pairs"]]
        return cls(record["object_id"], pairs, record["final_cost"], GraspTarget.from_dict(record["grasp"]),
                   record.get("displacement", 0.0))


class DemoSet(object):
    """Demonstrations plus the per-trajectory l_k cache used by the learner."""

    def __init__(self, demonstrations=None, report=None):
        self.demonstrations = list(demonstrations or [])  # type: List[Demonstration]
        self.l_values = None  # type: Optional[np.ndarray]
        self.report = list(report or [])  # type: List[Dict[str, Any]]
        self._pairs = None

    def __len__(self):
        return len(self.demonstrations)

    def __iter__(self):
        return iter(self.demonstrations)

    def __getitem__(self, index):
        return self.demonstrations[index]

    def n_pairs(self):
        return sum(len(d) for d in self.demonstrations)

    def write(self, filename):
        write_jsonl(filename, [d.to_record() for d in self.demonstrations])

    @classmethod
    def from_file(cls, filename):
        return cls([Demonstration.from_record(r) for r in read_jsonl(filename)])

    def pair_arrays(self):
        """All demonstration pairs as (ObsBatch, actions, demo index per pair), cached."""
        if self._pairs is None:
            observations = [obs for d in self.demonstrations for obs, _ in d.pairs]
            actions = np.array([act for d in self.demonstrations for _, act in d.pairs]).reshape(-1, sim.Q_DIM)
            index = np.repeat(np.arange(len(self.demonstrations)), [len(d) for d in self.demonstrations])
            self._pairs = (ObsBatch.from_observations(observations), actions, index.astype(int))
        return self._pairs

    def __repr__(self):
        return "DemoSet(demonstrations={}, pairs={})".format(len(self), self.n_pairs())


def inverse_kinematics(tip_target, mount, l1=sim.LINK1, l2=sim.LINK2, elbow=1):
    # type: (np.ndarray, np.ndarray, float, float, int) -> Tuple[float, float]
    """Closed form two-link planar inverse kinematics.

    Parameters
    ----------
    tip_target: array (2,)
        Desired tip position.
    mount: array (3,)
        Base position and heading of the zero-angle first link.
    elbow: int
        +1 for the elbow-down branch (j2 >= 0), -1 for the other one.

    Returns
    -------
    j1, j2: float
        Joint angles relative to the mount heading.
    """
    mount = np.asarray(mount, dtype=float)
    d = np.asarray(tip_target, dtype=float) - mount[:2]
    dist = np.hypot(d[0], d[1])
    if dist > l1 + l2 + 1e-12 or dist < abs(l1 - l2) - 1e-12:
        raise Unreachable("Target at distance {:.4f} outside [{:.4f}, {:.4f}]".format(dist, abs(l1 - l2), l1 + l2))
    cos_j2 = np.clip((dist ** 2 - l1 ** 2 - l2 ** 2) / (2 * l1 * l2), -1.0, 1.0)
    j2 = elbow * np.arccos(cos_j2)
    j1 = np.arctan2(d[1], d[0]) - np.arctan2(l2 * np.sin(j2), l1 + l2 * np.cos(j2)) - mount[2]
    return wrap_angle(j1), float(j2)


def _finger_ik(tip, mount_world, heading):
    """First joint-limit-feasible IK branch for one finger, or None."""
    for elbow in (1, -1):
        try:
            j1, j2 = inverse_kinematics(tip, np.array([mount_world[0], mount_world[1], heading]), elbow=elbow)
        except Unreachable:
            return None
        if abs(j1) <= sim.JOINT_LIMIT and abs(j2) <= sim.JOINT_LIMIT:
            return j1, j2
    return None


def _boundary_points(vertices, arcs):
    seg = np.roll(vertices, -1, axis=0) - vertices
    lengths = np.linalg.norm(seg, axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(lengths)])
    edge = np.clip(np.searchsorted(cumulative, arcs, side="right") - 1, 0, len(vertices) - 1)
    t = (arcs - cumulative[edge]) / lengths[edge]
    points = vertices[edge] + t[..., None] * seg[edge]
    normals = np.stack([seg[edge][..., 1], -seg[edge][..., 0]], axis=-1) / lengths[edge][..., None]
    return points, normals, cumulative[-1]


def synthesize_grasps(poly, k, seed, max_samples=MAX_GRASP_SAMPLES):
    # type: (Polygon, int, int, int) -> List[GraspTarget]
    """Antipodal two-finger grasps on a polygon in its own frame.

    Boundary point pairs are sampled uniformly by arc length. A pair is kept
    when the contact normals oppose (dot < -0.5), each normal points away
    from the other contact, and the separation is inside the width band.
    The palm faces the pair's midpoint from ``STANDOFF`` away and the
    fingers are solved by inverse kinematics.
    """
    if int(k) < 1:
        raise ValueError("k must be at least 1, got {}".format(k))
    rng = rng_for(seed)
    points, normals, _ = _boundary_points(poly.vertices, rng.uniform(0, poly.perimeter(), size=(max_samples, 2)))
    a, b = points[:, 0], points[:, 1]
    na, nb = normals[:, 0], normals[:, 1]
    span = b - a
    width = np.linalg.norm(span, axis=1)
    u = span / np.maximum(width, 1e-12)[:, None]
    keep = ((np.sum(na * nb, axis=1) < -0.5) & (np.sum(na * u, axis=1) < -0.5) &
            (np.sum(nb * u, axis=1) > 0.5) & (width >= WIDTH_BAND[0]) & (width <= WIDTH_BAND[1]))
    grasps = []  # type: List[GraspTarget]
    palms = np.zeros((0, 2))
    for i in np.flatnonzero(keep):
        phi = np.arctan2(u[i, 1], u[i, 0])
        y_axis = np.array([-np.sin(phi), np.cos(phi)])
        palm = 0.5 * (a[i] + b[i]) - STANDOFF * y_axis
        if len(palms) and cdist(palm[None], palms).min() < MIN_PALM_SEPARATION:
            continue
        tips = [a[i] + TIP_OFFSET * na[i], b[i] + TIP_OFFSET * nb[i]]
        mounts = [palm - sim.PALM_HALF_WIDTH * u[i], palm + sim.PALM_HALF_WIDTH * u[i]]
        fingers = [_finger_ik(tip, mount, phi + np.pi / 2) for tip, mount in zip(tips, mounts)]
        if fingers[0] is None or fingers[1] is None:
            continue
        jh = np.array([palm[0], palm[1], wrap_angle(phi), fingers[0][0], fingers[0][1],
                       fingers[1][0], fingers[1][1]])
        grasps.append(GraspTarget(jh, np.stack([a[i], b[i]]), np.stack([na[i], nb[i]]), width[i]))
        palms = np.vstack([palms, palm])
        if len(grasps) == int(k):
            break
    if not grasps:
        raise NoGraspFound("No antipodal grasp on object {} after {} samples".format(poly.instance_id, max_samples))
    logging.debug("Synthesized {} grasps for object {}".format(len(grasps), poly.instance_id))
    return grasps


def joint_difference(q, jh):
    """q - jh with the palm rotation wrapped, for (…, 7) arrays."""
    d = np.array(q, dtype=float) - jh
    d[..., 2] = wrap_angle(d[..., 2])
    return d


def pose_difference(pose, anchor, radius):
    """(dx, dy, wrapped dtheta * radius) so rotation is in length units."""
    d = np.array(pose, dtype=float) - anchor
    d[..., 2] = wrap_angle(d[..., 2]) * radius
    return d


def batch_objective(q, pose, anchor, jh, lambda_obj, radius):
    # type: (np.ndarray, np.ndarray, np.ndarray, Optional[np.ndarray], float, float) -> np.ndarray
    """Planning cost for a batch of final hand and object states."""
    q, pose = np.atleast_2d(q), np.atleast_2d(pose)
    if jh is None:
        reach = np.sum((q[:, :2] - pose[:, :2]) ** 2, axis=1)
    else:
        reach = np.sum(joint_difference(q, jh) ** 2, axis=1)
    return reach + lambda_obj * np.sum(pose_difference(pose, anchor, radius) ** 2, axis=1)


def planning_objective(traj_states, jh, lambda_obj):
    # type: (List[sim.EnvState], Optional[np.ndarray], float) -> float
    """Reach error of the last hand state plus weighted object displacement.

    ``||q_K - jh||^2 + lambda_obj * ||p_K - p_1||^2`` with p_1 the object pose
    of the first state. With ``jh`` None the reach term is the squared palm
    to object distance.
    """
    if not traj_states:
        raise ValueError("Empty trajectory")
    first, last = traj_states[0], traj_states[-1]
    return float(batch_objective(last.q, last.pose, first.pose, jh, lambda_obj,
                                 last.object.bounding_radius())[0])


def cem_refine(cost_fn, mu, sigma, n_samples, n_elites, rng, best=None, clip=None):
    # type: (Callable[[np.ndarray], np.ndarray], np.ndarray, np.ndarray, int, int, np.random.Generator, Optional[Tuple[np.ndarray, float]], Optional[float]) -> Tuple[np.ndarray, np.ndarray, Tuple[np.ndarray, float]]
    """One cross-entropy refinement of a diagonal Gaussian.

    Parameters
    ----------
    cost_fn: callable
        Maps a batch of samples (n_samples, *mu.shape) to costs (n_samples,).
    mu, sigma: arrays
        Current mean and standard deviation.
    best: tuple (sample, cost) [optional]
        Best-so-far from earlier refinements; replaced only by a lower cost.
    clip: float [optional]
        Samples are clipped to [-clip, clip] before scoring.

    Returns
    -------
    mu, sigma: arrays
        Elite mean and (floored) elite standard deviation.
    best: tuple (sample, cost)
    """
    mu, sigma = np.asarray(mu, dtype=float), np.asarray(sigma, dtype=float)
    samples = mu + sigma * rng.standard_normal((int(n_samples),) + mu.shape)
    if clip is not None:
        samples = np.clip(samples, -clip, clip)
    costs = np.asarray(cost_fn(samples), dtype=float)
    order = np.argsort(costs, kind="stable")
    elites = samples[order[:int(n_elites)]]
    if best is None or costs[order[0]] < best[1]:
        best = (samples[order[0]].copy(), float(costs[order[0]]))
    return elites.mean(axis=0), np.maximum(elites.std(axis=0), SIGMA_FLOOR), best


def rollout_costs(state, sequences, grasp, lambda_obj, anchor=None):
    # type: (sim.EnvState, np.ndarray, GraspTarget, float, Optional[np.ndarray]) -> np.ndarray
    """Planning cost of each action sequence (S, H, 7) rolled out from ``state``."""
    n = len(sequences)
    anchor = state.pose if anchor is None else np.asarray(anchor, dtype=float)
    q = np.repeat(state.q[None], n, axis=0)
    pose = np.repeat(state.pose[None], n, axis=0)
    grasped = np.repeat(state.grasped, n)
    rel = np.repeat(state.rel[None], n, axis=0)
    for h in range(sequences.shape[1]):
        out = sim.batch_advance(state.object, q, pose, grasped, rel, sequences[:, h], state.cfg)
        q, pose, grasped, rel = out["q"], out["pose"], out["grasped"], out["rel"]
    return batch_objective(q, pose, anchor, grasp.jh, lambda_obj, state.object.bounding_radius())


def cem_iterate(env_snapshot, grasp, cfg, mu, sigma, rng, anchor=None, best=None):
    # type: (sim.EnvState, GraspTarget, CemConfig, np.ndarray, np.ndarray, np.random.Generator, Optional[np.ndarray], Optional[Tuple[np.ndarray, float]]) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float]
    """One CEM refinement of a horizon-length action sequence distribution.

    Returns the best sequence found so far, the refitted mean and standard
    deviation, and the best cost. Pass the returned sequence and cost back in
    ``best`` to chain calls with a non-increasing best cost.
    """
    def cost_fn(sequences):
        return rollout_costs(env_snapshot, sequences, grasp, cfg.lambda_obj, anchor)

    mu, sigma, best = cem_refine(cost_fn, mu, sigma, cfg.n_samples, cfg.n_elites, rng,
                                 best=best, clip=env_snapshot.cfg.action_clip)
    mu = np.clip(mu, -env_snapshot.cfg.action_clip, env_snapshot.cfg.action_clip)
    return best[0], mu, sigma, best[1]


def mpc_execute(env, grasp, cfg, seed=0):
    # type: (sim.EnvState, GraspTarget, CemConfig, int) -> Demonstration
    """Plan with CEM and execute the first action of the best plan until the cost drops below delta.

    Raises
    ------
    PlanningFailed
        If the cost is still at least ``cfg.delta`` after ``cfg.max_mpc_steps`` steps.
    """
    rng = rng_for(seed)
    anchor = env.pose.copy()
    radius = env.object.bounding_radius()
    state = env
    pairs = []
    mu = np.zeros((cfg.horizon, sim.Q_DIM))

    def cost_now():
        return float(batch_objective(state.q, state.pose, anchor, grasp.jh, cfg.lambda_obj, radius)[0])

    cost = cost_now()
    while cost >= cfg.delta and len(pairs) < cfg.max_mpc_steps and not state.done:
        sigma = np.full_like(mu, cfg.init_sigma)
        best = None
        for _ in range(cfg.cem_iters):
            sequence, mu, sigma, best_cost = cem_iterate(state, grasp, cfg, mu, sigma, rng, anchor=anchor, best=best)
            best = (sequence, best_cost)
        action = best[0][0].copy()
        pairs.append((sim.observe(state), action))
        state, _, _, _ = sim.step(state, action)
        mu = np.vstack([best[0][1:], np.zeros((1, sim.Q_DIM))])
        cost = cost_now()
    if cost >= cfg.delta:
        raise PlanningFailed("Cost {:.4f} >= delta {} after {} steps on object {}".format(
            cost, cfg.delta, len(pairs), env.object.instance_id))
    displacement = float(np.linalg.norm(pose_difference(state.pose, anchor, radius)))
    return Demonstration(env.object.instance_id, pairs, cost, grasp, displacement)


def _config_distance(nodes, x):
    return np.linalg.norm(joint_difference(nodes, x), axis=-1)


def _random_configuration(rng):
    limits = np.array([sim.PALM_LIMIT, sim.PALM_LIMIT, np.pi] + [sim.JOINT_LIMIT] * 4)
    return rng.uniform(-limits, limits)


def merge_path(path, clip):
    # type: (List[np.ndarray], float) -> List[np.ndarray]
    """Turn a joint-space path into actions with per-joint change at most ``clip``."""
    actions = []
    current = np.asarray(path[0], dtype=float)
    i = 0
    while i < len(path) - 1:
        j = i + 1
        while j + 1 < len(path) and np.max(np.abs(joint_difference(path[j + 1], current))) <= clip:
            j += 1
        move = joint_difference(path[j], current)
        pieces = max(1, int(np.ceil(np.max(np.abs(move)) / clip - 1e-12)))
        actions.extend([move / pieces] * pieces)
        current = np.asarray(path[j], dtype=float)
        i = j
    return actions


def rrt_plan(env, grasp, nodes=10000, eps=0.01, beta=0.5, seed=0, delta=0.06, lambda_obj=10.0):
    # type: (sim.EnvState, GraspTarget, int, float, float, int, float, float) -> Demonstration
    """Goal-biased RRT in joint space, blind to the object.

    With probability ``beta`` the tree extends towards ``jh``, otherwise
    towards a uniform random configuration, by ``eps`` per extension. The
    path to the first node within ``delta`` of ``jh`` is replayed through
    the environment.
    """
    if grasp.is_palm_only:
        raise ValueError("RRT planning needs a grasp target with jh")
    rng = rng_for(seed)
    tree = np.zeros((int(nodes) + 1, sim.Q_DIM))
    parent = np.full(int(nodes) + 1, -1, dtype=int)
    tree[0] = env.q
    size = 1
    goal = None
    if _config_distance(tree[:1], grasp.jh)[0] <= delta:
        goal = 0
    while goal is None and size <= nodes:
        sample = grasp.jh if rng.uniform() < beta else _random_configuration(rng)
        near = int(np.argmin(_config_distance(tree[:size], sample)))
        direction = joint_difference(sample, tree[near])
        length = np.linalg.norm(direction)
        new = sample.copy() if length <= eps else tree[near] + eps * direction / length
        new[2] = wrap_angle(new[2])
        tree[size], parent[size] = new, near
        if _config_distance(new[None], grasp.jh)[0] <= delta:
            goal = size
        size += 1
    if goal is None:
        raise PlanningFailed("RRT tree of {} nodes never reached the grasp on object {}".format(
            nodes, env.object.instance_id))
    path = [goal]
    while parent[path[-1]] >= 0:
        path.append(parent[path[-1]])
    configs = [tree[i] for i in reversed(path)]
    actions = merge_path(configs, env.cfg.action_clip) if len(configs) > 1 else []
    if len(actions) > env.cfg.horizon:
        raise PlanningFailed("RRT path needs {} steps, horizon is {}".format(len(actions), env.cfg.horizon))
    state, states, pairs = env, [env], []
    for action in actions:
        pairs.append((sim.observe(state), action))
        state, _, _, done = sim.step(state, action)
        states.append(state)
        if done:
            break
    cost = planning_objective(states, grasp.jh, lambda_obj)
    displacement = float(np.linalg.norm(pose_difference(state.pose, env.pose, env.object.bounding_radius())))
    logging.debug("RRT reached the grasp with {} nodes, {} actions".format(size, len(actions)))
    return Demonstration(env.object.instance_id, pairs, cost, grasp, displacement)


def _downwardness(grasp):
    # Palm y axis is (-sin phi, cos phi); fingers pointing down score 1.
    return -np.cos(grasp.jh[2])


def _object_demos(job):
    """Demonstrations for a single object, run inside a worker."""
    obj, per_object, cfg, use_grasp_pose, seed, planner, sim_cfg = job
    attempts, demos = 0, []
    grasps = [GraspTarget.palm_only()]
    if use_grasp_pose:
        try:
            grasps = synthesize_grasps(obj, cfg.grasps_per_object, seed=rng_for(seed, obj.instance_id).integers(2 ** 31))
        except NoGraspFound as err:
            logging.warning("Skipping object {}: {}".format(obj.instance_id, err))
            return demos, _report_row(obj.instance_id, 0, demos)
    while len(demos) < per_object and attempts < 5 * per_object:
        attempt_seed = int(rng_for(seed, obj.instance_id, attempts).integers(2 ** 31))
        attempts += 1
        state, _ = sim.reset(obj, attempt_seed, sim_cfg)
        if use_grasp_pose:
            placed = sorted((g.placed(state.pose) for g in grasps), key=_downwardness, reverse=True)
            grasp = placed[(attempts - 1) % min(3, len(placed))]
        else:
            grasp = grasps[0]
        try:
            if planner == "rrt":
                demo = rrt_plan(state, grasp, cfg.rrt_nodes, cfg.rrt_eps, cfg.rrt_beta, seed=attempt_seed,
                                delta=cfg.delta, lambda_obj=cfg.lambda_obj)
            else:
                demo = mpc_execute(state, grasp, cfg, seed=attempt_seed)
        except PlanningFailed as err:
            logging.debug("Attempt {} on object {} failed: {}".format(attempts, obj.instance_id, err))
            continue
        demos.append(demo)
    logging.info("Object {}: {} of {} attempts accepted".format(obj.instance_id, len(demos), attempts))
    return demos, _report_row(obj.instance_id, attempts, demos)


def _report_row(object_id, attempts, demos):
    return OrderedDict([
        ("object_id", object_id), ("attempts", attempts), ("accepted", len(demos)),
        ("mean_cost", float(np.mean([d.final_cost for d in demos])) if demos else float("nan")),
        ("mean_displacement", float(np.mean([d.displacement for d in demos])) if demos else float("nan")),
    ])


def generate_demo_set(objects, per_object, cfg, use_grasp_pose=True, seed=0, planner="cem",
                      sim_cfg=None, out=None, report_out=None, workers=None):
    # type: (List[Polygon], int, CemConfig, bool, int, str, Optional[sim.SimConfig], Optional[str], Optional[str], Optional[int]) -> DemoSet
    """Plan ``per_object`` demonstrations for every object.

    Each object gets at most ``5 * per_object`` attempts. With
    ``use_grasp_pose`` False the planner drives the palm to the object and
    every demonstration carries the palm-only grasp.

    Raises
    ------
    GenerationFailed
        If no demonstration was accepted at all.
    """
    if int(per_object) < 1:
        raise ValueError("per_object must be at least 1, got {}".format(per_object))
    if planner not in ("cem", "rrt"):
        raise ValueError("Unknown planner '{}'".format(planner))
    jobs = [(obj, int(per_object), cfg, use_grasp_pose, seed, planner, sim_cfg) for obj in objects]
    results = parallel_map(_object_demos, jobs, workers)
    demos = [d for obj_demos, _ in results for d in obj_demos]
    report = [row for _, row in results]
    if not demos:
        raise GenerationFailed("No demonstration accepted on {} objects".format(len(objects)))
    demo_set = DemoSet(demos, report)
    if out is not None:
        demo_set.write(out)
    if report_out is not None:
        write_csv(report_out, report, REPORT_FIELDS)
    total = sum(row["attempts"] for row in report)
    logging.info("Accepted {} demonstrations from {} attempts".format(len(demos), total))
    return demo_set
