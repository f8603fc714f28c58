"""Quasi-static planar relocate environment with a 7-DoF two-finger gripper.

The hand configuration is the vector
``q = [palm x, palm y, palm rotation, f1 joint1, f1 joint2, f2 joint1, f2 joint2]``.
Fingers point along the palm +y axis when their joints are zero and are
mounted at ``-PALM_HALF_WIDTH`` (finger 1) and ``+PALM_HALF_WIDTH`` (finger 2)
on the palm x axis. Only the fingertips interact with the object.
"""
import logging
from collections import OrderedDict
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from utils.common import rng_for, rotation, wrap_angle
from utils.parse import write_jsonl
from utils.shapes import DEFAULT_CLOUD_POINTS, Polygon, PointCloud, boundary_query, sample_point_cloud

LINK1 = 0.12
LINK2 = 0.10
PALM_HALF_WIDTH = 0.08
MOUNTS = np.array([[-PALM_HALF_WIDTH, 0.0], [PALM_HALF_WIDTH, 0.0]])
JOINT_LIMIT = np.pi / 2
HOME_Q = np.array([-0.6, 0.9, np.pi, 0.3, 0.0, -0.3, 0.0])
START_REGION = ((-0.9, -0.3), (-0.3, 0.3))  # (x range, y range)
GOAL_REGION = ((0.3, 0.9), (-0.3, 0.3))
PALM_LIMIT = 1.2
WORKSPACE = 1.5
Q_DIM = 7
FLAT_DIM = 12


class InvalidState(RuntimeError):
    """Raised when stepping an episode that has already finished."""


class SimConfig(object):
    """Environment constants.

    Built from an IladConfig with ``IladConfig.sim_config()``; the defaults
    below are the ones used throughout the pipeline.
    """
    _defaults = OrderedDict([
        ("horizon", 200),
        ("action_clip", 0.05),
        ("contact_tol", 0.015),
        ("opposition", -0.5),
        ("max_push", 0.02),
        ("success_radius", 0.1),
        ("cloud_points", DEFAULT_CLOUD_POINTS),
        ("reward_reach", 0.1),
        ("reward_grasp", 1.0),
        ("reward_carry", 0.5),
        ("reward_success", 10.0),
        ("reward_action", 0.001),
    ])

    def __init__(self, **kwargs):
        for key in kwargs:
            if key not in self._defaults:
                raise ValueError("Unknown simulator setting '{}'".format(key))
        for key, default in self._defaults.items():
            setattr(self, key, kwargs.get(key, default))
        self.horizon = int(self.horizon)
        self.cloud_points = int(self.cloud_points)

    def to_dict(self):
        return OrderedDict((key, getattr(self, key)) for key in self._defaults)

    def __eq__(self, other):
        if not isinstance(other, SimConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "SimConfig({})".format(", ".join("{}={}".format(k, v) for k, v in self.to_dict().items()))


class Contact(object):
    """Fingertip contact: closest boundary point and outward normal (world frame)."""

    def __init__(self, point, normal):
        self.point = np.asarray(point, dtype=float)
        self.normal = np.asarray(normal, dtype=float)

    def __repr__(self):
        return "Contact(point={}, normal={})".format(self.point.tolist(), self.normal.tolist())


class Observation(object):
    """Policy input: canonical cloud, object pose, hand joints and target."""

    def __init__(self, cloud, pose, q, target):
        self.cloud = cloud  # type: PointCloud
        self.pose = np.array(pose, dtype=float)
        self.q = np.array(q, dtype=float)
        self.target = np.array(target, dtype=float)

    def flat(self):
        # type: () -> np.ndarray
        """The 12 non-cloud entries: pose (3), q (7), target (2)."""
        return np.concatenate([self.pose, self.q, self.target])

    def to_dict(self):
        return OrderedDict([("cloud", self.cloud.points.tolist()), ("pose", self.pose.tolist()),
                            ("q", self.q.tolist()), ("target", self.target.tolist())])

    @classmethod
    def from_dict(cls, record):
        return cls(PointCloud(record["cloud"]), record["pose"], record["q"], record["target"])

    def __repr__(self):
        return "Observation(pose={}, q={}, target={})".format(
            np.round(self.pose, 4).tolist(), np.round(self.q, 4).tolist(), np.round(self.target, 4).tolist())


class EnvState(object):
    """Full simulator state of one episode.

    ``rel`` holds the object pose in the palm frame while grasped. ``pose`` is
    ``[x, y, theta]`` of the object's canonical frame in the world; its
    position stays within ``WORKSPACE`` whether the object is free or carried.
    """

    def __init__(self, obj, q, pose, target, grasped=False, rel=None, step_count=0,
                 done=False, just_grasped=False, contacts=(None, None), cfg=None):
        self.object = obj  # type: Polygon
        self.q = np.array(q, dtype=float)
        self.pose = np.array(pose, dtype=float)
        self.target = np.array(target, dtype=float)
        self.grasped = bool(grasped)
        self.rel = np.zeros(3) if rel is None else np.array(rel, dtype=float)
        self.step_count = int(step_count)
        self.done = bool(done)
        self.just_grasped = bool(just_grasped)
        self.contacts = tuple(contacts)
        self.cfg = cfg if cfg is not None else SimConfig()

    def copy(self):
        return EnvState(self.object, self.q, self.pose, self.target, self.grasped, self.rel,
                        self.step_count, self.done, self.just_grasped, self.contacts, self.cfg)

    @property
    def palm(self):
        return self.q[:3]

    def __repr__(self):
        return "EnvState(object={}, step={}, grasped={}, done={}, pose={})".format(
            self.object.instance_id, self.step_count, self.grasped, self.done, np.round(self.pose, 4).tolist())


_CLOUD_CACHE = dict()  # type: Dict[Tuple[str, int, int, bytes], PointCloud]


def object_cloud(obj, n=DEFAULT_CLOUD_POINTS):
    # type: (Polygon, int) -> PointCloud
    """Observation cloud of an object, seeded by its instance id."""
    key = (obj.category, obj.instance_id, int(n), obj.vertices.tobytes())
    if key not in _CLOUD_CACHE:
        _CLOUD_CACHE[key] = sample_point_cloud(obj, n, seed=obj.instance_id)
    return _CLOUD_CACHE[key]


def observe(state):
    # type: (EnvState) -> Observation
    return Observation(object_cloud(state.object, state.cfg.cloud_points), state.pose, state.q, state.target)


def reset(obj, seed, cfg=None):
    # type: (Polygon, int, Optional[SimConfig]) -> Tuple[EnvState, Observation]
    """Start an episode with random object and target placement.

    The object is placed uniformly in the start region with a uniform
    orientation, the target uniformly in the goal region. The regions are
    0.6 apart along x so every start-target distance is at least 0.6.
    """
    cfg = cfg if cfg is not None else SimConfig()
    rng = rng_for(seed)
    (sx, sy), (gx, gy) = START_REGION, GOAL_REGION
    pose = np.array([rng.uniform(*sx), rng.uniform(*sy), wrap_angle(rng.uniform(-np.pi, np.pi))])
    target = np.array([rng.uniform(*gx), rng.uniform(*gy)])
    state = EnvState(obj, HOME_Q, pose, target, cfg=cfg)
    state.contacts = _contacts_of(state)
    return state, observe(state)


def batch_forward_kinematics(q):
    # type: (np.ndarray) -> Tuple[np.ndarray, np.ndarray]
    """Fingertip positions (B, 2, 2) and palm poses (B, 3) for a batch of q."""
    q = np.atleast_2d(q)
    j1 = q[:, [3, 5]]                                              # (B, 2)
    j12 = j1 + q[:, [4, 6]]
    local = (MOUNTS[None] +
             LINK1 * np.stack([-np.sin(j1), np.cos(j1)], axis=2) +
             LINK2 * np.stack([-np.sin(j12), np.cos(j12)], axis=2))  # (B, 2, 2)
    c, s = np.cos(q[:, 2])[:, None], np.sin(q[:, 2])[:, None]
    world = np.stack([c * local[..., 0] - s * local[..., 1],
                      s * local[..., 0] + c * local[..., 1]], axis=2) + q[:, None, :2]
    return world, q[:, :3].copy()


def forward_kinematics(q):
    # type: (np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]
    """Fingertip 1, fingertip 2 and palm pose in the world frame.

    Parameters
    ----------
    q: array (7,)
        Hand configuration.

    Returns
    -------
    tip1, tip2: array (2,)
    palm: array (3,)
        Palm x, y and rotation.
    """
    tips, palm = batch_forward_kinematics(np.asarray(q, dtype=float)[None])
    return tips[0, 0], tips[0, 1], palm[0]


def compose(frame, rel):
    """World pose of ``rel`` expressed in ``frame`` (both batches of [x, y, theta])."""
    c, s = np.cos(frame[:, 2]), np.sin(frame[:, 2])
    x = frame[:, 0] + c * rel[:, 0] - s * rel[:, 1]
    y = frame[:, 1] + s * rel[:, 0] + c * rel[:, 1]
    return np.stack([x, y, wrap_angle(frame[:, 2] + rel[:, 2])], axis=1)


def relative(frame, pose):
    """Pose expressed in ``frame``, the inverse of :func:`compose`."""
    c, s = np.cos(frame[:, 2]), np.sin(frame[:, 2])
    dx, dy = pose[:, 0] - frame[:, 0], pose[:, 1] - frame[:, 1]
    return np.stack([c * dx + s * dy, -s * dx + c * dy, wrap_angle(pose[:, 2] - frame[:, 2])], axis=1)


def batch_contacts(obj, pose, tips, cfg):
    """Contact query for fingertips against the object at a batch of poses.

    Returns
    -------
    touching: bool array (B, 2)
        Tip within ``contact_tol`` of the boundary or inside the object.
    inside: bool array (B, 2)
    depth: array (B, 2)
        Distance to the boundary.
    points, normals: arrays (B, 2, 2)
        Closest boundary point and outward normal in the world frame.
    """
    n_batch = len(pose)
    c, s = np.cos(pose[:, 2])[:, None], np.sin(pose[:, 2])[:, None]
    rel = tips - pose[:, None, :2]
    local = np.stack([c * rel[..., 0] + s * rel[..., 1], -s * rel[..., 0] + c * rel[..., 1]], axis=2)
    flat = local.reshape(-1, 2)
    dist, nearest, normal, _ = boundary_query(obj.vertices, flat)
    inside = obj.contains(flat).reshape(n_batch, 2)
    dist = dist.reshape(n_batch, 2)
    nearest, normal = nearest.reshape(n_batch, 2, 2), normal.reshape(n_batch, 2, 2)

    def to_world(v, translate):
        out = np.stack([c * v[..., 0] - s * v[..., 1], s * v[..., 0] + c * v[..., 1]], axis=2)
        return out + pose[:, None, :2] if translate else out

    touching = (dist <= cfg.contact_tol) | inside
    return touching, inside, dist, to_world(nearest, True), to_world(normal, False)


def batch_advance(obj, q, pose, grasped, rel, dq, cfg):
    """Vectorized transition shared by :func:`step` and planner rollouts.

    Parameters
    ----------
    obj: Polygon
        Object in its canonical frame.
    q, pose, grasped, rel: arrays (B, 7), (B, 3), (B,), (B, 3)
        Current hand, object pose, grasp flag and in-palm object pose.
    dq: array (B, 7)
        Joint velocity commands, clipped here.
    cfg: SimConfig

    Returns
    -------
    result: dict
        ``q``, ``pose``, ``grasped``, ``rel``, ``just_grasped``, ``touching``,
        ``points``, ``normals`` and the clipped action ``dq``.
    """
    dq = np.clip(np.atleast_2d(dq), -cfg.action_clip, cfg.action_clip)
    q = np.atleast_2d(q) + dq
    q[:, :2] = np.clip(q[:, :2], -PALM_LIMIT, PALM_LIMIT)
    q[:, 2] = wrap_angle(q[:, 2])
    q[:, 3:] = np.clip(q[:, 3:], -JOINT_LIMIT, JOINT_LIMIT)
    pose = np.array(pose, dtype=float, ndmin=2)
    grasped = np.array(grasped, dtype=bool, ndmin=1)
    rel = np.array(rel, dtype=float, ndmin=2)
    tips, palm = batch_forward_kinematics(q)

    if np.any(grasped):
        carried = compose(palm[grasped], rel[grasped])
        carried[:, :2] = np.clip(carried[:, :2], -WORKSPACE, WORKSPACE)
        pose[grasped] = carried
    free = ~grasped
    if np.any(free):
        _, inside, depth, _, normals = batch_contacts(obj, pose[free], tips[free], cfg)
        push = -np.sum(normals * (depth * inside)[..., None], axis=1)        # (F, 2)
        norm = np.linalg.norm(push, axis=1)
        scale = np.where(norm > cfg.max_push, cfg.max_push / np.maximum(norm, 1e-300), 1.0)
        moved = pose[free]
        moved[:, :2] = np.clip(moved[:, :2] + push * scale[:, None], -WORKSPACE, WORKSPACE)
        pose[free] = moved

    touching, _, _, points, normals = batch_contacts(obj, pose, tips, cfg)
    just_grasped = free & batch_grasp_check(touching, normals, cfg.opposition)
    released = grasped & ~touching.any(axis=1)
    rel = rel.copy()
    if np.any(just_grasped):
        rel[just_grasped] = relative(palm[just_grasped], pose[just_grasped])
    grasped = (grasped & ~released) | just_grasped
    return {"q": q, "pose": pose, "grasped": grasped, "rel": rel, "just_grasped": just_grasped,
            "touching": touching, "points": points, "normals": normals, "dq": dq}


def batch_grasp_check(touching, normals, opposition=-0.5):
    # type: (np.ndarray, np.ndarray, float) -> np.ndarray
    """Vectorized :func:`grasp_check` on (B, 2) touch flags and (B, 2, 2) normals."""
    touching = np.asarray(touching, dtype=bool).reshape(-1, 2)
    normals = np.asarray(normals, dtype=float).reshape(-1, 2, 2)
    return touching.all(axis=1) & (np.sum(normals[:, 0] * normals[:, 1], axis=1) < opposition)


def grasp_check(contacts, opposition=-0.5):
    # type: (Tuple[Optional[Contact], Optional[Contact]], float) -> bool
    """Both fingertips touch and their contact normals oppose each other."""
    touching = [c is not None for c in contacts]
    normals = [c.normal if c is not None else np.zeros(2) for c in contacts]
    return bool(batch_grasp_check(touching, normals, opposition)[0])


def is_success(state):
    # type: (EnvState) -> bool
    return bool(np.linalg.norm(state.pose[:2] - state.target) <= state.cfg.success_radius)


def reward(state, action):
    # type: (EnvState, np.ndarray) -> float
    """Shaped reward of the transition that produced ``state``.

    Reach penalty before the grasp, carry penalty while grasped, one-off
    bonuses on grasp engage and on success, and a small action cost.
    """
    cfg = state.cfg
    dq = np.clip(np.asarray(action, dtype=float), -cfg.action_clip, cfg.action_clip)
    if state.grasped:
        value = -cfg.reward_carry * np.linalg.norm(state.pose[:2] - state.target)
    else:
        value = -cfg.reward_reach * np.linalg.norm(state.q[:2] - state.pose[:2])
    if state.just_grasped:
        value += cfg.reward_grasp
    if is_success(state):
        value += cfg.reward_success
    return float(value - cfg.reward_action * np.sum(dq ** 2))


def step(state, action):
    # type: (EnvState, np.ndarray) -> Tuple[EnvState, Observation, float, bool]
    """Advance one control step.

    Raises
    ------
    InvalidState
        If the episode is already done or at its horizon.
    """
    cfg = state.cfg
    if state.done or state.step_count >= cfg.horizon:
        raise InvalidState("Episode on object {} is finished (step {})".format(
            state.object.instance_id, state.step_count))
    action = np.asarray(action, dtype=float).reshape(Q_DIM)
    if not np.all(np.isfinite(action)):
        raise ValueError("Action has non-finite entries: {}".format(action))
    out = batch_advance(state.object, state.q[None], state.pose[None], state.grasped,
                        state.rel[None], action[None], cfg)
    contacts = tuple(Contact(out["points"][0, i], out["normals"][0, i]) if out["touching"][0, i] else None
                     for i in range(2))
    new = EnvState(state.object, out["q"][0], out["pose"][0], state.target, out["grasped"][0],
                   out["rel"][0], state.step_count + 1, False, out["just_grasped"][0], contacts, cfg)
    value = reward(new, action)
    new.done = is_success(new) or new.step_count >= cfg.horizon
    if new.just_grasped:
        logging.debug("Grasp engaged on object {} at step {}".format(new.object.instance_id, new.step_count))
    return new, observe(new), value, new.done


def _contacts_of(state):
    tips, _ = batch_forward_kinematics(state.q[None])
    touching, _, _, points, normals = batch_contacts(state.object, state.pose[None], tips, state.cfg)
    return tuple(Contact(points[0, i], normals[0, i]) if touching[0, i] else None for i in range(2))


def trace_record(state, value):
    # type: (EnvState, float) -> Dict[str, Any]
    return OrderedDict([("q", state.q.tolist()), ("pose", state.pose.tolist()),
                        ("grasped", state.grasped), ("reward", float(value)), ("done", state.done)])


def write_trace(filename, records):
    # type: (str, List[Dict[str, Any]]) -> None
    """Episode trace as JSON lines, one record per step."""
    write_jsonl(filename, records)
