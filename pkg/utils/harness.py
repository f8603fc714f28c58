"""Evaluation on held-out objects, ablation grids and learning-curve reports."""
import itertools
import logging
import os
from collections import OrderedDict
from typing import Any, Dict, List, Optional, Tuple

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from utils.common import config_hash, parallel_map, rng_for, wrap_angle  # noqa: E402
from utils.imitation import IladConfig, parse_mode, run_episode, train  # noqa: E402
from utils.nets import PolicyParams  # noqa: E402
from utils.parse import read_csv, read_json, write_csv, write_json  # noqa: E402
from utils.planner import (CemConfig, DemoSet, GraspTarget, NoGraspFound, generate_demo_set,  # noqa: E402
                           synthesize_grasps)
from utils.shapes import CATEGORIES, Polygon, generate_category_instances, train_test_split  # noqa: E402
from utils import sim  # noqa: E402

DEMO_VARIANTS = OrderedDict([
    ("cem_grasp_d006", dict(planner="cem", use_grasp_pose=True, delta=0.06)),
    ("cem_grasp_d010", dict(planner="cem", use_grasp_pose=True, delta=0.10)),
    ("cem_nograsp_d006", dict(planner="cem", use_grasp_pose=False, delta=0.06)),
    ("rrt", dict(planner="rrt", use_grasp_pose=True, delta=0.06)),
])
EPISODE_FIELDS = ["seed", "object_id", "trial", "success", "steps", "final_distance"]
ABLATION_FIELDS = ["cell", "mode", "T", "demo_count", "demo_variant", "seed", "category", "success_rate",
                   "status", "error"]
CURVE_FIELDS = ["method", "epoch", "mean_return", "std_return", "normalized", "runs"]
FINGER_OPEN = np.array([0.6, 0.0, -0.6, 0.0])
BACK_OFF = 0.25
SQUEEZE = np.array([-0.3, 0.0, 0.3, 0.0])
MISSED, GRASPED, DELIVERED = 0, 1, 2  # rehearsal outcomes, ordered


class EvalReport(object):
    """Success counts per object and seed, plus the per-episode log."""

    def __init__(self, episodes, seeds, config_digest=""):
        self.episodes = list(episodes)  # type: List[Dict[str, Any]]
        self.seeds = list(seeds)
        self.config_hash = config_digest

    @property
    def trials(self):
        return len(self.episodes)

    @property
    def successes(self):
        return sum(int(e["success"]) for e in self.episodes)

    @property
    def success_rate(self):
        return self.successes / float(self.trials) if self.trials else 0.0

    def per_object(self):
        counts = OrderedDict()  # type: Dict[int, List[int]]
        for e in sorted(self.episodes, key=lambda e: e["object_id"]):
            successes, trials = counts.get(e["object_id"], [0, 0])
            counts[e["object_id"]] = [successes + int(e["success"]), trials + 1]
        return counts

    def per_seed_rates(self):
        rates = []
        for seed in self.seeds:
            episodes = [e for e in self.episodes if e["seed"] == seed]
            rates.append(np.mean([e["success"] for e in episodes]) if episodes else 0.0)
        return np.array(rates, dtype=float)

    def to_dict(self):
        rates = self.per_seed_rates()
        return OrderedDict([
            ("success_rate", self.success_rate), ("successes", self.successes), ("trials", self.trials),
            ("seed_mean", float(rates.mean()) if len(rates) else 0.0),
            ("seed_std", float(rates.std()) if len(rates) else 0.0),
            ("seeds", self.seeds), ("config_hash", self.config_hash),
            ("per_object", OrderedDict((str(k), {"successes": v[0], "trials": v[1]})
                                       for k, v in self.per_object().items())),
        ])

    def write(self, filename):
        """JSON summary plus a CSV episode log next to it."""
        write_json(filename, self.to_dict())
        write_csv(os.path.splitext(filename)[0] + "_episodes.csv", self.episodes, EPISODE_FIELDS)

    def __repr__(self):
        return "EvalReport(success_rate={:.3f}, trials={})".format(self.success_rate, self.trials)


def distribute_trials(objects, total):
    # type: (List[Polygon], int) -> Dict[int, int]
    """Spread ``total`` trials uniformly, remainder to the lowest instance ids."""
    if not objects:
        raise ValueError("No objects to distribute trials over")
    ids = sorted(o.instance_id for o in objects)
    base, extra = divmod(int(total), len(ids))
    return OrderedDict((oid, base + (1 if i < extra else 0)) for i, oid in enumerate(ids))


def _palm_axis(theta):
    return np.array([-np.sin(theta), np.cos(theta)])


def _joint_delta(goal, q):
    diff = np.asarray(goal, dtype=float) - q
    diff[2] = wrap_angle(diff[2])
    return diff


def _segment_steps(goal, q, clip):
    return int(np.ceil(np.max(np.abs(_joint_delta(goal, q))) / clip - 1e-9))


def _toward(goal, q, clip):
    """Straight joint-space step towards ``goal``, all joints arriving together."""
    diff = _joint_delta(goal, q)
    largest = np.max(np.abs(diff))
    return diff if largest <= clip else diff * (clip / largest)


def carry_action(target, pose, clip):
    # type: (np.ndarray, np.ndarray, float) -> np.ndarray
    """Palm translation that moves a grasped object straight at the target."""
    action = np.zeros(sim.Q_DIM)
    action[:2] = np.clip(np.asarray(target) - np.asarray(pose)[:2], -clip, clip)
    return action


def grasp_waypoints(q, jh, retreat=False):
    # type: (np.ndarray, np.ndarray, bool) -> List[Tuple[str, np.ndarray]]
    """Phase-labelled joint waypoints from ``q`` to a closed grasp at ``jh``.

    With ``retreat`` the hand first opens in place and backs off along its
    own axis. It then moves above the pre-grasp pose, descends to it and to
    the grasp palm pose with open fingers, closes onto the contacts and
    finally squeezes.
    """
    q, jh = np.asarray(q, dtype=float), np.asarray(jh, dtype=float)
    points = []  # type: List[Tuple[str, np.ndarray]]
    start = q.copy()
    if retreat:
        opened = q.copy()
        opened[3:] = FINGER_OPEN
        back = opened.copy()
        back[:2] -= BACK_OFF * _palm_axis(q[2])
        points += [("retreat", opened), ("retreat", back)]
        start = back
    pre = jh.copy()
    pre[:2] -= BACK_OFF * _palm_axis(jh[2])
    pre[3:] = FINGER_OPEN
    above = pre.copy()
    above[1] = max(pre[1], start[1])
    descend = jh.copy()
    descend[3:] = FINGER_OPEN
    squeeze = jh.copy()
    squeeze[3:] = np.clip(jh[3:] + SQUEEZE, -sim.JOINT_LIMIT, sim.JOINT_LIMIT)
    points += [("approach", above), ("approach", pre), ("approach", descend), ("close", jh.copy()),
               ("close", squeeze)]
    for _, waypoint in points:
        waypoint[:2] = np.clip(waypoint[:2], -sim.PALM_LIMIT, sim.PALM_LIMIT)
    return points


def rehearse(state, waypoints):
    # type: (sim.EnvState, List[Tuple[str, np.ndarray]]) -> Tuple[List[Tuple[str, np.ndarray]], int]
    """Play a waypoint script on the simulator model from ``state``.

    Nothing in ``state`` is changed.

    Returns
    -------
    plan: list of (phase, action)
        Actions up to and including the step that engages the grasp.
    outcome: int
        DELIVERED if carrying afterwards reaches the target within the
        horizon, GRASPED if only the grasp engages, MISSED otherwise.
    """
    cfg = state.cfg
    budget = cfg.horizon - state.step_count
    q, pose, rel = state.q[None], state.pose[None], state.rel[None]
    grasped = np.array([state.grasped])
    plan = []  # type: List[Tuple[str, np.ndarray]]
    for phase, goal in waypoints:
        for _ in range(_segment_steps(goal, q[0], cfg.action_clip)):
            if grasped[0] or len(plan) >= budget:
                break
            action = _toward(goal, q[0], cfg.action_clip)
            out = sim.batch_advance(state.object, q, pose, grasped, rel, action[None], cfg)
            q, pose, grasped, rel = out["q"], out["pose"], out["grasped"], out["rel"]
            plan.append((phase, action))
            if np.linalg.norm(pose[0, :2] - state.target) <= cfg.success_radius:
                return plan, DELIVERED
    if not grasped[0]:
        return plan, MISSED
    for _ in range(len(plan), budget):
        action = carry_action(state.target, pose[0], cfg.action_clip)
        out = sim.batch_advance(state.object, q, pose, grasped, rel, action[None], cfg)
        q, pose, grasped, rel = out["q"], out["pose"], out["grasped"], out["rel"]
        if np.linalg.norm(pose[0, :2] - state.target) <= cfg.success_radius:
            return plan, DELIVERED
        if not grasped[0]:
            break
    return plan, GRASPED


class ScriptedGraspController(object):
    """Closed-loop oracle: synthesize grasps, approach, close, then carry to the target.

    Candidate grasps are ranked by how far down their fingers point. Each
    candidate's approach and close are rehearsed on the simulator model from
    the current state, and the controller commits to the first one whose
    rehearsal ends at the target (or else the first one that engages a
    grasp). When the fingers close without a grasp the hand re-opens, backs
    off and moves on to the next untried candidate.
    """

    def __init__(self, k=16, seed=0, max_replans=3):
        self.k = k
        self.seed = seed
        self.max_replans = max_replans
        self.phase = "idle"
        self.candidates = []  # type: List[GraspTarget]
        self.waypoints = []  # type: List[Tuple[str, np.ndarray]]
        self.plan = []  # type: List[Tuple[str, np.ndarray]]
        self.grasp_q = None  # type: Optional[np.ndarray]
        self.outcome = MISSED
        self.replans = 0

    def reset(self, state):
        # type: (sim.EnvState) -> None
        self.phase, self.waypoints, self.plan, self.grasp_q = "idle", [], [], None
        self.outcome, self.replans = MISSED, 0
        try:
            grasps = synthesize_grasps(state.object, self.k, rng_for(self.seed, state.object.instance_id).integers(2 ** 31))
        except NoGraspFound as err:
            logging.warning("Scripted controller has no grasp: {}".format(err))
            self.candidates = []
            return
        self.candidates = sorted(grasps, key=lambda g: np.cos(g.placed(state.pose).jh[2]))
        self._commit(state, retreat=False)

    def _commit(self, state, retreat):
        best = None
        for index, grasp in enumerate(self.candidates):
            jh = grasp.placed(state.pose).jh
            waypoints = grasp_waypoints(state.q, jh, retreat)
            plan, outcome = rehearse(state, waypoints)
            if best is None or outcome > best[0]:
                best = (outcome, index, waypoints, plan, jh)
            if outcome == DELIVERED:
                break
        if best is None:
            self.phase = "idle"
            return
        self.outcome, index, self.waypoints, self.plan, self.grasp_q = best
        self.candidates.pop(index)
        self.phase = self.plan[0][0] if self.plan else "idle"
        logging.debug("Object {}: grasp candidate {} rehearsed with outcome {}, {} left".format(
            state.object.instance_id, index, self.outcome, len(self.candidates)))

    def act(self, state):
        # type: (sim.EnvState) -> np.ndarray
        if state.grasped:
            self.phase = "carry"
            return carry_action(state.target, state.pose, state.cfg.action_clip)
        if not self.plan and self.phase != "idle" and self.candidates and self.replans < self.max_replans:
            self.replans += 1
            logging.debug("No grasp on object {} at step {}, trying the next candidate".format(
                state.object.instance_id, state.step_count))
            self._commit(state, retreat=True)
        if self.plan:
            self.phase, action = self.plan.pop(0)
            return action
        self.phase = "idle"
        return np.zeros(sim.Q_DIM)


def run_controller_episode(controller, obj, reset_seed, sim_cfg=None, trace=None):
    """Episode driven by a controller with ``reset(state)`` and ``act(state)``."""
    state, _ = sim.reset(obj, reset_seed, sim_cfg)
    controller.reset(state)
    done = False
    while not done:
        state, _, value, done = sim.step(state, controller.act(state))
        if trace is not None:
            trace.append(sim.trace_record(state, value))
    return state


def _reset_seed(seed, obj, trial):
    return int(rng_for(seed, obj.instance_id, trial).integers(2 ** 31))


def trace_episode(params, obj, seed, sim_cfg=None, controller=None, trial=0):
    # type: (Optional[PolicyParams], Polygon, int, Optional[sim.SimConfig], Any, int) -> List[Dict[str, Any]]
    """Per-step records of one evaluation episode, the same one evaluate_success runs."""
    records = []  # type: List[Dict[str, Any]]
    if controller is not None:
        run_controller_episode(controller, obj, _reset_seed(seed, obj, trial), sim_cfg, trace=records)
    else:
        run_episode(params, obj, _reset_seed(seed, obj, trial), sim_cfg, trace=records)
    return records


def _evaluate_job(job):
    params, controller, obj, trials, seed, sim_cfg = job
    rows = []
    for trial in range(trials):
        reset_seed = _reset_seed(seed, obj, trial)
        if controller is not None:
            state = run_controller_episode(controller, obj, reset_seed, sim_cfg)
            success, steps = sim.is_success(state), state.step_count
            distance = float(np.linalg.norm(state.pose[:2] - state.target))
        else:
            traj = run_episode(params, obj, reset_seed, sim_cfg)
            success, steps, distance = traj.success, len(traj), traj.final_distance
        rows.append(OrderedDict([("seed", seed), ("object_id", obj.instance_id), ("trial", trial),
                                 ("success", bool(success)), ("steps", steps), ("final_distance", distance)]))
    return rows


def evaluate_success(params, objects, trials_per_object, seeds, sim_cfg=None, controller=None, workers=None,
                     config_digest=""):
    # type: (Optional[PolicyParams], List[Polygon], Any, List[int], Optional[sim.SimConfig], Any, Optional[int], str) -> EvalReport
    """Deterministic evaluation episodes for every (seed, object, trial).

    Parameters
    ----------
    params: PolicyParams
        Policy executed with its mean action. Ignored when ``controller`` is given.
    trials_per_object: int or dict
        Trials per object, or a mapping from instance id to trials as made by
        :func:`distribute_trials`.
    seeds: list of int
        Evaluation seeds; every seed repeats the full trial set.
    controller: object [optional]
        Replaces the policy; needs ``reset(state)`` and ``act(state)``.
    """
    if not objects:
        raise ValueError("evaluate_success needs at least one object")
    if isinstance(trials_per_object, dict):
        trials = trials_per_object
    else:
        if int(trials_per_object) < 1:
            raise ValueError("trials_per_object must be at least 1, got {}".format(trials_per_object))
        trials = {o.instance_id: int(trials_per_object) for o in objects}
    jobs = [(params, controller, obj, trials.get(obj.instance_id, 0), seed, sim_cfg)
            for seed in seeds for obj in objects]
    episodes = [row for rows in parallel_map(_evaluate_job, jobs, workers) for row in rows]
    report = EvalReport(episodes, seeds, config_digest)
    logging.info("Evaluated {} episodes: success rate {:.3f}".format(report.trials, report.success_rate))
    return report


class AblationSpec(object):
    """Grid of training variants evaluated on held-out objects."""
    _defaults = OrderedDict([
        ("name", "ablation"),
        ("categories", ["bottle"]),
        ("modes", ["ILAD", "DAPG_PC"]),
        ("T_values", [50]),
        ("demo_counts", [20]),
        ("demo_variants", ["cem_grasp_d006"]),
        ("seeds", [0, 1, 2]),
        ("objects_per_category", 10),
        ("test_fraction", 0.5),
        ("object_seed", 0),
        ("demo_seed", 0),
        ("trials_per_object", 10),
        ("eval_seeds", [0]),
        ("config", {}),
        ("planner", {}),
    ])

    def __init__(self, **kwargs):
        for key in kwargs:
            if key not in self._defaults:
                raise ValueError("Unknown ablation field '{}'".format(key))
        for key, default in self._defaults.items():
            setattr(self, key, kwargs.get(key, default))
        self.modes = [parse_mode(m) for m in self.modes]
        for category in self.categories:
            if category not in CATEGORIES:
                raise ValueError("Unknown category '{}'".format(category))
        for variant in self.demo_variants:
            if variant not in DEMO_VARIANTS:
                raise ValueError("Unknown demo variant '{}'".format(variant))
        if not self.seeds:
            raise ValueError("Ablation needs at least one seed")

    @classmethod
    def from_file(cls, filename):
        return cls(**read_json(filename))

    def to_dict(self):
        return OrderedDict((key, getattr(self, key)) for key in self._defaults)

    def cells(self):
        """(mode, T, demo_count, demo_variant) rows; modes without demos ignore the demo axes."""
        rows = []
        for mode, T, count, variant in itertools.product(self.modes, self.T_values, self.demo_counts,
                                                         self.demo_variants):
            if mode in ("RL", "RL_PC"):
                count, variant = 0, "none"
            row = (mode, int(T), int(count), variant)
            if row not in rows:
                rows.append(row)
        return rows

    def __repr__(self):
        return "AblationSpec(name={}, cells={}, seeds={})".format(self.name, len(self.cells()), self.seeds)


def _split_objects(spec):
    train_objects, test_objects = [], []
    for category in spec.categories:
        instances = generate_category_instances(category, spec.objects_per_category, spec.object_seed)
        train, test = train_test_split(instances, spec.test_fraction, spec.object_seed)
        train_objects.extend(train)
        test_objects.extend(test)
    return train_objects, test_objects


def _cell_name(mode, T, count, variant, seed):
    return "{}_T{}_n{}_{}_s{}".format(mode.lower(), T, count, variant, seed)


def _run_cell(job):
    spec, cell, seed, train_objects, test_objects, demo_file, out_dir = job
    mode, T, count, variant = cell
    name = _cell_name(mode, T, count, variant, seed)
    rows = []
    try:
        params = dict(spec.config)
        params.update(T=T, seed=seed)
        cfg = IladConfig.from_dict(params)
        demos = DemoSet.from_file(demo_file) if demo_file else None
        policy, _ = train(train_objects, demos, cfg, mode, out_dir=os.path.join(out_dir, "runs", name), workers=1)
        for category in spec.categories:
            objects = [o for o in test_objects if o.category == category]
            report = evaluate_success(policy, objects, spec.trials_per_object, spec.eval_seeds, cfg.sim_config(),
                                      workers=1, config_digest=config_hash(cfg.to_dict()))
            rows.append((category, report.success_rate, "ok", ""))
    except Exception as err:  # a failed cell must not stop the grid
        logging.warning("Ablation cell {} failed: {}".format(name, err))
        rows = [(category, float("nan"), "failed", "{}: {}".format(type(err).__name__, err))
                for category in spec.categories]
    return [OrderedDict([("cell", name), ("mode", mode), ("T", T), ("demo_count", count),
                         ("demo_variant", variant), ("seed", seed), ("category", category),
                         ("success_rate", rate), ("status", status), ("error", error)])
            for category, rate, status, error in rows]


def _demo_file(spec, variant, count, train_objects, out_dir):
    """Generate (once) the demonstration file of one variant and size."""
    filename = os.path.join(out_dir, "demos", "{}_n{}.jsonl".format(variant, count))
    if os.path.exists(filename):
        return filename
    recipe = DEMO_VARIANTS[variant]
    planner_params = dict(spec.planner)
    planner_params["delta"] = recipe["delta"]
    cfg = CemConfig.from_dict(planner_params)
    per_object = max(1, int(np.ceil(count / float(max(1, len(train_objects) // len(spec.categories))))))
    generate_demo_set(train_objects, per_object, cfg, recipe["use_grasp_pose"], spec.demo_seed, recipe["planner"],
                      out=filename, report_out=os.path.splitext(filename)[0] + "_report.csv")
    return filename


def run_ablation(spec, out_dir, workers=None):
    # type: (AblationSpec, str, Optional[int]) -> List[Dict[str, Any]]
    """Train and evaluate every cell and seed, then write results.csv and results.md."""
    os.makedirs(out_dir, exist_ok=True)
    write_json(os.path.join(out_dir, "spec.json"), spec.to_dict())
    train_objects, test_objects = _split_objects(spec)
    jobs = []
    for cell in spec.cells():
        mode, T, count, variant = cell
        demo_file = None
        if mode in ("DAPG_PC", "ILAD"):
            try:
                demo_file = _demo_file(spec, variant, count, train_objects, out_dir)
            except Exception as err:
                logging.warning("Demo generation for {} failed: {}".format(variant, err))
                demo_file = os.path.join(out_dir, "demos", "missing_{}_n{}.jsonl".format(variant, count))
        for seed in spec.seeds:
            jobs.append((spec, cell, seed, train_objects, test_objects, demo_file, out_dir))
    rows = [row for rows in parallel_map(_run_cell, jobs, workers) for row in rows]
    write_csv(os.path.join(out_dir, "results.csv"), rows, ABLATION_FIELDS)
    with open(os.path.join(out_dir, "results.md"), "w", encoding="utf-8") as f:
        f.write(ablation_table(rows, spec.categories))
    failed = sum(1 for row in rows if row["status"] != "ok")
    logging.info("Ablation {} finished with {} rows, {} failed".format(spec.name, len(rows), failed))
    return rows


def _row_label(row, varying):
    parts = [row["mode"]]
    if "T" in varying:
        parts.append("T={}".format(row["T"]))
    if "demo_count" in varying:
        parts.append("n={}".format(row["demo_count"]))
    if "demo_variant" in varying:
        parts.append(str(row["demo_variant"]))
    return " ".join(parts)


def ablation_table(rows, categories):
    # type: (List[Dict[str, Any]], List[str]) -> str
    """Markdown table with one row per variant and mean +- std over seeds per category and on average."""
    varying = [key for key in ("T", "demo_count", "demo_variant") if len(set(r[key] for r in rows)) > 1]
    labels = []
    for row in rows:
        label = _row_label(row, varying)
        if label not in labels:
            labels.append(label)
    lines = ["| Method | " + " | ".join(list(categories) + ["Average"]) + " |",
             "|" + "---|" * (len(categories) + 2)]
    for label in labels:
        cells = []
        selected = [r for r in rows if _row_label(r, varying) == label]
        for category in categories:
            rates = [r["success_rate"] for r in selected if r["category"] == category and r["status"] == "ok"]
            cells.append(_mean_std(rates))
        per_seed = OrderedDict()
        for r in selected:
            if r["status"] == "ok":
                per_seed.setdefault(r["seed"], []).append(r["success_rate"])
        cells.append(_mean_std([np.mean(v) for v in per_seed.values()]))
        lines.append("| {} | {} |".format(label, " | ".join(cells)))
    return "\n".join(lines) + "\n"


def _mean_std(values):
    if not len(values):
        return "failed"
    return "{:.2f} ± {:.2f}".format(np.mean(values), np.std(values))


def report(run_dirs, out):
    # type: (List[str], str) -> Dict[str, Dict[str, np.ndarray]]
    """Learning curves per method from finished training runs.

    Runs are grouped by the mode in their manifest. Curves of a method are
    truncated to its shortest run; returns are min-max normalized over all
    methods. Writes learning_curves.csv, summary.md and learning_curves.png
    into ``out``.
    """
    if not run_dirs:
        raise ValueError("report needs at least one run directory")
    grouped = OrderedDict()  # type: Dict[str, List[np.ndarray]]
    for run_dir in run_dirs:
        manifest = read_json(os.path.join(run_dir, "manifest.json"))
        method = manifest.get("label", manifest["mode"])
        returns = np.array([float(r["mean_return"]) for r in read_csv(os.path.join(run_dir, "metrics.csv"))])
        grouped.setdefault(method, []).append(returns)
    curves = OrderedDict()
    for method, runs in grouped.items():
        length = min(len(r) for r in runs)
        if any(len(r) != length for r in runs):
            logging.warning("Method {} has runs of {} epochs, truncating to {}".format(
                method, sorted(set(len(r) for r in runs)), length))
        stacked = np.array([r[:length] for r in runs])
        curves[method] = OrderedDict([("mean", stacked.mean(axis=0)), ("std", stacked.std(axis=0)),
                                      ("runs", len(runs))])
    low = min(c["mean"].min() for c in curves.values())
    high = max(c["mean"].max() for c in curves.values())
    span = high - low if high > low else 1.0
    rows = []
    for method, curve in curves.items():
        curve["normalized"] = (curve["mean"] - low) / span
        for epoch in range(len(curve["mean"])):
            rows.append(OrderedDict([("method", method), ("epoch", epoch), ("mean_return", curve["mean"][epoch]),
                                     ("std_return", curve["std"][epoch]),
                                     ("normalized", curve["normalized"][epoch]), ("runs", curve["runs"])]))
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "learning_curves.csv"), rows, CURVE_FIELDS)
    with open(os.path.join(out, "summary.md"), "w", encoding="utf-8") as f:
        f.write(_curve_summary(curves))
    _plot_curves(curves, os.path.join(out, "learning_curves.png"))
    return curves


def _curve_summary(curves):
    lines = ["| Method | Runs | Epochs | Final return | Last-quartile normalized |", "|---|---|---|---|---|"]
    for method, curve in curves.items():
        n = len(curve["mean"])
        quartile = curve["normalized"][-max(1, n // 4):]
        lines.append("| {} | {} | {} | {:.3f} ± {:.3f} | {:.3f} |".format(
            method, curve["runs"], n, curve["mean"][-1], curve["std"][-1], float(np.mean(quartile))))
    return "\n".join(lines) + "\n"


def _plot_curves(curves, filename):
    fig, ax = plt.subplots(figsize=(6, 4))
    for method, curve in curves.items():
        epochs = np.arange(len(curve["mean"]))
        ax.plot(epochs, curve["normalized"], label=method)
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Normalized mean return")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(filename)
    plt.close(fig)
