"""Dexterous grasping from point clouds with imitation-learned affordances.

Goals
-----
Generate object sets and planner demonstrations, train grasping policies in
one of four modes, evaluate them on unseen objects and run ablation grids.

Examples
--------
python ilad.py gen-objects --category bottle --count 20 --test-fraction 0.5 --seed 0 --out objects.json
python ilad.py gen-demos --objects objects.json --per-object 2 --seed 0 --out demos.jsonl
python ilad.py train --mode ilad --objects objects.json --demos demos.jsonl --config data/template_config.txt --out run
python ilad.py eval --checkpoint run/policy.npz --objects objects.json --split test --trials 100 --seeds 0,1,2 --out eval.json

"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from utils.common import config_hash
from utils.harness import AblationSpec, ScriptedGraspController, distribute_trials, evaluate_success
from utils.harness import report, run_ablation, trace_episode
from utils.imitation import IladConfig, parse_mode, train
from utils.nets import load_checkpoint
from utils.parse import parse_seed_list
from utils.planner import CemConfig, DemoSet, generate_demo_set
from utils.shapes import CATEGORIES, generate_category_instances, read_object_set, train_test_split
from utils.shapes import write_object_set
from utils.sim import write_trace


def parse_args(args):
    # type: (List[str]) -> argparse.Namespace
    """ILAD argparse parser."""
    parser = argparse.ArgumentParser(description='Point-cloud grasping with imitation learning')
    parser.add_argument("--debug", help="Turning on debug output", action='store_true', default=False)
    subparsers = parser.add_subparsers(dest="command", help="Pipeline stage")
    subparsers.required = True

    objects = subparsers.add_parser("gen-objects", help="Generate a category of object instances")
    objects.add_argument("--category", choices=CATEGORIES, required=True, type=str)
    objects.add_argument("--count", help="Number of instances", default=20, type=int)
    objects.add_argument("--test-fraction", help="Fraction held out as unseen objects", default=0.5, type=float)
    objects.add_argument("--seed", default=0, type=int)
    objects.add_argument("--out", help="Object-set JSON file", required=True, type=str)

    demos = subparsers.add_parser("gen-demos", help="Plan demonstrations on the training objects")
    demos.add_argument("--objects", help="Object-set JSON file", required=True, type=str)
    demos.add_argument("--per-object", help="Demonstrations per object", default=2, type=int)
    demos.add_argument("--delta", help="Acceptance threshold on the final cost", default=None, type=float)
    demos.add_argument("--no-grasp-pose", help="Plan towards the object only, without a grasp pose",
                       action="store_true")
    demos.add_argument("--planner", choices=["cem", "rrt"], default="cem", type=str)
    demos.add_argument("--config", help="Planner settings (JSON or key = value file)", default=None, type=str)
    demos.add_argument("--seed", default=0, type=int)
    demos.add_argument("--out", help="Demonstration JSON-lines file", required=True, type=str)
    demos.add_argument("--report", help="Per-object generation report (csv). Default next to --out.",
                       default=None, type=str)

    training = subparsers.add_parser("train", help="Train a policy")
    training.add_argument("--mode", choices=["rl", "rl-pc", "dapg-pc", "ilad"], default="ilad", type=str)
    training.add_argument("--objects", help="Object-set JSON file", required=True, type=str)
    training.add_argument("--demos", help="Demonstration file, needed by dapg-pc and ilad", default=None, type=str)
    training.add_argument("--config", help="IladConfig (JSON or key = value file)", default=None, type=str)
    training.add_argument("--seed", help="Overrides the config seed", default=None, type=int)
    training.add_argument("--out", help="Run directory", required=True, type=str)

    evaluation = subparsers.add_parser("eval", help="Evaluate a policy on an object split")
    evaluation.add_argument("--checkpoint", help="Policy checkpoint (.npz)", default=None, type=str)
    evaluation.add_argument("--scripted", help="Evaluate the scripted grasp controller instead of a policy",
                            action="store_true")
    evaluation.add_argument("--objects", help="Object-set JSON file", required=True, type=str)
    evaluation.add_argument("--split", choices=["train", "test"], default="test", type=str)
    evaluation.add_argument("--trials", help="Total trials per seed, spread over the objects", default=100, type=int)
    evaluation.add_argument("--seeds", help="Comma separated evaluation seeds", default="0", type=str)
    evaluation.add_argument("--config", help="IladConfig for the environment settings", default=None, type=str)
    evaluation.add_argument("--out", help="Evaluation report JSON file", required=True, type=str)
    evaluation.add_argument("--trace", help="Per-step trace (JSON lines) of the first episode", default=None,
                            type=str)

    ablate = subparsers.add_parser("ablate", help="Run an ablation grid")
    ablate.add_argument("--spec", help="Ablation JSON file", required=True, type=str)
    ablate.add_argument("--out", help="Output directory", required=True, type=str)

    summary = subparsers.add_parser("report", help="Learning curves from training runs")
    summary.add_argument("--runs", help="Run directories", nargs="+", required=True, type=str)
    summary.add_argument("--out", help="Output directory", required=True, type=str)
    return parser.parse_args(args)


def main_gen_objects(category, count, test_fraction=0.5, seed=0, out="objects.json"):
    # type: (str, int, float, int, str) -> int
    instances = generate_category_instances(category, count, seed)
    train_set, test_set = train_test_split(instances, test_fraction, seed)
    write_object_set(out, train_set + test_set)
    logging.info("Wrote {} train and {} test {} instances to {}".format(
        len(train_set), len(test_set), category, out))
    return 0


def main_gen_demos(objects, per_object, out, delta=None, no_grasp_pose=False, planner="cem", config=None,
                   seed=0, report=None):
    # type: (str, int, str, Optional[float], bool, str, Optional[str], int, Optional[str]) -> int
    """Plan demonstrations on the training split of an object set."""
    cfg = CemConfig() if config is None else CemConfig.from_file(config)
    if delta is not None:
        cfg = CemConfig.from_dict(dict(cfg.to_dict(), delta=delta))
    train_objects = read_object_set(objects, split="train")
    if not train_objects:
        raise ValueError("No training objects in {}".format(objects))
    if report is None:
        report = os.path.splitext(out)[0] + "_report.csv"
    demo_set = generate_demo_set(train_objects, per_object, cfg, use_grasp_pose=not no_grasp_pose, seed=seed,
                                 planner=planner, out=out, report_out=report)
    logging.info("Wrote {} demonstrations ({} pairs) to {}".format(len(demo_set), demo_set.n_pairs(), out))
    return 0


def main_train(mode, objects, out, demos=None, config=None, seed=None):
    # type: (str, str, str, Optional[str], Optional[str], Optional[int]) -> int
    """Train one policy and write its run directory."""
    cfg = IladConfig() if config is None else IladConfig.from_file(config)
    if seed is not None:
        cfg = cfg.copy(seed=seed)
    mode = parse_mode(mode)
    demo_set = DemoSet.from_file(demos) if demos is not None else None
    if mode in ("RL", "RL_PC") and demo_set is not None:
        logging.warning("Mode {} ignores the demonstrations in {}".format(mode, demos))
        demo_set = None
    train_objects = read_object_set(objects, split="train")
    _, metrics = train(train_objects, demo_set, cfg, mode, out_dir=out)
    if metrics:
        logging.info("Final mean return {:.3f}".format(metrics[-1]["mean_return"]))
    return 0


def main_eval(objects, out, checkpoint=None, scripted=False, split="test", trials=100, seeds="0", config=None,
              trace=None):
    # type: (str, str, Optional[str], bool, str, int, str, Optional[str], Optional[str]) -> int
    """Success rate of a checkpoint (or the scripted controller) on one split."""
    if (checkpoint is None) == (not scripted):
        raise ValueError("Give exactly one of --checkpoint and --scripted")
    cfg = IladConfig() if config is None else IladConfig.from_file(config)
    eval_objects = read_object_set(objects, split=split)
    if not eval_objects:
        raise ValueError("No {} objects in {}".format(split, objects))
    params, controller = None, None
    if scripted:
        controller = ScriptedGraspController(seed=cfg.seed)
    else:
        params, _ = load_checkpoint(checkpoint)
    result = evaluate_success(params, eval_objects, distribute_trials(eval_objects, trials),
                              parse_seed_list(seeds), cfg.sim_config(), controller=controller,
                              config_digest=config_hash(cfg.to_dict()))
    result.write(out)
    if trace is not None:
        first = min(eval_objects, key=lambda obj: obj.instance_id)
        records = trace_episode(params, first, parse_seed_list(seeds)[0], cfg.sim_config(), controller=controller)
        write_trace(trace, records)
        logging.info("Wrote a {}-step trace of object {} to {}".format(len(records), first.instance_id, trace))
    print("Success rate {:.3f} over {} trials".format(result.success_rate, result.trials))
    return 0


def main_ablate(spec, out):
    # type: (str, str) -> int
    rows = run_ablation(AblationSpec.from_file(spec), out)
    failed = [row for row in rows if row["status"] != "ok"]
    if failed:
        logging.warning("{} of {} ablation rows failed".format(len(failed), len(rows)))
    return 0


def main_report(runs, out):
    # type: (List[str], str) -> int
    curves = report(runs, out)
    print("Wrote learning curves of {} methods to {}".format(len(curves), out))
    return 0


COMMANDS = {
    "gen-objects": main_gen_objects,
    "gen-demos": main_gen_demos,
    "train": main_train,
    "eval": main_eval,
    "ablate": main_ablate,
    "report": main_report,
}


def main(command, **opts):
    # type: (str, **object) -> int
    return COMMANDS[command](**opts)


if __name__ == '__main__':
    args = vars(parse_args(sys.argv[1:]))
    debug = args.pop('debug')
    opts = {k: args[k] for k in args}

    if debug:
        logging.basicConfig(level=logging.DEBUG,
                            format='%(asctime)s %(levelname)s %(message)s')
    else:
        logging.basicConfig(level=logging.WARNING,
                            format='%(asctime)s %(levelname)s %(message)s')

    sys.exit(main(**opts))
