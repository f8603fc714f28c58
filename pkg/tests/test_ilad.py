import os

import pytest

from ilad import main, parse_args
from utils.parse import read_json, read_jsonl
from utils.shapes import read_object_set


@pytest.mark.parametrize("args, command", [
    (["gen-objects", "--category", "mug", "--out", "o.json"], "gen-objects"),
    (["gen-demos", "--objects", "o.json", "--out", "d.jsonl"], "gen-demos"),
    (["train", "--objects", "o.json", "--out", "run"], "train"),
    (["eval", "--objects", "o.json", "--scripted", "--out", "e.json"], "eval"),
    (["ablate", "--spec", "a.json", "--out", "grid"], "ablate"),
    (["report", "--runs", "a", "b", "--out", "rep"], "report")])
def test_parse_args_commands(args, command):
    parsed = parse_args(args)
    assert parsed.command == command
    assert parsed.debug is False


def test_parse_args_defaults():
    parsed = parse_args(["--debug", "gen-demos", "--objects", "o.json", "--out", "d.jsonl"])
    assert parsed.debug is True
    assert parsed.per_object == 2
    assert parsed.planner == "cem"
    assert parsed.delta is None
    assert parsed.no_grasp_pose is False
    parsed = parse_args(["train", "--objects", "o.json", "--out", "run"])
    assert parsed.mode == "ilad"
    assert parsed.demos is None
    parsed = parse_args(["eval", "--objects", "o.json", "--scripted", "--out", "e.json"])
    assert parsed.trace is None
    assert parsed.split == "test"


@pytest.mark.parametrize("args", [
    [],
    ["gen-objects", "--category", "teapot", "--out", "o.json"],
    ["train", "--mode", "ppo", "--objects", "o.json", "--out", "run"],
    ["eval", "--objects", "o.json"]])
def test_parse_args_rejects(args):
    with pytest.raises(SystemExit):
        parse_args(args)


def test_gen_objects_command(tmpdir):
    out = str(tmpdir.join("objects.json"))
    args = vars(parse_args(["gen-objects", "--category", "bottle", "--count", "6", "--test-fraction", "0.5",
                            "--out", out]))
    args.pop("debug")
    assert main(**args) == 0
    assert len(read_object_set(out, split="train")) == 3
    assert len(read_object_set(out, split="test")) == 3


def test_eval_needs_one_policy_source(tmpdir):
    out = str(tmpdir.join("objects.json"))
    main("gen-objects", category="can", count=2, out=out)
    with pytest.raises(ValueError):
        main("eval", objects=out, out=str(tmpdir.join("eval.json")))
    with pytest.raises(ValueError):
        main("eval", objects=out, out=str(tmpdir.join("eval.json")), checkpoint="policy.npz", scripted=True)


def test_train_then_eval_commands(tmpdir):
    objects = str(tmpdir.join("objects.json"))
    main("gen-objects", category="can", count=2, out=objects)
    config = str(tmpdir.join("config.txt"))
    with open(config, "w") as f:
        f.write("epochs = 1\nn_traj_per_epoch = 1\nhorizon = 5\ncloud_points = 16\n"
                "encoder_widths = [8]\npost_pool_widths = [8]\nmlp_widths = [8]\nvalue_widths = [8]\n")
    run = str(tmpdir.join("run"))
    assert main("train", mode="rl-pc", objects=objects, out=run, config=config, seed=4) == 0
    assert read_json(os.path.join(run, "manifest.json"))["seed"] == 4
    result = str(tmpdir.join("eval.json"))
    assert main("eval", objects=objects, out=result, checkpoint=os.path.join(run, "policy.npz"), trials=2,
                seeds="0,1", config=config) == 0
    summary = read_json(result)
    assert summary["trials"] == 4
    assert summary["seeds"] == [0, 1]


def test_eval_writes_a_trace(tmpdir):
    objects = str(tmpdir.join("objects.json"))
    main("gen-objects", category="can", count=2, out=objects)
    config = str(tmpdir.join("config.txt"))
    with open(config, "w") as f:
        f.write("horizon = 5\ncloud_points = 16\n")
    trace = str(tmpdir.join("trace.jsonl"))
    assert main("eval", objects=objects, out=str(tmpdir.join("eval.json")), scripted=True, trials=1,
                config=config, trace=trace) == 0
    records = read_jsonl(trace)
    assert 1 <= len(records) <= 5
    assert records[-1]["done"]
    assert set(records[0]) == {"q", "pose", "grasped", "reward", "done"}
