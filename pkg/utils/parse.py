"""Functions for parsing and writing the pipeline's parameter and result files."""
import csv
import json
import logging
import os
from typing import Any, Dict, List, Union

import numpy as np


def parse_paramfile(param_file, path=None):
    # type: (str, str) -> Dict[str, Any]
    """Extract configuration parameters from a ``key = value`` text file.

    Parameters
    ----------
    param_file: str
        Filename of parameter file.
    path: str [optional]
        Path to directory of filename.

    Returns
    --------
    parameters: dict
        Parameters as a {param: value} dictionary. Numbers become floats,
        ``true``/``false`` become booleans and ``none`` or a missing value
        becomes None.
    """
    if path is not None:
        param_file = os.path.join(path, param_file)
    parameters = dict()  # type: Dict[str, Any]
    if not os.path.exists(param_file):
        raise ValueError("Parameter file given does not exist. {}".format(param_file))

    with open(param_file, 'r') as f:
        for line in f:
            if line.startswith("#") or line.isspace() or not line:    # Ignores comments and blank/empty lines.
                continue
            if '#' in line:   # Remove comment from end of line
                line = line.split("#")[0]
            line = line.strip()
            if "=" not in line:
                logging.warning("Ignoring line without '=' in {}: {}".format(param_file, line))
                continue
            par, val = line.lower().split('=', 1)
            par, val = par.strip(), val.strip()
            if val == "":
                logging.warning("Parameter missing value in {}. Line = {}. Value set to None.".format(param_file, line))
                parameters[par] = None
            elif (val.startswith("[") and val.endswith("]")) or ("," in val):  # Val is a list
                parameters[par] = parse_list_string(val)
            else:
                parameters[par] = parse_value(val)

    return parameters


def parse_value(string):
    # type: (str) -> Union[None, bool, float, str]
    """Turn a parameter string into None, a bool, a float or leave it a string."""
    if string in ("none", "null"):
        return None
    if string in ("true", "false"):
        return string == "true"
    try:
        return float(string)  # Turn parameters to floats if possible.
    except ValueError:
        return string


def parse_list_string(string):
    # type: (str) -> List[Union[str, float]]
    """Parse list of floats out of a string."""
    string = string.replace("[", "").replace("]", "").strip()
    if not string:
        return []
    list_str = string.split(",")
    try:
        return [float(val) for val in list_str]
    except ValueError:
        # Can't turn into floats.
        return [val.strip() for val in list_str]


def parse_seed_list(string):
    # type: (str) -> List[int]
    """Parse a comma separated seed list such as ``"1,2,3"``."""
    seeds = [s.strip() for s in str(string).split(",") if s.strip()]
    if not seeds:
        raise ValueError("Empty seed list '{}'".format(string))
    return [int(s) for s in seeds]


def read_json(filename):
    with open(filename, 'r') as f:
        return json.load(f)


def write_json(filename, obj):
    _ensure_parent(filename)
    with open(filename, 'w') as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def read_jsonl(filename):
    # type: (str) -> List[Dict[str, Any]]
    records = []
    with open(filename, 'r') as f:
        for line in f:
            if line.strip():
                records.append(json.loads(line))
    return records


def write_jsonl(filename, records):
    """Write one compact JSON record per line."""
    _ensure_parent(filename)
    with open(filename, 'w') as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, separators=(",", ":")))
            f.write("\n")


def write_csv(filename, rows, fields):
    # type: (str, List[Dict[str, Any]], List[str]) -> None
    """Write dict rows to a csv file with a fixed column order."""
    _ensure_parent(filename)
    with open(filename, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fields, extrasaction='ignore', lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format_cell(row.get(k, "")) for k in fields})


def read_csv(filename):
    # type: (str) -> List[Dict[str, str]]
    with open(filename, 'r', newline='') as f:
        return list(csv.DictReader(f))


def format_cell(value):
    """Fixed repr for floats so repeated runs write identical files."""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return int(value)
    return value


def _ensure_parent(filename):
    parent = os.path.dirname(os.path.abspath(filename))
    if not os.path.isdir(parent):
        os.makedirs(parent)
