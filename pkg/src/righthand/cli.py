"""Command line experiment runner.

Every subcommand is first turned into an :class:`ExperimentPlan` (either
from flags or from a JSON config), validated in full, and only then run.
Results are JSON records with sorted keys; the ``wall_time`` field is the
only part that varies between identical runs.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .asymptotic import (asymptotic_linking, birkhoff_measure, lk_omega_direct,
                         lk_omega_kernel, periodic_orbit_measure, volume_measure)
from .contact import direct_stderr, mcduff_certify, reconstruct_reeb, verify_reeb
from .errors import (DomainError, EmptyMeasureFamily, MalformedConfig, NoRecurrence,
                     OutOfRangeParameter, ResolutionTooLarge, RighthandError, UnknownKey)
from .fields import HOPF, parse_field
from .flow import TrajectoryCache
from .geometry import hopf_fiber, normalize, pole_design, read_curve, write_curve
from .linking import crossing_number, hopf_link_circles, linking_integral, torus_link
from .ulam_lp import MAX_CELLS, build_chain, load_chain, min_invariant_linking, save_chain

ARTIFACT = "righthand"

# Defaults per subcommand; a key with default ``REQUIRED`` must be given.
REQUIRED = object()
SCHEMAS = {
    "link": {"curves": REQUIRED, "method": "both", "direction": [0.0, 0.0, 1.0]},
    "flowlink": {"field": "hopf", "p": [1.0, 0.0, 0.0, 0.0], "q": [0.0, 0.0, 1.0, 0.0],
                 "horizon": [40 * math.pi], "T": None, "delta": 1e-3, "jitter": 1e-3,
                 "tol": 1e-9},
    "lkomega": {"field": "hopf", "method": "direct", "measure": None,
                "orbit_seed": [1.0, 0.0, 0.0, 0.0], "nodes": 128, "n_samples": 4096,
                "S": 20 * math.pi, "T": None, "n_volume": 64, "kernel_mode": "volume",
                "seed": 0},
    "certify": {"field": "hopf", "orbits": 3, "volume_samples": 4096, "tol": 1e-3,
                "nodes": 128, "seed": 0},
    "reconstruct": {"field": "hopf", "samples": 1000, "seed": 0},
    "ulam": {"field": "hopf", "res": [8, 8, 8], "tau": 0.1, "spc": 16, "seed": 7,
             "chain": None},
    "lpmin": {"chain": REQUIRED, "maximize": False},
    "fibers": {"out_dir": REQUIRED, "n": 2048},
}
# keys that only say where artifacts go; they do not change results
LOCATION_KEYS = ("output", "cache_dir", "csv")


@dataclass
class ExperimentPlan:
    cmd: str
    params: dict
    output: str | None = None
    cache_dir: str | None = None
    csv: str | None = None
    extra: dict = field(default_factory=dict)

    def inputs(self):
        """The echoed inputs: a config that reproduces this run."""
        out = {"cmd": self.cmd}
        out.update(self.params)
        return out


# Validation ---------------------------------------------------------------


def _number(params, key, lo=-math.inf, hi=math.inf, lo_open=False, integer=False):
    v = params[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise OutOfRangeParameter(f"{key} must be a number")
    if integer and int(v) != v:
        raise OutOfRangeParameter(f"{key} must be an integer")
    if not math.isfinite(v) or v < lo or v > hi or (lo_open and v == lo):
        raise OutOfRangeParameter(f"{key}={v} outside the admissible range")
    params[key] = int(v) if integer else float(v)


def _vector(params, key, dim, unit=False):
    v = params[key]
    if not isinstance(v, (list, tuple)) or len(v) != dim or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise OutOfRangeParameter(f"{key} must be a list of {dim} numbers")
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)) or np.linalg.norm(arr) == 0:
        raise OutOfRangeParameter(f"{key} must be finite and nonzero")
    params[key] = (normalize(arr) if unit else arr).tolist()


def _choice(params, key, options):
    if params[key] not in options:
        raise OutOfRangeParameter(f"{key} must be one of {', '.join(options)}")


def _validate(cmd, p):
    if "field" in p:
        p["field"] = parse_field(str(p["field"])).name
    if cmd == "link":
        if not isinstance(p["curves"], list) or len(p["curves"]) != 2:
            raise OutOfRangeParameter("link needs exactly two curve files")
        if p["method"] == "cross":
            p["method"] = "crossing"
        _choice(p, "method", ("gauss", "crossing", "both"))
        _vector(p, "direction", 3)
    elif cmd == "flowlink":
        _vector(p, "p", 4, unit=True)
        _vector(p, "q", 4, unit=True)
        h = p["horizon"]
        h = h if isinstance(h, list) else [h]
        if not h:
            raise OutOfRangeParameter("horizon list is empty")
        for i in range(len(h)):
            box = {"horizon": h[i]}
            _number(box, "horizon", 10.0, 1e5)
            h[i] = box["horizon"]
        p["horizon"] = h
        if p["T"] is not None:
            _number(p, "T", 10.0, 1e5)
        _number(p, "delta", 0.0, 2.0, lo_open=True)
        if p["delta"] >= 2.0:
            raise OutOfRangeParameter("delta must be below 2")
        _number(p, "jitter", 0.0)
        _number(p, "tol", 1e-12, 1e-4)
    elif cmd == "lkomega":
        _choice(p, "method", ("direct", "kernel"))
        if p["measure"] is not None:
            _choice(p, "measure", ("periodic", "birkhoff", "volume"))
        _vector(p, "orbit_seed", 4, unit=True)
        _number(p, "nodes", 2, integer=True)
        _number(p, "n_samples", 1, integer=True)
        _number(p, "seed", 0, integer=True)
        _choice(p, "kernel_mode", ("volume", "seed"))
        if p["method"] == "kernel":
            _number(p, "S", 10.0, 1e5)
            if p["T"] is not None:
                _number(p, "T", 10.0, 1e5)
            _number(p, "n_volume", 16, integer=True)
        elif p["measure"] == "birkhoff":
            if p["T"] is None:
                p["T"] = p["S"]
            _number(p, "T", 0.0, 1e5, lo_open=True)
    elif cmd == "certify":
        _number(p, "orbits", 0, integer=True)
        _number(p, "volume_samples", 0, integer=True)
        _number(p, "tol", 0.0)
        _number(p, "nodes", 2, integer=True)
        _number(p, "seed", 0, integer=True)
        if p["orbits"] == 0 and p["volume_samples"] == 0:
            raise EmptyMeasureFamily("no orbits and no volume samples requested")
    elif cmd == "reconstruct":
        _number(p, "samples", 1, integer=True)
        _number(p, "seed", 0, integer=True)
    elif cmd == "ulam":
        res = p["res"]
        if not isinstance(res, list) or len(res) != 3:
            raise OutOfRangeParameter("res must be three positive integers")
        box = {f"res[{i}]": r for i, r in enumerate(res)}
        for k in box:
            _number(box, k, 1, integer=True)
        p["res"] = list(box.values())
        if int(np.prod(p["res"])) > MAX_CELLS:
            raise ResolutionTooLarge(f"more than {MAX_CELLS} cells")
        _number(p, "tau", 0.01, 1.0)
        _number(p, "spc", 8, integer=True)
        _number(p, "seed", 0, integer=True)
    elif cmd == "lpmin":
        if not isinstance(p["maximize"], bool):
            raise OutOfRangeParameter("maximize must be true or false")
    elif cmd == "fibers":
        _number(p, "n", 3, integer=True)


def make_plan(config):
    """Validate a config dictionary into an :class:`ExperimentPlan`."""
    if not isinstance(config, dict):
        raise MalformedConfig("config must be a JSON object")
    if "cmd" not in config:
        raise MalformedConfig("config has no 'cmd'")
    cmd = config["cmd"]
    if cmd not in SCHEMAS:
        raise MalformedConfig(f"unknown cmd {cmd!r}")
    schema = SCHEMAS[cmd]
    unknown = sorted(set(config) - set(schema) - {"cmd"} - set(LOCATION_KEYS))
    if unknown:
        raise UnknownKey(f"unknown key(s) for {cmd}: {', '.join(unknown)}")
    params = {}
    for key, default in schema.items():
        if key in config:
            params[key] = copy.deepcopy(config[key])
        elif default is REQUIRED:
            raise MalformedConfig(f"{cmd} requires {key!r}")
        else:
            params[key] = copy.deepcopy(default)
    _validate(cmd, params)
    return ExperimentPlan(cmd, params, config.get("output"), config.get("cache_dir"),
                          config.get("csv"))


def parse_config(text):
    """Parse and validate a JSON config document.

    Raises
    ------
    MalformedConfig
        Invalid JSON (with line and column) or a missing ``cmd``.
    UnknownKey
        A key not accepted by the command.
    OutOfRangeParameter
        A parameter outside the preconditions of the command.
    """
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedConfig(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                              ) from None
    return make_plan(config)


# Execution ----------------------------------------------------------------


def _orbit_seeds(k):
    fixed = [np.array([1.0, 0, 0, 0]), np.array([0, 0, 1.0, 0]), np.array([0.6, 0, 0.8, 0])]
    extra = list(pole_design())
    return (fixed + extra)[:k]


def _orbit_measure(spec, p0, nodes):
    try:
        return periodic_orbit_measure(spec, p0, nodes=nodes)
    except NoRecurrence:
        return birkhoff_measure(spec, p0, 200.0, nodes=max(nodes, 1024))


def _run_link(p, plan):
    c1, c2 = (read_curve(path) for path in p["curves"])
    out = {"segments": [c1.n_segments, c2.n_segments]}
    if p["method"] in ("gauss", "both"):
        res = linking_integral(c1, c2)
        out["gauss"] = {"value": res.value, "stderr": res.stderr}
        out.update({"value": res.value, "stderr": res.stderr, "integer": res.integer,
                    "method": res.method})
    if p["method"] in ("crossing", "both"):
        k = int(crossing_number(c1, c2, direction=p["direction"]))
        out["crossing"] = k
        if p["method"] == "crossing":
            out.update({"value": float(k), "stderr": 0.0, "integer": k,
                        "method": "crossing_count"})
    return out


def _run_flowlink(p, plan):
    spec = parse_field(p["field"])
    cache_dir = os.environ.get("RIGHTHAND_CACHE") or plan.cache_dir
    cache = TrajectoryCache(cache_dir) if cache_dir else None
    rows = []
    for S in p["horizon"]:
        T = p["T"] if p["T"] is not None else S
        res = asymptotic_linking(spec, p["p"], p["q"], S, T, p["delta"], p["jitter"],
                                 p["tol"], cache)
        rows.append({"horizon": S, "T": T, "value": res.value, "stderr": res.stderr,
                     "S_star": res.info["S_star"], "T_star": res.info["T_star"],
                     "link": res.info["link"]})
    if plan.csv:
        _write_csv(plan.csv, rows)
    out = dict(rows[-1])
    out["seed"] = None
    out["sweep"] = rows
    return out


def _write_csv(path, rows):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    os.replace(tmp, path)


def _run_lkomega(p, plan):
    spec = parse_field(p["field"])
    if p["method"] == "kernel":
        T = p["T"] if p["T"] is not None else p["S"]
        seed_pt = np.asarray(p["orbit_seed"]) if p["kernel_mode"] == "seed" else None
        res = lk_omega_kernel(spec, seed_pt, p["S"], T, p["n_volume"], p["seed"])
        out = res.as_dict()
        out.update({"S_star": p["S"], "T_star": T})
        return out
    measure = p["measure"] or "periodic"
    if measure == "periodic":
        mu = periodic_orbit_measure(spec, p["orbit_seed"], nodes=p["nodes"])
    elif measure == "birkhoff":
        mu = birkhoff_measure(spec, p["orbit_seed"], p["T"], nodes=p["nodes"])
    else:
        mu = volume_measure(spec, p["n_samples"], p["seed"])
    return {"value": lk_omega_direct(spec, mu), "stderr": direct_stderr(spec, mu),
            "method": "direct", "measure": mu.label, "seed": p["seed"]}


def _run_certify(p, plan):
    spec = parse_field(p["field"])
    family = [_orbit_measure(spec, x, p["nodes"]) for x in _orbit_seeds(p["orbits"])]
    if p["volume_samples"]:
        family.append(volume_measure(spec, p["volume_samples"], p["seed"]))
    return mcduff_certify(spec, family, p["tol"]).as_dict()


def _run_reconstruct(p, plan):
    spec = parse_field(p["field"])
    report = verify_reeb(spec, p["samples"], p["seed"]).as_dict()
    pts = volume_measure(spec, p["samples"], p["seed"]).points
    R = reconstruct_reeb(spec, pts)
    H = HOPF.vector(pts)
    cosang = np.sum(R * H, axis=1) / (np.linalg.norm(R, axis=1) * np.linalg.norm(H, axis=1))
    report["max_angle_to_hopf"] = float(np.max(np.arccos(np.clip(cosang, -1.0, 1.0))))
    return report


def _run_ulam(p, plan):
    spec = parse_field(p["field"])
    chain = build_chain(spec, tuple(p["res"]), p["tau"], p["spc"], p["seed"])
    if p["chain"]:
        save_chain(chain, p["chain"])
    rows = np.asarray(chain.transition.sum(axis=1)).ravel()
    return {"n_cells": chain.n_cells, "max_row_defect": float(np.max(np.abs(rows - 1.0))),
            "volume_stationarity_residual": chain.stationarity_residual(chain.volumes),
            "objective_min": float(chain.objective.min()),
            "objective_max": float(chain.objective.max()), "chain": p["chain"]}


def _run_lpmin(p, plan):
    chain = load_chain(p["chain"])
    res = min_invariant_linking(chain, maximize=p["maximize"])
    return {"value": res.min_value, "maximize": res.maximize,
            "feasibility_residual": res.feasibility_residual, "n_cells": chain.n_cells,
            "field": chain.field_name, "support": int(np.sum(res.argmin_weights > 1e-12))}


def _run_fibers(p, plan):
    out_dir = p["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    n = p["n"]
    curves = {
        "hopf_fiber_a.xyz": hopf_fiber([1, 0, 0, 0], n),
        "hopf_fiber_b.xyz": hopf_fiber([0, 0, 1, 0], n),
        "antihopf_fiber_a.xyz": hopf_fiber([1, 0, 0, 0], n, anti=True),
        "antihopf_fiber_b.xyz": hopf_fiber([0, 0, 1, 0], n, anti=True),
    }
    a, b = hopf_link_circles(n)
    curves["hopf_link_a.xyz"], curves["hopf_link_b.xyz"] = a, b
    t1, t2 = torus_link(2, 4, n)
    curves["torus_2_4_a.xyz"], curves["torus_2_4_b.xyz"] = t1, t2
    for name, curve in curves.items():
        write_curve(os.path.join(out_dir, name), curve, comment=name[:-4])
    return {"files": sorted(curves), "out_dir": out_dir, "n": n}


RUNNERS = {
    "link": _run_link, "flowlink": _run_flowlink, "lkomega": _run_lkomega,
    "certify": _run_certify, "reconstruct": _run_reconstruct, "ulam": _run_ulam,
    "lpmin": _run_lpmin, "fibers": _run_fibers,
}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return x


def dump_record(record):
    return json.dumps(_jsonable(record), sort_keys=True, indent=2) + "\n"


def run(plan):
    """Run a validated plan; returns ``(exit_status, record)``.

    Domain errors and unreadable input files give status 2, numerical
    failures status 3; the record
    then holds the error class and message instead of a result.
    """
    record = {"artifact": ARTIFACT, "version": __version__, "cmd": plan.cmd,
              "inputs": plan.inputs()}
    t0 = time.perf_counter()
    try:
        record["result"] = RUNNERS[plan.cmd](copy.deepcopy(plan.params), plan)
        status = 0
    except RighthandError as exc:
        record["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = exc.exit_code
    except OSError as exc:
        # unreadable inputs are a usage error, like any other domain error
        record["error"] = {"type": type(exc).__name__, "message": str(exc)}
        status = DomainError.exit_code
    record["status"] = status
    record["wall_time"] = time.perf_counter() - t0
    return status, record


# Argument parsing -----------------------------------------------------------


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="righthand-lab",
        description="Linking numbers, asymptotic linking and contact-type checks for flows on S^3.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", help="write the JSON record here (default: stdout)")
    common.add_argument("--cache-dir", dest="cache_dir",
                        help="trajectory cache directory (RIGHTHAND_CACHE overrides)")
    sub = parser.add_subparsers(dest="cmd", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text)

    p = add("link", "linking number of two curve files")
    p.add_argument("--curve", dest="curves", action="append", required=True)
    p.add_argument("--method", choices=["gauss", "cross", "crossing", "both"])
    p.add_argument("--direction", type=_floats)

    p = add("flowlink", "asymptotic linking of two flow lines")
    p.add_argument("--field")
    p.add_argument("--p", type=_floats)
    p.add_argument("--q", type=_floats)
    p.add_argument("--horizon", type=_floats, help="one horizon or a comma-separated sweep")
    p.add_argument("--T", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--jitter", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--csv", help="also write the horizon sweep as CSV")

    p = add("lkomega", "linking of an invariant measure with the volume")
    p.add_argument("--field")
    p.add_argument("--method", choices=["direct", "kernel"])
    p.add_argument("--measure", choices=["periodic", "birkhoff", "volume"])
    p.add_argument("--orbit-seed", dest="orbit_seed", type=_floats)
    p.add_argument("--nodes", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--S", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--n-volume", dest="n_volume", type=int)
    p.add_argument("--kernel-mode", dest="kernel_mode", choices=["volume", "seed"])
    p.add_argument("--seed", type=int)

    p = add("certify", "contact-type certification over a measure family")
    p.add_argument("--field")
    p.add_argument("--orbits", type=int)
    p.add_argument("--volume-samples", dest="volume_samples", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--nodes", type=int)
    p.add_argument("--seed", type=int)

    p = add("reconstruct", "conformal Reeb reconstruction defects")
    p.add_argument("--field")
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)

    p = add("ulam", "build an Ulam chain")
    p.add_argument("--field")
    p.add_argument("--res", type=_ints)
    p.add_argument("--tau", type=float)
    p.add_argument("--spc", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--chain", help="write the chain JSON here")

    p = add("lpmin", "extremize Lk over stationary measures of a chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--maximize", action="store_true", default=None)

    p = add("fibers", "write canonical fiber and template-link curve files")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--n", type=int)

    p = sub.add_parser("run", help="run a JSON config")
    p.add_argument("--config", required=True, help="config file ('-' for stdin)")
    p.add_argument("--output", "-o")
    p.add_argument("--cache-dir", dest="cache_dir")
    return parser


def _config_from_args(args):
    return {k: v for k, v in vars(args).items() if v is not None}


def _emit(record, output):
    text = dump_record(record)
    if output:
        tmp = f"{output}.tmp{os.getpid()}"
        with open(tmp, "w") as fh:
            fh.write(text)
        os.replace(tmp, output)
    else:
        sys.stdout.write(text)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            text = sys.stdin.read() if args.config == "-" else open(args.config).read()
            plan = parse_config(text)
            plan.output = args.output or plan.output
            plan.cache_dir = args.cache_dir or plan.cache_dir
        else:
            plan = make_plan(_config_from_args(args))
    except (DomainError, OSError) as exc:
        err = {"type": type(exc).__name__, "message": str(exc)}
        sys.stderr.write(json.dumps({"error": err, "status": 2}, sort_keys=True) + "\n")
        return 2
    status, record = run(plan)
    _emit(record, plan.output)
    if status:
        sys.stderr.write(f"{record['error']['type']}: {record['error']['message']}\n")
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
