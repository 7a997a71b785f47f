"""Command-line front end: config resolution, one subcommand per run, JSON and CSV output."""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .config import build_map, load_json, resolve_family
from .errors import ConfigInvalid, SrbLabError

EXIT_OK, EXIT_CONDITIONS, EXIT_ERROR = 0, 1, 2
COMMANDS = ("check", "itinerary", "manifold", "distortion", "srb-birkhoff", "srb-pushforward",
            "holonomy", "entropy")
ROUTES = ("derivative", "directional", "cylinder", "integral")

_INT = {"type": "integer", "minimum": 1}
_INT0 = {"type": "integer", "minimum": 0}
_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_UNIT = {"type": "number", "minimum": 0, "maximum": 1}
_POINT = {"type": "array", "items": _UNIT, "minItems": 2, "maxItems": 2}
_SYMBOLS = {"type": "array", "minItems": 1,
            "items": {"oneOf": [_INT, {"type": "array", "items": _INT, "minItems": 1}]}}
_LINE = {"type": "object", "properties": {"height": _UNIT, "slope": _NUM},
         "additionalProperties": False}

DEFAULTS = {
    "check": {"points_per_post": 32, "branches": 100, "g3_terms": 10_000, "g3_levels": 128},
    "itinerary": {"z": [0.3, 0.7], "n": 10, "strict": True},
    "manifold": {"past": [1] * 40, "kind": "unstable", "tol": 1e-10, "max_iter": None,
                 "grid": 257},
    "distortion": {"symbols": None, "symbol": 1, "depths": [2, 4, 8, 16], "height": 0.3,
                   "points": 64, "C": 1.0},
    "srb-birkhoff": {"seeds": 64, "n": 100_000, "m": 64, "burn_in": 1000, "min_expected": 20.0},
    "srb-pushforward": {"past": [1] * 40, "n": 20_000, "points": 1024, "m": 64, "burn_in": 0,
                        "depth": None},
    "holonomy": {"depth": 8, "pairs": 1000, "bins": 8, "gamma": {"height": 0.3, "slope": 0.0},
                 "eta": {"height": 0.6, "slope": 0.2}},
    "entropy": {"route": "all", "seeds": 64, "n": 10_000, "z": [0.3141592653589793, 0.2718281828459045],
                "v": [1.0, 0.0], "directional_n": 2000, "depths": [1, 2, 3, 4],
                "cylinder_n": 200_000, "integral_n": 10_000},
}

PARAM_SCHEMAS = {
    "check": {"points_per_post": _INT, "branches": _INT, "g3_terms": _INT, "g3_levels": _INT},
    "itinerary": {"z": _POINT, "n": _INT, "strict": {"type": "boolean"}},
    "manifold": {"past": _SYMBOLS, "kind": {"enum": ["unstable", "stable"]}, "tol": _POS,
                 "max_iter": {"oneOf": [_INT, {"type": "null"}]}, "grid": {"type": "integer", "minimum": 5}},
    "distortion": {"symbols": {"oneOf": [_SYMBOLS, {"type": "null"}]}, "symbol": _INT,
                   "depths": {"type": "array", "items": _INT, "minItems": 1}, "height": _UNIT,
                   "points": _INT, "C": _POS},
    "srb-birkhoff": {"seeds": _INT, "n": _INT, "m": _INT, "burn_in": _INT0, "min_expected": _POS},
    "srb-pushforward": {"past": _SYMBOLS, "n": _INT, "points": _INT, "m": _INT, "burn_in": _INT0,
                        "depth": {"oneOf": [_INT, {"type": "null"}]}},
    "holonomy": {"depth": _INT, "pairs": _INT, "bins": _INT, "gamma": _LINE, "eta": _LINE},
    "entropy": {"route": {"enum": ["all", *ROUTES]}, "seeds": _INT, "n": _INT, "z": _POINT,
                "v": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "directional_n": _INT, "depths": {"type": "array", "items": _INT, "minItems": 1},
                "cylinder_n": _INT, "integral_n": _INT},
}

RUN_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"type": "object"},
        "command": {"enum": list(COMMANDS)},
        "params": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "threads": _INT,
    },
    "additionalProperties": False,
}


# -- config resolution -----------------------------------------------------------

def _validate(doc, schema, what):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigInvalid(f"invalid {what}: {exc.message}" + (f" at {where}" if where else ""),
                            path=list(exc.absolute_path)) from None


def resolve_config(doc: dict, command: str) -> dict:
    """Validate a run document and fill every default, so the result fully determines the run."""
    _validate(doc, RUN_SCHEMA, "run config")
    if doc.get("command", command) != command:
        raise ConfigInvalid(f"config is for '{doc['command']}' but '{command}' was requested")
    params = copy.deepcopy(DEFAULTS[command])
    params.update(doc.get("params", {}))
    schema = {"type": "object", "properties": PARAM_SCHEMAS[command], "additionalProperties": False}
    _validate(params, schema, f"{command} parameters")
    for key in ("gamma", "eta"):
        if key in params:
            params[key] = {**DEFAULTS[command][key], **params[key]}
    return {
        "command": command,
        "family": resolve_family(doc.get("family", {"family": "baker"})),
        "params": params,
        "seed": int(doc.get("seed", 0)),
        "out": doc.get("out", "srblab-out"),
        "threads": int(doc.get("threads", 1)),
    }


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _assignments(items, flag):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigInvalid(f"{flag} expects KEY=VALUE, got {item!r}")
        out[key] = _parse_value(value)
    return out


def _threads_from_env():
    raw = os.environ.get("SRBLAB_THREADS")
    if raw is None or raw == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigInvalid(f"SRBLAB_THREADS must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigInvalid("SRBLAB_THREADS must be >= 1")
    return value


def config_from_args(args) -> dict:
    doc = load_json(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise ConfigInvalid("config file must hold a JSON object")
    doc = copy.deepcopy(doc)
    if args.family:
        doc["family"] = {"family": args.family}
    fam_params = _assignments(args.map_param, "--map-param")
    if fam_params:
        fam = doc.setdefault("family", {"family": "baker"})
        fam.setdefault("parameters", {}).update(fam_params)
    params = doc.setdefault("params", {})
    params.update(_assignments(args.set, "--set"))
    if getattr(args, "route", None):
        params["route"] = args.route
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out"] = args.out
    threads = args.threads if args.threads is not None else _threads_from_env()
    if threads is not None:
        doc["threads"] = threads
    if threads is not None and threads < 1:
        raise ConfigInvalid("--threads must be >= 1")
    return resolve_config(doc, args.command)


# -- output ------------------------------------------------------------------------

def clean(obj):
    """Plain JSON types; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, doc: dict):
    text = json.dumps(clean(doc), indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, columns, rows, note: str):
    """CSV with a '# ' comment line documenting the columns, then the header row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {note}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])


class Outputs:
    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.files = []

    def csv(self, name, columns, rows, note):
        self.dir.mkdir(parents=True, exist_ok=True)
        write_csv(self.dir / name, columns, rows, note)
        self.files.append(name)


# -- subcommands -------------------------------------------------------------------

def _symbols(raw):
    return tuple(tuple(s) if isinstance(s, list) else int(s) for s in raw)


def _line(doc):
    from .graph_transform import CurveGraph

    h, s = float(doc["height"]), float(doc["slope"])
    return CurveGraph.from_function(lambda x: h + s * (x - 0.5), lambda x: np.full_like(x, s),
                                    lambda x: np.zeros_like(x))


def cmd_check(fmap, cfg, out):
    from .conditions import Grid, check_G3, check_all

    p = cfg["params"]
    rep = check_all(fmap, grid=Grid(p["points_per_post"], p["branches"]))
    g3 = check_G3(fmap, p["g3_terms"], p["g3_levels"])
    rows = [(k, m.value, m.point[0], m.point[1], json.dumps(m.branch)) for k, m in rep.margins.items()]
    out.csv("margins.csv", ["condition", "margin", "x", "y", "branch"], rows,
            "condition: name; margin: worst sampled slack (negative fails); x, y: worst point; "
            "branch: its branch key")
    failing = rep.failing() + (["G3"] if g3.diverging else [])
    result = {**rep.to_dict(), "g3": g3._asdict(), "failing": failing}
    return result, EXIT_CONDITIONS if failing else EXIT_OK


def cmd_itinerary(fmap, cfg, out):
    from .symbolic import BoundaryHit, forward_itinerary, post_cylinder

    p = cfg["params"]
    it = forward_itinerary(fmap, p["z"], p["n"], strict=p["strict"])
    if isinstance(it, BoundaryHit):
        return {"boundary_hit": it.step, "symbols": None}, EXIT_OK
    syms = list(it.symbols)
    rows, x, y = [], np.array([float(p["z"][0])]), np.array([float(p["z"][1])])
    for k, s in enumerate(syms):
        rows.append((k, float(x[0]), float(y[0]), s))
        x, y, _, _ = fmap.step(x, y)
    rows.append((len(syms), float(x[0]), float(y[0]), ""))
    out.csv("orbit.csv", ["k", "x", "y", "symbol"], rows,
            "k: step; x, y: orbit point F^k(z); symbol: branch containing F^k(z)")
    cyl = post_cylinder(fmap, syms)
    return {"symbols": syms, "boundary_hit": None,
            "cylinder": {"width_min": cyl.width_min, "width_max": cyl.width_max}}, EXIT_OK


def cmd_manifold(fmap, cfg, out):
    from .graph_transform import stable_manifold, unstable_manifold

    p = cfg["params"]
    fn = unstable_manifold if p["kind"] == "unstable" else stable_manifold
    curve, diag = fn(fmap, _symbols(p["past"]), p["tol"], p["max_iter"], p["grid"])
    var = "x" if p["kind"] == "unstable" else "y"
    out.csv("curve.csv", ["t", "g", "dg", "d2g"], curve.to_rows(),
            f"t: abscissa ({var}); g: graph value; dg, d2g: first and second derivatives")
    return {"kind": p["kind"], "diagnostics": diag.to_dict()}, EXIT_OK


def cmd_distortion(fmap, cfg, out):
    from .distortion import composition_distortion
    from .graph_transform import CurveGraph

    p = cfg["params"]
    depths = sorted(set(p["depths"]))
    syms = _symbols(p["symbols"]) if p["symbols"] else (p["symbol"],) * depths[-1]
    if len(syms) < depths[-1]:
        raise ConfigInvalid(f"symbols has length {len(syms)} but depth {depths[-1]} was requested")
    gamma = CurveGraph.constant(p["height"])
    reports = [composition_distortion(fmap, gamma, syms[:n], points=p["points"], C=p["C"])
               for n in depths]
    out.csv("distortion.csv", ["n", "theta", "ratio_max", "ratio_min", "bound_rhs"],
            [(r.depth, r.theta, r.ratio_max, r.ratio_min, r.bound_rhs) for r in reports],
            "n: composition depth; theta: scaled distortion; ratio_max, ratio_min: extreme "
            "derivative ratios along the curve; bound_rhs: fluctuation bound")
    return {"reports": [r.to_dict() for r in reports]}, EXIT_OK


def _hist_csv(out, meas):
    rows = ((int(r), int(c), v) for r, c, v in meas.hist_rows())
    out.csv("histogram.csv", ["row", "col", "mass"], rows,
            f"row: y bin; col: x bin (m={meas.m}); mass: empirical measure of the cell")


def cmd_birkhoff(fmap, cfg, out):
    from .measures import birkhoff_srb, chi_square
    from .orbits import uniform_seeds

    p = cfg["params"]
    seeds = uniform_seeds(p["seeds"], cfg["seed"])
    meas = birkhoff_srb(fmap, seeds, p["n"], p["m"], p["burn_in"], rng_seed=cfg["seed"],
                        threads=cfg["threads"])
    _hist_csv(out, meas)
    chi = chi_square(meas.counts, min_expected=p["min_expected"])
    return {**meas.to_dict(), "chi_square_lebesgue": chi.to_dict()}, EXIT_OK


def cmd_pushforward(fmap, cfg, out):
    from .measures import pushforward_srb

    p = cfg["params"]
    meas = pushforward_srb(fmap, _symbols(p["past"]), p["n"], p["m"], p["points"],
                           rng_seed=cfg["seed"], burn_in=p["burn_in"], depth=p["depth"],
                           threads=cfg["threads"])
    _hist_csv(out, meas)
    return meas.to_dict(), EXIT_OK


def cmd_holonomy(fmap, cfg, out):
    from .measures import holonomy_test

    p = cfg["params"]
    rep = holonomy_test(fmap, _line(p["gamma"]), _line(p["eta"]), p["depth"], p["pairs"],
                        p["bins"], rng_seed=cfg["seed"])
    e = rep.bin_edges
    out.csv("holonomy.csv", ["bin_lo", "bin_hi", "count", "density"],
            [(e[i], e[i + 1], rep.bin_counts[i], rep.bin_density[i]) for i in range(len(rep.bin_counts))],
            "bin_lo, bin_hi: x range on eta; count: matched pairs; density: mean holonomy density "
            "(nan when empty)")
    return rep.to_dict(), EXIT_OK


def cmd_entropy(fmap, cfg, out):
    from . import entropy as ent
    from .measures import birkhoff_srb
    from .orbits import uniform_seeds

    p = cfg["params"]
    seed = cfg["seed"]
    routes = ROUTES if p["route"] == "all" else (p["route"],)
    result, rows = {}, []
    for route in routes:
        try:
            if route == "derivative":
                est = ent.entropy_derivative_growth(fmap, uniform_seeds(p["seeds"], seed), p["n"],
                                                    seed, threads=cfg["threads"])
            elif route == "directional":
                est = ent.entropy_directional(fmap, p["z"], p["v"], p["directional_n"], seed)
            elif route == "cylinder":
                est = ent.entropy_cylinder(fmap, p["z"], p["depths"], p["cylinder_n"], seed)
            else:
                if not fmap.disjoint_strips:
                    ent.entropy_integral(fmap, None)
                srb = birkhoff_srb(fmap, uniform_seeds(p["seeds"], seed), p["integral_n"],
                                   rng_seed=seed, track_unstable=True, threads=cfg["threads"])
                est = ent.entropy_integral(fmap, srb)
        except SrbLabError as exc:
            if len(routes) == 1:
                raise
            result[route] = {"error": exc.to_dict()}
            rows.append((route, float("nan"), float("nan"), 0, exc.code))
            continue
        result[route] = est.to_dict()
        rows.append((route, est.value, est.spread, est.n, ""))
    out.csv("entropy.csv", ["route", "value", "spread", "n", "error"], rows,
            "route: estimator; value: entropy estimate; spread: across-seed standard deviation; "
            "n: orbit length; error: error code when the route did not apply")
    return result, EXIT_OK


HANDLERS = {"check": cmd_check, "itinerary": cmd_itinerary, "manifold": cmd_manifold,
            "distortion": cmd_distortion, "srb-birkhoff": cmd_birkhoff,
            "srb-pushforward": cmd_pushforward, "holonomy": cmd_holonomy, "entropy": cmd_entropy}


def _error(code, exc):
    return {"code": code, "message": f"{type(exc).__name__}: {exc}", "context": {}}


def run(cfg: dict) -> int:
    """Execute one resolved run config; writes summary.json and CSV files under cfg['out']."""
    out = Outputs(cfg["out"])
    summary = {"version": __version__, "config": cfg}
    try:
        fmap = build_map(cfg["family"])
        result, status = HANDLERS[cfg["command"]](fmap, cfg, out)
        summary.update(status={EXIT_OK: "ok", EXIT_CONDITIONS: "conditions_failed"}[status],
                       result=result)
    except SrbLabError as exc:
        status = EXIT_ERROR
        summary.update(status="error", error=exc.to_dict())
    except ValueError as exc:
        status = EXIT_ERROR
        summary.update(status="error", error=_error("INVALID_PARAMETER", exc))
    except Exception as exc:  # surfaced as exit 2, never as the conditions-failed status
        status = EXIT_ERROR
        summary.update(status="error", error=_error("INTERNAL_ERROR", exc))
    summary["exit_code"] = status
    summary["files"] = sorted(out.files)
    out.dir.mkdir(parents=True, exist_ok=True)
    write_json(out.dir / "summary.json", summary)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srblab", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config (family, params, seed, out, threads)")
    common.add_argument("--seed", type=int, help="RNG seed")
    common.add_argument("--out", help="output directory (default srblab-out)")
    common.add_argument("--threads", type=int, help="worker threads (env SRBLAB_THREADS)")
    common.add_argument("--family", choices=["baker", "lueroth", "perturbed_lueroth"],
                        help="built-in family (overrides the config)")
    common.add_argument("--map-param", action="append", metavar="KEY=VALUE",
                        help="family parameter, e.g. N=3 or epsilon=0.01")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="command parameter; VALUE is parsed as JSON when possible")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "entropy":
            sp.add_argument("--route", choices=["all", *ROUTES])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except SrbLabError as exc:
        doc = {"version": __version__, "command": args.command, "status": "error",
               "error": exc.to_dict(), "exit_code": EXIT_ERROR}
        print(json.dumps(clean(doc), sort_keys=True), file=sys.stderr)
        out = Path(args.out or "srblab-out")
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_json(out / "summary.json", doc)
        except OSError:
            pass
        return EXIT_ERROR
    status = run(cfg)
    print(f"{cfg['command']}: {['ok', 'conditions failed', 'error'][status]} "
          f"({Path(cfg['out']) / 'summary.json'})")
    return status


if __name__ == "__main__":
    sys.exit(main())
