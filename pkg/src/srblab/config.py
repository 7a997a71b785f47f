"""Map-family configuration: JSON documents describing a built-in or expression-defined family."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .errors import ConfigInvalid
from .families import CUSTOM_FIELDS, Baker, ExpressionFamily, Lueroth, PerturbedLueroth
from .geometry import ConeParams, PiecewiseMap

FAMILY_SCHEMA = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["baker", "lueroth", "perturbed_lueroth", "custom"]},
        "parameters": {
            "type": "object",
            "properties": {
                "N": {"type": "integer", "minimum": 2},
                "epsilon": {"type": "number", "minimum": 0, "maximum": 0.3},
                "N_max": {"type": "integer", "minimum": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "K0": {"type": "number", "exclusiveMinimum": 1},
                "power": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "custom": {
            "type": "object",
            "required": list(CUSTOM_FIELDS) + ["x_left", "x_right"],
            "properties": {
                **{k: {"type": ["string", "number"]} for k in CUSTOM_FIELDS},
                "x_left": {"type": ["string", "number"]},
                "x_right": {"type": ["string", "number"]},
                "inv1": {"type": ["string", "number"]},
                "inv2": {"type": ["string", "number"]},
                "y_bottom": {"type": ["string", "number"]},
                "y_top": {"type": ["string", "number"]},
                "branches": {"oneOf": [{"type": "integer", "minimum": 1}, {"const": "countable"}]},
                "disjoint_strips": {"type": "boolean"},
                "orientation_preserving": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

DEFAULT_CONES = {"baker": None, "lueroth": (0.5, 2.0), "perturbed_lueroth": (0.5, 1.5),
                 "custom": (0.5, 1.5)}


def validate_family(doc: dict) -> None:
    try:
        jsonschema.validate(doc, FAMILY_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigInvalid(f"invalid family config: {exc.message}",
                            path=list(exc.absolute_path)) from None
    if doc["family"] == "custom" and "custom" not in doc:
        raise ConfigInvalid("family 'custom' requires a 'custom' block")


def resolve_family(doc: dict) -> dict:
    """Fill defaults so the resolved document fully determines the map."""
    validate_family(doc)
    fam = doc["family"]
    p = dict(doc.get("parameters", {}))
    if fam == "baker":
        p.setdefault("N", 2)
        p.setdefault("alpha", 0.5)
        p.setdefault("K0", float(p["N"]))
    else:
        a, k = DEFAULT_CONES[fam]
        p.setdefault("alpha", a)
        p.setdefault("K0", k)
    if fam in ("lueroth", "perturbed_lueroth"):
        p.setdefault("N_max", 10**9)
    if fam == "perturbed_lueroth":
        p.setdefault("epsilon", 0.005)
    if fam == "custom":
        p.setdefault("N_max", 10**6)
    p.setdefault("power", 1)
    out = {"family": fam, "parameters": p}
    if fam == "custom":
        out["custom"] = dict(doc["custom"])
    return out


def build_map(doc: dict) -> PiecewiseMap:
    from .geometry import power_map

    r = resolve_family(doc)
    p = r["parameters"]
    cone = ConeParams(p["alpha"], p["K0"])
    fam = r["family"]
    if fam == "baker":
        m = Baker(p["N"], cone)
    elif fam == "lueroth":
        m = Lueroth(p["N_max"], cone)
    elif fam == "perturbed_lueroth":
        m = PerturbedLueroth(p["epsilon"], p["N_max"], cone)
    else:
        c = r["custom"]
        branches = c.get("branches", "countable")
        m = ExpressionFamily({k: v for k, v in c.items()},
                             None if branches == "countable" else int(branches),
                             n_max=p["N_max"], cone=cone,
                             disjoint_strips=c.get("disjoint_strips", False),
                             orientation_preserving=c.get("orientation_preserving", False))
    if p["power"] > 1:
        m = power_map(m, p["power"])
    return m


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from None
